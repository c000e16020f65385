"""JSON reports."""

import json
from pathlib import Path
from typing import Any, Dict

from pydantic import BaseModel

from .file_repository import FileRepository


class ReportRepository(FileRepository[BaseModel]):
    """Writes pydantic reports; reads them back as plain dicts."""

    suffix = ".json"

    def _read(self, path: Path) -> Dict[str, Any]:
        return json.loads(path.read_text())

    def _write(self, path: Path, obj: BaseModel) -> None:
        path.write_text(obj.model_dump_json(indent=2))
