"""Sparse GP models as JSON documents."""

import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from gpmpc_common.gp import SparseGpModel, dump_sparse_model, load_sparse_model, model_hash

from .file_repository import FileRepository

logger = logging.getLogger(__name__)


class ModelRepository(FileRepository[SparseGpModel]):
    suffix = ".json"

    def _read(self, path: Path) -> SparseGpModel:
        return load_sparse_model(path.read_text())

    def _write(self, path: Path, obj: SparseGpModel) -> None:
        path.write_text(dump_sparse_model(obj))

    async def save_with_metadata(self, name: str, model: SparseGpModel, metadata: Optional[Dict[str, Any]] = None) -> str:
        """Save ``model`` with provenance metadata embedded in the document."""
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        await asyncio.to_thread(path.write_text, dump_sparse_model(model, metadata))
        logger.info(f"Wrote {path}")
        return str(path)

    def read_text(self, name: str) -> str:
        return self.path(name).read_text()

    def digest(self, name: str) -> str:
        return model_hash(self.read_text(name))
