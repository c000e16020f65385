"""Long-format CSV tables: trajectory logs, stage costs, sweep tables."""

import csv
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from config import CSV_SCHEMA_VERSION
from .file_repository import FileRepository

Table = Tuple[Sequence[str], List[Dict[str, object]]]


class TableRepository(FileRepository[Table]):
    """``(fields, rows)`` tables behind a ``# schema_version=N`` line."""

    suffix = ".csv"

    def _write(self, path: Path, obj: Table) -> None:
        fields, rows = obj
        with open(path, "w", newline="") as f:
            f.write(f"# schema_version={CSV_SCHEMA_VERSION}\n")
            writer = csv.DictWriter(f, fieldnames=list(fields))
            writer.writeheader()
            writer.writerows(rows)

    def _read(self, path: Path) -> Table:
        with open(path, newline="") as f:
            first = f.readline().strip()
            if first != f"# schema_version={CSV_SCHEMA_VERSION}":
                raise ValueError(f"{path}: unsupported table schema '{first}'")
            reader = csv.DictReader(f)
            rows = list(reader)
        return reader.fieldnames or [], rows
