"""File-system base for run artifacts."""

import asyncio
import logging
from abc import abstractmethod
from pathlib import Path
from typing import Generic, List, TypeVar

from gpmpc_common.repository import ArtifactRepository

logger = logging.getLogger(__name__)

T = TypeVar("T")


class FileRepository(ArtifactRepository[T], Generic[T]):
    """Artifacts stored as one file each under ``root``.

    A bare name maps to ``root / (name + suffix)``; a name that already
    carries a suffix is taken as a path.
    """

    suffix: str = ""

    def __init__(self, root):
        """
        Initialize repository.

        Args:
            root: Directory holding the artifacts; created on first write.
        """
        self.root = Path(root)

    def path(self, name: str) -> Path:
        p = Path(name)
        if p.suffix:
            return p
        return self.root / f"{name}{self.suffix}"

    @abstractmethod
    def _read(self, path: Path) -> T:
        pass

    @abstractmethod
    def _write(self, path: Path, obj: T) -> None:
        pass

    async def load(self, name: str) -> T:
        path = self.path(name)
        logger.debug(f"Loading {path}")
        return await asyncio.to_thread(self._read, path)

    async def save(self, name: str, obj: T) -> str:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        await asyncio.to_thread(self._write, path, obj)
        logger.info(f"Wrote {path}")
        return str(path)

    async def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    async def delete(self, name: str) -> None:
        self.path(name).unlink(missing_ok=True)

    async def list_names(self) -> List[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.stem for p in self.root.glob(f"*{self.suffix}"))
