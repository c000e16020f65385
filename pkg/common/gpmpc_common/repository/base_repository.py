"""Abstract artifact repository."""

from abc import ABC, abstractmethod
from typing import Generic, List, TypeVar

T = TypeVar("T")


class ArtifactRepository(ABC, Generic[T]):
    """Named run artifacts (datasets, models, reports, trajectory logs)."""

    @abstractmethod
    async def load(self, name: str) -> T:
        pass

    @abstractmethod
    async def save(self, name: str, obj: T) -> str:
        """Persist ``obj`` and return where it went."""

    @abstractmethod
    async def exists(self, name: str) -> bool:
        pass

    @abstractmethod
    async def delete(self, name: str) -> None:
        pass

    @abstractmethod
    async def list_names(self) -> List[str]:
        pass
