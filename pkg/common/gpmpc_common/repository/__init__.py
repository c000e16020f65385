from .base_repository import ArtifactRepository

__all__ = ["ArtifactRepository"]
