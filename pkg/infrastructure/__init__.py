from . import storage

__all__ = [
    "storage"
]
