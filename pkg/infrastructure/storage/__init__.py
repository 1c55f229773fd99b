from .ndmn import read_dataset, write_dataset
from .arrays import read_arrays, write_arrays

__all__ = [
    "read_dataset",
    "write_dataset",
    "read_arrays",
    "write_arrays",
]
