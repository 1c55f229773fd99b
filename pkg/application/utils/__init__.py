from .seeding import derive_rng, derive_seed
from .manifest import sha256_file, sha256_bytes, write_json, read_json
from .progress import progress_bar

__all__ = [
    "derive_rng",
    "derive_seed",

    "sha256_file",
    "sha256_bytes",
    "write_json",
    "read_json",

    "progress_bar",
]
