from .idx import (
    IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
    parse_idx_images,
    parse_idx_labels,
    serialize_idx_images,
    serialize_idx_labels,
    load_raw_digits,
)
from .ndigit import (
    PUBLISHED_SPLIT_COUNTS,
    split_counts,
    build_class_splits,
    sample_patches,
    sample_patch,
    apply_patch,
    occlude_digit,
    synthesize,
)

__all__ = [
    # IDX ingestion
    "IDX_IMAGE_MAGIC",
    "IDX_LABEL_MAGIC",
    "parse_idx_images",
    "parse_idx_labels",
    "serialize_idx_images",
    "serialize_idx_labels",
    "load_raw_digits",
    # N-digit synthesis
    "PUBLISHED_SPLIT_COUNTS",
    "split_counts",
    "build_class_splits",
    "sample_patches",
    "sample_patch",
    "apply_patch",
    "occlude_digit",
    "synthesize",
]
