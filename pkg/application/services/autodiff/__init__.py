from . import ops
from .graph import CompGraph, Node
from .gradcheck import CheckReport, finite_difference_check

__all__ = [
    "ops",
    "CompGraph",
    "Node",
    "CheckReport",
    "finite_difference_check",
]
