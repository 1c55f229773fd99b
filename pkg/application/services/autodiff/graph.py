"""Define-by-run reverse-mode differentiation over numpy arrays.

A `CompGraph` wraps a *program*: a callable that receives the graph and its
leaf nodes and returns named output nodes. Every `forward` re-runs the program,
recording one `Node` per operation on the tape in execution order, which is a
topological order by construction. `backward` walks the tape in reverse.
"""
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from application.core.errors import ForwardNotRun, NonFiniteValue, NotScalarOutput, ShapeMismatch

BackwardFn = Callable[[np.ndarray], None]
Shape = Tuple[Optional[int], ...]


class Node:
    """One recorded value on the tape."""

    __slots__ = ("graph", "id", "op", "inputs", "value", "grad", "name", "requires_grad", "_backward")
    # numpy operands defer to the Node operators below
    __array_ufunc__ = None

    def __init__(
        self,
        graph:          "CompGraph",
        op:             str,
        inputs:         Tuple["Node", ...],
        value:          np.ndarray,
        requires_grad:  bool,
        name:           Optional[str] = None,
    ):
        self.graph = graph
        self.id = len(graph.nodes)
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.requires_grad = requires_grad
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.value.dtype)
        if grad.shape != self.value.shape:
            raise ShapeMismatch(f"gradient {grad.shape} for node {self.op}#{self.id} of shape {self.value.shape}")
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    # ---- Operator sugar; the rules live in ops.py ----
    def __add__(self, other):
        from application.services.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from application.services.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from application.services.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from application.services.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from application.services.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from application.services.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from application.services.autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from application.services.autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from application.services.autodiff import ops
        return ops.scale(self, -1.0)

    def __repr__(self):
        return f"Node({self.op}#{self.id}, shape={self.shape})"


Program = Callable[..., Mapping[str, Node]]


class CompGraph:
    """Tape plus named parameters.

    Parameters are leaves that always receive gradients. Inputs are leaves fed
    to `forward`; only those listed in `grad_inputs` receive gradients.
    Anything else the program needs (noise draws, index arrays) is passed as
    keyword context and treated as a constant.
    """

    def __init__(
        self,
        program:        Program,
        parameters:     Optional[Mapping[str, np.ndarray]] = None,
        leaf_shapes:    Optional[Mapping[str, Shape]] = None,
        grad_inputs:    Iterable[str] = (),
        dtype:          Any = np.float64,
        check_finite:   bool = True,
    ):
        self.program = program
        self.dtype = np.dtype(dtype)
        self.parameters: Dict[str, np.ndarray] = {
            name: np.asarray(value, dtype=self.dtype) for name, value in (parameters or {}).items()
        }
        self.leaf_shapes: Dict[str, Shape] = dict(leaf_shapes or {})
        self.grad_inputs = frozenset(grad_inputs)
        self.check_finite = check_finite

        self.nodes: List[Node] = []
        self.leaves: Dict[str, Node] = {}
        self.outputs: Dict[str, Node] = {}
        self._ran = False

    # ---- Recording ----
    def leaf(self, name: str, value: np.ndarray, requires_grad: bool) -> Node:
        node = Node(self, "leaf", (), np.asarray(value, dtype=self.dtype), requires_grad, name=name)
        self.nodes.append(node)
        self.leaves[name] = node
        return node

    def constant(self, value: Any) -> Node:
        node = Node(self, "const", (), np.asarray(value, dtype=self.dtype), False)
        self.nodes.append(node)
        return node

    def apply(
        self,
        op:         str,
        inputs:     Sequence[Node],
        value:      np.ndarray,
        backward:   BackwardFn,
    ) -> Node:
        """Record an operation result together with its vector-Jacobian rule."""
        value = np.asarray(value, dtype=self.dtype)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteValue(f"{op} produced non-finite values (node #{len(self.nodes)})")
        requires_grad = any(node.requires_grad for node in inputs)
        node = Node(self, op, tuple(inputs), value, requires_grad)
        if requires_grad:
            node._backward = backward
        self.nodes.append(node)
        return node

    # ---- Evaluation ----
    def _check_input(self, name: str, value: np.ndarray) -> None:
        declared = self.leaf_shapes.get(name)
        if declared is None:
            return
        if len(declared) != value.ndim or any(d is not None and d != s for d, s in zip(declared, value.shape)):
            raise ShapeMismatch(f"input '{name}' has shape {value.shape}, declared {declared}")

    def forward(self, inputs: Optional[Mapping[str, np.ndarray]] = None, **context) -> Dict[str, np.ndarray]:
        inputs = dict(inputs or {})
        missing = set(self.leaf_shapes) - set(inputs)
        if missing:
            raise ShapeMismatch(f"missing inputs: {', '.join(sorted(missing))}")

        self.nodes, self.leaves, self.outputs, self._ran = [], {}, {}, False
        for name, value in self.parameters.items():
            self.leaf(name, value, requires_grad=True)
        for name, value in inputs.items():
            value = np.asarray(value, dtype=self.dtype)
            self._check_input(name, value)
            self.leaf(name, value, requires_grad=name in self.grad_inputs)

        self.outputs = dict(self.program(self, self.leaves, **context))
        self._ran = True
        return {name: node.value for name, node in self.outputs.items()}

    def backward(self, output: str = "loss", wrt: Optional[Iterable[str]] = None) -> Dict[str, np.ndarray]:
        """Gradients of a scalar output w.r.t. every parameter and every grad input."""
        if not self._ran:
            raise ForwardNotRun("backward called before forward")
        if output not in self.outputs:
            raise KeyError(f"unknown output '{output}'")
        root = self.outputs[output]
        if root.value.size != 1:
            raise NotScalarOutput(f"output '{output}' has shape {root.shape}")

        for node in self.nodes:
            node.grad = None
        if root.requires_grad:
            root.grad = np.ones_like(root.value)
            for node in reversed(self.nodes[:root.id + 1]):
                if node.grad is not None and node._backward is not None:
                    node._backward(node.grad)

        names = list(wrt) if wrt is not None else [
            name for name, node in self.leaves.items() if node.requires_grad
        ]
        return {
            name: self.leaves[name].grad if self.leaves[name].grad is not None
            else np.zeros_like(self.leaves[name].value)
            for name in names
        }
