"""Reverse-mode automatic differentiation on a define-by-run tape.

A `Tape` records every primitive applied to its inputs, caching the forward
value of each node. Nodes only ever reference earlier nodes, so the tape is
topologically ordered by construction and `backward` can simply walk it in
reverse insertion order.

Typical use::

    tape = Tape(params)
    x = tape.constant(inputs)
    hidden = tape.relu(tape.bias_add(tape.matmul(x, tape.param("w")), tape.param("b")))
    loss = tape.sum(tape.mul(hidden, hidden))
    params.zero_grad()
    backward(tape, loss, params)

The relu subgradient at exactly zero is 0.
"""

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from sscl.errors import NonScalarLoss, ShapeMismatch, ZeroRow

logger = logging.getLogger(__name__)


class ParamSet:
    """Named float64 tensors with matching gradient accumulators.

    Parameters keep their declaration order, which is also the order used by
    the checkpoint format and by `grad_check`.
    """

    def __init__(self, params: "Dict[str, np.ndarray] | None" = None):
        """Create a parameter set, optionally from a mapping of name to array."""
        self._values: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._grads: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> np.ndarray:
        """Register a new parameter and a zeroed gradient of the same shape."""
        if name in self._values:
            raise KeyError(f"Parameter {name} is already registered")
        value = np.array(value, dtype=np.float64)
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:  # noqa: D105
        return self._values[name]

    def __contains__(self, name: str) -> bool:  # noqa: D105
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        """Iterate over the parameter names in declaration order."""
        return iter(self._values)

    def __len__(self) -> int:
        """Number of parameter tensors."""
        return len(self._values)

    def names(self) -> List[str]:
        """Parameter names in declaration order."""
        return list(self._values)

    def items(self):
        """(name, value) pairs in declaration order."""
        return self._values.items()

    def grad(self, name: str) -> np.ndarray:
        """The gradient accumulator of a parameter."""
        return self._grads[name]

    def accumulate(self, name: str, grad: np.ndarray):
        """Add `grad` into the accumulator of `name`."""
        self._grads[name] += grad

    def zero_grad(self):
        """Reset every gradient accumulator to zero."""
        for grad in self._grads.values():
            grad.fill(0.0)

    def subset(self, prefix: str) -> "ParamSet":
        """A copy holding only the parameters whose name starts with `prefix`."""
        return ParamSet({name: value.copy() for name, value in self._values.items() if name.startswith(prefix)})

    def copy(self) -> "ParamSet":
        """Deep copy of the values; gradients start at zero."""
        return ParamSet({name: value.copy() for name, value in self._values.items()})

    def size(self) -> int:
        """Total number of scalar entries."""
        return int(sum(value.size for value in self._values.values()))

    def checksum(self) -> str:
        """SHA-256 over names, shapes and raw values."""
        digest = hashlib.sha256()
        for name, value in self._values.items():
            digest.update(name.encode("utf-8"))
            digest.update(repr(value.shape).encode("utf-8"))
            digest.update(np.ascontiguousarray(value, dtype="<f8").tobytes())
        return digest.hexdigest()


@dataclass
class Node:
    """A recorded operation and its cached forward value."""

    kind: str
    inputs: Tuple[int, ...]
    value: np.ndarray
    attrs: dict = field(default_factory=dict)
    needs_grad: bool = False


@dataclass(frozen=True)
class Primitive:
    """Forward function and vector-Jacobian product of one operation kind."""

    name: str
    forward: Callable
    vjp: Callable


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _require_2d(kind, *values):
    for value in values:
        if value.ndim != 2:
            raise ShapeMismatch(f"{kind} expects matrices", expected=2, got=value.ndim)


def _broadcastable(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as ex:
        raise ShapeMismatch(f"{kind} operands do not broadcast", expected=a.shape, got=b.shape) from ex


def _matmul_forward(values, attrs):
    a, b = values
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul inner dimensions differ", expected=a.shape[1], got=b.shape[0])
    return a @ b


def _matmul_vjp(grad, values, out, attrs, needs):
    a, b = values
    return [grad @ b.T if needs[0] else None, a.T @ grad if needs[1] else None]


def _bias_add_forward(values, attrs):
    a, bias = values
    _require_2d("bias_add", a)
    if bias.size != a.shape[1] or bias.ndim > 2:
        raise ShapeMismatch("bias_add bias width", expected=a.shape[1], got=bias.shape)
    return a + bias.reshape(1, -1)


def _bias_add_vjp(grad, values, out, attrs, needs):
    return [grad, grad.sum(axis=0).reshape(values[1].shape)]


def _normalize_forward(values, attrs):
    (a,) = values
    _require_2d("normalize_rows", a)
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    small = np.flatnonzero(norms < 1e-30)
    if small.size:
        raise ZeroRow(int(small[0]), float(norms[small[0]]))
    attrs["norms"] = norms[:, None]
    return a / attrs["norms"]


def _normalize_vjp(grad, values, out, attrs, needs):
    # d(a/|a|) = (I - u u^T)/|a|, applied row by row
    radial = np.einsum("ij,ij->i", grad, out)[:, None]
    return [(grad - out * radial) / attrs["norms"]]


def _binary(kind, op):
    def forward(values, attrs):
        _broadcastable(kind, *values)
        return op(*values)

    return forward


def _add_vjp(grad, values, out, attrs, needs):
    return [_unbroadcast(grad, values[0].shape), _unbroadcast(grad, values[1].shape)]


def _sub_vjp(grad, values, out, attrs, needs):
    return [_unbroadcast(grad, values[0].shape), _unbroadcast(-grad, values[1].shape)]


def _mul_vjp(grad, values, out, attrs, needs):
    a, b = values
    return [
        _unbroadcast(grad * b, a.shape) if needs[0] else None,
        _unbroadcast(grad * a, b.shape) if needs[1] else None,
    ]


def _concat_forward(values, attrs):
    _require_2d("concat", *values)
    widths = {value.shape[1] for value in values}
    if len(widths) != 1:
        raise ShapeMismatch("concat blocks must share their width", got=sorted(widths))
    return np.concatenate(values, axis=0)


def _concat_vjp(grad, values, out, attrs, needs):
    bounds = np.cumsum([value.shape[0] for value in values])[:-1]
    return list(np.split(grad, bounds, axis=0))


def _take_rows_forward(values, attrs):
    (a,) = values
    _require_2d("take_rows", a)
    indices = attrs["indices"]
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[0]):
        raise ShapeMismatch("take_rows index out of range", expected=a.shape[0], got=int(indices.max()))
    return a[indices]


def _take_rows_vjp(grad, values, out, attrs, needs):
    result = np.zeros_like(values[0])
    np.add.at(result, attrs["indices"], grad)
    return [result]


def _row_sum_forward(values, attrs):
    _require_2d("row_sum", values[0])
    return values[0].sum(axis=1, keepdims=True)


def _clamp_forward(values, attrs):
    return np.maximum(values[0], attrs["floor"])


def _clamp_vjp(grad, values, out, attrs, needs):
    return [grad * (values[0] > attrs["floor"])]


PRIMITIVES: Dict[str, Primitive] = {
    primitive.name: primitive
    for primitive in [
        Primitive("matmul", _matmul_forward, _matmul_vjp),
        Primitive(
            "transpose",
            lambda values, attrs: values[0].T,
            lambda grad, values, out, attrs, needs: [grad.T],
        ),
        Primitive("bias_add", _bias_add_forward, _bias_add_vjp),
        Primitive(
            "relu",
            lambda values, attrs: np.maximum(values[0], 0.0),
            lambda grad, values, out, attrs, needs: [grad * (values[0] > 0.0)],
        ),
        Primitive(
            "exp",
            lambda values, attrs: np.exp(values[0]),
            lambda grad, values, out, attrs, needs: [grad * out],
        ),
        Primitive(
            "log",
            lambda values, attrs: np.log(values[0]),
            lambda grad, values, out, attrs, needs: [grad / values[0]],
        ),
        Primitive("normalize_rows", _normalize_forward, _normalize_vjp),
        Primitive("add", _binary("add", np.add), _add_vjp),
        Primitive("sub", _binary("sub", np.subtract), _sub_vjp),
        Primitive("mul", _binary("mul", np.multiply), _mul_vjp),
        Primitive(
            "scale",
            lambda values, attrs: values[0] * attrs["factor"],
            lambda grad, values, out, attrs, needs: [grad * attrs["factor"]],
        ),
        Primitive(
            "divide",
            lambda values, attrs: values[0] / attrs["divisor"],
            lambda grad, values, out, attrs, needs: [grad / attrs["divisor"]],
        ),
        Primitive(
            "row_sum",
            _row_sum_forward,
            lambda grad, values, out, attrs, needs: [np.broadcast_to(grad, values[0].shape).copy()],
        ),
        Primitive(
            "sum",
            lambda values, attrs: np.asarray(values[0].sum()),
            lambda grad, values, out, attrs, needs: [np.full(values[0].shape, float(grad))],
        ),
        Primitive("concat", _concat_forward, _concat_vjp),
        Primitive("take_rows", _take_rows_forward, _take_rows_vjp),
        Primitive("clamp_min", _clamp_forward, _clamp_vjp),
    ]
}


class Tape:
    """Append-only record of operations for one forward pass.

    Args:
        params: Parameter set that `param` leaves read from. Optional for
            tapes built over constants only.
    """

    def __init__(self, params: Optional[ParamSet] = None):
        """Start an empty tape; `param` nodes read their values from `params`."""
        self.params = params
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        """Number of recorded nodes."""
        return len(self.nodes)

    def value(self, node_id: int) -> np.ndarray:
        """Cached forward value of a node."""
        return self.nodes[node_id].value

    def _append(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def constant(self, value) -> int:
        """Record a non-differentiable leaf."""
        return self._append(Node("constant", (), np.asarray(value, dtype=np.float64)))

    def param(self, name: str) -> int:
        """Record a leaf bound to the parameter `name`."""
        if self.params is None or name not in self.params:
            raise KeyError(f"Unknown parameter {name}")
        return self._append(Node("param", (), self.params[name], {"name": name}, needs_grad=True))

    def record(self, kind: str, *inputs: int, **attrs) -> int:
        """Apply primitive `kind` to earlier nodes and append the result.

        Raises:
            ShapeMismatch: if the input shapes do not conform to `kind`.

        Returns:
            int: id of the new node.
        """
        primitive = PRIMITIVES[kind]
        for node_id in inputs:
            if not 0 <= node_id < len(self.nodes):
                raise ShapeMismatch(f"{kind} input {node_id} is not an earlier node")
        values = [self.nodes[node_id].value for node_id in inputs]
        value = np.asarray(primitive.forward(values, attrs), dtype=np.float64)
        needs_grad = any(self.nodes[node_id].needs_grad for node_id in inputs)
        return self._append(Node(kind, tuple(inputs), value, attrs, needs_grad))

    def matmul(self, a: int, b: int) -> int:  # noqa: D102
        return self.record("matmul", a, b)

    def transpose(self, a: int) -> int:  # noqa: D102
        return self.record("transpose", a)

    def bias_add(self, a: int, bias: int) -> int:  # noqa: D102
        return self.record("bias_add", a, bias)

    def relu(self, a: int) -> int:  # noqa: D102
        return self.record("relu", a)

    def exp(self, a: int) -> int:  # noqa: D102
        return self.record("exp", a)

    def log(self, a: int) -> int:  # noqa: D102
        return self.record("log", a)

    def normalize_rows(self, a: int) -> int:  # noqa: D102
        return self.record("normalize_rows", a)

    def add(self, a: int, b: int) -> int:  # noqa: D102
        return self.record("add", a, b)

    def sub(self, a: int, b: int) -> int:  # noqa: D102
        return self.record("sub", a, b)

    def mul(self, a: int, b: int) -> int:  # noqa: D102
        return self.record("mul", a, b)

    def scale(self, a: int, factor: float) -> int:  # noqa: D102
        return self.record("scale", a, factor=float(factor))

    def divide(self, a: int, divisor: float) -> int:  # noqa: D102
        return self.record("divide", a, divisor=float(divisor))

    def row_sum(self, a: int) -> int:  # noqa: D102
        return self.record("row_sum", a)

    def sum(self, a: int) -> int:  # noqa: D102
        return self.record("sum", a)

    def concat(self, *blocks: int) -> int:  # noqa: D102
        return self.record("concat", *blocks)

    def take_rows(self, a: int, indices: Sequence[int]) -> int:  # noqa: D102
        return self.record("take_rows", a, indices=np.asarray(indices, dtype=np.intp))

    def clamp_min(self, a: int, floor: float) -> int:  # noqa: D102
        return self.record("clamp_min", a, floor=float(floor))


def backward(tape: Tape, loss_node: int, params: Optional[ParamSet] = None) -> ParamSet:
    """Accumulate d(loss)/d(param) into the gradient accumulators of `params`.

    Gradients are added to whatever the accumulators already hold; callers
    zero them at the start of each step. Parameters that do not contribute to
    `loss_node` receive nothing.

    Raises:
        NonScalarLoss: if the loss node does not hold exactly one value.
    """
    params = params if params is not None else tape.params
    loss_value = tape.value(loss_node)
    if loss_value.size != 1:
        raise NonScalarLoss("Backward needs a scalar loss", expected=1, got=loss_value.shape)

    grads: List[Optional[np.ndarray]] = [None] * (loss_node + 1)
    grads[loss_node] = np.ones_like(loss_value)
    for node_id in range(loss_node, -1, -1):
        grad = grads[node_id]
        node = tape.nodes[node_id]
        if grad is None or not node.needs_grad:
            continue
        if node.kind == "param":
            params.accumulate(node.attrs["name"], grad)
            continue
        if node.kind == "constant":
            continue
        inputs = [tape.nodes[input_id] for input_id in node.inputs]
        needs = [input_node.needs_grad for input_node in inputs]
        input_grads = PRIMITIVES[node.kind].vjp(grad, [n.value for n in inputs], node.value, node.attrs, needs)
        for input_id, input_grad, need in zip(node.inputs, input_grads, needs):
            if not need or input_grad is None:
                continue
            if grads[input_id] is None:
                grads[input_id] = np.array(input_grad, dtype=np.float64)
            else:
                grads[input_id] = grads[input_id] + input_grad
    return params


def evaluate(f: Callable[[Tape], int], params: ParamSet) -> float:
    """Run `f` on a fresh tape and return the scalar value of its loss node."""
    tape = Tape(params)
    return float(tape.value(f(tape)))


def grad_check(f: Callable[[Tape], int], params: ParamSet, eps: float = 1e-6) -> float:
    """Compare analytic gradients of `f` with central finite differences.

    Args:
        f: Builds the scalar function on the tape it receives and returns the
            id of the loss node. It must be a pure function of the parameters.
        params: Parameters to probe. Values are restored after every probe.
        eps: Finite-difference step, in (0, 1e-3].

    Returns:
        float: max over the named parameters of
        `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`, with `|.|`
        the Euclidean norm over all entries of the parameter.
    """
    if not 0.0 < eps <= 1e-3:
        raise ValueError(f"eps must lie in (0, 1e-3], got {eps}")
    params.zero_grad()
    tape = Tape(params)
    backward(tape, f(tape), params)
    analytic = {name: params.grad(name).copy() for name in params.names()}

    worst = 0.0
    for name, value in params.items():
        numeric = np.zeros_like(value)
        for index in np.ndindex(*value.shape):
            original = value[index]
            value[index] = original + eps
            plus = evaluate(f, params)
            value[index] = original - eps
            minus = evaluate(f, params)
            value[index] = original
            numeric[index] = (plus - minus) / (2.0 * eps)
        exact = analytic[name]
        scale = max(np.linalg.norm(exact), np.linalg.norm(numeric), 1e-12)
        error = float(np.linalg.norm(exact - numeric) / scale)
        logger.debug("grad_check %s relative error %.3e", name, error)
        worst = max(worst, error)
    return worst
