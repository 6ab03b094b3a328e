"""Dense float64 matrices with a nestable reverse-mode autodiff tape.

Everything is a 2-D matrix (scalars are 1x1, vectors are 1xN). Operations
executed while a :class:`Tape` is active are appended to it in execution
order, which is automatically a topological order. ``Tape.gradient`` walks
the recording backwards and builds adjoints out of the same primitives, so
on an ``exact`` tape a gradient is itself recorded and can be differentiated
again (this is what makes meta-gradients through inner SGD steps exact). On
a ``first_order`` tape the backward pass runs unrecorded and returns plain
constants, which yields the standard first-order approximation when a later
gradient is taken through parameter updates built from those constants.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, ShapeError, ValidationError

__all__ = [
    "Tensor",
    "Tape",
    "TapeNode",
    "ParameterSet",
    "PARAMETER_GROUPS",
    "INNER_LOOP_GROUPS",
    "matmul",
    "transpose",
    "add",
    "sub",
    "hadamard",
    "add_scalar",
    "mul_scalar",
    "sigmoid",
    "relu",
    "leaky_relu",
    "one_minus",
    "reciprocal",
    "log",
    "exp",
    "greater_than",
    "clamp_min",
    "smooth_l1",
    "clip_unit",
    "unit_interval_mask",
    "softmax_rows",
    "row_sums",
    "col_sums",
    "sum_all",
    "broadcast_rows",
    "broadcast_cols",
    "broadcast_full",
    "gather_rows",
    "scatter_rows",
    "concat_cols",
    "slice_cols",
    "pad_cols",
    "mean_pool",
    "elementwise",
    "grad",
    "l2_norm",
]

_TAPE_STACK: list["Tape"] = []
_PAUSE_DEPTH = 0
_EMPTY: dict = {}


class Tensor:
    """A frozen 2-D float64 matrix, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, arr.shape[0])
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D matrices, got shape {arr.shape}")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _raw(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        # Internal: wrap a freshly computed array without copying.
        t = object.__new__(cls)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = requires_grad
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.flat[0])

    def copy(self, requires_grad: bool | None = None) -> "Tensor":
        rg = self.requires_grad if requires_grad is None else requires_grad
        return Tensor._raw(self.data.copy(), rg)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul_scalar(self, -1.0)


class TapeNode:
    """One recorded primitive: op name, input tensors, static params, output."""

    __slots__ = ("op", "inputs", "params", "output")

    def __init__(self, op, inputs, params, output):
        self.op = op
        self.inputs = inputs
        self.params = params
        self.output = output


class Tape:
    """Ordered recording of primitive operations.

    ``mode`` is either ``"first_order"`` or ``"exact"`` and controls whether
    gradient computations are themselves recorded (and hence differentiable).
    Used as a context manager; ops run inside the block are recorded.
    """

    MODES = ("first_order", "exact")

    def __init__(self, mode: str = "first_order"):
        if mode not in self.MODES:
            raise ValidationError(f"unknown tape mode {mode!r}, expected one of {self.MODES}")
        self.mode = mode
        self.nodes: list[TapeNode] = []
        self._producer: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must be exited in LIFO order"
        return False

    def _record(self, node: TapeNode) -> None:
        self._producer[id(node.output)] = len(self.nodes)
        self.nodes.append(node)

    def producer_index(self, tensor: Tensor) -> int | None:
        return self._producer.get(id(tensor))

    def replay(self) -> int:
        """Recompute every node from its recorded inputs.

        Raises ContractError on any bitwise mismatch with the recorded
        output; returns the number of nodes checked.
        """
        for k, node in enumerate(self.nodes):
            out = _FORWARD[node.op]([t.data for t in node.inputs], node.params)
            if not np.array_equal(out, node.output.data):
                raise ContractError(f"replay mismatch at node {k} ({node.op})")
        return len(self.nodes)

    def gradient(
        self,
        output: Tensor,
        wrt: list[Tensor],
        create_graph: bool | None = None,
    ) -> list[Tensor]:
        """Adjoints of a scalar ``output`` with respect to each tensor in ``wrt``.

        Tensors in ``wrt`` that the output does not depend on get a zero
        gradient of matching shape. With ``create_graph`` left at None the
        tape's mode decides: exact tapes record the backward pass, first
        order tapes do not.
        """
        if output.size != 1:
            raise ContractError(f"gradient target must be scalar, got shape {output.shape}")
        create = (self.mode == "exact") if create_graph is None else create_graph
        wrt_ids = {id(t) for t in wrt}
        results: dict[int, Tensor] = {}
        adjoints: dict[int, Tensor] = {id(output): Tensor._raw(np.ones((1, 1)))}

        out_idx = self._producer.get(id(output))
        if out_idx is not None:
            ctx = _activated(self) if create else _paused()
            with ctx:
                self._walk_backward(out_idx, adjoints, wrt_ids, results)

        grads = []
        for t in wrt:
            g = results.get(id(t))
            if g is None:
                g = adjoints.get(id(t))
            if g is None:
                g = Tensor._raw(np.zeros(t.shape))
            grads.append(g)
        return grads

    def _walk_backward(self, out_idx, adjoints, wrt_ids, results) -> None:
        for i in range(out_idx, -1, -1):
            node = self.nodes[i]
            upstream = adjoints.pop(id(node.output), None)
            if upstream is None:
                continue
            if id(node.output) in wrt_ids:
                results[id(node.output)] = upstream
            rule = _BACKWARD[node.op]
            if rule is None:
                continue
            for inp, contrib in rule(node, upstream):
                if not inp.requires_grad:
                    continue
                held = adjoints.get(id(inp))
                adjoints[id(inp)] = contrib if held is None else add(held, contrib)


@contextmanager
def _activated(tape: Tape):
    _TAPE_STACK.append(tape)
    try:
        yield
    finally:
        _TAPE_STACK.pop()


@contextmanager
def _paused():
    global _PAUSE_DEPTH
    _PAUSE_DEPTH += 1
    try:
        yield
    finally:
        _PAUSE_DEPTH -= 1


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _emit(op: str, inputs: tuple, params: dict = _EMPTY, track: bool | None = None) -> Tensor:
    out = _FORWARD[op]([t.data for t in inputs], params)
    if track is None:
        track = any(t.requires_grad for t in inputs)
    result = Tensor._raw(out, track)
    tape = _active_tape()
    if tape is not None and _PAUSE_DEPTH == 0:
        tape._record(TapeNode(op, inputs, params, result))
    return result


def _need_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# forward kernels (shared by execution and tape replay)

def _k_matmul(d, p):
    return d[0] @ d[1]


def _k_transpose(d, p):
    return d[0].T.copy()


def _k_add(d, p):
    return d[0] + d[1]


def _k_sub(d, p):
    return d[0] - d[1]


def _k_hadamard(d, p):
    return d[0] * d[1]


def _k_add_scalar(d, p):
    return d[0] + p["value"]


def _k_mul_scalar(d, p):
    return d[0] * p["value"]


def _k_sigmoid(d, p):
    x = d[0]
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _k_relu(d, p):
    return np.maximum(d[0], 0.0)


def _k_one_minus(d, p):
    return 1.0 - d[0]


def _k_reciprocal(d, p):
    return 1.0 / d[0]


def _k_log(d, p):
    return np.log(d[0])


def _k_exp(d, p):
    return np.exp(d[0])


def _k_greater_than(d, p):
    return (d[0] > p["value"]).astype(np.float64)


def _k_clamp_min(d, p):
    return np.maximum(d[0], p["value"])


def _k_smooth_l1(d, p):
    x = d[0]
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def _k_clip_unit(d, p):
    return np.clip(d[0], -1.0, 1.0)


def _k_unit_mask(d, p):
    return (np.abs(d[0]) < 1.0).astype(np.float64)


def _k_softmax_rows(d, p):
    x = d[0]
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _k_row_sums(d, p):
    return d[0].sum(axis=1, keepdims=True)


def _k_col_sums(d, p):
    return d[0].sum(axis=0, keepdims=True)


def _k_sum_all(d, p):
    return d[0].sum(axis=None, keepdims=True)


def _k_broadcast_rows(d, p):
    return np.repeat(d[0], p["count"], axis=0)


def _k_broadcast_cols(d, p):
    return np.repeat(d[0], p["count"], axis=1)


def _k_broadcast_full(d, p):
    return np.full(p["shape"], d[0][0, 0])


def _k_gather_rows(d, p):
    return d[0][p["indices"]]


def _k_scatter_rows(d, p):
    out = np.zeros((p["num_rows"], d[0].shape[1]))
    np.add.at(out, p["indices"], d[0])
    return out


def _k_concat_cols(d, p):
    return np.concatenate([d[0], d[1]], axis=1)


def _k_slice_cols(d, p):
    return d[0][:, p["start"]:p["stop"]].copy()


def _k_pad_cols(d, p):
    return np.pad(d[0], ((0, 0), (p["left"], p["right"])))


_FORWARD = {
    "matmul": _k_matmul,
    "transpose": _k_transpose,
    "add": _k_add,
    "sub": _k_sub,
    "hadamard": _k_hadamard,
    "add_scalar": _k_add_scalar,
    "mul_scalar": _k_mul_scalar,
    "sigmoid": _k_sigmoid,
    "relu": _k_relu,
    "one_minus": _k_one_minus,
    "reciprocal": _k_reciprocal,
    "log": _k_log,
    "exp": _k_exp,
    "greater_than": _k_greater_than,
    "clamp_min": _k_clamp_min,
    "smooth_l1": _k_smooth_l1,
    "clip_unit": _k_clip_unit,
    "unit_interval_mask": _k_unit_mask,
    "softmax_rows": _k_softmax_rows,
    "row_sums": _k_row_sums,
    "col_sums": _k_col_sums,
    "sum_all": _k_sum_all,
    "broadcast_rows": _k_broadcast_rows,
    "broadcast_cols": _k_broadcast_cols,
    "broadcast_full": _k_broadcast_full,
    "gather_rows": _k_gather_rows,
    "scatter_rows": _k_scatter_rows,
    "concat_cols": _k_concat_cols,
    "slice_cols": _k_slice_cols,
    "pad_cols": _k_pad_cols,
}


# ---------------------------------------------------------------------------
# public operations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions of {a.shape} and {b.shape} disagree")
    return _emit("matmul", (a, b))


def transpose(a: Tensor) -> Tensor:
    return _emit("transpose", (a,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape(a, b, "add")
    return _emit("add", (a, b))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape(a, b, "sub")
    return _emit("sub", (a, b))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _need_same_shape(a, b, "hadamard")
    return _emit("hadamard", (a, b))


def add_scalar(a: Tensor, value: float) -> Tensor:
    return _emit("add_scalar", (a,), {"value": float(value)})


def mul_scalar(a: Tensor, value: float) -> Tensor:
    return _emit("mul_scalar", (a,), {"value": float(value)})


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function, numerically stable for large |x|."""
    return _emit("sigmoid", (a,))


def relu(a: Tensor) -> Tensor:
    return _emit("relu", (a,))


def one_minus(a: Tensor) -> Tensor:
    """1 - a, elementwise."""
    return _emit("one_minus", (a,))


def reciprocal(a: Tensor) -> Tensor:
    return _emit("reciprocal", (a,))


def log(a: Tensor) -> Tensor:
    return _emit("log", (a,))


def exp(a: Tensor) -> Tensor:
    return _emit("exp", (a,))


def greater_than(a: Tensor, value: float) -> Tensor:
    """0/1 indicator of a > value. Not differentiable (zero gradient)."""
    return _emit("greater_than", (a,), {"value": float(value)}, track=False)


def unit_interval_mask(a: Tensor) -> Tensor:
    """0/1 indicator of |a| < 1. Not differentiable (zero gradient)."""
    return _emit("unit_interval_mask", (a,), track=False)


def clamp_min(a: Tensor, value: float) -> Tensor:
    return _emit("clamp_min", (a,), {"value": float(value)})


def smooth_l1(a: Tensor) -> Tensor:
    """Elementwise robust loss: 0.5*x^2 for |x| < 1, |x| - 0.5 otherwise."""
    return _emit("smooth_l1", (a,))


def clip_unit(a: Tensor) -> Tensor:
    """Clamp into [-1, 1]; derivative of smooth_l1."""
    return _emit("clip_unit", (a,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    """x for x > 0 else slope*x, built from primitives."""
    gate = add_scalar(mul_scalar(greater_than(a, 0.0), 1.0 - slope), slope)
    return hadamard(a, gate)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction for stability."""
    if a.shape[1] < 1:
        raise ShapeError(f"softmax_rows: need at least one column, got {a.shape}")
    return _emit("softmax_rows", (a,))


def row_sums(a: Tensor) -> Tensor:
    return _emit("row_sums", (a,))


def col_sums(a: Tensor) -> Tensor:
    return _emit("col_sums", (a,))


def sum_all(a: Tensor) -> Tensor:
    return _emit("sum_all", (a,))


def broadcast_rows(a: Tensor, count: int) -> Tensor:
    """Repeat a 1xM row vector into count x M."""
    if a.shape[0] != 1:
        raise ShapeError(f"broadcast_rows: expected a single row, got {a.shape}")
    return _emit("broadcast_rows", (a,), {"count": int(count)})


def broadcast_cols(a: Tensor, count: int) -> Tensor:
    """Repeat an Nx1 column vector into N x count."""
    if a.shape[1] != 1:
        raise ShapeError(f"broadcast_cols: expected a single column, got {a.shape}")
    return _emit("broadcast_cols", (a,), {"count": int(count)})


def broadcast_full(a: Tensor, shape: tuple[int, int]) -> Tensor:
    """Fill the given shape with the value of a 1x1 tensor."""
    if a.shape != (1, 1):
        raise ShapeError(f"broadcast_full: expected a 1x1 tensor, got {a.shape}")
    return _emit("broadcast_full", (a,), {"shape": (int(shape[0]), int(shape[1]))})


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows: indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {a.shape[0]} rows")
    idx = idx.copy()
    idx.flags.writeable = False
    return _emit("gather_rows", (a,), {"indices": idx})


def scatter_rows(a: Tensor, indices, num_rows: int) -> Tensor:
    """Add rows of ``a`` into a zero matrix at the given row indices."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.shape != (a.shape[0],):
        raise ShapeError("scatter_rows: need one index per input row")
    if idx.size and (idx.min() < 0 or idx.max() >= num_rows):
        raise ShapeError(f"scatter_rows: index out of range for {num_rows} rows")
    idx = idx.copy()
    idx.flags.writeable = False
    return _emit("scatter_rows", (a,), {"indices": idx, "num_rows": int(num_rows)})


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row counts of {a.shape} and {b.shape} differ")
    return _emit("concat_cols", (a, b))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= a.shape[1]):
        raise ShapeError(f"slice_cols: range [{start}, {stop}) invalid for {a.shape}")
    return _emit("slice_cols", (a,), {"start": int(start), "stop": int(stop)})


def pad_cols(a: Tensor, left: int, right: int) -> Tensor:
    if left < 0 or right < 0:
        raise ShapeError("pad_cols: pad widths must be nonnegative")
    return _emit("pad_cols", (a,), {"left": int(left), "right": int(right)})


def mean_pool(h: Tensor) -> Tensor:
    """Column means of an NxD matrix as a 1xD row."""
    n = h.shape[0]
    if n == 0:
        raise ValidationError("mean_pool: cannot pool an empty graph (0 rows)")
    return mul_scalar(col_sums(h), 1.0 / n)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "hadamard": hadamard,
    "sigmoid": sigmoid,
    "relu": relu,
    "one_minus": one_minus,
}


def elementwise(op: str, *args: Tensor) -> Tensor:
    """Dispatch to a named elementwise operation."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValidationError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# backward rules, each built from the public primitives above so that the
# backward pass is itself differentiable when recorded

def _b_matmul(node, g):
    a, b = node.inputs
    return ((a, matmul(g, transpose(b))), (b, matmul(transpose(a), g)))


def _b_transpose(node, g):
    return ((node.inputs[0], transpose(g)),)


def _b_add(node, g):
    a, b = node.inputs
    return ((a, g), (b, g))


def _b_sub(node, g):
    a, b = node.inputs
    return ((a, g), (b, mul_scalar(g, -1.0)))


def _b_hadamard(node, g):
    a, b = node.inputs
    return ((a, hadamard(g, b)), (b, hadamard(g, a)))


def _b_add_scalar(node, g):
    return ((node.inputs[0], g),)


def _b_mul_scalar(node, g):
    return ((node.inputs[0], mul_scalar(g, node.params["value"])),)


def _b_sigmoid(node, g):
    y = node.output
    return ((node.inputs[0], hadamard(g, hadamard(y, one_minus(y)))),)


def _b_relu(node, g):
    x = node.inputs[0]
    return ((x, hadamard(g, greater_than(x, 0.0))),)


def _b_one_minus(node, g):
    return ((node.inputs[0], mul_scalar(g, -1.0)),)


def _b_reciprocal(node, g):
    y = node.output
    return ((node.inputs[0], mul_scalar(hadamard(g, hadamard(y, y)), -1.0)),)


def _b_log(node, g):
    x = node.inputs[0]
    return ((x, hadamard(g, reciprocal(x))),)


def _b_exp(node, g):
    return ((node.inputs[0], hadamard(g, node.output)),)


def _b_clamp_min(node, g):
    x = node.inputs[0]
    return ((x, hadamard(g, greater_than(x, node.params["value"]))),)


def _b_smooth_l1(node, g):
    x = node.inputs[0]
    return ((x, hadamard(g, clip_unit(x))),)


def _b_clip_unit(node, g):
    x = node.inputs[0]
    return ((x, hadamard(g, unit_interval_mask(x))),)


def _b_softmax_rows(node, g):
    y = node.output
    weighted = row_sums(hadamard(g, y))
    centered = sub(g, broadcast_cols(weighted, y.shape[1]))
    return ((node.inputs[0], hadamard(y, centered)),)


def _b_row_sums(node, g):
    x = node.inputs[0]
    return ((x, broadcast_cols(g, x.shape[1])),)


def _b_col_sums(node, g):
    x = node.inputs[0]
    return ((x, broadcast_rows(g, x.shape[0])),)


def _b_sum_all(node, g):
    x = node.inputs[0]
    return ((x, broadcast_full(g, x.shape)),)


def _b_broadcast_rows(node, g):
    return ((node.inputs[0], col_sums(g)),)


def _b_broadcast_cols(node, g):
    return ((node.inputs[0], row_sums(g)),)


def _b_broadcast_full(node, g):
    return ((node.inputs[0], sum_all(g)),)


def _b_gather_rows(node, g):
    x = node.inputs[0]
    return ((x, scatter_rows(g, node.params["indices"], x.shape[0])),)


def _b_scatter_rows(node, g):
    return ((node.inputs[0], gather_rows(g, node.params["indices"])),)


def _b_concat_cols(node, g):
    a, b = node.inputs
    ca = a.shape[1]
    return ((a, slice_cols(g, 0, ca)), (b, slice_cols(g, ca, ca + b.shape[1])))


def _b_slice_cols(node, g):
    x = node.inputs[0]
    start, stop = node.params["start"], node.params["stop"]
    return ((x, pad_cols(g, start, x.shape[1] - stop)),)


def _b_pad_cols(node, g):
    x = node.inputs[0]
    left = node.params["left"]
    return ((x, slice_cols(g, left, left + x.shape[1])),)


_BACKWARD = {
    "matmul": _b_matmul,
    "transpose": _b_transpose,
    "add": _b_add,
    "sub": _b_sub,
    "hadamard": _b_hadamard,
    "add_scalar": _b_add_scalar,
    "mul_scalar": _b_mul_scalar,
    "sigmoid": _b_sigmoid,
    "relu": _b_relu,
    "one_minus": _b_one_minus,
    "reciprocal": _b_reciprocal,
    "log": _b_log,
    "exp": _b_exp,
    "greater_than": None,
    "clamp_min": _b_clamp_min,
    "smooth_l1": _b_smooth_l1,
    "clip_unit": _b_clip_unit,
    "unit_interval_mask": None,
    "softmax_rows": _b_softmax_rows,
    "row_sums": _b_row_sums,
    "col_sums": _b_col_sums,
    "sum_all": _b_sum_all,
    "broadcast_rows": _b_broadcast_rows,
    "broadcast_cols": _b_broadcast_cols,
    "broadcast_full": _b_broadcast_full,
    "gather_rows": _b_gather_rows,
    "scatter_rows": _b_scatter_rows,
    "concat_cols": _b_concat_cols,
    "slice_cols": _b_slice_cols,
    "pad_cols": _b_pad_cols,
}

assert set(_FORWARD) == set(_BACKWARD)

#: ops with a registered (non-zero) derivative, used by the gradient test suite
DIFFERENTIABLE_OPS = tuple(op for op, rule in _BACKWARD.items() if rule is not None)


# ---------------------------------------------------------------------------
# parameter collections

PARAMETER_GROUPS = (
    "gnn",
    "adapter",
    "time_predictor",
    "classifier_time",
    "classifier_graph",
)

#: the only groups the inner adaptation loop is allowed to modify
INNER_LOOP_GROUPS = ("gnn", "adapter")


class ParameterSet:
    """Named trainable tensors partitioned into fixed groups.

    Group membership is frozen at construction. ``with_updates`` returns a
    new set sharing untouched tensors, so parameter updates are functional
    and earlier states stay valid (needed when several adapted states of the
    same parameters are alive at once).
    """

    def __init__(self, tensors: dict[str, Tensor], groups: dict[str, tuple[str, ...]]):
        seen: dict[str, str] = {}
        for group, names in groups.items():
            if group not in PARAMETER_GROUPS:
                raise ValidationError(f"unknown parameter group {group!r}")
            for name in names:
                if name in seen:
                    raise ValidationError(f"parameter {name!r} assigned to two groups")
                if name not in tensors:
                    raise ValidationError(f"group {group!r} references missing tensor {name!r}")
                seen[name] = group
        for name in tensors:
            if name not in seen:
                raise ValidationError(f"tensor {name!r} belongs to no group")
        self._tensors = dict(tensors)
        self._groups = {g: tuple(names) for g, names in groups.items()}

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._tensors)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(self._groups)

    def group_names(self, group: str) -> tuple[str, ...]:
        return self._groups[group]

    def items_in(self, *groups: str) -> list[tuple[str, Tensor]]:
        if not groups:
            groups = self.groups
        out = []
        for g in groups:
            if g not in self._groups:
                raise ValidationError(f"unknown parameter group {g!r}")
            out.extend((name, self._tensors[name]) for name in self._groups[g])
        return out

    def with_updates(self, updates: dict[str, Tensor]) -> "ParameterSet":
        for name, t in updates.items():
            if name not in self._tensors:
                raise ValidationError(f"cannot update unknown parameter {name!r}")
            if t.shape != self._tensors[name].shape:
                raise ShapeError(
                    f"update for {name!r} has shape {t.shape}, expected {self._tensors[name].shape}"
                )
        merged = dict(self._tensors)
        merged.update(updates)
        return ParameterSet(merged, self._groups)

    def clone(self) -> "ParameterSet":
        """Deep copy sharing no arrays with this set."""
        fresh = {name: t.copy(requires_grad=True) for name, t in self._tensors.items()}
        return ParameterSet(fresh, self._groups)

    def fingerprint(self, *groups: str) -> str:
        """SHA-256 over the named groups' values, order independent of dict layout."""
        h = hashlib.sha256()
        for name, t in sorted(self.items_in(*groups)):
            h.update(name.encode())
            h.update(str(t.shape).encode())
            h.update(t.data.tobytes())
        return h.hexdigest()

    @property
    def total_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())


def grad(tape: Tape, output: Tensor, params: ParameterSet, groups=None) -> dict[str, Tensor]:
    """Gradient of a scalar wrt every parameter in the named groups.

    Parameters the output does not depend on get zero gradients. In exact
    mode the returned tensors are recorded on the tape and can be
    differentiated again.
    """
    pairs = params.items_in(*(groups or ()))
    grads = tape.gradient(output, [t for _, t in pairs])
    return {name: g for (name, _), g in zip(pairs, grads)}


def l2_norm(tensors) -> float:
    """Euclidean norm over the concatenation of all entries (plain float)."""
    total = 0.0
    for t in tensors:
        d = t.data if isinstance(t, Tensor) else np.asarray(t)
        total += float((d * d).sum())
    return float(np.sqrt(total))
