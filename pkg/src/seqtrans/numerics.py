"""Log-semiring arithmetic, small dense tensors and a recording tape.

All probability arithmetic in the package is carried out in the natural-log
domain on float64 values; ``-inf`` encodes probability zero.

The :class:`Tape` supports a fixed set of primitives (affine maps, tanh,
sigmoid, softmax, log-softmax, elementwise add/mul, 1-D "same" convolution and
gather) plus a few shape-only helpers (concat, slicing, reshape, sum) and an
opaque ``seq_loss`` node through which the lattice losses inject their
analytic gradients. There is no general autodiff; every backward rule lives in
this file and is checked against central differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

NEG_INF = -np.inf

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


class ContractError(ValueError):
    """Raised when an operation is called outside its documented domain."""


# ---------------------------------------------------------------------------
# plain numeric helpers
# ---------------------------------------------------------------------------


def logsumexp(values: ArrayLike, axis: Optional[int] = None):
    """Stable ``log(sum(exp(values)))``.

    Returns ``-inf`` exactly when every input is ``-inf``. ``axis=None``
    reduces over all elements and returns a Python float.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ContractError("logsumexp of an empty input")
    m = np.max(v, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(energies: ArrayLike, axis: int = -1) -> np.ndarray:
    e = np.asarray(energies, dtype=np.float64)
    z = np.exp(e - np.max(e, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def log_softmax(x: ArrayLike, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    s = x - m
    return s - np.log(np.sum(np.exp(s), axis=axis, keepdims=True))


def conv_offsets(width: int) -> Tuple[int, int]:
    """Left/right padding for a width-``width`` centred filter.

    Even widths are centred left-biased: one more tap on the left.
    """
    return width // 2, (width - 1) // 2


def conv1d_same(signal: ArrayLike, filters: ArrayLike) -> np.ndarray:
    """Zero-padded "same" cross-correlation of a 1-D signal with F filters.

    ``signal`` has shape (S,), ``filters`` (F, w); the result is (S, F) with
    ``out[s, f] = sum_k filters[f, k] * signal[s + k - left]``.
    """
    x = np.asarray(signal, dtype=np.float64)
    k = np.atleast_2d(np.asarray(filters, dtype=np.float64))
    if x.ndim != 1 or x.shape[0] == 0:
        raise ContractError("conv1d_same needs a non-empty 1-D signal")
    return _conv_windows(x, k.shape[1]) @ k.T


def _conv_windows(x: np.ndarray, width: int) -> np.ndarray:
    left, right = conv_offsets(width)
    padded = np.concatenate([np.zeros(left), x, np.zeros(right)])
    return np.lib.stride_tricks.sliding_window_view(padded, width)


# ---------------------------------------------------------------------------
# tensors and the tape
# ---------------------------------------------------------------------------


class Tensor:
    """Immutable float64 array, optionally bound to a slot on a :class:`Tape`."""

    __slots__ = ("data", "tape", "index")

    def __init__(
        self, data: ArrayLike, tape: Optional["Tape"] = None, index: int = -1, _fresh: bool = False
    ):
        if _fresh and isinstance(data, np.ndarray) and data.dtype == np.float64:
            arr = data
        else:
            arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, index={self.index})"


def _value(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _matmul_grads(g, x, w):
    if w.ndim == 1:
        if x.ndim == 1:
            return g * w, g * x
        return np.multiply.outer(g, w), np.tensordot(x, g, axes=(range(x.ndim - 1), range(g.ndim)))
    if x.ndim == 1:
        return w @ g, np.outer(x, g)
    gx = g @ w.T
    gw = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    return gx, gw


# Each entry: name -> (forward(values, attrs), backward(g, out, values, attrs)).
# Backward returns one gradient (or None) per input.


def _fwd_affine(v, a):
    out = v[0] @ v[1]
    return out + v[2] if len(v) == 3 else out


def _bwd_affine(g, out, v, a):
    gx, gw = _matmul_grads(g, v[0], v[1])
    if len(v) == 3:
        return [gx, gw, _unbroadcast(g, v[2].shape)]
    return [gx, gw]


def _bwd_add(g, out, v, a):
    return [_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)]


def _bwd_mul(g, out, v, a):
    return [_unbroadcast(g * v[1], v[0].shape), _unbroadcast(g * v[0], v[1].shape)]


def _bwd_softmax(g, out, v, a):
    return [out * (g - np.sum(g * out, axis=-1, keepdims=True))]


def _bwd_log_softmax(g, out, v, a):
    return [g - np.exp(out) * np.sum(g, axis=-1, keepdims=True)]


def _fwd_conv1d(v, a):
    return conv1d_same(v[0], v[1])


def _bwd_conv1d(g, out, v, a):
    x, k = v[0], np.atleast_2d(v[1])
    width = k.shape[1]
    left, right = conv_offsets(width)
    win = _conv_windows(x, width)
    gk = (g.T @ win).reshape(v[1].shape)
    gw = g @ k  # (S, w): gradient on each window
    gpad = np.zeros(x.shape[0] + left + right)
    s = x.shape[0]
    for j in range(width):
        gpad[j : j + s] += gw[:, j]
    return [gpad[left : left + s], gk]


def _fwd_gather(v, a):
    return np.array(v[0][a["index"]], dtype=np.float64)


def _bwd_gather(g, out, v, a):
    gx = np.zeros_like(v[0])
    np.add.at(gx, a["index"], g)
    return [gx]


def _fwd_concat(v, a):
    return np.concatenate(v, axis=a["axis"])


def _bwd_concat(g, out, v, a):
    axis = a["axis"]
    bounds = np.cumsum([x.shape[axis] for x in v])[:-1]
    return list(np.split(g, bounds, axis=axis))


def _fwd_sum(v, a):
    return np.array(np.sum(v[0]))


def _bwd_sum(g, out, v, a):
    return [np.broadcast_to(g, v[0].shape).copy()]


def _fwd_seq_loss(v, a):
    loss, grad = a["fn"](v[0])
    a["grad"] = grad
    return np.array(loss, dtype=np.float64)


def _bwd_seq_loss(g, out, v, a):
    grad = a["grad"]
    if not np.isfinite(out):
        return [np.zeros_like(v[0])]
    return [g * grad]


_OPS: Dict[str, Tuple[Callable, Callable]] = {
    "affine": (_fwd_affine, _bwd_affine),
    "add": (lambda v, a: v[0] + v[1], _bwd_add),
    "mul": (lambda v, a: v[0] * v[1], _bwd_mul),
    "tanh": (lambda v, a: np.tanh(v[0]), lambda g, o, v, a: [g * (1.0 - o * o)]),
    "sigmoid": (
        lambda v, a: 1.0 / (1.0 + np.exp(-v[0])),
        lambda g, o, v, a: [g * o * (1.0 - o)],
    ),
    "softmax": (lambda v, a: softmax(v[0]), _bwd_softmax),
    "log_softmax": (lambda v, a: log_softmax(v[0]), _bwd_log_softmax),
    "conv1d": (_fwd_conv1d, _bwd_conv1d),
    "gather": (_fwd_gather, _bwd_gather),
    "concat": (_fwd_concat, _bwd_concat),
    "reshape": (
        lambda v, a: v[0].reshape(a["shape"]),
        lambda g, o, v, a: [g.reshape(v[0].shape)],
    ),
    "sum": (_fwd_sum, _bwd_sum),
    "seq_loss": (_fwd_seq_loss, _bwd_seq_loss),
}


@dataclass
class _Node:
    op: str
    inputs: List[object]  # Tensor (taped or constant) or ndarray constant
    attrs: dict
    out: Tensor


class Tape:
    """Ordered record of primitive operations with reverse-mode gradients.

    With ``record=False`` the same methods only compute forward values,
    which is what the decoders use.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: List[_Node] = []
        self._n_slots = 0

    # -- construction ------------------------------------------------------

    def leaf(self, data: ArrayLike) -> Tensor:
        if not self.record:
            return Tensor(data)
        t = Tensor(data, self, self._n_slots)
        self._n_slots += 1
        return t

    def _apply(self, op: str, inputs: List[object], **attrs) -> Tensor:
        values = [_value(x) for x in inputs]
        out = np.asarray(_OPS[op][0](values, attrs), dtype=np.float64)
        if not self.record or not any(
            isinstance(x, Tensor) and x.tape is self for x in inputs
        ):
            return Tensor(out, _fresh=True)
        t = Tensor(out, self, self._n_slots, _fresh=True)
        self._n_slots += 1
        self.nodes.append(_Node(op, list(inputs), attrs, t))
        return t

    def affine(self, x, w, b=None) -> Tensor:
        return self._apply("affine", [x, w] if b is None else [x, w, b])

    def add(self, a, b) -> Tensor:
        return self._apply("add", [a, b])

    def mul(self, a, b) -> Tensor:
        return self._apply("mul", [a, b])

    def tanh(self, x) -> Tensor:
        return self._apply("tanh", [x])

    def sigmoid(self, x) -> Tensor:
        return self._apply("sigmoid", [x])

    def softmax(self, x) -> Tensor:
        return self._apply("softmax", [x])

    def log_softmax(self, x) -> Tensor:
        return self._apply("log_softmax", [x])

    def conv1d(self, signal, filters) -> Tensor:
        return self._apply("conv1d", [signal, filters])

    def gather(self, x, index) -> Tensor:
        return self._apply("gather", [x], index=index)

    def concat(self, xs: Sequence, axis: int = -1) -> Tensor:
        return self._apply("concat", list(xs), axis=axis)

    def reshape(self, x, shape) -> Tensor:
        return self._apply("reshape", [x], shape=tuple(shape))

    def sum(self, x) -> Tensor:
        return self._apply("sum", [x])

    def seq_loss(self, x, fn: Callable[[np.ndarray], Tuple[float, np.ndarray]]) -> Tensor:
        """Scalar loss node whose value and gradient come from ``fn``."""
        return self._apply("seq_loss", [x], fn=fn)

    # convenience compositions
    def sub(self, a, b) -> Tensor:
        return self.add(a, self.mul(b, -1.0))

    def scale(self, x, c: float) -> Tensor:
        return self.mul(x, float(c))

    # -- reverse pass ------------------------------------------------------

    def backward(self, out: Tensor) -> List[Optional[np.ndarray]]:
        """Gradients of scalar ``out`` for every slot (None where unreached)."""
        if out.tape is not self:
            raise ContractError("output tensor was not recorded on this tape")
        grads: List[Optional[np.ndarray]] = [None] * self._n_slots
        grads[out.index] = np.ones_like(out.data)
        for node in reversed(self.nodes):
            g = grads[node.out.index]
            if g is None:
                continue
            values = [_value(x) for x in node.inputs]
            in_grads = _OPS[node.op][1](g, node.out.data, values, node.attrs)
            for x, gx in zip(node.inputs, in_grads):
                if gx is None or not (isinstance(x, Tensor) and x.tape is self):
                    continue
                prev = grads[x.index]
                grads[x.index] = gx if prev is None else prev + gx
        return grads

    def grad(self, out: Tensor, wrt: Union[Tensor, Dict[str, Tensor]]):
        """Gradient of ``out`` with respect to a leaf or a dict of leaves."""
        grads = self.backward(out)

        def pick(t: Tensor) -> np.ndarray:
            g = grads[t.index] if t.tape is self else None
            return np.zeros_like(t.data) if g is None else g

        if isinstance(wrt, Tensor):
            return pick(wrt)
        return {k: pick(t) for k, t in wrt.items()}

    def replay(self, leaves: Optional[Dict[int, np.ndarray]] = None) -> List[np.ndarray]:
        """Recompute every recorded node from its inputs.

        ``leaves`` may override leaf values by slot index; the result lists
        the recomputed outputs in recording order.
        """
        vals: Dict[int, np.ndarray] = dict(leaves or {})
        outs = []
        for node in self.nodes:
            values = []
            for x in node.inputs:
                if isinstance(x, Tensor) and x.tape is self and x.index in vals:
                    values.append(vals[x.index])
                else:
                    values.append(_value(x))
            attrs = dict(node.attrs)
            res = _OPS[node.op][0](values, attrs)
            vals[node.out.index] = res
            outs.append(res)
        return outs


NO_TAPE = Tape(record=False)


# ---------------------------------------------------------------------------
# finite-difference validation
# ---------------------------------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_error: float
    rel_errors: Dict[str, np.ndarray] = field(default_factory=dict)
    nonfinite: List[Tuple[str, Tuple[int, ...]]] = field(default_factory=list)

    def __float__(self) -> float:
        return self.max_rel_error


def grad_check(
    f: Callable,
    point: Union[np.ndarray, Dict[str, np.ndarray]],
    step: float = 1e-5,
) -> GradCheckResult:
    """Compare tape gradients of a scalar function to central differences.

    ``f(tape, x)`` must return a scalar Tensor, where ``x`` is a leaf Tensor
    (or a dict of them when ``point`` is a dict). The per-coordinate error is
    ``|a - n| / (|a| + |n| + 1e-12)``.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ContractError(f"step {step} outside [1e-7, 1e-3]")
    single = not isinstance(point, dict)
    points = {"x": np.asarray(point, dtype=np.float64)} if single else {
        k: np.asarray(v, dtype=np.float64) for k, v in point.items()
    }

    def call(tape: Tape, arrays: Dict[str, np.ndarray]) -> Tensor:
        leaves = {k: tape.leaf(v) for k, v in arrays.items()}
        return f(tape, leaves["x"] if single else leaves), leaves

    tape = Tape()
    out, leaves = call(tape, points)
    analytic = tape.grad(out, leaves)

    result = GradCheckResult(0.0)
    for name, base in points.items():
        errs = np.zeros(base.shape)
        for idx in np.ndindex(base.shape):
            shifted = []
            for sign in (1.0, -1.0):
                arrays = {k: v.copy() for k, v in points.items()}
                arrays[name][idx] += sign * step
                val, _ = call(NO_TAPE, arrays)
                shifted.append(val.item())
            if not all(np.isfinite(shifted)):
                result.nonfinite.append((name, idx))
                errs[idx] = np.inf
                continue
            num = (shifted[0] - shifted[1]) / (2.0 * step)
            a = analytic[name][idx]
            errs[idx] = abs(a - num) / (abs(a) + abs(num) + 1e-12)
        result.rel_errors[name] = errs
        if errs.size:
            result.max_rel_error = max(result.max_rel_error, float(np.max(errs)))
    return result
