"""Minimal dense-tensor engine with reverse-mode differentiation.

The engine supports exactly the primitive set the recommender model needs:
affine maps, the usual pointwise nonlinearities, row softmax, reductions,
cosine similarity, plus a few structural primitives (gather / stack /
select / transpose) required to batch sequences. No general broadcasting:
the only broadcast allowed is a trailing-dimension bias in ``add``.

Recording model: while a :class:`Tape` is active, every primitive applied
to at least one ``requires_grad`` tensor appends a node. ``backward`` walks
the tape once in reverse and leaves total derivatives on the leaf tensors.
A tape belongs to one logical training step and is consumed by ``backward``.

Conventions fixed for bit-reproducibility:
  * ReLU subgradient at 0 is 0.
  * Accumulated gradients are summed in tape order; no in-place updates.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError

_tensor_ids = itertools.count()

_active_tape: Optional["Tape"] = None
_grad_enabled: bool = True


class Tensor:
    """A dense array with an optional gradient slot.

    ``data`` is row-major and owns a single dtype (float32 for training,
    float64 for gradient checking). ``grad`` is populated by ``backward``
    for leaf tensors only; intermediate activations are not retained.
    """

    __slots__ = ("data", "requires_grad", "grad", "tid", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tid = next(_tensor_ids)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class _Node:
    __slots__ = ("kind", "out_tid", "inputs", "bwd", "needs")

    def __init__(self, kind, out_tid, inputs, bwd, needs):
        self.kind = kind
        self.out_tid = out_tid
        self.inputs = inputs
        self.bwd = bwd
        self.needs = needs


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    __slots__ = ("nodes", "consumed", "_prev")

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False
        self._prev = None

    def __enter__(self) -> "Tape":
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False

    def __len__(self) -> int:
        return len(self.nodes)


@contextmanager
def no_grad():
    """Disable tape recording (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _shapes(tensors) -> str:
    return ", ".join(str(t.data.shape) for t in tensors)


def _check_dtypes(kind: str, tensors) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"{kind}: mixed dtypes {sorted(map(str, dtypes))}")


# ---------------------------------------------------------------------------
# Primitive implementations. Each returns (out_array, backward_closure).
# The closure maps the output gradient to a list of input gradients aligned
# with the inputs; entries for inputs that do not need gradients may be None.
# ---------------------------------------------------------------------------


def _p_matmul(a: Tensor, b: Tensor):
    A, B = a.data, b.data
    ok = (
        (A.ndim == 2 and B.ndim == 2 and A.shape[1] == B.shape[0])
        or (A.ndim == 3 and B.ndim == 2 and A.shape[2] == B.shape[0])
        or (A.ndim == 3 and B.ndim == 3 and A.shape[0] == B.shape[0] and A.shape[2] == B.shape[1])
    )
    if not ok:
        raise ContractError(f"matmul: incompatible shapes {A.shape} @ {B.shape}")
    out = A @ B

    def bwd(g):
        ga = g @ _swap(B)
        if A.ndim == 3 and B.ndim == 2:
            gb = np.tensordot(A, g, axes=((0, 1), (0, 1)))
        else:
            gb = _swap(A) @ g
        return [ga, gb]

    return out, bwd


def _p_add(a: Tensor, b: Tensor):
    A, B = a.data, b.data
    bias = B.shape != A.shape
    if bias and not (B.ndim == 1 and A.ndim >= 1 and A.shape[-1:] == B.shape):
        raise ContractError(f"add: incompatible shapes {A.shape} + {B.shape}")
    out = A + B

    def bwd(g):
        gb = g.reshape(-1, B.shape[0]).sum(axis=0) if bias else g
        return [g, gb]

    return out, bwd


def _p_elementwise_mul(a: Tensor, b: Tensor):
    A, B = a.data, b.data
    if A.shape != B.shape:
        raise ContractError(f"elementwise_mul: incompatible shapes {A.shape} * {B.shape}")
    out = A * B

    def bwd(g):
        return [g * B, g * A]

    return out, bwd


def _p_concat(*tensors: Tensor):
    if len(tensors) < 2:
        raise ContractError("concat: needs at least two inputs")
    lead = tensors[0].data.shape[:-1]
    for t in tensors[1:]:
        if t.data.shape[:-1] != lead or t.data.ndim != tensors[0].data.ndim:
            raise ContractError(f"concat: incompatible shapes {_shapes(tensors)}")
    widths = [t.data.shape[-1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=-1)
    offsets = np.cumsum(widths)[:-1]

    def bwd(g):
        return np.split(g, offsets, axis=-1)

    return out, bwd


def _p_relu(a: Tensor):
    mask = a.data > 0
    out = np.where(mask, a.data, a.data.dtype.type(0))

    def bwd(g):
        return [np.where(mask, g, g.dtype.type(0))]

    return out, bwd


def _p_tanh(a: Tensor):
    out = np.tanh(a.data)

    def bwd(g):
        return [g * (1.0 - out * out)]

    return out, bwd


def _p_sigmoid(a: Tensor):
    # tanh form is numerically stable on both tails
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

    def bwd(g):
        return [g * out * (1.0 - out)]

    return out, bwd


def _p_softmax_rows(a: Tensor):
    A = a.data
    if A.ndim < 1:
        raise ContractError("softmax_rows: input must have at least one axis")
    shifted = A - A.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return [out * (g - inner)]

    return out, bwd


def _p_sum(a: Tensor):
    A = a.data
    out = A.sum(dtype=A.dtype)

    def bwd(g):
        return [np.full(A.shape, g, dtype=A.dtype)]

    return np.asarray(out, dtype=A.dtype), bwd


def _p_mean(a: Tensor):
    A = a.data
    out = np.asarray(A.mean(dtype=A.dtype), dtype=A.dtype)

    def bwd(g):
        return [np.full(A.shape, g / A.size, dtype=A.dtype)]

    return out, bwd


def _p_l2_norm(a: Tensor):
    A = a.data
    out = np.asarray(np.sqrt((A * A).sum()), dtype=A.dtype)

    def bwd(g):
        if out == 0:
            raise DomainError("l2_norm: gradient undefined at the zero vector")
        return [(g / out) * A]

    return out, bwd


def _p_cosine_similarity(a: Tensor, b: Tensor):
    A, B = a.data, b.data
    if A.shape != B.shape or A.ndim not in (1, 2):
        raise ContractError(f"cosine_similarity: incompatible shapes {A.shape}, {B.shape}")
    axis = -1
    na = np.sqrt((A * A).sum(axis=axis))
    nb = np.sqrt((B * B).sum(axis=axis))
    if np.any(na == 0) or np.any(nb == 0):
        raise DomainError("cosine_similarity: zero-norm input vector")
    dot = (A * B).sum(axis=axis)
    out = dot / (na * nb)

    def bwd(g):
        if A.ndim == 1:
            ga = g * (B / (na * nb) - out * A / (na * na))
            gb = g * (A / (na * nb) - out * B / (nb * nb))
        else:
            ge = g[:, None]
            ga = ge * (B / (na * nb)[:, None] - (out / (na * na))[:, None] * A)
            gb = ge * (A / (na * nb)[:, None] - (out / (nb * nb))[:, None] * B)
        return [ga, gb]

    return np.asarray(out, dtype=A.dtype), bwd


def _p_scalar_mul(a: Tensor, *, c: float):
    A = a.data
    cc = A.dtype.type(c)
    out = A * cc

    def bwd(g):
        return [g * cc]

    return out, bwd


def _p_log(a: Tensor):
    A = a.data
    if np.any(A <= 0):
        raise DomainError("log: input must be strictly positive")
    out = np.log(A)

    def bwd(g):
        return [g / A]

    return out, bwd


def _p_gather(table: Tensor, *, idx):
    T = table.data
    if T.ndim != 2:
        raise ContractError(f"gather: table must be 2-d, got {T.shape}")
    ids = np.asarray(idx, dtype=np.intp)
    if ids.ndim != 1:
        raise ContractError(f"gather: indices must be 1-d, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= T.shape[0]):
        raise ContractError(
            f"gather: index out of bounds for table with {T.shape[0]} rows"
        )
    out = T[ids]

    def bwd(g):
        gt = np.zeros_like(T)
        np.add.at(gt, ids, g)
        return [gt]

    return out, bwd


def _p_stack_seq(*tensors: Tensor):
    if not tensors:
        raise ContractError("stack_seq: needs at least one input")
    shape = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != shape:
            raise ContractError(f"stack_seq: incompatible shapes {_shapes(tensors)}")
    out = np.stack([t.data for t in tensors], axis=1)

    def bwd(g):
        return [g[:, i] for i in range(len(tensors))]

    return out, bwd


def _p_select_step(a: Tensor, *, t: int):
    A = a.data
    if A.ndim < 2:
        raise ContractError(f"select_step: input must have at least 2 axes, got {A.shape}")
    if not (0 <= t < A.shape[1]):
        raise ContractError(f"select_step: step {t} out of range for shape {A.shape}")
    out = A[:, t]

    def bwd(g):
        ga = np.zeros_like(A)
        ga[:, t] = g
        return [ga]

    return out, bwd


def _p_transpose_last2(a: Tensor):
    A = a.data
    if A.ndim < 2:
        raise ContractError(f"transpose_last2: input must have at least 2 axes, got {A.shape}")
    out = _swap(A)

    def bwd(g):
        return [_swap(g)]

    return out, bwd


def _p_reshape(a: Tensor, *, shape):
    A = a.data
    target = tuple(int(s) for s in shape)
    if int(np.prod(target)) != A.size:
        raise ContractError(f"reshape: cannot view {A.shape} as {target}")
    out = A.reshape(target)

    def bwd(g):
        return [g.reshape(A.shape)]

    return out, bwd


_PRIMITIVES: dict[str, Callable] = {
    "matmul": _p_matmul,
    "add": _p_add,
    "elementwise_mul": _p_elementwise_mul,
    "concat": _p_concat,
    "relu": _p_relu,
    "tanh": _p_tanh,
    "sigmoid": _p_sigmoid,
    "softmax_rows": _p_softmax_rows,
    "mean": _p_mean,
    "sum": _p_sum,
    "l2_norm": _p_l2_norm,
    "cosine_similarity": _p_cosine_similarity,
    "scalar_mul": _p_scalar_mul,
    "log": _p_log,
    "gather": _p_gather,
    "stack_seq": _p_stack_seq,
    "select_step": _p_select_step,
    "transpose_last2": _p_transpose_last2,
    "reshape": _p_reshape,
}

PRIMITIVE_KINDS = tuple(_PRIMITIVES)


def apply_primitive(kind: str, inputs: Sequence[Tensor] | Tensor, **attrs) -> Tensor:
    """Apply a named primitive, recording a tape node if gradients are live."""
    impl = _PRIMITIVES.get(kind)
    if impl is None:
        raise ContractError(f"unknown primitive {kind!r}")
    tensors = (inputs,) if isinstance(inputs, Tensor) else tuple(inputs)
    for t in tensors:
        if not isinstance(t, Tensor):
            raise ContractError(f"{kind}: inputs must be Tensors, got {type(t).__name__}")
    _check_dtypes(kind, tensors)
    out_data, bwd = impl(*tensors, **attrs)

    needs = tuple(t.requires_grad for t in tensors)
    track = _grad_enabled and any(needs)
    out = Tensor(out_data, requires_grad=track)
    if track and _active_tape is not None:
        _active_tape.nodes.append(_Node(kind, out.tid, tensors, bwd, needs))
    return out


def backward(loss: Tensor, tape: Tape, params: dict[str, Tensor] | None = None) -> dict[int, np.ndarray]:
    """Reverse sweep of ``tape`` from scalar ``loss``.

    Returns a map from leaf tensor id to total derivative and stores the
    same array in each leaf's ``grad``. Parameters passed in ``params`` that
    are unreachable from the loss receive zero gradients. The tape is
    consumed: a second call on it is a contract violation.
    """
    if loss.data.shape != ():
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if tape.consumed:
        raise ContractError("backward: tape already consumed")
    tape.consumed = True

    produced = {node.out_tid for node in tape.nodes}
    accum: dict[int, np.ndarray] = {loss.tid: np.ones((), dtype=loss.data.dtype)}
    leaves: dict[int, Tensor] = {}

    for node in reversed(tape.nodes):
        g = accum.pop(node.out_tid, None)
        if g is None:
            continue
        gins = node.bwd(g)
        for t, gi, need in zip(node.inputs, gins, node.needs):
            if not need or gi is None:
                continue
            prev = accum.get(t.tid)
            accum[t.tid] = gi if prev is None else prev + gi
            if t.tid not in produced:
                leaves[t.tid] = t

    grad_map: dict[int, np.ndarray] = {}
    for tid, t in leaves.items():
        g = np.ascontiguousarray(accum[tid])
        t.grad = g
        grad_map[tid] = g
    if params:
        for p in params.values():
            if p.requires_grad and p.tid not in grad_map:
                z = np.zeros_like(p.data)
                p.grad = z
                grad_map[p.tid] = z
    return grad_map


# Thin functional wrappers; every operation funnels through apply_primitive.

def matmul(a, b):
    return apply_primitive("matmul", [a, b])


def add(a, b):
    return apply_primitive("add", [a, b])


def mul(a, b):
    return apply_primitive("elementwise_mul", [a, b])


def concat(tensors):
    return apply_primitive("concat", tensors)


def relu(a):
    return apply_primitive("relu", [a])


def tanh(a):
    return apply_primitive("tanh", [a])


def sigmoid(a):
    return apply_primitive("sigmoid", [a])


def softmax_rows(a):
    return apply_primitive("softmax_rows", [a])


def reduce_mean(a):
    return apply_primitive("mean", [a])


def reduce_sum(a):
    return apply_primitive("sum", [a])


def l2_norm(a):
    return apply_primitive("l2_norm", [a])


def cosine_similarity(a, b):
    return apply_primitive("cosine_similarity", [a, b])


def scalar_mul(a, c: float):
    return apply_primitive("scalar_mul", [a], c=float(c))


def log(a):
    return apply_primitive("log", [a])


def gather(table, idx):
    return apply_primitive("gather", [table], idx=idx)


def stack_seq(tensors):
    return apply_primitive("stack_seq", tensors)


def select_step(a, t: int):
    return apply_primitive("select_step", [a], t=int(t))


def transpose_last2(a):
    return apply_primitive("transpose_last2", [a])


def reshape(a, shape):
    return apply_primitive("reshape", [a], shape=tuple(shape))


def sub(a, b):
    """a - b via the primitive set."""
    return add(a, scalar_mul(b, -1.0))


def constant(data, dtype=None) -> Tensor:
    """A non-trainable tensor (masks, zeros, anchors)."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=False)
