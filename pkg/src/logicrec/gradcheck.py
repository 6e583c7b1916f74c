"""Finite-difference verification of reverse-mode gradients.

A check takes a *builder*: a zero-argument callable returning
``(params, forward)`` where ``params`` maps names to ``requires_grad``
tensors and ``forward()`` recomputes the scalar loss from the current
parameter values. The builder must be deterministic; the checker runs the
forward twice and refuses to proceed if the two results differ bitwise.
"""

from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward, no_grad
from .errors import ContractError

Builder = Callable[[], tuple[dict[str, Tensor], Callable[[], Tensor]]]

REL_ERR_FLOOR = 1e-12


def finite_difference_check(builder: Builder, epsilon: float = 1e-5,
                            max_entries_per_param: int | None = None,
                            seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per entry is |a - f| / max(|a|, |f|, 1e-12). When
    ``max_entries_per_param`` is set, a seeded subsample of entries is
    checked per parameter; otherwise every entry is.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ContractError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    params, forward = builder()

    with no_grad():
        first = forward().data.copy()
        second = forward().data.copy()
    if first.tobytes() != second.tobytes():
        raise ContractError("non-deterministic builder: two forward passes disagree")

    with Tape() as tape:
        loss = forward()
    backward(loss, tape, params=params)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            entries = np.sort(rng.choice(n, size=max_entries_per_param, replace=False))
        else:
            entries = range(n)
        a_flat = analytic[name].reshape(-1)
        for i in entries:
            orig = flat[i]
            flat[i] = orig + epsilon
            with no_grad():
                f_plus = float(forward().data)
            flat[i] = orig - epsilon
            with no_grad():
                f_minus = float(forward().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            a = float(a_flat[i])
            err = abs(a - fd) / max(abs(a), abs(fd), REL_ERR_FLOOR)
            if err > worst:
                worst = err
    return worst


def _away_from_kink(rng, shape, margin=1e-3):
    """Standard-normal draw with entries resampled out of (-margin, margin)."""
    x = rng.standard_normal(shape)
    for _ in range(100):
        near = np.abs(x) < margin
        if not near.any():
            break
        x[near] = rng.standard_normal(int(near.sum()))
    return x


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """sum(out * w) for a fixed random w; probes the full Jacobian."""
    w = ad.constant(weights.astype(out.dtype))
    return ad.reduce_sum(ad.mul(out, w))


def standard_primitive_builders(seed: int = 0, dtype=np.float64) -> dict[str, Builder]:
    """One small randomized check graph per primitive kind."""

    def param(rng, shape, name, kink_safe=False):
        data = _away_from_kink(rng, shape) if kink_safe else rng.standard_normal(shape)
        return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=name)

    def make(build_fn, tag) -> Builder:
        salt = zlib.crc32(tag.encode()) & 0xFFFF

        def builder():
            rng = np.random.default_rng([seed, salt])
            return build_fn(rng)
        return builder

    def b_matmul(rng):
        a = param(rng, (4, 5), "a")
        b = param(rng, (5, 3), "b")
        c = param(rng, (2, 3, 5), "c")
        d = param(rng, (2, 5, 4), "d")
        w1 = rng.standard_normal((4, 3))
        w2 = rng.standard_normal((2, 3, 4))
        w3 = rng.standard_normal((2, 3, 3))

        def forward():
            t1 = _weighted_sum(ad.matmul(a, b), w1)
            t2 = _weighted_sum(ad.matmul(c, d), w2)
            t3 = _weighted_sum(ad.matmul(c, b), w3)
            return ad.add(ad.add(t1, t2), t3)

        return {"a": a, "b": b, "c": c, "d": d}, forward

    def b_add(rng):
        a = param(rng, (3, 4), "a")
        b = param(rng, (3, 4), "b")
        bias = param(rng, (4,), "bias")
        w = rng.standard_normal((3, 4))

        def forward():
            return _weighted_sum(ad.add(ad.add(a, b), bias), w)

        return {"a": a, "b": b, "bias": bias}, forward

    def b_mul(rng):
        a = param(rng, (2, 3, 4), "a")
        b = param(rng, (2, 3, 4), "b")
        w = rng.standard_normal((2, 3, 4))

        def forward():
            return _weighted_sum(ad.mul(a, b), w)

        return {"a": a, "b": b}, forward

    def b_concat(rng):
        a = param(rng, (3, 2), "a")
        b = param(rng, (3, 4), "b")
        c = param(rng, (3, 1), "c")
        w = rng.standard_normal((3, 7))

        def forward():
            return _weighted_sum(ad.concat([a, b, c]), w)

        return {"a": a, "b": b, "c": c}, forward

    def b_unary(op, kink_safe=False, positive=False):
        def build(rng):
            data = _away_from_kink(rng, (4, 5)) if kink_safe else rng.standard_normal((4, 5))
            if positive:
                data = np.abs(data) + 0.5
            x = Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name="x")
            w = rng.standard_normal((4, 5))

            def forward():
                return _weighted_sum(op(x), w)

            return {"x": x}, forward
        return build

    def b_softmax(rng):
        x = param(rng, (3, 6), "x")
        w = rng.standard_normal((3, 6))

        def forward():
            return _weighted_sum(ad.softmax_rows(x), w)

        return {"x": x}, forward

    def b_mean(rng):
        x = param(rng, (7,), "x")

        def forward():
            return ad.reduce_mean(x)

        return {"x": x}, forward

    def b_sum(rng):
        x = param(rng, (3, 3), "x")

        def forward():
            return ad.reduce_sum(ad.mul(x, x))

        return {"x": x}, forward

    def b_l2(rng):
        x = param(rng, (6,), "x")

        def forward():
            return ad.l2_norm(x)

        return {"x": x}, forward

    def b_cosine(rng):
        a = param(rng, (5,), "a")
        b = param(rng, (5,), "b")
        c = param(rng, (3, 4), "c")
        d = param(rng, (3, 4), "d")
        w = rng.standard_normal((3,))

        def forward():
            pair = ad.cosine_similarity(a, b)
            rows = _weighted_sum(ad.cosine_similarity(c, d), w)
            return ad.add(pair, rows)

        return {"a": a, "b": b, "c": c, "d": d}, forward

    def b_scalar_mul(rng):
        x = param(rng, (4,), "x")

        def forward():
            return ad.reduce_sum(ad.scalar_mul(x, -1.7))

        return {"x": x}, forward

    def b_gather(rng):
        table = param(rng, (6, 3), "table")
        idx = np.array([0, 2, 2, 5, 1])
        w = rng.standard_normal((5, 3))

        def forward():
            return _weighted_sum(ad.gather(table, idx), w)

        return {"table": table}, forward

    def b_stack(rng):
        a = param(rng, (2, 3), "a")
        b = param(rng, (2, 3), "b")
        w = rng.standard_normal((2, 2, 3))

        def forward():
            return _weighted_sum(ad.stack_seq([a, b]), w)

        return {"a": a, "b": b}, forward

    def b_select(rng):
        x = param(rng, (2, 4, 3), "x")
        w = rng.standard_normal((2, 3))

        def forward():
            return _weighted_sum(ad.select_step(x, 2), w)

        return {"x": x}, forward

    def b_transpose(rng):
        x = param(rng, (2, 3, 4), "x")
        w = rng.standard_normal((2, 4, 3))

        def forward():
            return _weighted_sum(ad.transpose_last2(x), w)

        return {"x": x}, forward

    def b_reshape(rng):
        x = param(rng, (6, 4), "x")
        w = rng.standard_normal((2, 3, 4))

        def forward():
            return _weighted_sum(ad.reshape(x, (2, 3, 4)), w)

        return {"x": x}, forward

    builders = {
        "matmul": b_matmul,
        "add": b_add,
        "elementwise_mul": b_mul,
        "concat": b_concat,
        "relu": b_unary(ad.relu, kink_safe=True),
        "tanh": b_unary(ad.tanh),
        "sigmoid": b_unary(ad.sigmoid),
        "softmax_rows": b_softmax,
        "mean": b_mean,
        "sum": b_sum,
        "l2_norm": b_l2,
        "cosine_similarity": b_cosine,
        "scalar_mul": b_scalar_mul,
        "log": b_unary(ad.log, positive=True),
        "gather": b_gather,
        "stack_seq": b_stack,
        "select_step": b_select,
        "transpose_last2": b_transpose,
        "reshape": b_reshape,
    }
    return {kind: make(fn, kind) for kind, fn in builders.items()}


def run_primitive_suite(seed: int = 0, epsilon: float = 1e-5,
                        dtype=np.float64) -> dict[str, float]:
    """Finite-difference error for every primitive kind."""
    return {
        kind: finite_difference_check(builder, epsilon=epsilon)
        for kind, builder in standard_primitive_builders(seed=seed, dtype=dtype).items()
    }
