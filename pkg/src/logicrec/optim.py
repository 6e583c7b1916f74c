"""Bias-corrected Adam.

``adam_step`` is a pure function: it returns fresh parameter arrays and a
fresh state, so identical inputs produce bit-identical outputs. Defaults
are beta1=0.9, beta2=0.999, epsilon=1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon, step_count=0,
        first_moment={k: np.zeros_like(v) for k, v in params.items()},
        second_moment={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update over a named parameter collection.

    m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2, bias-corrected by the
    new step count, then theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    """
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    t = state.step_count + 1
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            raise ContractError(f"adam_step: missing gradient for {name!r}")
        if g.shape != theta.shape:
            raise ContractError(
                f"adam_step: grad shape {g.shape} does not match param shape "
                f"{theta.shape} for {name!r}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        if m.shape != theta.shape or v.shape != theta.shape:
            raise ContractError(f"adam_step: state shape mismatch for {name!r}")
        dt = theta.dtype.type
        b1, b2 = dt(state.beta1), dt(state.beta2)
        m = b1 * m + (dt(1) - b1) * g
        v = b2 * v + (dt(1) - b2) * (g * g)
        m_hat = m / (dt(1) - dt(state.beta1) ** t)
        v_hat = v / (dt(1) - dt(state.beta2) ** t)
        new_params[name] = theta - dt(state.lr) * m_hat / (np.sqrt(v_hat) + dt(state.epsilon))
        new_m[name] = m
        new_v[name] = v
    next_state = AdamState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon,
        step_count=t, first_moment=new_m, second_moment=new_v,
    )
    return new_params, next_state
