import numpy as np
import pytest

from logicrec.errors import ContractError
from logicrec.optim import AdamState, adam_step, init_adam


def make(lr=1e-4):
    params = {"w": np.array([1.0, -2.0]), "b": np.array([[0.5]])}
    return params, init_adam(params, lr=lr)


def test_zero_gradient_leaves_params_unchanged():
    params, state = make()
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    new_params, new_state = adam_step(params, grads, state)
    for k in params:
        np.testing.assert_array_equal(new_params[k], params[k])
    assert new_state.step_count == 1


def test_first_step_matches_hand_evaluation():
    # g=2, lr=1e-4, defaults: m=0.2, v=0.004, m_hat=2, v_hat=4,
    # delta = -lr * 2 / (2 + 1e-8) = -9.99999995e-05
    params = {"w": np.array([0.0])}
    state = init_adam(params, lr=1e-4)
    new_params, _ = adam_step(params, {"w": np.array([2.0])}, state)
    expected = -1e-4 * 2.0 / (2.0 + 1e-8)
    assert new_params["w"][0] == pytest.approx(expected, rel=1e-12)
    assert abs(new_params["w"][0] + 1e-4) < 1e-11  # |delta| ~ lr on step one


def test_pure_function_bit_identical():
    params, state = make()
    rng = np.random.default_rng(0)
    grads = {k: rng.standard_normal(v.shape) for k, v in params.items()}
    before = {k: v.copy() for k, v in params.items()}
    out1, st1 = adam_step(params, grads, state)
    out2, st2 = adam_step(params, grads, state)
    for k in params:
        assert out1[k].tobytes() == out2[k].tobytes()
        assert st1.first_moment[k].tobytes() == st2.first_moment[k].tobytes()
        np.testing.assert_array_equal(params[k], before[k])  # inputs untouched
    assert state.step_count == 0  # input state unmodified


def test_identical_runs_have_identical_trajectories():
    def run():
        params, state = make(lr=1e-2)
        rng = np.random.default_rng(5)
        for _ in range(25):
            grads = {k: rng.standard_normal(v.shape) for k, v in params.items()}
            params, state = adam_step(params, grads, state)
        return {k: v.tobytes() for k, v in params.items()}

    assert run() == run()


def test_step_count_strictly_increases():
    params, state = make()
    grads = {k: np.ones_like(v) for k, v in params.items()}
    counts = []
    for _ in range(3):
        params, state = adam_step(params, grads, state)
        counts.append(state.step_count)
    assert counts == [1, 2, 3]


def test_shape_mismatch_rejected():
    params, state = make()
    grads = {"w": np.zeros(3), "b": np.zeros((1, 1))}
    with pytest.raises(ContractError, match="shape"):
        adam_step(params, grads, state)


def test_missing_gradient_rejected():
    params, state = make()
    with pytest.raises(ContractError, match="missing gradient"):
        adam_step(params, {"w": np.zeros(2)}, state)


def test_moment_state_shapes_validated():
    params = {"w": np.zeros(2)}
    bad = AdamState(lr=1e-3, first_moment={"w": np.zeros(3)},
                    second_moment={"w": np.zeros(2)})
    with pytest.raises(ContractError, match="state shape"):
        adam_step(params, {"w": np.zeros(2)}, bad)
