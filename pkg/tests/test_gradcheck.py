import numpy as np
import pytest

from logicrec import autodiff as ad
from logicrec.autodiff import Tensor
from logicrec.errors import ContractError
from logicrec.gradcheck import (finite_difference_check, run_primitive_suite,
                                standard_primitive_builders)
from logicrec.model import similarity_gradcheck_builder


def test_polynomial_is_near_exact():
    # f(x) = x^2 at x=3: analytic 6, central difference exact for quadratics
    def builder():
        x = Tensor(np.array([3.0]), requires_grad=True, name="x")

        def forward():
            return ad.reduce_sum(ad.mul(x, x))

        return {"x": x}, forward

    assert finite_difference_check(builder, epsilon=1e-5) < 1e-9


def test_every_primitive_under_tolerance():
    errors = run_primitive_suite(seed=0)
    assert set(errors) == set(standard_primitive_builders())
    bad = {k: v for k, v in errors.items() if v >= 1e-4}
    assert not bad, f"primitives over tolerance: {bad}"


def test_similarity_head_under_tolerance():
    assert finite_difference_check(similarity_gradcheck_builder(), epsilon=1e-5) < 1e-4


def test_epsilon_range_enforced():
    builders = standard_primitive_builders()
    with pytest.raises(ContractError, match="epsilon"):
        finite_difference_check(builders["sum"], epsilon=1e-2)
    with pytest.raises(ContractError, match="epsilon"):
        finite_difference_check(builders["sum"], epsilon=1e-8)


def test_non_deterministic_builder_detected():
    state = {"calls": 0}

    def builder():
        x = Tensor(np.ones(3), requires_grad=True, name="x")

        def forward():
            state["calls"] += 1
            jitter = Tensor(np.full(3, float(state["calls"])))
            return ad.reduce_sum(ad.mul(x, jitter))

        return {"x": x}, forward

    with pytest.raises(ContractError, match="non-deterministic"):
        finite_difference_check(builder)


def test_entry_subsampling_is_deterministic():
    def builder():
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((8, 8)), requires_grad=True, name="x")

        def forward():
            return ad.reduce_sum(ad.mul(x, x))

        return {"x": x}, forward

    a = finite_difference_check(builder, epsilon=1e-5, max_entries_per_param=10, seed=4)
    b = finite_difference_check(builder, epsilon=1e-5, max_entries_per_param=10, seed=4)
    assert a == b
