import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlbounds.losses import Loss, check_lipschitz, check_selfbounding, evaluate, subgradient, uniform_bound

H, LG = Loss.HINGE, Loss.LOGISTIC
scores = st.lists(st.floats(-50, 50), min_size=1, max_size=16)


def test_evaluate_examples():
    assert evaluate(H, [1, 1]) == 0.0
    assert evaluate(LG, [0, 0]) == pytest.approx(math.log(3), abs=1e-12)
    assert evaluate(H, [0.5, 2]) == 0.5


def test_subgradient_examples():
    assert subgradient(LG, [0.0]) == pytest.approx([-0.5])
    assert np.array_equal(subgradient(H, [2.0, 3.0]), [0.0, 0.0])
    assert np.array_equal(subgradient(H, [0.2, -1.0]), [0.0, -1.0])


def test_logistic_gradient_l1_at_most_one():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.normal(scale=5, size=rng.integers(1, 20))
        assert np.abs(subgradient(LG, v)).sum() <= 1 + 1e-12


def test_logistic_gradient_matches_finite_difference():
    v = np.array([0.3, -1.2, 2.0])
    g = subgradient(LG, v)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1e-6
        fd = (evaluate(LG, v + e) - evaluate(LG, v - e)) / 2e-6
        assert g[i] == pytest.approx(fd, abs=1e-8)


def test_batched_evaluate():
    V = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert np.allclose(evaluate(H, V), [1.0, 0.0])


def test_lipschitz_reports():
    rng = np.random.default_rng(1)
    for loss in (H, LG):
        for norm in ("l2", "linf"):
            r = check_lipschitz(loss, norm, 2000, rng)
            assert r.ok, (loss, norm, r.max_ratio)


def test_logistic_one_dim_slope():
    t = 1e-7
    assert abs(evaluate(LG, [0.0]) - evaluate(LG, [t])) / t == pytest.approx(0.5, rel=1e-5)


def test_selfbounding_example():
    lhs = abs(evaluate(LG, [0.0]) - evaluate(LG, [1.0]))
    assert lhs == pytest.approx(0.3799, abs=1e-4)
    assert lhs <= 2 * math.sqrt(math.log(2)) * 1.0
    r = check_selfbounding(2000, np.random.default_rng(2))
    assert r.violations == 0
    with pytest.raises(ValueError):
        check_selfbounding(10, np.random.default_rng(0), loss=H)


def test_uniform_bound():
    assert uniform_bound(H, 1.0, 3) == 3.0
    assert uniform_bound(LG, 1.0, 4) == pytest.approx(math.log(1 + 4 * math.e**2), abs=1e-12)
    assert uniform_bound(LG, 1e-8, 1) == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        uniform_bound(H, 0.0, 1)


def test_empty_scores_rejected():
    with pytest.raises(ValueError):
        evaluate(LG, [])


@given(scores)
def test_nonnegative(v):
    assert evaluate(H, v) >= 0 and evaluate(LG, v) >= 0


@settings(max_examples=200)
@given(scores, st.floats(-1, 1))
def test_linf_lipschitz_property(v, shift):
    a = np.array(v)
    b = a + shift
    for loss in (H, LG):
        assert abs(evaluate(loss, a) - evaluate(loss, b)) <= abs(shift) + 1e-9
