import math

import numpy as np
import pytest

from crlbounds import verify as V


def test_cover_examples():
    t = [[0.0], [1.0]]
    assert V.covering_number_linf(t, 2.0) == 1
    assert V.covering_number_linf(t, 0.4) == 2
    rng = np.random.default_rng(0)
    T = rng.uniform(-1, 1, size=(8, 5))
    assert V.covering_number_linf(T, 5.0) == 1
    assert V.cover_is_exact(T)


def test_cover_is_monotone_in_eps():
    rng = np.random.default_rng(1)
    T = rng.uniform(-1, 1, size=(10, 4))
    counts = [V.covering_number_linf(T, e) for e in (0.1, 0.5, 1.0, 2.0)]
    assert counts == sorted(counts, reverse=True)


def test_fat_examples():
    assert V.fat_shattering([[1.0, 1.0], [-1.0, -1.0]], 1.0) == 1
    assert V.fat_shattering([[0.3, 0.2]], 1.0) == 0
    four = [[1, 1], [1, -1], [-1, 1], [-1, -1]]
    assert V.fat_shattering(four, 1.0) == 2
    assert V.fat_shattering(four, 2.0) == 2
    assert V.fat_shattering(four, 2.5) == 0


def test_fat_witness_off_the_midpoint_grid():
    # values 0, 0.1, 1 on one point at eps = 1: the only working witness is 0.5,
    # which is not a midpoint of consecutive sorted values (0.05, 0.55)
    t = [[0.0], [0.1], [1.0]]
    assert V.fat_shattering(t, 1.0) == 1
    assert V.fat_shattering(t, 0.9) == 1
    assert V.fat_shattering(t, 1.01) == 0


def test_fat_rejects_large_tables():
    with pytest.raises(ValueError):
        V.fat_shattering(np.zeros((2, 11)), 1.0)
    with pytest.raises(ValueError):
        V.fat_shattering([[0.0]], 0.0)


def test_kk_equality_case():
    lhs, rhs, _ = V._kk_lower(None, 0)
    assert lhs == pytest.approx(1.0, abs=1e-12) and rhs == pytest.approx(1.0, abs=1e-12)


def test_chaos_two_point_value():
    val, bound, extra = V._chaos(None, 0)
    assert val == pytest.approx(math.exp(1 / (4 * math.e)), abs=1e-12)
    assert val == pytest.approx(1.0963, abs=1e-4) and bound == 2.0


def test_exact_helpers():
    vals = np.array([[[1.0], [1.0]], [[-1.0], [-1.0]]])
    assert V.exact_E_sup_vector(vals) == pytest.approx(1.0)
    assert V.worstcase_rademacher(np.array([[1.0, 0.0], [-1.0, 0.0]]), 2) == pytest.approx(0.5)


@pytest.mark.parametrize("lemma", V.LEMMA_IDS)
def test_each_lemma_passes_small(lemma):
    rep = V.verify_inequality(lemma, V.InstanceConfig(instances=5, seed=3))
    assert rep.status == "Pass" and rep.violations == 0, rep


def test_unknown_lemma():
    with pytest.raises(ValueError):
        V.verify_inequality("NOPE")


def test_verification_is_deterministic():
    a = V.verify_inequality("H_COMPLEXITY", V.InstanceConfig(instances=4, seed=9))
    b = V.verify_inequality("H_COMPLEXITY", V.InstanceConfig(instances=4, seed=9))
    assert a == b
