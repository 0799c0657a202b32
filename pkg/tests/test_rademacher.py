import itertools
import math

import numpy as np
import pytest

from crlbounds import features as F
from crlbounds import rademacher as Rd
from crlbounds import synthgen as S


def _lin(d, D, budget=1.0, c=F.MixedL2p(2), R=None):
    return F.LinearFeatureMap(np.zeros((d, D)), c, budget, R)


def test_exact_examples():
    assert Rd.exact_rademacher([[1, 1], [-1, -1]]) == pytest.approx(0.5)
    assert Rd.exact_rademacher([[0, 0, 0]]) == 0.0
    assert Rd.exact_rademacher([[1, 0], [0, 1]]) == pytest.approx(0.25)


def test_linear_unit_ball_two_points():
    pts = np.eye(2)
    cls = _lin(1, 2)
    ex = Rd.mc_rademacher(cls, pts, method="exact")
    assert ex.value == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    mc = Rd.mc_rademacher(cls, pts, draws=400, rng=1)
    assert abs(mc.value - ex.value) <= 3 * mc.std_error + 1e-12


def test_zero_class():
    est = Rd.mc_rademacher(Rd.ZeroClass(2), np.ones((4, 3)), draws=50)
    assert est.value == 0.0 and est.std_error == 0.0


def test_projected_ascent_below_closed_form():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(6, 3))
    cls = _lin(2, 3, c=F.SchattenP(1.5))
    cf = Rd.mc_rademacher(cls, pts, draws=100, inner_solver=Rd.ClosedFormDual(), rng=2)
    pa = Rd.mc_rademacher(cls, pts, draws=100, inner_solver=Rd.ProjectedAscent(restarts=2, steps=50), rng=2)
    assert pa.value <= cf.value + 3 * cf.std_error


def test_terms_of_zero_class():
    ds = S.build_dataset(S.make_model(2, 3, 0.5), 3, 2, seed=0)
    for t in "ABC":
        assert Rd.estimate_term(t, ds, Rd.ZeroClass(2), Rd.TermConfig(draws=20)).value == 0.0


@pytest.mark.parametrize("term", "ABC")
def test_term_matches_sign_enumeration(term):
    # n = k = 1, d = 1, D = 2: three points, 2^3 sign patterns
    ds = S.build_dataset(S.make_model(2, 2, 0.5), 1, 1, seed=3)
    Z = Rd.term_points(term, ds)
    assert Z.shape == (3, 2)
    brute = np.mean([np.linalg.norm(np.array(e) @ Z) for e in itertools.product((-1, 1), repeat=3)])
    est = Rd.estimate_term(term, ds, _lin(1, 2), Rd.TermConfig(method="exact"))
    assert abs(est.value - brute) < 1e-12


def test_term_homogeneous_in_budget():
    ds = S.build_dataset(S.make_model(3, 4, 0.5), 5, 3, seed=4)
    for t in "ABC":
        a = Rd.estimate_term(t, ds, _lin(2, 4, 1.0), Rd.TermConfig(draws=30), rng=5).value
        b = Rd.estimate_term(t, ds, _lin(2, 4, 2.0), Rd.TermConfig(draws=30), rng=5).value
        assert b == pytest.approx(2 * a, rel=1e-12)


def test_term_sign_counts():
    ds = S.build_dataset(S.make_model(3, 4, 0.5), 5, 3, seed=4)
    assert len(Rd.term_points("A", ds)) == 3 * 5 * 3
    assert len(Rd.term_points("B", ds)) == 5 * (3 + 2)
    with pytest.raises(ValueError):
        Rd.term_points("D", ds)


def _finite_class(rng, count, d, D, R):
    return Rd.FiniteFeatureClass(tuple(F.random_linear(d, D, rng, budget=3.0, output_radius=R, scale=3.0)
                                       for _ in range(count)))


def test_worstcase_H_basic():
    ds = S.build_dataset(S.make_model(2, 3, 0.5), 1, 1, seed=6)
    ex = S.expand_to_triplets(ds)
    assert Rd.worstcase_rademacher_H(ex, Rd.ZeroClass(2), Rd.TermConfig(method="exact")).value == 0.0
    R = 0.7
    cls = _finite_class(np.random.default_rng(7), 5, 2, 3, R)
    v = Rd.worstcase_rademacher_H(ex, cls, Rd.TermConfig(method="exact")).value
    assert 0 <= v <= 2 * R * R


def test_worstcase_H_mc_vs_exact():
    ds = S.build_dataset(S.make_model(2, 3, 0.5), 3, 2, seed=8)
    ex = S.expand_to_triplets(ds)
    cls = _finite_class(np.random.default_rng(9), 6, 2, 3, 1.0)
    exact = Rd.worstcase_rademacher_H(ex, cls, Rd.TermConfig(method="exact")).value
    mc = Rd.worstcase_rademacher_H(ex, cls, Rd.TermConfig(draws=400), rng=1)
    assert abs(mc.value - exact) <= 3 * mc.std_error


def test_lower_bound_C():
    ds = S.build_dataset(S.make_model(3, 4, 0.5), 4, 2, seed=10)
    ex = S.expand_to_triplets(ds)
    assert Rd.lower_bound_C(Rd.ZeroClass(2), ex) == 0.0
    R = 0.8
    cls = _lin(2, 4, budget=5.0, R=R)
    lb = Rd.lower_bound_C(cls, ex, Rd.ProjectedAscent(restarts=2, steps=50))
    assert lb <= math.sqrt(4 * 2 / 2) * math.sqrt(3) * R + 1e-12
    unproj = _lin(2, 4)
    lb = Rd.lower_bound_C(unproj, ex)
    C = Rd.estimate_term("C", ds, unproj, Rd.TermConfig(draws=200), rng=11)
    assert lb <= C.value + 3 * C.std_error


def test_estimate_json_roundtrip():
    est = Rd.mc_rademacher(_lin(1, 2), np.eye(2), draws=10)
    assert Rd.RademacherEstimate.from_json(est.to_json()) == est


def test_signs_are_reproducible():
    a = Rd.draw_signs(5, 3, (4, 2))
    assert np.array_equal(a, Rd.draw_signs(5, 3, (4, 2)))
    assert set(np.unique(a)) <= {-1.0, 1.0}
