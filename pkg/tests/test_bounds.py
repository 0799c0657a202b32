import math

import numpy as np
import pytest

from crlbounds import bounds as Bd


def test_bound_l2_example():
    r = Bd.bound_l2(0.0, 10.0, 1.0, 1.0, 2.0, 100, 0.5)
    assert r.components["complexity"] == pytest.approx(0.97980, abs=5e-6)
    assert r.components["confidence"] == pytest.approx(0.49954, abs=1e-5)
    assert r.total == pytest.approx(1.47933, abs=1e-5)
    assert r.total == sum(r.components.values())


def test_bound_l2_zero_complexity_and_scaling():
    r = Bd.bound_l2(0.3, 0.0, 1.0, 1.0, 2.0, 100, 0.1)
    assert r.total == pytest.approx(0.3 + r.components["confidence"])
    a = Bd.bound_l2(0.0, 5.0 * 100, 1.0, 1.0, 2.0, 100, 0.1)
    b = Bd.bound_l2(0.0, 5.0 * 200, 1.0, 1.0, 2.0, 200, 0.1)
    assert b.components["complexity"] == pytest.approx(a.components["complexity"])
    assert b.components["confidence"] == pytest.approx(a.components["confidence"] / math.sqrt(2))


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1])
def test_bad_delta(delta):
    with pytest.raises(ValueError):
        Bd.bound_l2(0.0, 1.0, 1.0, 1.0, 1.0, 10, delta)


def test_bound_linf_example():
    r = Bd.bound_linf(0.0, 20.0, 1.0, 1.0, 2.0, 100, 4, 0.5)
    chain = 1 + math.log(16000)
    assert r.notes["chain"] == pytest.approx(chain)
    assert r.components["confidence"] == pytest.approx(0.49954, abs=1e-5)
    assert r.components["radius"] == pytest.approx(9.6)
    last = 96 * math.sqrt(12) / (100 * 2) * chain * 20
    assert r.components["complexity"] == pytest.approx(last, rel=1e-12)
    assert r.total == pytest.approx(365.2783830533475, rel=1e-12)  # frozen


def test_bound_linf_zero_C():
    r = Bd.bound_linf(0.2, 0.0, 1.0, 1.0, 2.0, 100, 4, 0.1)
    assert r.total == pytest.approx(0.2 + r.components["confidence"] + 48 * 2 / 10)


def test_bound_linf_log_only_k_dependence():
    n = 100
    a = Bd.bound_linf(0.0, math.sqrt(n * 4), 1.0, 1.0, 2.0, n, 4, 0.1).components["complexity"]
    b = Bd.bound_linf(0.0, math.sqrt(n * 16), 1.0, 1.0, 2.0, n, 16, 0.1).components["complexity"]
    assert 1.0 < b / a <= 1.3


def test_complexity_linf():
    assert Bd.complexity_linf(0.0, 2.0, 1.5, 64, 3) == pytest.approx(24 * 1.5 * 5 / 8)
    assert Bd.complexity_linf(0.1, 2.0, 3.0, 64, 3) == pytest.approx(2 * Bd.complexity_linf(0.1, 2.0, 1.5, 64, 3))


def test_linf_consistent_with_substitution():
    R, G, n, k, C = 1.7, 0.8, 150, 6, 33.0
    r = Bd.bound_linf(0.0, C, R, G, 2.0, n, k, 0.1)
    RH = Bd.R_H_from_C(C, R, n, k)
    assert r.components["radius"] + r.components["complexity"] == pytest.approx(
        2 * Bd.complexity_linf(RH, R, G, n, k), rel=1e-12)


def test_selfbounding():
    r = Bd.bound_selfbounding(0.0, 0.01, 1.0, 2.0, 3.0, 100, 4, 0.05)
    assert r.total == pytest.approx(90 * (r.notes["r_hat"] + r.notes["r0"]))
    assert r.components["cross"] == 0.0
    n = math.e ** math.e
    r = Bd.bound_selfbounding(0.0, 0.0, 1.0, 2.0, 1.0, n, 1, math.exp(-1))
    assert r.notes["r0"] == pytest.approx(7 / n)
    assert r.notes["a"] == pytest.approx(24 * math.sqrt(2) * 2 * 2 / math.sqrt(n))
    a1 = Bd.selfbounding_radius(0.01, 1.0, 1.0, 100, 4)
    a2 = Bd.selfbounding_radius(0.01, 1.0, 2.0, 100, 4)
    assert a2 == pytest.approx(2 * a1)
    r1 = Bd.bound_selfbounding(0.0, 0.01, 1.0, 1.0, 1.0, 100, 4, 0.05).notes["r_hat"]
    r2 = Bd.bound_selfbounding(0.0, 0.01, 1.0, 2.0, 1.0, 100, 4, 0.05).notes["r_hat"]
    assert r2 == pytest.approx(4 * r1)
    with pytest.raises(ValueError):
        Bd.bound_selfbounding(0.0, 0.0, 1.0, None, 1.0, 100, 1, 0.05)


def test_linear_upper_examples():
    assert Bd.complexity_upper_linear([[3.0, 4.0]], 2, 1.0, 1) == pytest.approx(5.0)
    assert Bd.complexity_upper_linear(np.zeros((4, 3)), 2, 1.0, 2) == 0.0
    assert Bd.complexity_upper_linear(np.zeros((4, 3)), 1.5, 1.0, 2, kind="Schatten") == 0.0


def test_linear_upper_log_d_for_p1():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 5))
    s = np.linalg.norm(X)
    d = 1000
    v = Bd.complexity_upper_linear(X, 1, 1.0, d)
    assert v <= math.e * math.sqrt(math.log(d) - 1) * s * (1 + 1e-9)
    assert v < math.sqrt(d) * s


def test_dnn_upper():
    assert Bd.complexity_upper_dnn([[1.0, 0.0]], 1, 1.0, [1.0]) == pytest.approx(1.0)
    X = np.diag([1.0, 2.0, 3.0])
    v = Bd.complexity_upper_dnn(X, 4, 0.5, [2.0, 3.0])
    assert v == pytest.approx(2 * 0.5 * 6 * math.sqrt(14))
    assert Bd.complexity_upper_dnn(X, 4, 0.5, [4.0, 3.0]) == pytest.approx(2 * v)


def test_baseline():
    r = Bd.baseline_arora(0.1, 0.0, 1.0, 1.0, 2.0, 100, 4, 0.1)
    assert r.total == pytest.approx(0.1 + r.components["confidence"])
    n = 100
    a = Bd.baseline_arora(0.0, math.sqrt(n * 4), 1.0, 1.0, 2.0, n, 4, 0.1).components["complexity"]
    b = Bd.baseline_arora(0.0, math.sqrt(n * 16), 1.0, 1.0, 2.0, n, 16, 0.1).components["complexity"]
    assert b / a == pytest.approx(4.0)
    ours = Bd.bound_l2(0.0, 7.0, 1.3, 0.9, 2.0, n, 0.1).components["complexity"]
    base = Bd.baseline_arora(0.0, 7.0, 1.3, 0.9, 2.0, n, 1, 0.1).components["complexity"]
    assert base == pytest.approx(ours)


def test_downstream_and_json():
    r = Bd.bound_linf(0.1, 5.0, 1.0, 1.0, 2.0, 50, 3, 0.05)
    d = Bd.downstream_bound(r, "linear")
    assert d.total == r.total and d.provenance == "downstream_linear"
    assert Bd.downstream_bound(r, "mlp").provenance == "downstream_dnn"
    with pytest.raises(ValueError):
        Bd.downstream_bound(r, "cnn")
    assert Bd.BoundReport.from_json(r.to_json()) == r
