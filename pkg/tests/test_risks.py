import math

import numpy as np
import pytest

from crlbounds import features as F
from crlbounds import risks
from crlbounds import synthgen as S
from crlbounds.losses import Loss, evaluate

LG, H = Loss.LOGISTIC, Loss.HINGE


def _zero(d, D):
    return F.linear_map(np.zeros((d, D)))


def test_score_examples():
    f = F.linear_map(np.eye(2), budget=10.0)
    assert risks.triplet_score(f, [1, 0], [1, 0], [0, 1]) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    g = F.random_linear(2, 3, rng, scale=2.0)
    x, xp = rng.normal(size=(2, 3))
    assert risks.triplet_score(g, x, xp, xp) == 0.0


def test_score_bounded_by_two_r_squared():
    rng = np.random.default_rng(1)
    for _ in range(100):
        R = rng.uniform(0.1, 2.0)
        f = F.random_linear(3, 4, rng, budget=5.0, output_radius=R, scale=5.0)
        X = rng.normal(scale=3, size=(3, 100, 4))
        s = risks.triplet_score(f, *X)
        assert np.all(np.abs(s) <= 2 * R * R + 1e-12)


def test_empirical_risk_zero_map():
    ds = S.build_dataset(S.make_model(3, 4, 0.5), 10, 5, seed=0)
    assert risks.empirical_unsup_risk(_zero(2, 4), ds, LG).value == pytest.approx(math.log(6), abs=1e-12)
    assert risks.empirical_unsup_risk(_zero(2, 4), ds, H).value == 1.0


def test_single_block_average():
    ds = S.build_dataset(S.make_model(3, 4, 0.5), 1, 3, seed=1)
    f = F.random_linear(2, 4, np.random.default_rng(2))
    v = risks.block_scores(f, ds)[0]
    assert risks.empirical_unsup_risk(f, ds, LG).value == pytest.approx(evaluate(LG, v))


def test_population_zero_map():
    m = S.make_model(3, 4, 0.5)
    r = risks.population_unsup_risk(_zero(2, 4), m, LG, 4, 500, 0)
    assert r.value == pytest.approx(math.log(5), abs=1e-12) and r.std_error == 0.0


def test_population_se_scaling():
    m = S.make_model(3, 4, 0.5)
    f = F.random_linear(2, 4, np.random.default_rng(3), scale=1.0)
    a = risks.population_unsup_risk(f, m, LG, 4, 4000, 1)
    b = risks.population_unsup_risk(f, m, LG, 4, 8000, 2)
    assert 0.8 / math.sqrt(2) <= b.std_error / a.std_error <= 1.2 / math.sqrt(2)


def test_population_noiseless_closed_form():
    C = 3
    m = S.make_model(C, C, 1e-9)
    f = F.linear_map(np.eye(C), budget=10.0)
    exact = math.log(2) / C + (1 - 1 / C) * math.log1p(math.exp(-1))
    r = risks.population_unsup_risk(f, m, LG, 1, 20_000, 4)
    assert abs(r.value - exact) <= 3 * r.std_error + 1e-9


def test_empirical_matches_resampled_population():
    # the empirical distribution over blocks as the population
    ds = S.build_dataset(S.make_model(3, 4, 0.5), 50, 4, seed=5)
    f = F.random_linear(2, 4, np.random.default_rng(6), scale=1.0)
    L = risks.block_losses(f, ds, LG)
    idx = np.random.default_rng(7).integers(0, 50, 20_000)
    mc = L[idx]
    se = mc.std(ddof=1) / math.sqrt(mc.size)
    assert abs(mc.mean() - risks.empirical_unsup_risk(f, ds, LG).value) <= 3 * se


def test_mean_classifier():
    m = S.make_model(3, 4, 1e-9)
    assert not np.any(risks.mean_classifier(_zero(2, 4), m, [0, 1, 2], reps=50).W)
    U = np.random.default_rng(8).normal(size=(2, 4))
    f = F.linear_map(U, budget=100.0)
    W = risks.mean_classifier(f, m, [0, 2], reps=50).W
    assert np.allclose(W, (U @ m.class_means[[0, 2]].T).T, atol=1e-8)


def test_mean_classifier_symmetric_classes():
    means = np.array([[1.0, 0.5], [-1.0, -0.5]])
    m = S.make_model(2, 2, 1e-6, means=means)
    f = F.linear_map(np.array([[1.0, 2.0]]), budget=10.0)
    W = risks.mean_classifier(f, m, [0, 1], reps=200).W
    assert np.allclose(W[0], -W[1], atol=1e-5)


def test_supervised_risk_examples():
    m = S.make_model(3, 4, 0.5)
    _, samples = S.sample_supervised_task(m, 3, 20, seed=0)
    f = F.random_linear(2, 4, np.random.default_rng(9))
    r = risks.supervised_risk(np.zeros((3, 2)), f, samples)
    assert r.value == pytest.approx(math.log(3), abs=1e-12)
    g = F.linear_map(np.eye(2), budget=10.0)
    W = np.array([[1.0, 0.0], [0.0, 1.0]])
    one = [S.SupervisedSample(np.array([2.0, 0.5]), 0)]
    margin = 2.0 - 0.5
    assert risks.supervised_risk(W, g, one).value == pytest.approx(math.log1p(math.exp(-margin)))


def test_supervised_risk_vanishes_with_margin():
    m = S.make_model(3, 3, 1e-6)
    out = []
    for scale in (1.0, 10.0, 100.0):
        f = F.linear_map(scale * np.eye(3), budget=1e3)
        W = risks.mean_classifier(f, m, [0, 1, 2], reps=20).W
        _, samples = S.sample_supervised_task(m, 3, 50, seed=1)
        out.append(risks.supervised_risk(W, f, samples).value)
    assert out[0] > out[1] > out[2] and out[2] < 1e-10


def test_average_supervised_loss_runs():
    m = S.make_model(3, 4, 0.5)
    f = F.random_linear(2, 4, np.random.default_rng(10))
    r = risks.average_supervised_loss(f, m, 2, m=200, reps=200, rng=0)
    assert np.isfinite(r.value) and r.value > 0
