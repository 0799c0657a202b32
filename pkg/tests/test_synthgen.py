import numpy as np
import pytest

from crlbounds import synthgen as S


def _model(C=3, D=4, sigma=0.5, prior=None):
    return S.make_model(C, D, sigma, prior=prior)


def test_small_sigma_pair_collapses_to_mean():
    m = _model(sigma=1e-12)
    x, xp = S.sample_similar_pair(m, np.random.default_rng(0))
    assert np.linalg.norm(x - xp) < 1e-10
    assert min(np.linalg.norm(x - mu) for mu in m.class_means) < 1e-10


def test_zero_sigma_rejected():
    with pytest.raises(ValueError):
        _model(sigma=0.0)


def test_single_class_always_zero():
    m = S.make_model(1, 2, 0.3)
    assert np.all(m.draw_classes(np.random.default_rng(1), 1000) == 0)


def test_two_class_frequency():
    m = _model(C=2, D=2)
    c = m.draw_classes(np.random.default_rng(2), 100_000)
    assert abs(c.mean() - 0.5) < 0.01


def test_negatives_counts_and_prior():
    m = _model(C=2, D=2, prior=(0.9, 0.1))
    rng = np.random.default_rng(3)
    assert len(S.sample_negatives(m, 1, rng)) == 1
    one = S.make_model(1, 3, 0.1)
    assert len(S.sample_negatives(one, 5, rng)) == 5
    c = m.draw_classes(rng, 100_000)
    assert abs(np.mean(c == 0) - 0.9) < 0.01
    with pytest.raises(ValueError):
        S.sample_negatives(m, 0, rng)


def test_dataset_shape_and_determinism():
    m = _model()
    ds = S.build_dataset(m, 3, 2, seed=7)
    assert (ds.n, ds.k, ds.dim) == (3, 2, 4)
    assert ds.all_points().shape[0] == 12
    again = S.build_dataset(m, 3, 2, seed=7)
    assert np.array_equal(ds.negatives, again.negatives)
    assert np.array_equal(ds.anchors, again.anchors)


def test_dataset_larger_is_finite():
    ds = S.build_dataset(S.make_model(4, 4, 1.0), 100, 8, seed=0)
    pts = ds.all_points()
    assert pts.shape == (1000, 4) and np.all(np.isfinite(pts))


def test_blocks_do_not_depend_on_n():
    # block j is drawn from its own counter stream
    m = _model()
    small = S.build_dataset(m, 3, 2, seed=11)
    big = S.build_dataset(m, 10, 2, seed=11)
    assert np.array_equal(small.negatives, big.negatives[:3])


def test_expand_layout():
    m = _model()
    e1 = S.expand_to_triplets(S.build_dataset(m, 1, 1, seed=0))
    assert e1.anchors.shape[0] == 1
    ds = S.build_dataset(m, 2, 3, seed=1)
    e = S.expand_to_triplets(ds)
    assert e.anchors.shape[0] == 6
    for i in range(3):
        assert np.array_equal(e.anchors[i], ds.anchors[0])
        assert np.array_equal(e.positives[i], ds.positives[0])
    assert e.points().shape == (18, 4)


def test_expand_negatives_roundtrip():
    ds = S.build_dataset(_model(), 5, 4, seed=2)
    e = S.expand_to_triplets(ds)
    a = np.sort(e.negatives.view(np.void), axis=0)
    b = np.sort(ds.negatives.reshape(-1, ds.dim).view(np.void), axis=0)
    assert np.array_equal(a, b)


def test_supervised_task():
    m = _model(C=2, D=3)
    subset, samples = S.sample_supervised_task(m, 2, 100_000, seed=0)
    assert list(subset) == [0, 1]
    labels = np.array([s.label for s in samples])
    assert abs(labels.mean() - 0.5) < 0.01
    with pytest.raises(ValueError):
        S.sample_supervised_task(m, 2, 0, seed=0)


def test_csv_and_npz_roundtrip(tmp_path):
    ds = S.build_dataset(_model(), 4, 3, seed=5)
    S.dataset_to_csv(ds, tmp_path / "d.csv")
    back = S.dataset_from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.negatives, ds.negatives)
    S.dataset_to_npz(ds, tmp_path / "d.npz")
    back = S.dataset_from_npz(tmp_path / "d.npz")
    assert np.array_equal(back.anchors, ds.anchors)


def test_bad_prior_rejected():
    with pytest.raises(ValueError):
        S.make_model(2, 2, 0.1, prior=(0.7, 0.7))
