"""Contrastive and supervised risks of a feature map."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import features as F
from .losses import Loss, evaluate
from .synthgen import (ContrastiveDataset, LatentClassModel, SupervisedSample, block_rng,
                       master_seed, population_blocks)

_STREAM_MEANS = 11
_STREAM_TASKS = 12


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    std_error: float | None
    n_used: int


@dataclass(frozen=True)
class MeanClassifier:
    W: np.ndarray  # one row per task class, in task order
    std_error: np.ndarray | None = None  # per-entry Monte Carlo error


def triplet_score(f: F.FeatureMap, x, xp, xn) -> float | np.ndarray:
    """``f(x)^T (f(x+) - f(x-))``, row-wise when given batches."""
    fx, fp, fn = F.apply(f, x), F.apply(f, xp), F.apply(f, xn)
    return np.sum(fx * (fp - fn), axis=-1)


def block_scores(f: F.FeatureMap, dataset: ContrastiveDataset) -> np.ndarray:
    """``(n, k)`` matrix of triplet scores."""
    n, k, D = dataset.n, dataset.k, dataset.dim
    fa = F.apply(f, dataset.anchors)
    fp = F.apply(f, dataset.positives)
    fn = F.apply(f, dataset.negatives.reshape(n * k, D)).reshape(n, k, -1)
    return np.einsum("nd,nkd->nk", fa, fp[:, None, :] - fn)


def block_losses(f: F.FeatureMap, dataset: ContrastiveDataset, loss: Loss) -> np.ndarray:
    return np.atleast_1d(evaluate(loss, block_scores(f, dataset)))


def empirical_unsup_risk(f: F.FeatureMap, dataset: ContrastiveDataset, loss: Loss) -> RiskEstimate:
    vals = block_losses(f, dataset, Loss.parse(loss))
    return RiskEstimate(float(vals.mean()), None, dataset.n)


def _mc(vals: np.ndarray) -> RiskEstimate:
    m = vals.size
    if np.all(vals == vals[0]):  # constant integrand: exact, no rounding noise
        return RiskEstimate(float(vals[0]), 0.0, m)
    se = float(vals.std(ddof=1) / np.sqrt(m))
    return RiskEstimate(float(vals.mean()), se, m)


def population_unsup_risk(f: F.FeatureMap, model: LatentClassModel, loss: Loss, k: int, reps: int,
                          rng: int | np.random.Generator) -> RiskEstimate:
    """Monte Carlo estimate of the population contrastive risk from ``reps`` fresh blocks."""
    if reps < 2:
        raise ValueError(f"reps must be >= 2, got {reps}")
    blocks = population_blocks(model, k, reps, master_seed(rng))
    return _mc(block_losses(f, blocks, Loss.parse(loss)))


def mean_classifier(f: F.FeatureMap, model: LatentClassModel, classes, reps: int = 10_000,
                    rng: int | np.random.Generator = 0) -> MeanClassifier:
    """Rows ``mu_c = E_{x ~ D_c} f(x)`` estimated from ``reps`` draws per class."""
    classes = np.asarray(classes, dtype=int)
    if classes.ndim != 1 or classes.size == 0 or classes.min() < 0 or classes.max() >= model.num_classes:
        raise ValueError(f"invalid task classes {classes.tolist()}")
    s = master_seed(rng)
    rows, errs = [], []
    for c in classes:
        r = block_rng(s, _STREAM_MEANS, int(c))
        fx = F.apply(f, model.draw_points(r, np.full(reps, c)))
        rows.append(fx.mean(axis=0))
        errs.append(fx.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(fx.shape[1]))
    return MeanClassifier(np.array(rows), np.array(errs))


def supervised_margins(W, f: F.FeatureMap, X, labels) -> np.ndarray:
    """``g(x)_y - g(x)_c`` for every ``c != y``, with ``g = W f``; shape ``(m, K)``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 0 or labels.max() >= W.shape[0]:
        raise ValueError(f"labels must lie in [0, {W.shape[0]})")
    g = np.atleast_2d(F.apply(f, X)) @ W.T
    diff = g[np.arange(len(labels)), labels][:, None] - g
    keep = np.ones_like(diff, dtype=bool)
    keep[np.arange(len(labels)), labels] = False
    return diff[keep].reshape(len(labels), W.shape[0] - 1)


def supervised_risk(W, f: F.FeatureMap, samples: list[SupervisedSample],
                    loss_s: Loss = Loss.LOGISTIC) -> RiskEstimate:
    if not samples:
        raise ValueError("no samples")
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] < 2:
        raise ValueError("need at least two classes")
    X = np.array([s.x for s in samples])
    y = np.array([s.label for s in samples])
    vals = np.atleast_1d(evaluate(Loss.parse(loss_s), supervised_margins(W, f, X, y)))
    return RiskEstimate(float(vals.mean()), None, len(samples))


def _task_samples(model: LatentClassModel, classes: np.ndarray, m: int, seed: int, tag: int):
    sub = model.prior[classes]
    sub = sub / sub.sum() if sub.sum() > 0 else np.full(classes.size, 1.0 / classes.size)
    r = block_rng(seed, _STREAM_TASKS, tag)
    labels = r.choice(classes.size, size=m, p=sub)
    X = model.draw_points(r, classes[labels])
    return [SupervisedSample(x, int(y)) for x, y in zip(X, labels)]


def average_supervised_loss(f: F.FeatureMap, model: LatentClassModel, task_size: int, m: int = 1000,
                            reps: int = 10_000, rng: int | np.random.Generator = 0,
                            loss_s: Loss = Loss.LOGISTIC, max_tasks: int = 64) -> RiskEstimate:
    """Mean-classifier supervised loss averaged over tasks of distinct classes.

    Tasks are weighted by the product of their class priors. All subsets are
    enumerated when there are at most 8 classes, otherwise ``max_tasks``
    subsets are sampled without replacement (each with weight 1).
    """
    C = model.num_classes
    if not 2 <= task_size <= C:
        raise ValueError(f"task_size must be in [2, {C}]")
    s = master_seed(rng)
    if C <= 8:
        tasks = [np.array(t) for t in itertools.combinations(range(C), task_size)]
        weights = np.array([np.prod(model.prior[t]) for t in tasks])
    else:
        r = block_rng(s, _STREAM_TASKS, 0)
        tasks = [np.sort(r.choice(C, task_size, replace=False)) for _ in range(max_tasks)]
        weights = np.ones(len(tasks))
    if weights.sum() <= 0:
        raise ValueError("no task has positive probability")
    vals = []
    for i, t in enumerate(tasks):
        W = mean_classifier(f, model, t, reps, s + i).W
        vals.append(supervised_risk(W, f, _task_samples(model, t, m, s, i + 1), loss_s).value)
    weights = weights / weights.sum()
    return RiskEstimate(float(np.dot(weights, vals)), None, len(tasks) * m)
