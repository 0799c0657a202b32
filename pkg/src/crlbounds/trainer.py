"""Empirical risk minimisation over a norm-constrained feature class.

Projected (sub)gradient descent with best-iterate selection: the returned map
is the feasible iterate with the smallest recorded empirical risk, over all
steps of all restarts.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as F
from .losses import Loss, evaluate, subgradient
from .synthgen import ContrastiveDataset, block_rng, master_seed

_STREAM_RESTART = 21
_STREAM_BATCH = 22
_STREAM_GRADCHECK = 23


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    step_size: float = 0.1
    schedule: str = "inv_sqrt"  # or "constant"
    batch_size: int | None = None  # None means full batch
    seed: int = 0
    restarts: int = 1
    normalized: bool = True  # steps of length step_size * budget along the unit gradient

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.schedule not in ("inv_sqrt", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def rate(self, t: int) -> float:
        return self.step_size / np.sqrt(t) if self.schedule == "inv_sqrt" else self.step_size


@dataclass(frozen=True)
class TraceEntry:
    restart: int
    step: int
    risk: float


@dataclass(frozen=True)
class TrainResult:
    best: F.FeatureMap
    best_risk: float
    trace: tuple[TraceEntry, ...]


class DivergenceError(RuntimeError):
    pass


def _risk_and_grad(f: F.FeatureMap, dataset: ContrastiveDataset, loss: Loss, need_grad: bool = True):
    n, k, D = dataset.n, dataset.k, dataset.dim
    X = np.concatenate([dataset.anchors, dataset.positives, dataset.negatives.reshape(n * k, D)])
    out, cache = F.forward(f, X)
    fa, fp, fn = out[:n], out[n:2 * n], out[2 * n:].reshape(n, k, -1)
    scores = np.einsum("nd,nkd->nk", fa, fp[:, None, :] - fn)
    risk = float(np.mean(evaluate(loss, scores)))
    if not need_grad:
        return risk, None
    g = subgradient(loss, scores) / n  # (n, k)
    ga = np.einsum("nk,nkd->nd", g, fp[:, None, :] - fn)
    gp = g.sum(axis=1)[:, None] * fa
    gn = -g[:, :, None] * fa[:, None, :]
    grads = F.backward(f, cache, np.concatenate([ga, gp, gn.reshape(n * k, -1)]))
    return risk, grads


def empirical_risk_gradient(f: F.FeatureMap, dataset: ContrastiveDataset, loss: Loss) -> list[np.ndarray]:
    """(Sub)gradient of the empirical contrastive risk with respect to every parameter block."""
    return _risk_and_grad(f, dataset, Loss.parse(loss))[1]


def _budgets(f: F.FeatureMap) -> list[float]:
    return [b for _, b in F.constraint_norms(f)]


def _random_like(f: F.FeatureMap, rng: np.random.Generator) -> F.FeatureMap:
    new = []
    for W, b in zip(F.params(f), _budgets(f)):
        R = rng.standard_normal(W.shape)
        new.append(R * (0.5 * b / np.linalg.norm(R)))
    return F.project_params(F.with_params(f, new))


def train(init: F.FeatureMap, dataset: ContrastiveDataset, loss: Loss, cfg: TrainConfig) -> TrainResult:
    loss = Loss.parse(loss)
    if not F.is_feasible(init):
        raise ValueError("initial feature map violates its norm constraints; call project_params first")
    seed = master_seed(cfg.seed)
    budgets = _budgets(init)
    trace: list[TraceEntry] = []
    best, best_risk = None, np.inf
    for r in range(cfg.restarts):
        f = init if r == 0 else _random_like(init, block_rng(seed, _STREAM_RESTART, r))
        batch_rng = block_rng(seed, _STREAM_BATCH, r)
        for t in range(cfg.steps + 1):
            risk, grads = _risk_and_grad(f, dataset, loss, need_grad=cfg.batch_size is None)
            if not np.isfinite(risk):
                raise DivergenceError(f"non-finite empirical risk at restart {r}, step {t}")
            trace.append(TraceEntry(r, t, risk))
            if risk < best_risk:
                best, best_risk = f, risk
            if t == cfg.steps:
                break
            if cfg.batch_size is not None:
                idx = batch_rng.choice(dataset.n, size=min(cfg.batch_size, dataset.n), replace=False)
                _, grads = _risk_and_grad(f, dataset.subset(np.sort(idx)), loss)
            eta = cfg.rate(t + 1)
            new = []
            for W, g, b in zip(F.params(f), grads, budgets):
                if not np.all(np.isfinite(g)):
                    raise DivergenceError(f"non-finite gradient at restart {r}, step {t}")
                if cfg.normalized:
                    gn = np.linalg.norm(g)
                    step = g * (eta * b / gn) if gn > 0 else g
                else:
                    step = eta * g
                new.append(W - step)
            f = F.project_params(F.with_params(f, new))
    return TrainResult(best, float(best_risk), tuple(trace))


def trace_to_csv(result: TrainResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "step", "risk"])
        for e in result.trace:
            w.writerow([e.restart, e.step, repr(e.risk)])


@dataclass(frozen=True)
class GradientCheckReport:
    status: str  # "ok", "fail" or "nonsmooth"
    max_rel_error: float
    coords_checked: int
    tol: float


def gradient_check(f: F.FeatureMap, dataset: ContrastiveDataset, loss: Loss, tol: float = 1e-5,
                   seed: int = 0, max_coords: int = 50, h: float = 1e-6) -> GradientCheckReport:
    """Compare the analytic gradient with central differences on random coordinates.

    The error is ``max |analytic - numeric|`` over the sampled coordinates,
    relative to the larger sup-norm of the two gradient samples.
    """
    loss = Loss.parse(loss)
    if loss is Loss.HINGE:
        return GradientCheckReport("nonsmooth", float("nan"), 0, tol)
    blocks = F.params(f)
    grads = _risk_and_grad(f, dataset, loss)[1]
    sizes = [b.size for b in blocks]
    total = sum(sizes)
    rng = block_rng(master_seed(seed), _STREAM_GRADCHECK, 0)
    coords = np.sort(rng.choice(total, size=min(max_coords, total), replace=False))
    offsets = np.cumsum([0, *sizes])
    analytic, numeric = [], []
    for c in coords:
        bi = int(np.searchsorted(offsets, c, side="right") - 1)
        local = np.unravel_index(c - offsets[bi], blocks[bi].shape)
        vals = []
        for sgn in (1.0, -1.0):
            moved = [b.copy() for b in blocks]
            moved[bi][local] += sgn * h
            # finite differences bypass project_params on purpose
            vals.append(_risk_and_grad(F.with_params(f, moved), dataset, loss, need_grad=False)[0])
        numeric.append((vals[0] - vals[1]) / (2 * h))
        analytic.append(grads[bi][local])
    a, nm = np.array(analytic), np.array(numeric)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(nm), initial=0.0), 1e-12)
    err = float(np.max(np.abs(a - nm), initial=0.0) / scale)
    return GradientCheckReport("ok" if err <= tol else "fail", err, len(coords), tol)
