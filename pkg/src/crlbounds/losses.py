"""Multi-negative contrastive losses on score vectors.

A score vector ``v`` in R^k holds ``f(x)^T (f(x+) - f(x_i-))`` for the ``k``
negatives of one block. Both losses are nonincreasing in every coordinate.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


class Loss(enum.Enum):
    HINGE = "hinge"
    LOGISTIC = "logistic"

    @property
    def lipschitz_l2(self) -> float:
        return 1.0

    @property
    def lipschitz_linf(self) -> float:
        return 1.0

    @property
    def selfbounding(self) -> float | None:
        """Self-bounding Lipschitz constant ``G_s`` (logistic only)."""
        return 2.0 if self is Loss.LOGISTIC else None

    @classmethod
    def parse(cls, name: "str | Loss") -> "Loss":
        if isinstance(name, Loss):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown loss {name!r}; expected 'hinge' or 'logistic'") from None


def _scores(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] == 0:
        raise ValueError("score vector must be nonempty")
    return v


def evaluate(loss: Loss, v) -> np.ndarray | float:
    """Loss of score vector(s) ``v``; the last axis indexes negatives."""
    v = _scores(v)
    if loss is Loss.HINGE:
        out = np.maximum(0.0, 1.0 - v.min(axis=-1))
    else:
        # log(1 + sum exp(-v)) = logsumexp over [0, -v_1, ..., -v_k]
        z = np.concatenate([np.zeros(v.shape[:-1] + (1,)), -v], axis=-1)
        out = np.maximum(logsumexp(z, axis=-1), 0.0)
    return float(out) if out.ndim == 0 else out


def subgradient(loss: Loss, v) -> np.ndarray:
    """(Sub)gradient with respect to the scores, same shape as ``v``.

    Hinge: ``-1`` at the smallest index attaining ``min v`` when the loss is
    active, else zero.
    """
    v = _scores(v)
    if loss is Loss.HINGE:
        g = np.zeros_like(v)
        idx = np.argmin(v, axis=-1)
        active = (1.0 - np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]) > 0
        np.put_along_axis(g, idx[..., None], np.where(active, -1.0, 0.0)[..., None], axis=-1)
        return g
    z = np.concatenate([np.zeros(v.shape[:-1] + (1,)), -v], axis=-1)
    lse = logsumexp(z, axis=-1, keepdims=True)
    return -np.exp(-v - lse)


def uniform_bound(loss: Loss, R: float, k: int) -> float:
    """Largest loss value when every score lies in ``[-2R^2, 2R^2]``."""
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    if loss is Loss.HINGE:
        return 1.0 + 2.0 * R**2
    return float(np.logaddexp(0.0, np.log(k) + 2.0 * R**2))


@dataclass(frozen=True)
class LipschitzReport:
    loss: Loss
    norm: str
    trials: int
    max_ratio: float
    constant: float

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.constant + 1e-9


def _random_pairs(rng: np.random.Generator, trials: int, max_k: int = 32, box: float = 10.0):
    for _ in range(trials):
        k = int(rng.integers(1, max_k + 1))
        a = rng.uniform(-box, box, k)
        # mix far pairs with near pairs so local slopes are probed too; near
        # distances stay >= ~1e-4 so rounding in l(a) - l(b) (~1e-15) cannot
        # move the ratio past 1e-9
        if rng.random() < 0.5:
            b = rng.uniform(-box, box, k)
        else:
            b = a + rng.normal(scale=10.0 ** rng.uniform(-4, 0), size=k)
        yield a, b


def check_lipschitz(loss: Loss, norm: str, trials: int, rng: np.random.Generator) -> LipschitzReport:
    """Largest observed ``|l(a) - l(a')| / ||a - a'||`` over random pairs in ``[-10, 10]^k``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    order = {"l2": 2, "linf": np.inf}[norm.lower()]
    worst = 0.0
    for a, b in _random_pairs(rng, trials):
        dist = np.linalg.norm(a - b, ord=order)
        if dist == 0:
            continue
        worst = max(worst, abs(evaluate(loss, a) - evaluate(loss, b)) / dist)
    const = loss.lipschitz_l2 if order == 2 else loss.lipschitz_linf
    return LipschitzReport(loss, norm.lower(), trials, worst, const)


@dataclass(frozen=True)
class SelfBoundingReport:
    trials: int
    violations: int
    max_slack: float  # largest lhs - rhs observed; <= 0 when no violation


def check_selfbounding(trials: int, rng: np.random.Generator, loss: Loss = Loss.LOGISTIC,
                       tol: float = 1e-12) -> SelfBoundingReport:
    """Check ``|l(a)-l(a')| <= G_s max(l(a), l(a'))^{1/2} ||a-a'||_inf`` on random pairs."""
    if loss.selfbounding is None:
        raise ValueError(f"{loss.value} loss is not self-bounding Lipschitz")
    gs = loss.selfbounding
    violations, worst = 0, -np.inf
    for a, b in _random_pairs(rng, trials):
        la, lb = evaluate(loss, a), evaluate(loss, b)
        slack = abs(la - lb) - gs * np.sqrt(max(la, lb)) * np.max(np.abs(a - b))
        worst = max(worst, slack)
        violations += slack > tol
    return SelfBoundingReport(trials, violations, float(worst))
