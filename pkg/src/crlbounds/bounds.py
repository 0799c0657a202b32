"""Generalization bound calculators with explicit constants.

Every calculator returns a :class:`BoundReport` whose ``total`` is the sum of
its named ``components``. Notation: ``n`` blocks, ``k`` negatives, outputs of
norm at most ``R``, loss bounded by ``B``, confidence ``1 - delta``.

The dyadic depth ``ceil(log2(R^2 sqrt(n) / 12))`` used by the chaining terms
is clamped below at 1, which can only enlarge a bound.

Self-bounding bound, as implemented::

    a     = 24 sqrt(2) G_s (R^2 + 1) / sqrt(n)
            + 48 sqrt(2) G_s sqrt(k) R_H (1 + log(4 R^2 n^1.5 k) * depth)
    r_hat = a^2
    r_0   = B (log(1/delta) + 6 log log n) / n
    total = L_hat + 90 (r_hat + r_0) + 4 sqrt(L_hat (r_hat + r_0))
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

THEOREM_IDS = ("T_L2", "T_LinfComplexity", "T_Linf", "T_SelfBounding",
               "P_Linear2p", "P_LinearSchatten", "P_Dnn", "Baseline")


@dataclass(frozen=True)
class BoundReport:
    theorem_id: str
    inputs: dict
    components: dict  # ordered addends
    total: float
    provenance: str = ""
    estimate_based: bool = False
    notes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        return cls(**json.loads(text))

    @property
    def excess(self) -> float:
        """Total minus the empirical-risk addend."""
        return self.total - self.components.get("empirical", 0.0)


def _report(theorem_id, inputs, components, **kw) -> BoundReport:
    total = 0.0
    for v in components.values():
        total += v
    return BoundReport(theorem_id, inputs, dict(components), float(total), **kw)


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _check_positive(**kw) -> None:
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def _check_nonneg(**kw) -> None:
    for name, v in kw.items():
        if not v >= 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")


def dyadic_depth(R: float, n: int) -> int:
    return max(1, math.ceil(math.log2(R**2 * math.sqrt(n) / 12.0)))


def chain_factor(R: float, n: int, k: int) -> float:
    return 1.0 + math.log(4.0 * R**2 * n**1.5 * k) * dyadic_depth(R, n)


def confidence_two_sided(B: float, n: int, delta: float) -> float:
    return 3.0 * B * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def bound_l2(L_hat: float, A: float, R: float, G2: float, B: float, n: int, delta: float,
             source: str = "") -> BoundReport:
    _check_delta(delta)
    _check_positive(R=R, B=B, n=n)
    _check_nonneg(L_hat=L_hat, A=A, G2=G2)
    comps = {
        "empirical": float(L_hat),
        "complexity": 4.0 * math.sqrt(6.0) * R * G2 * A / n,
        "confidence": confidence_two_sided(B, n, delta),
    }
    inputs = dict(L_hat=L_hat, A=A, R=R, G2=G2, B=B, n=n, delta=delta, source=source)
    return _report("T_L2", inputs, comps, estimate_based=bool(source))


def complexity_l2(A: float, R: float, G2: float, n: int) -> float:
    """Rademacher complexity bound ``sqrt(24) R G2 A / n`` of the loss class."""
    return math.sqrt(24.0) * R * G2 * A / n


def complexity_linf(R_H: float, R: float, G: float, n: int, k: int) -> float:
    _check_nonneg(R_H=R_H, G=G)
    _check_positive(R=R, n=n, k=k)
    return (24.0 * G * (R**2 + 1) / math.sqrt(n)
            + 48.0 * G * math.sqrt(k) * R_H * chain_factor(R, n, k))


def R_H_from_C(C: float, R: float, n: int, k: int) -> float:
    """Score-class complexity implied by the C term: ``sqrt(12) R C / (nk)``."""
    return math.sqrt(12.0) * R * C / (n * k)


def bound_linf(L_hat: float, C: float, R: float, G: float, B: float, n: int, k: int, delta: float,
               source: str = "") -> BoundReport:
    _check_delta(delta)
    if n < 2 or k < 1:
        raise ValueError(f"need n >= 2 and k >= 1, got n={n}, k={k}")
    _check_positive(R=R, B=B)
    _check_nonneg(L_hat=L_hat, C=C, G=G)
    comps = {
        "empirical": float(L_hat),
        "confidence": confidence_two_sided(B, n, delta),
        "radius": 48.0 * G * (R**2 + 1) / math.sqrt(n),
        "complexity": 96.0 * math.sqrt(12.0) * G * R / (n * math.sqrt(k)) * chain_factor(R, n, k) * C,
    }
    inputs = dict(L_hat=L_hat, C=C, R=R, G=G, B=B, n=n, k=k, delta=delta, source=source)
    return _report("T_Linf", inputs, comps, estimate_based=True,
                   notes={"depth": dyadic_depth(R, n), "chain": chain_factor(R, n, k)})


def selfbounding_radius(R_H: float, R: float, Gs: float, n: int, k: int) -> float:
    """The quantity ``a`` whose square is the fixed point ``r_hat``."""
    return (24.0 * math.sqrt(2.0) * Gs * (R**2 + 1) / math.sqrt(n)
            + 48.0 * math.sqrt(2.0) * Gs * math.sqrt(k) * R_H * chain_factor(R, n, k))


def bound_selfbounding(L_hat: float, R_H: float, R: float, Gs: float | None, B: float, n: int, k: int,
                       delta: float, source: str = "") -> BoundReport:
    _check_delta(delta)
    if Gs is None or not Gs > 0:
        raise ValueError("the loss is not self-bounding Lipschitz (need G_s > 0)")
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    _check_positive(R=R, B=B, k=k)
    _check_nonneg(L_hat=L_hat, R_H=R_H)
    a = selfbounding_radius(R_H, R, Gs, n, k)
    r_hat = a * a
    r0 = B * (math.log(1.0 / delta) + 6.0 * math.log(math.log(n))) / n
    comps = {
        "empirical": float(L_hat),
        "fixed_point": 90.0 * r_hat,
        "confidence": 90.0 * r0,
        "cross": 4.0 * math.sqrt(L_hat * (r_hat + r0)),
    }
    inputs = dict(L_hat=L_hat, R_H=R_H, R=R, Gs=Gs, B=B, n=n, k=k, delta=delta, source=source)
    return _report("T_SelfBounding", inputs, comps, estimate_based=bool(source),
                   notes={"a": a, "r_hat": r_hat, "r0": r0})


def baseline_arora(L_hat: float, Bterm: float, R: float, G2: float, B: float, n: int, k: int, delta: float,
                   source: str = "") -> BoundReport:
    """Earlier-style bound with the same explicit constants as :func:`bound_l2`."""
    _check_delta(delta)
    _check_positive(R=R, B=B, n=n, k=k)
    _check_nonneg(L_hat=L_hat, Bterm=Bterm, G2=G2)
    comps = {
        "empirical": float(L_hat),
        "complexity": 4.0 * math.sqrt(6.0) * G2 * R * math.sqrt(k) * Bterm / n,
        "confidence": 3.0 / math.sqrt(2.0) * B * math.sqrt(math.log(1.0 / delta) / n),
    }
    inputs = dict(L_hat=L_hat, Bterm=Bterm, R=R, G2=G2, B=B, n=n, k=k, delta=delta, source=source)
    return _report("Baseline", inputs, comps, estimate_based=bool(source), notes={"c0": 4 * math.sqrt(6), "c1": 3 / math.sqrt(2)})


# --- complexity upper bounds for concrete classes -------------------------------

def _conj(p: float) -> float:
    return math.inf if p == 1 else (1.0 if math.isinf(p) else p / (p - 1.0))


def _qstar_grid(lo: float, hi: float, d: int) -> np.ndarray:
    """Admissible conjugate exponents in ``[lo, hi]`` (``hi`` may be infinite)."""
    cap = max(2.0, math.log(max(d, 1))) + 2.0
    top = min(hi, max(cap, lo))
    pts = [lo, top, 2.0, math.log(d) if d > 1 else lo]
    pts += list(np.linspace(lo, top, 64)) + list(np.geomspace(max(lo, 1.0), top, 64))
    arr = np.array([q for q in pts if lo - 1e-12 <= q <= top + 1e-12])
    return np.unique(np.clip(arr, lo, top))


def _sq_sum(X: np.ndarray) -> float:
    return float(np.sum(X * X))


def complexity_upper_linear(points, p: float, Lambda: float, d: int, kind: str = "Mixed2p") -> float:
    """Upper bound on ``E sup_f sum_{t,j} eps_tj f_t(x_j)`` for the linear class."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    ps = _conj(p)
    s = math.sqrt(_sq_sum(X))
    if kind == "Mixed2p":
        grid = _qstar_grid(1.0, ps, d)
        vals = Lambda * d ** (1.0 / grid) * np.maximum(np.sqrt(np.maximum(grid - 1.0, 0.0)), 1.0) * s
        return float(vals.min())
    if kind == "Schatten":
        if p > 2:
            raise ValueError("the Schatten bound needs p <= 2")
        ev = np.clip(np.linalg.eigvalsh(X.T @ X), 0.0, None)
        root = np.sqrt(d * ev)
        grid = _qstar_grid(2.0, ps, d)
        best = math.inf
        for q in grid:
            qn = float(np.sum(root**q) ** (1.0 / q)) if root.max() > 0 else 0.0
            best = min(best, math.sqrt(q * math.pi / math.e) * max(qn, d ** (1.0 / q) * s))
        return float(Lambda * 2 ** -0.25 * best)
    raise ValueError(f"unknown kind {kind!r}")


def complexity_upper_dnn(points, d: int, Lambda: float, budgets) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    budgets = list(budgets)
    if len(budgets) < 1:
        raise ValueError("need at least one layer")
    gram = X @ X.T
    off = np.triu(gram, 1)
    pair = math.sqrt(float(np.sum(off * off)))
    inner = 16.0 * len(budgets) * pair + float(np.trace(gram))
    return float(math.sqrt(d) * Lambda * np.prod(budgets) * math.sqrt(inner))


def downstream_bound(report: BoundReport, feature_kind: str = "linear") -> BoundReport:
    """Same right-hand side, read as a bound on the weighted mean-classifier loss."""
    label = {"linear": "downstream_linear", "mlp": "downstream_dnn"}.get(feature_kind)
    if label is None:
        raise ValueError(f"unknown feature kind {feature_kind!r}")
    return replace(report, provenance=label, notes={**report.notes, "source_theorem": report.theorem_id})
