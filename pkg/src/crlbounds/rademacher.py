"""Rademacher-type complexities of feature classes and of the triplet score class.

A *class spec* is one of

* :class:`ZeroClass` -- the class containing only the zero map;
* a :class:`~crlbounds.features.LinearFeatureMap` or
  :class:`~crlbounds.features.MlpFeatureMap` used as a template: the class is
  every map with the same shape, constraint, budgets and output radius;
* :class:`FiniteFeatureClass` -- an explicit finite list of maps.

Inner suprema are solved either in closed form (un-projected linear classes)
or by projected gradient ascent, which only ever evaluates feasible maps and
therefore returns lower bounds of the true supremum.

``estimate_term`` returns the unnormalised sums used by the bounds module
(``A``, ``B``, ``C``); ``mc_rademacher`` and ``worstcase_rademacher_H`` return
sample-size normalised complexities.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from . import features as F
from .synthgen import ContrastiveDataset, ExpandedTripletSet, block_rng, expand_to_triplets, master_seed

MAX_ENUM_SIGNS = 22
_CHUNK = 1 << 14

_STREAM_SIGNS = 31
_STREAM_ASCENT = 32


# --- class specs and solvers ---------------------------------------------------

@dataclass(frozen=True)
class ZeroClass:
    out_dim: int = 1


@dataclass(frozen=True)
class FiniteFeatureClass:
    maps: tuple

    def __post_init__(self):
        if len(self.maps) == 0:
            raise ValueError("finite class must be nonempty")
        object.__setattr__(self, "maps", tuple(self.maps))


ClassSpec = Union[ZeroClass, FiniteFeatureClass, F.LinearFeatureMap, F.MlpFeatureMap]


@dataclass(frozen=True)
class ClosedFormDual:
    name: str = "closed_form_dual"


@dataclass(frozen=True)
class ProjectedAscent:
    restarts: int = 5
    steps: int = 200
    step_size: float = 0.1
    name: str = "projected_ascent"


InnerSolver = Union[ClosedFormDual, ProjectedAscent]


def closed_form_available(cls: ClassSpec) -> bool:
    return isinstance(cls, F.LinearFeatureMap) and cls.output_radius is None


def default_solver(cls: ClassSpec) -> InnerSolver:
    return ClosedFormDual() if closed_form_available(cls) else ProjectedAscent()


def _check_solver(cls: ClassSpec, solver: InnerSolver) -> None:
    if isinstance(solver, ClosedFormDual) and not (closed_form_available(cls) or isinstance(cls, ZeroClass)):
        raise ValueError("closed-form dual is only available for un-projected linear classes")


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    std_error: float | None
    method: str  # "exact_enumeration" or "monte_carlo"
    inner_solver: dict
    n_sign_draws: int
    term: str = ""
    lower_bound: bool = False
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RademacherEstimate":
        return cls(**json.loads(text))


def _solver_meta(solver: InnerSolver) -> dict:
    return asdict(solver)


# --- sign patterns ---------------------------------------------------------------

def sign_chunks(m: int, chunk: int = _CHUNK):
    """All ``2^m`` sign vectors in lexicographic order, in chunks of rows."""
    if m > MAX_ENUM_SIGNS:
        raise ValueError(f"{m} sign variables exceed the enumeration budget of {MAX_ENUM_SIGNS}")
    total = 1 << m
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = (idx[:, None] >> shifts) & 1
        yield (2 * bits - 1).astype(float)


def draw_signs(seed: int, draw: int, shape) -> np.ndarray:
    """Sign array for MC draw number ``draw`` (counter-derived, order independent)."""
    r = block_rng(seed, _STREAM_SIGNS, draw)
    return 2.0 * r.integers(0, 2, size=shape) - 1.0


# --- finite tables ---------------------------------------------------------------

def exact_rademacher(values) -> float:
    """``(1/n) E max_f sum_i eps_i values[f, i]`` by enumerating all sign vectors."""
    V = np.atleast_2d(np.asarray(values, dtype=float))
    n = V.shape[1]
    if n > MAX_ENUM_SIGNS:
        raise ValueError(f"{n} points exceed the enumeration budget of {MAX_ENUM_SIGNS}")
    total = 0.0
    for E in sign_chunks(n):
        total += float(np.sum(np.max(E @ V.T, axis=1)))
    return total / (n * (1 << n))


# --- inner suprema -------------------------------------------------------------------
#
# Three objectives appear:
#   linear:  sup_f sum_{i,t} E[i,t] f_t(Z[i])
#   score:   sup_f sum_j w_j f(a_j)^T (f(p_j) - f(q_j))
#   energy:  sup_f max_j ||f(a_j)||^2 + ||f(p_j)||^2 + ||f(q_j)||^2

def _quadratic_factor(c: F.LinearFeatureMap, ev: np.ndarray) -> float:
    """``sup tr(S U^T U)`` over the constraint ball, given eigenvalues ``ev`` of ``S``."""
    d, lam = c.out_dim, c.budget
    pos = np.clip(np.sort(ev)[::-1], 0.0, None)
    if pos.size == 0 or pos[0] == 0:
        return 0.0
    p = c.constraint.p
    if isinstance(c.constraint, (F.MixedL2p, F.Frobenius)):
        return lam**2 * d ** max(0.0, 1.0 - 2.0 / p) * pos[0]
    # Schatten: U^T U has singular values s_i^2, so the budget is a Schatten-p/2 ball
    top = pos[: min(d, c.in_dim)]
    if p <= 2:
        return lam**2 * top[0]
    return lam**2 * F._lp(top, F.conjugate(p / 2.0))


def _ascent(cls, objective, rng: np.random.Generator, solver: ProjectedAscent) -> float:
    """Best feasible objective value found by normalised projected ascent."""
    best = -np.inf
    for r in range(solver.restarts):
        blocks = []
        for W, (_, b) in zip(F.params(cls), F.constraint_norms(cls)):
            R = rng.standard_normal(W.shape)
            blocks.append(R * (b / np.linalg.norm(R)))
        f = F.project_params(F.with_params(cls, blocks))
        budgets = [b for _, b in F.constraint_norms(f)]
        for t in range(1, solver.steps + 1):
            val, grads = objective(f)
            best = max(best, val)
            eta = solver.step_size / np.sqrt(t)
            new = []
            for W, g, b in zip(F.params(f), grads, budgets):
                gn = np.linalg.norm(g)
                new.append(W + g * (eta * b / gn) if gn > 0 else W)
            f = F.project_params(F.with_params(f, new))
        best = max(best, objective(f)[0])
    return max(best, 0.0) if _contains_zero(cls) else best


def _contains_zero(cls) -> bool:
    # every norm ball contains the zero map; objectives below vanish there
    return isinstance(cls, (F.LinearFeatureMap, F.MlpFeatureMap, ZeroClass))


def sup_linear(cls: ClassSpec, Z: np.ndarray, E: np.ndarray, solver: InnerSolver | None = None,
               rng: np.random.Generator | None = None) -> float:
    """``sup_f sum_{i,t} E[i,t] f_t(Z[i])``."""
    if isinstance(cls, ZeroClass):
        return 0.0
    if isinstance(cls, FiniteFeatureClass):
        return max(float(np.sum(E * F.apply(f, Z))) for f in cls.maps)
    solver = solver or default_solver(cls)
    _check_solver(cls, solver)
    if isinstance(solver, ClosedFormDual):
        return cls.budget * F.dual_norm(Z.T @ E, cls.constraint)

    def objective(f):
        out, cache = F.forward(f, Z)
        return float(np.sum(E * out)), F.backward(f, cache, E)

    return _ascent(cls, objective, rng if rng is not None else np.random.default_rng(0), solver)


def sup_linear_batch(cls: ClassSpec, Z: np.ndarray, Es: np.ndarray) -> np.ndarray:
    """Closed-form ``sup_linear`` for a stack of sign matrices ``Es`` (B, m, d)."""
    if isinstance(cls, ZeroClass):
        return np.zeros(len(Es))
    G = np.einsum("mD,bmd->bDd", Z, Es)
    c = cls.constraint
    if isinstance(c, F.Frobenius) or (isinstance(c, F.SchattenP) and c.p == 2) or (isinstance(c, F.MixedL2p) and c.p == 2):
        return cls.budget * np.sqrt(np.sum(G**2, axis=(1, 2)))
    q = F.conjugate(c.p)
    if isinstance(c, F.MixedL2p):
        v = np.linalg.norm(G, axis=1)  # column norms, (B, d)
    else:
        v = np.linalg.svd(G, compute_uv=False)
    if np.isinf(q):
        return cls.budget * v.max(axis=1)
    m = v.max(axis=1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return cls.budget * m[:, 0] * np.sum((v / safe) ** q, axis=1) ** (1.0 / q)


def sup_score(cls: ClassSpec, A, P, Q, w, solver: InnerSolver | None = None,
              rng: np.random.Generator | None = None) -> float:
    """``sup_f sum_j w_j f(A_j)^T (f(P_j) - f(Q_j))``."""
    w = np.asarray(w, dtype=float)
    if isinstance(cls, ZeroClass):
        return 0.0
    if isinstance(cls, FiniteFeatureClass):
        return max(float(np.dot(w, np.sum(F.apply(f, A) * (F.apply(f, P) - F.apply(f, Q)), axis=1)))
                   for f in cls.maps)
    solver = solver or default_solver(cls)
    _check_solver(cls, solver)
    if isinstance(solver, ClosedFormDual):
        M = np.einsum("j,ja,jb->ab", w, A, P - Q)
        return _quadratic_factor(cls, np.linalg.eigvalsh(0.5 * (M + M.T)))

    def objective(f):
        fa, fp, fq = F.apply(f, A), F.apply(f, P), F.apply(f, Q)
        val = float(np.dot(w, np.sum(fa * (fp - fq), axis=1)))
        return val, F.score_gradient(f, A, P, Q, w)

    return _ascent(cls, objective, rng if rng is not None else np.random.default_rng(0), solver)


def sup_energy(cls: ClassSpec, A, P, Q, solver: InnerSolver | None = None,
               rng: np.random.Generator | None = None) -> float:
    """``sup_f max_j ||f(A_j)||^2 + ||f(P_j)||^2 + ||f(Q_j)||^2``."""
    if isinstance(cls, ZeroClass):
        return 0.0
    if isinstance(cls, FiniteFeatureClass):
        return max(float(np.max(sum(np.sum(F.apply(f, X) ** 2, axis=1) for X in (A, P, Q))))
                   for f in cls.maps)
    solver = solver or default_solver(cls)
    _check_solver(cls, solver)
    best = 0.0
    for j in range(len(A)):
        pts = np.stack([A[j], P[j], Q[j]])
        if isinstance(solver, ClosedFormDual):
            val = _quadratic_factor(cls, np.linalg.eigvalsh(pts.T @ pts))
        else:
            def objective(f, pts=pts):
                out, cache = F.forward(f, pts)
                return float(np.sum(out**2)), F.backward(f, cache, 2.0 * out)

            val = _ascent(cls, objective, rng if rng is not None else np.random.default_rng(j), solver)
        best = max(best, val)
    return best


def radius_on_points(cls: ClassSpec, Z) -> float:
    """``sup_f max_i ||f(Z_i)||_2`` (closed form for un-projected linear classes)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if isinstance(cls, ZeroClass):
        return 0.0
    if isinstance(cls, FiniteFeatureClass):
        return max(float(np.max(np.linalg.norm(F.apply(f, Z), axis=1))) for f in cls.maps)
    if closed_form_available(cls):
        return float(np.sqrt(max(_quadratic_factor(cls, np.array([z @ z])) for z in Z)))
    if cls.output_radius is not None:
        return float(cls.output_radius)
    raise ValueError("no closed-form radius for this class; attach an output radius")


# --- Monte Carlo / exact drivers ----------------------------------------------------------

def _estimate(sample_fn, num_signs: int, method: str, draws: int, seed: int, batch_fn=None):
    """Average ``sample_fn(signs)`` over all sign vectors or over MC draws."""
    if method == "exact":
        total, count = 0.0, 0
        for E in sign_chunks(num_signs):
            if batch_fn is not None:
                total += float(np.sum(batch_fn(E)))
            else:
                total += sum(sample_fn(e) for e in E)
            count += len(E)
        return total / count, 0.0, count
    if draws < 2:
        raise ValueError(f"draws must be >= 2, got {draws}")
    vals = np.array([sample_fn(draw_signs(seed, i, num_signs)) for i in range(draws)])
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0, draws
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(draws)), draws


def _method_name(method: str) -> str:
    return "exact_enumeration" if method == "exact" else "monte_carlo"


def mc_rademacher(cls: ClassSpec, points, draws: int = 200, inner_solver: InnerSolver | None = None,
                  rng: int | np.random.Generator = 0, method: str = "mc") -> RademacherEstimate:
    """``(1/m) E sup_f sum_i sum_t eps_it f_t(z_i)`` over the ``m`` given points."""
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    m = Z.shape[0]
    d = _out_dim(cls)
    solver = inner_solver or default_solver(cls)
    _check_solver(cls, solver)
    seed = master_seed(rng)
    arng = block_rng(seed, _STREAM_ASCENT, 0)

    def one(e):
        return sup_linear(cls, Z, e.reshape(m, d), solver, arng)

    batch = None
    if isinstance(solver, ClosedFormDual) and not isinstance(cls, (FiniteFeatureClass,)):
        batch = lambda E: sup_linear_batch(cls, Z, E.reshape(len(E), m, d))  # noqa: E731
    val, se, count = _estimate(one, m * d, method, draws, seed, batch)
    return RademacherEstimate(val / m, se / m, _method_name(method), _solver_meta(solver), count,
                              term="R_F", lower_bound=isinstance(solver, ProjectedAscent))


def _out_dim(cls: ClassSpec) -> int:
    if isinstance(cls, ZeroClass):
        return cls.out_dim
    if isinstance(cls, FiniteFeatureClass):
        return cls.maps[0].out_dim
    return cls.out_dim


@dataclass(frozen=True)
class TermConfig:
    draws: int = 200
    method: str = "mc"  # "mc" or "exact"
    solver: InnerSolver | None = None
    greedy_swaps: bool = False
    max_swaps: int | None = None

    def __post_init__(self):
        if self.method not in ("mc", "exact"):
            raise ValueError(f"unknown method {self.method!r}")


def term_points(term: str, dataset: ContrastiveDataset) -> np.ndarray:
    """Points carrying one sign vector each for the given term."""
    term = term.upper()
    if term in ("A", "C"):
        return expand_to_triplets(dataset).points()
    if term == "B":
        n, k, D = dataset.n, dataset.k, dataset.dim
        return np.concatenate([dataset.anchors, dataset.positives, dataset.negatives.reshape(n * k, D)])
    raise ValueError(f"unknown term {term!r}; expected A, B or C")


def _triples_points(ex: ExpandedTripletSet, idx: np.ndarray) -> np.ndarray:
    return np.stack([ex.anchors[idx], ex.positives[idx], ex.negatives[idx]], axis=1).reshape(-1, ex.anchors.shape[1])


def estimate_term(term: str, dataset: ContrastiveDataset, cls: ClassSpec, cfg: TermConfig = TermConfig(),
                  rng: int | np.random.Generator = 0) -> RademacherEstimate:
    """Unnormalised sign-sum complexity ``E sup_f sum eps f_t(.)`` for A, B or C.

    A and C carry ``3nkd`` signs over the expanded triples; B carries
    ``n(k+2)d`` signs, one per point and output coordinate. For C the outer
    maximum over multisets of triples starts at the identity multiset and can
    be improved by greedy single-triple swaps evaluated on common sign draws,
    so C is always reported as a lower bound of its defining maximum.
    """
    term = term.upper()
    Z = term_points(term, dataset)
    d = _out_dim(cls)
    solver = cfg.solver or default_solver(cls)
    _check_solver(cls, solver)
    seed = master_seed(rng)
    arng = block_rng(seed, _STREAM_ASCENT, 1)
    closed = isinstance(solver, ClosedFormDual) and not isinstance(cls, FiniteFeatureClass)

    def run(points):
        m = points.shape[0]

        def one(e):
            return sup_linear(cls, points, e.reshape(m, d), solver, arng)

        batch = (lambda E: sup_linear_batch(cls, points, E.reshape(len(E), m, d))) if closed else None
        return _estimate(one, m * d, cfg.method, cfg.draws, seed, batch)

    val, se, count = run(Z)
    meta = {"num_signs": int(Z.shape[0] * d)}
    if term == "C" and cfg.greedy_swaps and not isinstance(cls, ZeroClass):
        ex = expand_to_triplets(dataset)
        nk = len(ex)
        sel = np.arange(nk)
        swaps, budget = 0, cfg.max_swaps if cfg.max_swaps is not None else nk * nk
        improved = True
        while improved and swaps < budget:
            improved = False
            for j in range(nk):
                for cand in range(nk):
                    if swaps >= budget:
                        break
                    if cand == sel[j]:
                        continue
                    trial = sel.copy()
                    trial[j] = cand
                    swaps += 1
                    v2, se2, _ = run(_triples_points(ex, trial))
                    if v2 > val:
                        sel, val, se, improved = trial, v2, se2, True
        meta.update(swaps=swaps, multiset=sel.tolist())
    return RademacherEstimate(val, se, _method_name(cfg.method), _solver_meta(solver), count, term=term,
                              lower_bound=(term == "C") or isinstance(solver, ProjectedAscent), meta=meta)


def worstcase_rademacher_H(expanded: ExpandedTripletSet, cls: ClassSpec, cfg: TermConfig = TermConfig(),
                           rng: int | np.random.Generator = 0) -> RademacherEstimate:
    """``E sup_f (1/nk) sum_j eps_j h_f(triple_j)`` on the expanded triples.

    Uses the identity multiset, optionally improved by greedy swaps as in
    :func:`estimate_term`; the result is a lower bound of the worst case.
    """
    ex = expanded
    nk = len(ex)
    solver = cfg.solver or default_solver(cls)
    _check_solver(cls, solver)
    seed = master_seed(rng)
    arng = block_rng(seed, _STREAM_ASCENT, 2)

    def run(idx):
        A, P, Q = ex.anchors[idx], ex.positives[idx], ex.negatives[idx]
        return _estimate(lambda e: sup_score(cls, A, P, Q, e, solver, arng), nk, cfg.method, cfg.draws, seed)

    sel = np.arange(nk)
    val, se, count = run(sel)
    meta = {"num_signs": nk}
    if cfg.greedy_swaps and not isinstance(cls, ZeroClass):
        swaps, budget = 0, cfg.max_swaps if cfg.max_swaps is not None else nk * nk
        for j in range(nk):
            for cand in range(nk):
                if swaps >= budget or cand == sel[j]:
                    continue
                trial = sel.copy()
                trial[j] = cand
                swaps += 1
                v2, se2, _ = run(trial)
                if v2 > val:
                    sel, val, se = trial, v2, se2
        meta.update(swaps=swaps, multiset=sel.tolist())
    return RademacherEstimate(val / nk, se / nk, _method_name(cfg.method), _solver_meta(solver), count,
                              term="R_H", lower_bound=True, meta=meta)


def is_symmetric(cls: ClassSpec, points=None) -> bool:
    """Whether ``f in class`` implies ``-f in class`` (checked on ``points`` for finite classes)."""
    if not isinstance(cls, FiniteFeatureClass):
        return True
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    outs = [F.apply(f, Z) for f in cls.maps]
    return all(any(np.allclose(-o, o2, atol=1e-12) for o2 in outs) for o in outs)


def lower_bound_C(cls: ClassSpec, expanded: ExpandedTripletSet, solver: InnerSolver | None = None,
                  rng: int | np.random.Generator = 0) -> float:
    """``sqrt(nk/2) * sup_f max_j (||f(x_j)||^2 + ||f(x_j+)||^2 + ||f(x_j-)||^2)^{1/2}``."""
    ex = expanded
    if not is_symmetric(cls, ex.points()):
        raise ValueError("lower bound requires a symmetric class")
    arng = block_rng(master_seed(rng), _STREAM_ASCENT, 3)
    e = sup_energy(cls, ex.anchors, ex.positives, ex.negatives, solver, arng)
    return float(np.sqrt(len(ex) / 2.0) * np.sqrt(max(e, 0.0)))
