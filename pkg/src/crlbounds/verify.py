"""Exact numerical checks of the probabilistic and combinatorial tools behind the bounds.

Each check draws small random instances, computes both sides of an inequality
exactly (expectations over Rademacher signs by full enumeration, suprema over
finite classes or closed forms) and counts violations.

Fat-shattering here uses margin ``eps/2`` around the witnesses. At that margin
``fat_eps < 4 n R^2 / eps^2`` is false (the sign patterns ``±a`` on three points,
``n = 3``, ``eps = 2R`` shatter all three), so FAT_VS_RADEMACHER evaluates
``fat_shattering(table, 2 eps)``, i.e. margin ``eps``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import features as F
from . import rademacher as Rd
from .synthgen import block_rng, master_seed

LEMMA_IDS = (
    "KK_LOWER", "KK_UPPER_VEC", "KK_UPPER_MAT", "CHAOS_MGF", "VEC_CONTRACTION", "GEN_CONTRACTION",
    "H_COMPLEXITY", "LOWER_C", "FAT_VS_RADEMACHER", "COVER_VS_FAT", "CHAIN_SUM", "GEN_VS_RADEMACHER",
    "THM_L2_COMPLEXITY",
)
EXACT_COVER_MAX_ROWS = 15
FAT_MAX_POINTS = 10
FAT_MAX_ROWS = 64
REL_TOL = 1e-10

_STREAM_VERIFY = 41


@dataclass(frozen=True)
class FiniteClassTable:
    values: np.ndarray  # (m functions, n points)
    labels: tuple = ()

    def __post_init__(self):
        v = np.atleast_2d(np.array(self.values, dtype=float, copy=True))
        if not np.all(np.isfinite(v)):
            raise ValueError("table entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class VerificationReport:
    lemma_id: str
    instances: int
    violations: int
    max_slack: float  # largest lhs - rhs seen; <= 0 means every instance held
    status: str  # "Pass" or "Fail"
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class InstanceConfig:
    instances: int = 30
    seed: int = 0
    resamples: int = 200  # GEN_VS_RADEMACHER only
    delta: float = 0.1  # GEN_VS_RADEMACHER only


def _values(table) -> np.ndarray:
    return table.values if isinstance(table, FiniteClassTable) else np.atleast_2d(np.asarray(table, dtype=float))


# --- covering numbers and fat-shattering -----------------------------------------

def covering_number_linf(table, eps: float) -> int:
    """Smallest proper ``l_inf`` cover at scale ``eps`` (centres are rows of the table).

    Exact by subset search up to ``EXACT_COVER_MAX_ROWS`` distinct rows, greedy
    (an upper bound) beyond that; see :func:`cover_is_exact`.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    V = np.unique(_values(table), axis=0)
    m = V.shape[0]
    close = np.max(np.abs(V[:, None, :] - V[None, :, :]), axis=2) <= eps
    if m > EXACT_COVER_MAX_ROWS:
        uncovered = np.ones(m, dtype=bool)
        count = 0
        while uncovered.any():
            c = int(np.argmax((close & uncovered[None, :]).sum(axis=1)))
            uncovered &= ~close[c]
            count += 1
        return count
    for size in range(1, m + 1):
        for centres in itertools.combinations(range(m), size):
            if close[list(centres)].any(axis=0).all():
                return size
    return m


def cover_is_exact(table) -> bool:
    return np.unique(_values(table), axis=0).shape[0] <= EXACT_COVER_MAX_ROWS


def _shatters(V: np.ndarray, pts: tuple, eps: float) -> bool:
    """Whether ``pts`` are shattered with margin ``eps/2`` for some witness vector."""
    D = len(pts)
    half = eps / 2.0
    sub = V[:, pts]  # (m, D)
    # an exact witness can always be moved down to some observed value + eps/2
    cands = [np.unique(sub[:, i]) + half for i in range(D)]
    grids = np.array(list(itertools.product(*cands)))  # (w, D)
    pos = sub[None, :, :] >= grids[:, None, :] + half  # (w, m, D)
    neg = sub[None, :, :] <= grids[:, None, :] - half
    valid = np.all(pos | neg, axis=2)  # (w, m)
    code = (pos.astype(np.int64) << np.arange(D)).sum(axis=2)
    seen = np.zeros((grids.shape[0], 1 << D), dtype=bool)
    w_idx, f_idx = np.nonzero(valid)
    seen[w_idx, code[w_idx, f_idx]] = True
    return bool(seen.all(axis=1).any())


def fat_shattering(table, eps: float) -> int:
    """Largest number of points shattered with margin ``eps/2`` around some witnesses."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    V = np.unique(_values(table), axis=0)
    m, n = V.shape
    if n > FAT_MAX_POINTS or m > FAT_MAX_ROWS:
        raise ValueError(f"table too large for exhaustive search ({m} rows, {n} points)")
    if m < 2:
        return 0
    best = 0
    for D in range(1, min(n, int(math.log2(m))) + 1):
        if any(_shatters(V, pts, eps) for pts in itertools.combinations(range(n), D)):
            best = D
        else:
            break  # shattering is inherited by subsets
    return best


# --- exact expectations -------------------------------------------------------------

def _all_signs(m: int) -> np.ndarray:
    return np.concatenate(list(Rd.sign_chunks(m)))


def exact_E_sup_vector(values: np.ndarray) -> float:
    """``E sup_f sum_{i,t} eps_it values[f, i, t]`` over all ``n*d`` signs."""
    V = values.reshape(values.shape[0], -1)
    E = _all_signs(V.shape[1])
    return float(np.mean(np.max(E @ V.T, axis=1)))


def worstcase_rademacher(values: np.ndarray, n: int) -> float:
    """Worst-case complexity over all size-``n`` multisets of the table's points."""
    V = _values(values)
    best = -np.inf
    E = _all_signs(n)
    for ms in itertools.combinations_with_replacement(range(V.shape[1]), n):
        best = max(best, float(np.mean(np.max(E @ V[:, list(ms)].T, axis=1))) / n)
    return best


# --- individual checks -----------------------------------------------------------------
# Each returns (lhs, rhs, extra) for one instance drawn from ``rng``.

def _kk_lower(rng, i):
    if i == 0:
        t = np.array([1.0, 1.0])
    else:
        t = rng.standard_normal(int(rng.integers(1, 13))) * rng.choice([1.0, 10.0, 0.1])
    E = _all_signs(t.size)
    # lower bound: the roles of the two sides are swapped
    return 2 ** -0.5 * float(np.linalg.norm(t)), float(np.mean(np.abs(E @ t))), {}


def _kk_upper_vec(rng, i):
    n, D = int(rng.integers(1, 13)), int(rng.integers(1, 6))
    p = float(rng.choice([1.0, 1.5, 2.0, 3.0, 4.0, 7.5]) if i % 2 else rng.uniform(1, 8))
    V = rng.standard_normal((n, D))
    E = _all_signs(n)
    lhs = float(np.mean(np.linalg.norm(E @ V, axis=1) ** p) ** (1 / p))
    rhs = max(math.sqrt(p - 1), 1.0) * math.sqrt(float(np.sum(V * V)))
    return lhs, rhs, {}


def _schatten(M: np.ndarray, q: float) -> np.ndarray:
    s = np.linalg.svd(M, compute_uv=False)
    return np.sum(s**q, axis=-1) ** (1 / q)


def _kk_upper_mat(rng, i):
    n = int(rng.integers(1, 11))
    a, b = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    q = float(rng.uniform(2, 8)) if i % 3 else 2.0
    X = rng.standard_normal((n, a, b))
    E = _all_signs(n)
    S = np.einsum("si,iab->sab", E, X)
    lhs = float(np.mean(_schatten(S, q) ** q) ** (1 / q))

    def root_norm(G):
        ev = np.clip(np.linalg.eigvalsh(G), 0, None)
        return float(np.sum(ev ** (q / 2)) ** (1 / q))

    big = max(root_norm(np.einsum("iab,iac->bc", X, X)), root_norm(np.einsum("iab,icb->ac", X, X)))
    return lhs, 2 ** -0.25 * math.sqrt(q * math.pi / math.e) * big, {}


def _chaos(rng, i):
    if i == 0:
        n, A = 2, np.array([[0.0, 1.0], [0.0, 0.0]])
    else:
        n = int(rng.integers(2, 13))
        A = np.triu(rng.standard_normal((n, n)) * rng.choice([1.0, 100.0, 0.01]), 1)
        if i % 4 == 0:  # a few heavy-tailed coefficient sets
            A = np.triu(rng.standard_cauchy((n, n)), 1)
    s = math.sqrt(float(np.sum(A * A)))
    E = _all_signs(n)
    Z = np.einsum("si,ij,sj->s", E, A, E)
    val = float(np.mean(np.exp(np.abs(Z) / (4 * math.e * s))))
    return val, 2.0, {"value": val}


def _random_class(rng, m, n, d, zero=False):
    vals = rng.standard_normal((m, n, d)) * rng.choice([0.3, 1.0, 3.0])
    if zero:
        vals[0] = 0.0
    return vals


def _lipschitz_fn(rng, d, G):
    u = rng.standard_normal(d)
    u *= G / np.linalg.norm(u)
    if rng.random() < 0.5:
        return lambda y: y @ u
    v = rng.standard_normal(d)
    v *= G / np.linalg.norm(v)
    return lambda y: np.maximum(y @ u, y @ v)


def _vec_contraction(rng, i):
    d = int(rng.integers(1, 5))
    n = int(rng.integers(1, 22 // d + 1))
    n = min(n, 22 // d)
    m, G = int(rng.integers(2, 9)), float(rng.uniform(0.5, 2))
    vals = _random_class(rng, m, n, d)
    h = _lipschitz_fn(rng, d, G)
    comp = h(vals)  # (m, n)
    lhs = float(np.mean(np.max(_all_signs(n) @ comp.T, axis=1)))
    rhs = math.sqrt(2) * G * exact_E_sup_vector(vals)
    return lhs, rhs, {}


_TAUS = {
    "identity": lambda x: x,
    "exp0.1": lambda x: np.exp(0.1 * x),
    "exp1": lambda x: np.exp(x),
}


def _hinge_sum_tau(rng):
    c0 = float(rng.uniform(0, 1))
    c = rng.uniform(0, 2, 3)
    t = np.sort(rng.uniform(0, 3, 3))
    return lambda x: c0 + sum(ci * np.maximum(np.asarray(x) - ti, 0.0) for ci, ti in zip(c, t))


def _gen_contraction(rng, i):
    d = int(rng.integers(1, 4))
    n = min(int(rng.integers(1, 8)), 22 // d)
    m, G = int(rng.integers(2, 7)), float(rng.uniform(0.5, 2))
    vals = _random_class(rng, m, n, d, zero=True)
    name = ["identity", "exp0.1", "exp1", "piecewise"][i % 4]
    tau = _TAUS.get(name) or _hinge_sum_tau(rng)
    comp = np.stack([_lipschitz_fn(rng, d, G)(vals[:, j, :]) for j in range(n)], axis=1)  # g_i(0) = 0
    lhs = float(np.mean(tau(np.max(_all_signs(n) @ comp.T, axis=1))))
    V = vals.reshape(m, -1)
    rhs = float(np.mean(tau(G * math.sqrt(2) * np.max(_all_signs(n * d) @ V.T, axis=1))))
    return lhs, rhs, {"tau": name}


def _finite_feature_values(rng, m, n, d):
    """Values of ``m`` maps at triples: arrays (m, n, d) for x, x+ and x-."""
    scale = rng.choice([0.5, 1.0, 2.0])
    return tuple(rng.standard_normal((m, n, d)) * scale for _ in range(3))


def _h_complexity(rng, i):
    """Score-class complexity vs the triple-sign sum, on finite or linear classes."""
    if i % 2 == 0:
        d = int(rng.integers(1, 4))
        n = min(int(rng.integers(1, 5)), 22 // (3 * d))
        m = int(rng.integers(2, 8))
        fa, fp, fq = _finite_feature_values(rng, m, n, d)
        R = float(np.sqrt(max((x * x).sum(axis=2).max() for x in (fa, fp, fq))))
        H = np.sum(fa * (fp - fq), axis=2)  # (m, n)
        lhs = float(np.mean(np.max(_all_signs(n) @ H.T, axis=1))) / n
        rhs = math.sqrt(12) * R / n * exact_E_sup_vector(np.concatenate([fa, fp, fq], axis=1))
        return lhs, rhs, {"class": "finite"}
    d = int(rng.integers(1, 3))
    n = min(int(rng.integers(1, 4)), 22 // (3 * d))
    D = int(rng.integers(1, 4))
    c = _random_linear_class(rng, d, D)
    A, P, Q = (rng.standard_normal((n, D)) for _ in range(3))
    pts = np.stack([A, P, Q], axis=1).reshape(-1, D)
    R = Rd.radius_on_points(c, pts)
    lhs = float(np.mean([Rd.sup_score(c, A, P, Q, e) for e in _all_signs(n)])) / n
    E = _all_signs(3 * n * d).reshape(-1, 3 * n, d)
    rhs = math.sqrt(12) * R / n * float(np.mean(Rd.sup_linear_batch(c, pts, E)))
    return lhs, rhs, {"class": "linear"}


def _random_linear_class(rng, d, D):
    kind = int(rng.integers(0, 3))
    p = float(rng.choice([1.0, 1.5, 2.0, 3.0, np.inf]))
    con = F.MixedL2p(p) if kind < 2 else F.SchattenP(p)
    return F.linear_map(np.zeros((d, D)), con, float(rng.uniform(0.5, 2.0)))


def _lower_c(rng, i):
    """Exact C (max over all multisets of triples) against the lower bound."""
    d = int(rng.integers(1, 3))
    nk = min(int(rng.integers(1, 4)), 22 // (3 * d))
    D = int(rng.integers(1, 4))
    A, P, Q = (rng.standard_normal((nk, D)) for _ in range(3))
    if i % 2 == 0:
        c = _random_linear_class(rng, d, D)
    else:
        maps = [F.linear_map(rng.standard_normal((d, D)), F.MixedL2p(2), 1e9) for _ in range(int(rng.integers(1, 4)))]
        c = Rd.FiniteFeatureClass(tuple(maps + [F.linear_map(-g.U, F.MixedL2p(2), 1e9) for g in maps]))
    E = _all_signs(3 * nk * d).reshape(-1, 3 * nk, d)
    best = -np.inf
    for ms in itertools.combinations_with_replacement(range(nk), nk):
        idx = list(ms)
        pts = np.stack([A[idx], P[idx], Q[idx]], axis=1).reshape(-1, D)
        if isinstance(c, Rd.FiniteFeatureClass):
            outs = np.stack([F.apply(g, pts) for g in c.maps]).reshape(len(c.maps), -1)
            val = float(np.mean(np.max(E.reshape(len(E), -1) @ outs.T, axis=1)))
        else:
            val = float(np.mean(Rd.sup_linear_batch(c, pts, E)))
        best = max(best, val)
    from .synthgen import ExpandedTripletSet
    lb = Rd.lower_bound_C(c, ExpandedTripletSet(A, P, Q, nk, 1))
    return lb, best, {}  # inequality reads lower bound <= C


def _fat_vs_rad(rng, i):
    """fat at margin eps stays below 4 n R^2 / eps^2 for every eps above the worst case R.

    ``fat_shattering(table, 2 eps)`` uses margin ``eps``; see the module notes.
    """
    npts, m = int(rng.integers(1, 5)), int(rng.integers(2, 9))
    n = int(rng.integers(1, 6))
    if i % 3 == 0:
        # all sign patterns at a fixed amplitude: the extremal family
        D = npts
        amp = float(rng.uniform(0.5, 2))
        V = amp * np.array(list(itertools.product([-1.0, 1.0], repeat=D)))
    else:
        V = rng.uniform(-1, 1, (m, npts)) * rng.choice([0.5, 1.0, 3.0])
    R = worstcase_rademacher(V, n)
    worst = -np.inf
    span = max(float(np.ptp(V)), 1e-9)
    for eps in R + np.array([1e-9, 0.01, 0.1, 0.3, 0.7, 1.0]) * span:
        lhs = fat_shattering(V, 2 * eps)
        rhs = 4 * n * R * R / eps**2
        # strict inequality: a tie counts as a violation
        worst = max(worst, lhs - rhs if lhs < rhs else max(lhs - rhs, 1.0))
    return worst, 0.0, {}


def _cover_vs_fat(rng, i):
    m, npts = int(rng.integers(1, 13)), int(rng.integers(1, 7))
    B = float(rng.choice([0.5, 1.0, 2.0]))
    V = rng.uniform(-B, B, (m, npts))
    worst = -np.inf
    for eps in np.array([0.05, 0.2, 0.5, 1.0, 1.5, 2.0]) * B:
        lhs = math.log(covering_number_linf(V, eps))
        fat = fat_shattering(V, eps / 4)
        rhs = 1 + fat * math.log2(8 * math.e * B * B * npts / eps**2) ** 2
        worst = max(worst, lhs - rhs)
    return worst, 0.0, {}


def _chain_sum(rng, i):
    m, npts = int(rng.integers(1, 13)), int(rng.integers(1, 11))
    V = rng.standard_normal((m, npts)) * rng.choice([0.5, 1.0, 4.0])
    a = V.mean(axis=0) if i % 2 else np.zeros(npts)
    lhs = Rd.exact_rademacher(V)
    eps0 = math.sqrt(float(np.max(np.mean((V - a) ** 2, axis=1))))
    worst = -np.inf
    if eps0 == 0:
        return lhs, 0.0, {}
    for N in range(0, 8):
        eps = eps0 * 2.0 ** -np.arange(N + 1)
        rhs = eps[N] + 2 * sum((eps[j] + eps[j - 1]) * math.sqrt(math.log(covering_number_linf(V, eps[j])) / npts)
                               for j in range(1, N + 1))
        worst = max(worst, lhs - rhs)
    return worst, 0.0, {}


def _gen_vs_rad(rng, i, resamples, delta):
    """Frequency of violations of the uniform deviation bound over resampled datasets."""
    domain, m = int(rng.integers(3, 9)), int(rng.integers(2, 9))
    n = int(rng.integers(4, 13))
    B = float(rng.choice([0.5, 1.0, 2.0]))
    V = rng.uniform(0, B, (m, domain))
    V[rng.random((m, domain)) < 0.3] = 0.0
    prob = rng.dirichlet(np.ones(domain))
    mean = V @ prob
    conf = 3 * B * math.sqrt(math.log(2 / delta) / (2 * n))
    bad = 0
    for _ in range(resamples):
        idx = rng.choice(domain, size=n, p=prob)
        S = V[:, idx]
        slack = np.max(mean - S.mean(axis=1)) - (2 * Rd.exact_rademacher(S) + conf)
        bad += slack > 0
    freq = float(bad) / resamples
    allowed = delta + 3 * math.sqrt(delta * (1 - delta) / resamples)
    return freq, allowed, {"frequency": freq}


def _thm_l2(rng, i):
    """Loss-class complexity vs sqrt(24) R G2 A / n on finite classes of feature values."""
    from .losses import Loss, evaluate

    d = int(rng.integers(1, 4))
    shapes = [(n, k) for n in range(1, 5) for k in range(1, 4) if 3 * n * k * d <= 22]
    n, k = shapes[int(rng.integers(0, len(shapes)))]
    m = int(rng.integers(2, 7))
    loss = Loss.LOGISTIC if i % 2 else Loss.HINGE
    scale = rng.choice([0.5, 1.0, 2.0])
    fa = rng.standard_normal((m, n, d)) * scale
    fp = rng.standard_normal((m, n, d)) * scale
    fq = rng.standard_normal((m, n, k, d)) * scale
    if i % 3 == 0:
        # finite subset of a linear class, evaluated on actual points
        D = int(rng.integers(1, 4))
        X = rng.standard_normal((n, 2 + k, D))
        Us = rng.standard_normal((m, d, D))
        out = np.einsum("mtD,njD->mnjt", Us, X)
        fa, fp, fq = out[:, :, 0], out[:, :, 1], out[:, :, 2:]
    scores = np.einsum("mnd,mnkd->mnk", fa, fp[:, :, None, :] - fq)
    G = np.asarray(evaluate(loss, scores))  # (m, n)
    lhs = float(np.mean(np.max(_all_signs(n) @ G.T, axis=1))) / n
    R = float(np.sqrt(max((fa**2).sum(-1).max(), (fp**2).sum(-1).max(), (fq**2).sum(-1).max())))
    trip = np.stack([np.repeat(fa[:, :, None, :], k, axis=2), np.repeat(fp[:, :, None, :], k, axis=2), fq], axis=3)
    A = exact_E_sup_vector(trip.reshape(m, -1, d))
    rhs = math.sqrt(24) * R * loss.lipschitz_l2 * A / n
    return lhs, rhs, {"loss": loss.value}


_CHECKS = {
    "KK_LOWER": _kk_lower,
    "KK_UPPER_VEC": _kk_upper_vec,
    "KK_UPPER_MAT": _kk_upper_mat,
    "CHAOS_MGF": _chaos,
    "VEC_CONTRACTION": _vec_contraction,
    "GEN_CONTRACTION": _gen_contraction,
    "H_COMPLEXITY": _h_complexity,
    "LOWER_C": _lower_c,
    "FAT_VS_RADEMACHER": _fat_vs_rad,
    "COVER_VS_FAT": _cover_vs_fat,
    "CHAIN_SUM": _chain_sum,
    "THM_L2_COMPLEXITY": _thm_l2,
}


def verify_inequality(lemma_id: str, cfg: InstanceConfig = InstanceConfig(),
                      rng: int | np.random.Generator | None = None) -> VerificationReport:
    lemma_id = lemma_id.upper()
    if lemma_id not in LEMMA_IDS:
        raise ValueError(f"unknown lemma id {lemma_id!r}; expected one of {', '.join(LEMMA_IDS)}")
    seed = master_seed(cfg.seed if rng is None else rng)
    stream = LEMMA_IDS.index(lemma_id)
    violations, worst, extras = 0, -np.inf, []
    for i in range(cfg.instances):
        r = block_rng(seed, _STREAM_VERIFY * 100 + stream, i)
        if lemma_id == "GEN_VS_RADEMACHER":
            lhs, rhs, extra = _gen_vs_rad(r, i, cfg.resamples, cfg.delta)
        else:
            lhs, rhs, extra = _CHECKS[lemma_id](r, i)
        slack = lhs - rhs
        worst = max(worst, slack)
        violations += slack > REL_TOL * max(1.0, abs(rhs))
        extras.append(extra)
    details = {}
    if lemma_id == "CHAOS_MGF":
        details["max_value"] = max(e["value"] for e in extras)
    if lemma_id == "GEN_VS_RADEMACHER":
        details["max_frequency"] = float(max(e["frequency"] for e in extras))
    return VerificationReport(lemma_id, cfg.instances, int(violations), float(worst),
                              "Fail" if violations else "Pass", details)


def verify_all(cfg: InstanceConfig = InstanceConfig()) -> list[VerificationReport]:
    return [verify_inequality(lid, cfg) for lid in LEMMA_IDS]
