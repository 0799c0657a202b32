"""Norm-constrained feature maps ``f: R^D -> R^d`` and their parameter gradients.

Two families are supported:

* linear maps ``x -> U x`` with a budget on ``||U^T||`` in a mixed
  ``(2, p)`` norm or a Schatten-``p`` norm;
* bias-free ReLU networks ``x -> U relu(V_L ... relu(V_1 x))`` with
  Frobenius budgets on every layer and on the head.

Either family can carry an ``output_radius`` ``R``, in which case outputs are
radially projected onto the Euclidean ball of radius ``R``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

FEASIBILITY_RTOL = 1e-9


@dataclass(frozen=True)
class MixedL2p:
    """``||W||_{2,p} = (sum_i ||w_i||_2^p)^{1/p}`` over the columns ``w_i`` of ``W``."""

    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @property
    def dual(self) -> "MixedL2p":
        return MixedL2p(conjugate(self.p))


@dataclass(frozen=True)
class SchattenP:
    """l_p norm of the singular values."""

    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @property
    def dual(self) -> "SchattenP":
        return SchattenP(conjugate(self.p))


@dataclass(frozen=True)
class Frobenius:
    p: float = 2.0

    @property
    def dual(self) -> "Frobenius":
        return self


Constraint = Union[MixedL2p, SchattenP, Frobenius]


def conjugate(p: float) -> float:
    """Hoelder conjugate ``p*`` with ``1/p + 1/p* = 1``."""
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _lp(v: np.ndarray, p: float) -> float:
    v = np.abs(np.asarray(v, dtype=float))
    if v.size == 0:
        return 0.0
    if np.isinf(p):
        return float(v.max())
    m = v.max()
    if m == 0:
        return 0.0
    # scaled to avoid overflow for large p
    return float(m * np.sum((v / m) ** p) ** (1.0 / p))


def matrix_norm(W, which: Constraint) -> float:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if isinstance(which, Frobenius):
        return float(np.linalg.norm(W))
    if which.p < 1:
        raise ValueError(f"p must be >= 1, got {which.p}")
    if isinstance(which, MixedL2p):
        return _lp(np.linalg.norm(W, axis=0), which.p)
    if isinstance(which, SchattenP):
        return _lp(np.linalg.svd(W, compute_uv=False), which.p)
    raise TypeError(f"unknown norm {which!r}")


def dual_norm(W, which: Constraint) -> float:
    return matrix_norm(W, which.dual)


def dual_maximizer(G, which: Constraint, budget: float) -> np.ndarray:
    """``W`` with ``||W|| <= budget`` and ``<W, G> = budget * ||G||_*``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if isinstance(which, Frobenius):
        nrm = np.linalg.norm(G)
        return np.zeros_like(G) if nrm == 0 else budget * G / nrm
    q = conjugate(which.p)
    if isinstance(which, MixedL2p):
        cn = np.linalg.norm(G, axis=0)
        if cn.max() == 0:
            return np.zeros_like(G)
        if np.isinf(q):
            w = np.zeros_like(cn)
            w[np.argmax(cn)] = 1.0
        elif q == 1:
            w = (cn > 0).astype(float)
        else:
            w = (cn / cn.max()) ** (q - 1.0)
        dirs = np.divide(G, cn, out=np.zeros_like(G), where=cn > 0)
        W = dirs * w
    else:
        A, s, Bt = np.linalg.svd(G, full_matrices=False)
        if s.max() == 0:
            return np.zeros_like(G)
        if np.isinf(q):
            w = np.zeros_like(s)
            w[0] = 1.0
        elif q == 1:
            w = (s > 0).astype(float)
        else:
            w = (s / s.max()) ** (q - 1.0)
        W = (A * w) @ Bt
    return budget * W / matrix_norm(W, which)


@dataclass(frozen=True)
class LinearFeatureMap:
    U: np.ndarray  # (d, D)
    constraint: Constraint
    budget: float
    output_radius: float | None = None

    def __post_init__(self):
        U = np.atleast_2d(np.array(self.U, dtype=float, copy=True))
        U.setflags(write=False)
        object.__setattr__(self, "U", U)

    @property
    def out_dim(self) -> int:
        return self.U.shape[0]

    @property
    def in_dim(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class MlpFeatureMap:
    layers: tuple  # V_1 (h_1, D), ..., V_L (h_L, h_{L-1})
    layer_budgets: tuple
    U: np.ndarray  # (d, h_L)
    budget: float
    output_radius: float | None = None

    def __post_init__(self):
        layers = []
        for V in self.layers:
            V = np.atleast_2d(np.array(V, dtype=float, copy=True))
            V.setflags(write=False)
            layers.append(V)
        U = np.atleast_2d(np.array(self.U, dtype=float, copy=True))
        U.setflags(write=False)
        if len(layers) < 1 or len(layers) != len(self.layer_budgets):
            raise ValueError("need at least one layer and one budget per layer")
        object.__setattr__(self, "layers", tuple(layers))
        object.__setattr__(self, "layer_budgets", tuple(float(b) for b in self.layer_budgets))
        object.__setattr__(self, "U", U)

    @property
    def out_dim(self) -> int:
        return self.U.shape[0]

    @property
    def in_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.layers)


FeatureMap = Union[LinearFeatureMap, MlpFeatureMap]


def params(f: FeatureMap) -> list[np.ndarray]:
    if isinstance(f, LinearFeatureMap):
        return [f.U]
    return [*f.layers, f.U]


def with_params(f: FeatureMap, new: Sequence[np.ndarray]) -> FeatureMap:
    if isinstance(f, LinearFeatureMap):
        (U,) = new
        return replace(f, U=U)
    return replace(f, layers=tuple(new[:-1]), U=new[-1])


def constraint_norms(f: FeatureMap) -> list[tuple[float, float]]:
    """``(norm, budget)`` for every constrained parameter block."""
    if isinstance(f, LinearFeatureMap):
        return [(matrix_norm(f.U.T, f.constraint), f.budget)]
    out = [(float(np.linalg.norm(V)), B) for V, B in zip(f.layers, f.layer_budgets)]
    out.append((float(np.linalg.norm(f.U)), f.budget))
    return out


def is_feasible(f: FeatureMap, rtol: float = FEASIBILITY_RTOL) -> bool:
    return all(nrm <= b * (1 + rtol) for nrm, b in constraint_norms(f))


def project_params(f: FeatureMap) -> FeatureMap:
    """Radially rescale every over-budget block back onto its norm ball.

    For Schatten constraints this scales all singular values uniformly, which
    stays inside the class but is not the exact spectral projection.
    """
    def shrink(W, nrm, budget):
        return W * (budget / nrm) if nrm > budget else W

    if isinstance(f, LinearFeatureMap):
        nrm = matrix_norm(f.U.T, f.constraint)
        return f if nrm <= f.budget else replace(f, U=shrink(f.U, nrm, f.budget))
    layers = tuple(shrink(V, np.linalg.norm(V), B) for V, B in zip(f.layers, f.layer_budgets))
    U = shrink(f.U, np.linalg.norm(f.U), f.budget)
    return replace(f, layers=layers, U=U)


def project_ball(Z: np.ndarray, R: float | None) -> np.ndarray:
    """Row-wise projection onto the Euclidean ball of radius ``R``."""
    if R is None:
        return Z
    nrm = np.linalg.norm(Z, axis=-1, keepdims=True)
    scale = np.where(nrm > R, R / np.where(nrm > 0, nrm, 1.0), 1.0)
    return Z * scale


def _check_input(f: FeatureMap, X) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != f.in_dim:
        raise ValueError(f"input dimension {X.shape[-1]} does not match feature map input {f.in_dim}")
    return X, single


def forward(f: FeatureMap, X: np.ndarray):
    """Outputs for the rows of ``X`` plus the cache needed by :func:`backward`."""
    hs = [X]
    if isinstance(f, MlpFeatureMap):
        h = X
        for V in f.layers:
            h = np.maximum(h @ V.T, 0.0)
            hs.append(h)
    raw = hs[-1] @ f.U.T
    return project_ball(raw, f.output_radius), (hs, raw)


def apply(f: FeatureMap, X) -> np.ndarray:
    X, single = _check_input(f, X)
    out, _ = forward(f, X)
    return out[0] if single else out


def _ball_vjp(raw: np.ndarray, g: np.ndarray, R: float | None) -> np.ndarray:
    if R is None:
        return g
    nrm = np.linalg.norm(raw, axis=1, keepdims=True)
    outside = nrm > R
    safe = np.where(outside, nrm, 1.0)
    u = raw / safe
    proj = (R / safe) * (g - np.sum(g * u, axis=1, keepdims=True) * u)
    return np.where(outside, proj, g)


def backward(f: FeatureMap, cache, grad_out: np.ndarray) -> list[np.ndarray]:
    """Vector-Jacobian product: parameter gradients of ``sum(grad_out * f(X))``."""
    hs, raw = cache
    g = _ball_vjp(raw, np.asarray(grad_out, dtype=float), f.output_radius)
    dU = g.T @ hs[-1]
    if isinstance(f, LinearFeatureMap):
        return [dU]
    grads = [dU]
    gh = g @ f.U
    for l in range(f.depth - 1, -1, -1):
        gz = gh * (hs[l + 1] > 0)  # relu'(0) taken as 0
        grads.append(gz.T @ hs[l])
        gh = gz @ f.layers[l]
    return [*grads[:0:-1], grads[0]]


def param_gradient(f: FeatureMap, X, grad_out) -> list[np.ndarray]:
    """Gradient of the linear functional ``sum_{i,t} grad_out[i,t] f_t(X[i])``."""
    X, _ = _check_input(f, X)
    _, cache = forward(f, X)
    return backward(f, cache, np.atleast_2d(grad_out))


def score_gradient(f: FeatureMap, anchors, positives, negatives, weights) -> list[np.ndarray]:
    """Gradient of ``sum_j w_j f(x_j)^T (f(x_j+) - f(x_j-))`` over the triples."""
    A, _ = _check_input(f, anchors)
    P, _ = _check_input(f, positives)
    N, _ = _check_input(f, negatives)
    m = A.shape[0]
    X = np.concatenate([A, P, N])
    out, cache = forward(f, X)
    fa, fp, fn = out[:m], out[m:2 * m], out[2 * m:]
    w = np.asarray(weights, dtype=float).reshape(m, 1)
    g = np.concatenate([w * (fp - fn), w * fa, -w * fa])
    return backward(f, cache, g)


# --- construction helpers ----------------------------------------------------

def linear_map(U, constraint: Constraint = MixedL2p(2), budget: float = 1.0,
               output_radius: float | None = None) -> LinearFeatureMap:
    return LinearFeatureMap(np.asarray(U, dtype=float), constraint, budget, output_radius)


def random_linear(d: int, D: int, rng: np.random.Generator, constraint: Constraint = MixedL2p(2),
                  budget: float = 1.0, output_radius: float | None = None, scale: float = 1.0) -> LinearFeatureMap:
    """Random feasible linear map whose norm is ``scale * budget`` (``scale <= 1``)."""
    U = rng.standard_normal((d, D))
    U *= scale * budget / max(matrix_norm(U.T, constraint), 1e-300)
    return project_params(LinearFeatureMap(U, constraint, budget, output_radius))


def random_mlp(d: int, D: int, widths: Sequence[int], rng: np.random.Generator,
               layer_budgets: Sequence[float] | None = None, budget: float = 1.0,
               output_radius: float | None = None, scale: float = 1.0) -> MlpFeatureMap:
    widths = list(widths)
    if layer_budgets is None:
        layer_budgets = [1.0] * len(widths)
    dims = [D, *widths]
    layers = []
    for l, B in enumerate(layer_budgets):
        V = rng.standard_normal((dims[l + 1], dims[l]))
        layers.append(V * scale * B / np.linalg.norm(V))
    U = rng.standard_normal((d, dims[-1]))
    U *= scale * budget / np.linalg.norm(U)
    return project_params(MlpFeatureMap(tuple(layers), tuple(layer_budgets), U, budget, output_radius))


# --- checkpoints -------------------------------------------------------------

def _constraint_tag(c: Constraint) -> str:
    if isinstance(c, Frobenius):
        return "frobenius"
    return f"{'mixed' if isinstance(c, MixedL2p) else 'schatten'}:{c.p!r}"


def constraint_from_tag(tag: str) -> Constraint:
    if tag == "frobenius":
        return Frobenius()
    kind, p = tag.split(":")
    p = float(p)
    return MixedL2p(p) if kind == "mixed" else SchattenP(p)


def save_checkpoint(f: FeatureMap, path) -> None:
    """Binary checkpoint: one flat array per matrix plus a small JSON header."""
    import json

    header = {"output_radius": f.output_radius, "budget": f.budget}
    if isinstance(f, LinearFeatureMap):
        header.update(kind="linear", constraint=_constraint_tag(f.constraint))
    else:
        header.update(kind="mlp", constraint="frobenius", layer_budgets=list(f.layer_budgets))
    mats = params(f)
    header["shapes"] = [list(m.shape) for m in mats]
    arrays = {f"m{i}": m.ravel() for i, m in enumerate(mats)}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> FeatureMap:
    import json

    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        mats = [z[f"m{i}"].reshape(s) for i, s in enumerate(header["shapes"])]
    if header["kind"] == "linear":
        return LinearFeatureMap(mats[0], constraint_from_tag(header["constraint"]),
                                header["budget"], header["output_radius"])
    return MlpFeatureMap(tuple(mats[:-1]), tuple(header["layer_budgets"]), mats[-1],
                         header["budget"], header["output_radius"])


def export_csv(f: FeatureMap, path) -> None:
    """Human-readable dump: ``matrix,row,col,value`` per entry."""
    names = ["U"] if isinstance(f, LinearFeatureMap) else [f"V{i + 1}" for i in range(f.depth)] + ["U"]
    with open(path, "w") as fh:
        fh.write("matrix,row,col,value\n")
        for name, M in zip(names, params(f)):
            for (r, c), v in np.ndenumerate(M):
                fh.write(f"{name},{r},{c},{float(v)!r}\n")
