"""Latent-class data generation for contrastive and supervised samples.

Every class ``c`` has an isotropic Gaussian ``Normal(mean_c, sigma^2 I)``.
Similar pairs share a class drawn from the prior, negatives are drawn from
the marginal (class first, then point).

Randomness follows a counter-derived subseed contract: a master seed plus a
stream tag plus a block counter fully determines every block, so blocks can
be generated in any order (or in parallel) with identical results.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

PRIOR_TOL = 1e-12

# stream tags keep block draws of different kinds independent
_STREAM_DATASET = 1
_STREAM_SUPERVISED = 2
_STREAM_POPULATION = 3


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def master_seed(seed: int | np.random.Generator) -> int:
    """Return an integer master seed; generators contribute one 63-bit draw."""
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63 - 1))
    if isinstance(seed, (int, np.integer)) and seed >= 0:
        return int(seed)
    raise ValueError(f"seed must be a nonnegative int or a numpy Generator, got {seed!r}")


def block_rng(seed: int, stream: int, counter: int) -> np.random.Generator:
    """Generator for block ``counter`` of ``stream`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream, counter]))


@dataclass(frozen=True)
class LatentClassModel:
    prior: np.ndarray
    class_means: np.ndarray
    noise_scale: float

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=float)
        means = np.atleast_2d(np.asarray(self.class_means, dtype=float))
        if prior.ndim != 1 or prior.size == 0:
            raise ValueError("prior must be a nonempty vector")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > PRIOR_TOL:
            raise ValueError(f"prior must be nonnegative and sum to 1, got sum {prior.sum()!r}")
        if means.shape[0] != prior.size:
            raise ValueError(f"{prior.size} classes in prior but {means.shape[0]} means")
        if not np.all(np.isfinite(means)):
            raise ValueError("class means must be finite")
        if not (self.noise_scale > 0 and np.isfinite(self.noise_scale)):
            raise ValueError(f"noise_scale must be positive, got {self.noise_scale!r}")
        object.__setattr__(self, "prior", _freeze(prior))
        object.__setattr__(self, "class_means", _freeze(means))
        object.__setattr__(self, "noise_scale", float(self.noise_scale))

    @property
    def num_classes(self) -> int:
        return self.prior.size

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    def draw_classes(self, rng: np.random.Generator, size: int, prior=None) -> np.ndarray:
        p = self.prior if prior is None else prior
        return rng.choice(p.size, size=size, p=p)

    def draw_points(self, rng: np.random.Generator, classes: np.ndarray) -> np.ndarray:
        classes = np.asarray(classes)
        noise = rng.standard_normal(classes.shape + (self.dim,))
        return self.class_means[classes] + self.noise_scale * noise


def preset_means(kind: str, num_classes: int, dim: int, scale: float = 1.0) -> np.ndarray:
    """Class means for the named presets.

    ``simplex`` places class ``c`` at ``scale * e_c`` (orthogonal unit means,
    needs ``dim >= num_classes``); ``sphere`` spreads the means evenly on a
    circle of radius ``scale`` in the first two coordinates when ``dim >= 2``.
    """
    if kind == "simplex":
        if dim < num_classes:
            raise ValueError(f"simplex preset needs dim >= num_classes ({dim} < {num_classes})")
        return scale * np.eye(num_classes, dim)
    if kind == "sphere":
        if dim == 1:
            return scale * np.where(np.arange(num_classes) % 2 == 0, 1.0, -1.0)[:, None]
        angles = 2 * np.pi * np.arange(num_classes) / num_classes
        means = np.zeros((num_classes, dim))
        means[:, 0] = np.cos(angles)
        means[:, 1] = np.sin(angles)
        return scale * means
    raise ValueError(f"unknown means preset {kind!r}")


def make_model(num_classes: int, dim: int, sigma: float, means="simplex",
               prior: Sequence[float] | None = None, scale: float = 1.0) -> LatentClassModel:
    if isinstance(means, str):
        means = preset_means(means, num_classes, dim, scale)
    if prior is None:
        prior = np.full(num_classes, 1.0 / num_classes)
    return LatentClassModel(np.asarray(prior, dtype=float), np.asarray(means, dtype=float), sigma)


@dataclass(frozen=True)
class ContrastiveDataset:
    """``n`` blocks ``(x_j, x_j^+, x_j1^-, ..., x_jk^-)``.

    ``anchors`` and ``positives`` have shape ``(n, D)``, ``negatives`` has
    shape ``(n, k, D)``. Class labels are kept when known, for diagnostics.
    """

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    anchor_classes: np.ndarray | None = None
    negative_classes: np.ndarray | None = None

    def __post_init__(self):
        a, p, neg = (np.asarray(v, dtype=float) for v in (self.anchors, self.positives, self.negatives))
        if a.ndim != 2 or p.shape != a.shape:
            raise ValueError("anchors and positives must both have shape (n, D)")
        if neg.ndim != 3 or neg.shape[0] != a.shape[0] or neg.shape[2] != a.shape[1] or neg.shape[1] < 1:
            raise ValueError(f"negatives must have shape (n, k, D) with k >= 1, got {neg.shape}")
        for name, v in (("anchors", a), ("positives", p), ("negatives", neg)):
            object.__setattr__(self, name, _freeze(v))
        for name in ("anchor_classes", "negative_classes"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=int, copy=True)
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    @property
    def k(self) -> int:
        return self.negatives.shape[1]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def all_points(self) -> np.ndarray:
        return np.concatenate([self.anchors, self.positives, self.negatives.reshape(-1, self.dim)])

    def subset(self, blocks: Sequence[int]) -> "ContrastiveDataset":
        idx = np.asarray(blocks, dtype=int)
        return ContrastiveDataset(
            self.anchors[idx], self.positives[idx], self.negatives[idx],
            None if self.anchor_classes is None else self.anchor_classes[idx],
            None if self.negative_classes is None else self.negative_classes[idx],
        )

    def has_class_collision(self) -> bool:
        """True if some negative shares its block's latent class (labels required)."""
        if self.anchor_classes is None or self.negative_classes is None:
            raise ValueError("dataset carries no class labels")
        return bool(np.any(self.negative_classes == self.anchor_classes[:, None]))


@dataclass(frozen=True)
class ExpandedTripletSet:
    """The ``n*k`` triples ``(x_j, x_j^+, x_ji^-)``, grouped by block."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    source_n: int
    source_k: int

    def __len__(self) -> int:
        return self.anchors.shape[0]

    def points(self) -> np.ndarray:
        """All ``3nk`` points, one triple after another: ``(x~, x~+, x~-)``."""
        return np.stack([self.anchors, self.positives, self.negatives], axis=1).reshape(-1, self.anchors.shape[1])


@dataclass(frozen=True)
class SupervisedSample:
    x: np.ndarray
    label: int


def sample_similar_pair(model: LatentClassModel, rng: np.random.Generator):
    c = model.draw_classes(rng, 1)
    x = model.draw_points(rng, np.repeat(c, 2))
    return x[0], x[1]


def sample_negatives(model: LatentClassModel, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    classes = model.draw_classes(rng, k)
    return list(model.draw_points(rng, classes))


def _draw_block(model: LatentClassModel, k: int, rng: np.random.Generator):
    c = model.draw_classes(rng, 1)[0]
    pair = model.draw_points(rng, np.array([c, c]))
    neg_c = model.draw_classes(rng, k)
    neg = model.draw_points(rng, neg_c)
    return c, pair[0], pair[1], neg_c, neg


def build_dataset(model: LatentClassModel, n: int, k: int, seed: int | np.random.Generator) -> ContrastiveDataset:
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    s = master_seed(seed)
    blocks = [_draw_block(model, k, block_rng(s, _STREAM_DATASET, j)) for j in range(n)]
    c, a, p, nc, neg = zip(*blocks)
    return ContrastiveDataset(np.array(a), np.array(p), np.array(neg), np.array(c), np.array(nc))


def population_blocks(model: LatentClassModel, k: int, reps: int, seed: int) -> ContrastiveDataset:
    """Fresh blocks for Monte Carlo population estimates (separate stream)."""
    blocks = [_draw_block(model, k, block_rng(seed, _STREAM_POPULATION, j)) for j in range(reps)]
    c, a, p, nc, neg = zip(*blocks)
    return ContrastiveDataset(np.array(a), np.array(p), np.array(neg), np.array(c), np.array(nc))


def expand_to_triplets(dataset: ContrastiveDataset) -> ExpandedTripletSet:
    n, k = dataset.n, dataset.k
    return ExpandedTripletSet(
        anchors=np.repeat(dataset.anchors, k, axis=0),
        positives=np.repeat(dataset.positives, k, axis=0),
        negatives=dataset.negatives.reshape(n * k, dataset.dim).copy(),
        source_n=n,
        source_k=k,
    )


def sample_supervised_task(model: LatentClassModel, task_size: int, m: int, seed: int | np.random.Generator):
    """Pick ``task_size`` distinct classes and ``m`` labelled points.

    Classes are drawn without replacement proportionally to the prior; labels
    follow the prior renormalised to the chosen subset. Returns the class
    subset (sorted) and the samples, whose ``label`` indexes into the subset.
    """
    if task_size < 1 or task_size > model.num_classes:
        raise ValueError(f"task_size must be in [1, {model.num_classes}], got {task_size}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    s = master_seed(seed)
    rng = block_rng(s, _STREAM_SUPERVISED, 0)
    support = np.flatnonzero(model.prior > 0)
    if support.size < task_size:
        p = None
        pool = np.arange(model.num_classes)
    else:
        pool = support
        p = model.prior[support] / model.prior[support].sum()
    classes = np.sort(rng.choice(pool, size=task_size, replace=False, p=p))
    sub = model.prior[classes]
    sub = sub / sub.sum() if sub.sum() > 0 else np.full(task_size, 1.0 / task_size)
    samples = []
    for j in range(m):
        r = block_rng(s, _STREAM_SUPERVISED, j + 1)
        label = int(r.choice(task_size, p=sub))
        x = model.draw_points(r, np.array([classes[label]]))[0]
        samples.append(SupervisedSample(x, label))
    return classes, samples


def task_subsets(num_classes: int, task_size: int):
    return itertools.combinations(range(num_classes), task_size)


# --- persistence -------------------------------------------------------------

def dataset_to_csv(dataset: ContrastiveDataset, path: str | Path) -> None:
    """Rows ``block, role, x0..x{D-1}`` with role in ``x``, ``xp``, ``xn_1``..``xn_k``."""
    path = Path(path)
    D = dataset.dim
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", "role"] + [f"x{i}" for i in range(D)])
        for j in range(dataset.n):
            w.writerow([j, "x"] + [repr(float(v)) for v in dataset.anchors[j]])
            w.writerow([j, "xp"] + [repr(float(v)) for v in dataset.positives[j]])
            for i in range(dataset.k):
                w.writerow([j, f"xn_{i + 1}"] + [repr(float(v)) for v in dataset.negatives[j, i]])


def dataset_from_csv(path: str | Path) -> ContrastiveDataset:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["block", "role"]:
        raise ValueError(f"{path}: unexpected header {header[:2]}")
    blocks: dict[int, dict] = {}
    for row in body:
        j, role, vals = int(row[0]), row[1], np.array([float(v) for v in row[2:]])
        b = blocks.setdefault(j, {"neg": {}})
        if role == "x":
            b["x"] = vals
        elif role == "xp":
            b["xp"] = vals
        elif role.startswith("xn_"):
            b["neg"][int(role[3:])] = vals
        else:
            raise ValueError(f"{path}: unknown role {role!r}")
    order = sorted(blocks)
    anchors = np.array([blocks[j]["x"] for j in order])
    positives = np.array([blocks[j]["xp"] for j in order])
    negatives = np.array([[blocks[j]["neg"][i] for i in sorted(blocks[j]["neg"])] for j in order])
    return ContrastiveDataset(anchors, positives, negatives)


def dataset_to_npz(dataset: ContrastiveDataset, path: str | Path) -> None:
    arrays = dict(anchors=dataset.anchors, positives=dataset.positives, negatives=dataset.negatives)
    if dataset.anchor_classes is not None:
        arrays.update(anchor_classes=dataset.anchor_classes, negative_classes=dataset.negative_classes)
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def dataset_from_npz(path: str | Path) -> ContrastiveDataset:
    with np.load(path) as z:
        return ContrastiveDataset(
            z["anchors"], z["positives"], z["negatives"],
            z["anchor_classes"] if "anchor_classes" in z else None,
            z["negative_classes"] if "negative_classes" in z else None,
        )
