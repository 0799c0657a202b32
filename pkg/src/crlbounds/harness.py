"""Experiment configuration, sweeps over the number of negatives, and report emission.

Config files are flat ``key = value`` text. Keys are dotted (``model.sigma``)
or grouped under ``[section]`` headers; ``#`` starts a comment. Values are
parsed as int, float, bool (``true``/``false``), comma-separated lists, or
left as strings.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bounds as Bd
from . import features as F
from . import rademacher as Rd
from . import risks
from .losses import Loss, uniform_bound
from .synthgen import LatentClassModel, build_dataset, make_model
from .trainer import TrainConfig, train

CSV_COLUMNS = (
    "seed", "n", "k", "d", "D", "loss", "feature_kind", "Lambda", "R", "delta",
    "L_hat_un", "L_un_mc", "L_un_se", "gap", "A_hat", "B_hat", "C_hat",
    "bound_l2", "bound_linf", "bound_sb", "baseline", "runtime_ms",
)
BOUND_COLUMNS = ("bound_l2", "bound_linf", "bound_sb", "baseline")


class ConfigError(ValueError):
    pass


# --- config ---------------------------------------------------------------------------

def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict:
    """Flat ``{dotted.key: value}`` mapping from config text."""
    out, section = {}, ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        full = f"{section}.{key}" if section else key
        if full in out:
            raise ConfigError(f"line {lineno}: duplicate key {full!r}")
        out[full] = _parse_value(val)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    delta: float = 0.05
    loss: str = "logistic"
    # model
    classes: int = 4
    dim: int = 8
    sigma: float = 0.5
    means: str = "simplex"
    mean_scale: float = 1.0
    # data
    n: int = 100
    k_grid: tuple = (8,)
    # features
    feature_kind: str = "linear"
    d: int = 4
    constraint: str = "mixed"
    p: float = 2.0
    Lambda: float = 1.0
    R: float = 1.0
    widths: tuple = ()
    budgets: tuple = ()
    # training
    steps: int = 200
    step_size: float = 0.1
    schedule: str = "inv_sqrt"
    restarts: int = 1
    # Monte Carlo
    sign_draws: int = 200
    population_draws: int = 2000
    ascent_steps: int = 50
    ascent_restarts: int = 2
    complexity_source: str = "estimate"  # or "upper" (closed-form upper bounds)
    timing: bool = False
    jobs: int = 1

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.seed < 0:
            problems.append("seed must be nonnegative")
        if not 0 < self.delta < 1:
            problems.append("delta must lie in (0, 1)")
        try:
            Loss.parse(self.loss)
        except ValueError as e:
            problems.append(str(e))
        if len(self.k_grid) == 0 or any(b <= a for a, b in zip(self.k_grid, self.k_grid[1:])):
            problems.append("k grid must be nonempty and strictly increasing")
        if any(k < 1 for k in self.k_grid):
            problems.append("every k must be >= 1")
        if self.n < 3:
            problems.append("n must be >= 3")
        if self.feature_kind not in ("linear", "mlp"):
            problems.append("feature.kind must be 'linear' or 'mlp'")
        if self.constraint not in ("mixed", "schatten"):
            problems.append("feature.constraint must be 'mixed' or 'schatten'")
        if self.p < 1:
            problems.append("feature.p must be >= 1")
        if self.feature_kind == "mlp" and len(self.widths) != len(self.budgets):
            problems.append("feature.widths and feature.budgets need the same length")
        if self.feature_kind == "mlp" and len(self.widths) == 0:
            problems.append("mlp features need at least one hidden layer")
        for name in ("Lambda", "R", "sigma", "step_size"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("steps", "sign_draws", "population_draws", "classes", "dim", "d", "jobs"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.sign_draws < 2 or self.population_draws < 2:
            problems.append("Monte Carlo draw counts must be >= 2")
        if self.complexity_source not in ("estimate", "upper"):
            problems.append("complexity.source must be 'estimate' or 'upper'")
        if self.means == "simplex" and self.dim < self.classes:
            problems.append("simplex means need model.dim >= model.classes")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


_KEYMAP = {
    "seed": "seed", "delta": "delta", "loss": "loss",
    "model.classes": "classes", "model.C": "classes", "model.dim": "dim", "model.D": "dim",
    "model.sigma": "sigma", "model.means": "means", "model.scale": "mean_scale",
    "data.n": "n", "data.k": "k_grid", "data.k_grid": "k_grid",
    "feature.kind": "feature_kind", "feature.d": "d", "feature.constraint": "constraint", "feature.p": "p",
    "feature.Lambda": "Lambda", "feature.R": "R", "feature.widths": "widths", "feature.budgets": "budgets",
    "train.steps": "steps", "train.step_size": "step_size", "train.schedule": "schedule",
    "train.restarts": "restarts",
    "mc.sign_draws": "sign_draws", "mc.population_draws": "population_draws",
    "mc.ascent_steps": "ascent_steps", "mc.ascent_restarts": "ascent_restarts",
    "complexity.source": "complexity_source", "report.timing": "timing", "run.jobs": "jobs",
}
_TUPLES = {"k_grid", "widths", "budgets"}


def config_from_mapping(raw: dict, seed: int | None = None) -> ExperimentConfig:
    kwargs = {}
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    for key, val in raw.items():
        name = _KEYMAP.get(key)
        if name is None:
            raise ConfigError(f"unknown config key {key!r}")
        if name in _TUPLES:
            val = tuple(val) if isinstance(val, list) else (val,)
        elif isinstance(val, list):
            raise ConfigError(f"{key} takes a single value")
        elif types[name] == "float" and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        elif types[name] == "int" and not (isinstance(val, int) and not isinstance(val, bool)):
            raise ConfigError(f"{key} must be an integer, got {val!r}")
        elif types[name] == "float" and not isinstance(val, float):
            raise ConfigError(f"{key} must be a number, got {val!r}")
        elif types[name] == "bool" and not isinstance(val, bool):
            raise ConfigError(f"{key} must be true or false, got {val!r}")
        elif types[name] == "str":
            val = str(val)
        kwargs[name] = val
    if seed is not None:
        kwargs["seed"] = seed
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg.validate()


def load_config(path: str | Path | None, seed: int | None = None) -> ExperimentConfig:
    if path is None:
        return config_from_mapping({}, seed)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return config_from_mapping(parse_config_text(text), seed)


# --- building blocks ------------------------------------------------------------------

def derived_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, dtype=np.uint64)[0] >> 1)


def build_model(cfg: ExperimentConfig) -> LatentClassModel:
    return make_model(cfg.classes, cfg.dim, cfg.sigma, cfg.means, scale=cfg.mean_scale)


def constraint_of(cfg: ExperimentConfig) -> F.Constraint:
    return F.MixedL2p(cfg.p) if cfg.constraint == "mixed" else F.SchattenP(cfg.p)


def initial_map(cfg: ExperimentConfig, tag: int = 0) -> F.FeatureMap:
    rng = np.random.default_rng(derived_seed(cfg.seed, 61, tag))
    if cfg.feature_kind == "linear":
        return F.random_linear(cfg.d, cfg.dim, rng, constraint_of(cfg), cfg.Lambda, cfg.R, scale=0.5)
    return F.random_mlp(cfg.d, cfg.dim, cfg.widths, rng, cfg.budgets, cfg.Lambda, cfg.R, scale=0.5)


def theory_class(f: F.FeatureMap):
    """The class whose complexity enters the bounds: the same maps before output projection."""
    if isinstance(f, F.LinearFeatureMap):
        return F.LinearFeatureMap(np.zeros_like(f.U), f.constraint, f.budget, None)
    return F.MlpFeatureMap(f.layers, f.layer_budgets, f.U, f.budget, None)


def train_config(cfg: ExperimentConfig, tag: int = 0) -> TrainConfig:
    return TrainConfig(steps=cfg.steps, step_size=cfg.step_size, schedule=cfg.schedule,
                       seed=derived_seed(cfg.seed, 62, tag), restarts=cfg.restarts)


def term_config(cfg: ExperimentConfig, cls) -> Rd.TermConfig:
    solver = None if Rd.closed_form_available(cls) else Rd.ProjectedAscent(cfg.ascent_restarts, cfg.ascent_steps)
    return Rd.TermConfig(draws=cfg.sign_draws, solver=solver)


def complexity_terms(cfg: ExperimentConfig, dataset, cls, tag: int = 0) -> dict:
    """Estimated (or upper-bounded) A, B and C for ``dataset``."""
    if cfg.complexity_source == "upper":
        pts = {t: Rd.term_points(t, dataset) for t in "ABC"}
        if isinstance(cls, F.LinearFeatureMap):
            kind = "Mixed2p" if isinstance(cls.constraint, F.MixedL2p) else "Schatten"
            up = {t: Bd.complexity_upper_linear(pts[t], cls.constraint.p, cls.budget, cls.out_dim, kind) for t in "ABC"}
        else:
            up = {t: Bd.complexity_upper_dnn(pts[t], cls.out_dim, cls.budget, cls.layer_budgets) for t in "ABC"}
        return up
    tc = term_config(cfg, cls)
    return {t: Rd.estimate_term(t, dataset, cls, tc, derived_seed(cfg.seed, 63, tag, i)).value
            for i, t in enumerate("ABC")}


def compute_bounds(loss: Loss, L_hat: float, A: float, Bterm: float, C: float, R: float, n: int, k: int,
                   delta: float) -> dict:
    """All four bound reports from echoed inputs (used for rows and for recomputation)."""
    B = uniform_bound(loss, R, k)
    G = loss.lipschitz_linf
    out = {
        "bound_l2": Bd.bound_l2(L_hat, A, R, loss.lipschitz_l2, B, n, delta, source="A_hat"),
        "bound_linf": Bd.bound_linf(L_hat, C, R, G, B, n, k, delta, source="C_hat"),
        "baseline": Bd.baseline_arora(L_hat, Bterm, R, loss.lipschitz_l2, B, n, k, delta, source="B_hat"),
    }
    if loss.selfbounding is not None:
        out["bound_sb"] = Bd.bound_selfbounding(L_hat, Bd.R_H_from_C(C, R, n, k), R, loss.selfbounding,
                                                B, n, k, delta, source="C_hat")
    return out


# --- sweeps -------------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    seed: int
    n: int
    k: int
    d: int
    D: int
    loss: str
    feature_kind: str
    Lambda: float
    R: float
    delta: float
    L_hat_un: float
    L_un_mc: float
    L_un_se: float
    gap: float
    A_hat: float
    B_hat: float
    C_hat: float
    bound_l2: float
    bound_linf: float
    bound_sb: float
    baseline: float
    runtime_ms: int = 0


def run_point(cfg: ExperimentConfig, index: int) -> ResultRow:
    """One grid point: data, training, complexity terms, bounds and the measured gap."""
    k = cfg.k_grid[index]
    loss = Loss.parse(cfg.loss)
    t0 = time.perf_counter()
    stage = "data"
    try:
        model = build_model(cfg)
        data = build_dataset(model, cfg.n, k, derived_seed(cfg.seed, 64, index))
        stage = "train"
        f = train(initial_map(cfg, index), data, loss, train_config(cfg, index)).best
        L_hat = risks.empirical_unsup_risk(f, data, loss).value
        stage = "population"
        pop = risks.population_unsup_risk(f, model, loss, k, cfg.population_draws, derived_seed(cfg.seed, 65, index))
        stage = "complexity"
        terms = complexity_terms(cfg, data, theory_class(f), index)
        stage = "bounds"
        bnd = compute_bounds(loss, L_hat, terms["A"], terms["B"], terms["C"], cfg.R, cfg.n, k, cfg.delta)
    except Exception as e:
        raise RuntimeError(f"sweep point k={k} failed during {stage}: {e}") from e
    ms = int(round((time.perf_counter() - t0) * 1000)) if cfg.timing else 0
    return ResultRow(
        seed=cfg.seed, n=cfg.n, k=k, d=cfg.d, D=cfg.dim, loss=loss.value, feature_kind=cfg.feature_kind,
        Lambda=cfg.Lambda, R=cfg.R, delta=cfg.delta, L_hat_un=L_hat, L_un_mc=pop.value, L_un_se=pop.std_error,
        gap=pop.value - L_hat, A_hat=terms["A"], B_hat=terms["B"], C_hat=terms["C"],
        bound_l2=bnd["bound_l2"].total, bound_linf=bnd["bound_linf"].total,
        bound_sb=bnd["bound_sb"].total if "bound_sb" in bnd else math.nan,
        baseline=bnd["baseline"].total, runtime_ms=ms,
    )


def run_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """Rows in grid order; each point depends only on the master seed and its grid index."""
    idx = range(len(cfg.k_grid))
    if cfg.jobs > 1 and len(cfg.k_grid) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            return list(ex.map(run_point, [cfg] * len(idx), idx))
    return [run_point(cfg, i) for i in idx]


def recompute_bounds(row: ResultRow) -> dict:
    bnd = compute_bounds(Loss.parse(row.loss), row.L_hat_un, row.A_hat, row.B_hat, row.C_hat,
                         row.R, row.n, row.k, row.delta)
    return {c: (bnd[c].total if c in bnd else math.nan) for c in BOUND_COLUMNS}


def check_row(row: ResultRow) -> list[str]:
    """Columns whose stored value differs from the recomputed one."""
    bad = []
    for c, v in recompute_bounds(row).items():
        stored = getattr(row, c)
        if not (stored == v or (math.isnan(stored) and math.isnan(v))):
            bad.append(c)
    return bad


# --- emission --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: list[ResultRow], path: str | Path) -> Path:
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in rows:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def _coerce(name: str, text: str):
    t = {f.name: f.type for f in fields(ResultRow)}[name]
    if t == "int":
        return int(text)
    if t == "float":
        return float(text)
    return text


def read_csv(path: str | Path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        return [ResultRow(**{c: _coerce(c, v) for c, v in zip(header, line)}) for line in rd]


def _json_safe(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def write_json(rows: list[ResultRow], path: str | Path) -> Path:
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    payload = [{k: _json_safe(v) for k, v in asdict(r).items()} for r in rows]
    try:
        path.write_text(json.dumps(payload, indent=1, sort_keys=False) + "\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def read_json(path: str | Path) -> list[ResultRow]:
    out = []
    for rec in json.loads(Path(path).read_text()):
        out.append(ResultRow(**{k: (math.nan if v is None else v) for k, v in rec.items()}))
    return out


def plot_series(rows: list[ResultRow]) -> dict:
    """``{bound column: [(k, value), ...]}``, one series per bound."""
    return {c: [(r.k, getattr(r, c)) for r in rows] for c in BOUND_COLUMNS}


def write_plot_data(rows: list[ResultRow], outdir: str | Path) -> list[Path]:
    if not rows:
        raise ValueError("no rows to write")
    outdir = Path(outdir)
    paths = []
    for name, pts in plot_series(rows).items():
        p = outdir / f"plot_{name}.csv"
        try:
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["k", "value"])
                for k, v in pts:
                    w.writerow([k, repr(float(v))])
        except OSError as e:
            raise OSError(f"cannot write {p}: {e}") from e
        paths.append(p)
    return paths


def emit_report(rows: list[ResultRow], fmt: str, out: str | Path) -> list[Path]:
    """Write rows as ``csv``, ``json`` or ``plot`` data (plus figures) under directory ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fmt = fmt.lower()
    if fmt == "csv":
        return [write_csv(rows, out / "results.csv")]
    if fmt == "json":
        return [write_json(rows, out / "results.json")]
    if fmt in ("plot", "plotdata"):
        from .plotting import plot_bounds_vs_k

        return write_plot_data(rows, out) + [plot_bounds_vs_k(rows, out / "bounds_vs_k.png")]
    raise ValueError(f"unknown format {fmt!r}")
