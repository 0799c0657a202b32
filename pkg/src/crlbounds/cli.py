"""Command-line entry point: ``crlbounds <command> [options]``.

Exit codes: 0 success, 1 verification failure (or a stored row that does not
recompute), 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import features as F
from . import harness as H
from . import rademacher as Rd
from . import risks, synthgen, trainer, verify
from .bounds import downstream_bound
from .losses import Loss


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (flat key = value)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--format", choices=("csv", "json", "plot"), default="csv")

    p = argparse.ArgumentParser(prog="crlbounds", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate a contrastive dataset")
    sub.add_parser("train", parents=[common], help="train a feature map")
    c = sub.add_parser("complexity", parents=[common], help="estimate a complexity term")
    c.add_argument("--term", choices=("A", "B", "C"), required=True)
    sub.add_parser("bounds", parents=[common], help="compute every bound for the first k")
    v = sub.add_parser("verify", parents=[common], help="run inequality checks")
    v.add_argument("--lemma", default="all", help="lemma id or 'all'")
    v.add_argument("--instances", type=int, default=30)
    sub.add_parser("sweep", parents=[common], help="run the k sweep")
    r = sub.add_parser("report", parents=[common], help="re-emit and check a stored sweep")
    r.add_argument("--input", help="results.csv or results.json (default: OUT/results.csv)")
    return p


def _prepare(cfg: H.ExperimentConfig):
    model = H.build_model(cfg)
    k = cfg.k_grid[0]
    data = synthgen.build_dataset(model, cfg.n, k, H.derived_seed(cfg.seed, 64, 0))
    return model, data, k


def _train(cfg, data):
    return trainer.train(H.initial_map(cfg, 0), data, Loss.parse(cfg.loss), H.train_config(cfg, 0))


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path


def cmd_gen(cfg, args, out: Path) -> int:
    _, data, _ = _prepare(cfg)
    synthgen.dataset_to_csv(data, out / "dataset.csv")
    synthgen.dataset_to_npz(data, out / "dataset.npz")
    print(f"wrote {out / 'dataset.csv'}")
    return 0


def cmd_train(cfg, args, out: Path) -> int:
    _, data, _ = _prepare(cfg)
    res = _train(cfg, data)
    F.save_checkpoint(res.best, out / "features.npz")
    F.export_csv(res.best, out / "features.csv")
    trainer.trace_to_csv(res, out / "trace.csv")
    print(f"best empirical risk {res.best_risk!r}")
    return 0


def cmd_complexity(cfg, args, out: Path) -> int:
    _, data, _ = _prepare(cfg)
    cls = H.theory_class(H.initial_map(cfg, 0))
    est = Rd.estimate_term(args.term, data, cls, H.term_config(cfg, cls), H.derived_seed(cfg.seed, 63, 0, "ABC".index(args.term)))
    path = out / f"complexity_{args.term}.json"
    path.write_text(est.to_json() + "\n")
    print(f"{args.term} = {est.value!r} (se {est.std_error!r})")
    return 0


def cmd_bounds(cfg, args, out: Path) -> int:
    model, data, k = _prepare(cfg)
    loss = Loss.parse(cfg.loss)
    f = _train(cfg, data).best
    L_hat = risks.empirical_unsup_risk(f, data, loss).value
    terms = H.complexity_terms(cfg, data, H.theory_class(f), 0)
    reps = H.compute_bounds(loss, L_hat, terms["A"], terms["B"], terms["C"], cfg.R, cfg.n, k, cfg.delta)
    reps["downstream"] = downstream_bound(reps["bound_linf"], cfg.feature_kind)
    _write_json(out / "bounds.json", {name: asdict(r) for name, r in reps.items()})
    for name, r in reps.items():
        print(f"{name:12s} {r.total:.6g}")
    return 0


def cmd_verify(cfg, args, out: Path) -> int:
    ids = verify.LEMMA_IDS if args.lemma.lower() == "all" else (args.lemma.upper(),)
    if any(i not in verify.LEMMA_IDS for i in ids):
        print(f"unknown lemma id {args.lemma!r}", file=sys.stderr)
        return 2
    icfg = verify.InstanceConfig(instances=args.instances, seed=cfg.seed)
    reports = [verify.verify_inequality(i, icfg) for i in ids]
    for r in reports:
        _write_json(out / f"verify_{r.lemma_id}.json", asdict(r))
    print(f"{'lemma':20s} {'status':6s} {'inst':>5s} {'viol':>5s} {'max_slack':>12s}")
    for r in reports:
        print(f"{r.lemma_id:20s} {r.status:6s} {r.instances:5d} {r.violations:5d} {r.max_slack:12.4g}")
    return 1 if any(r.status == "Fail" for r in reports) else 0


def cmd_sweep(cfg, args, out: Path) -> int:
    rows = H.run_sweep(cfg)
    for p in H.emit_report(rows, args.format, out):
        print(f"wrote {p}")
    return 0


def cmd_report(cfg, args, out: Path) -> int:
    src = Path(args.input) if args.input else out / "results.csv"
    rows = H.read_json(src) if src.suffix == ".json" else H.read_csv(src)
    bad = {r.k: H.check_row(r) for r in rows}
    bad = {k: v for k, v in bad.items() if v}
    for p in H.emit_report(rows, args.format, out):
        print(f"wrote {p}")
    if args.format != "plot":
        for p in H.emit_report(rows, "plot", out):
            print(f"wrote {p}")
    if bad:
        print(f"rows that do not recompute: {bad}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "complexity": cmd_complexity, "bounds": cmd_bounds,
    "verify": cmd_verify, "sweep": cmd_sweep, "report": cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = H.load_config(args.config, args.seed)
    except H.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, args, out)


if __name__ == "__main__":
    sys.exit(main())
