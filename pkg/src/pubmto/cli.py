"""Command line entry point: toy, train, grid, analyze, gen-data."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import data as DS
from . import harness as H

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _base_config(args, default_dataset=None) -> tuple[H.ExperimentConfig, dict]:
    blob = H.load_config(args.config) if args.config else {}
    grid = blob.pop("grid", None) or {}
    if default_dataset is not None and "dataset" not in blob:
        blob["dataset"] = default_dataset
    if args.method:
        blob["mto_method"] = args.method
    if args.solve_every:
        blob["solve_every"] = args.solve_every
    if args.seed is not None:
        blob["seeds"] = [args.seed]
    if args.out:
        blob["output_dir"] = args.out
    return H.ExperimentConfig.from_dict(blob), grid


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.output_dir or "runs")


def cmd_toy(args) -> int:
    cfg, _ = _base_config(args, default_dataset={"kind": "toy"})
    if not isinstance(cfg.dataset, DS.ToyConfig):
        raise H.ConfigError("toy needs dataset.kind: toy")
    res = H.run_toy(cfg.dataset, cfg.mto_method, cfg.optim, _out_dir(args, cfg),
                    solve_every=cfg.solve_every, seed=cfg.seeds[0], umm=cfg.umm, solver=cfg.solver,
                    lr_schedule=cfg.lr_schedule)
    for k, (p, d) in enumerate(zip(res.finals, res.distances)):
        print(f"init {k}: final ({p[0]:.5f}, {p[1]:.5f})  distance to front {d:.2e}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, _ = _base_config(args)
    out = _out_dir(args, cfg)
    status = EXIT_OK
    for seed in cfg.seeds:
        run_dir = out if len(cfg.seeds) == 1 else out / f"seed{seed}"
        res = H.run_training(cfg, seed, run_dir)
        if res.diverged:
            print(f"seed {seed}: diverged; see {res.trace_path}", file=sys.stderr)
            status = EXIT_DIVERGED
            continue
        best = res.val_aucs[res.best_epoch]
        print(f"seed {seed}: best epoch {res.best_epoch}  val AUC "
              + " ".join(f"{a:.4f}" for a in best) + f"  diff {res.summary.diff:.4f}")
    return status


def cmd_grid(args) -> int:
    cfg, grid = _base_config(args)
    try:
        spec = H.GridSpec(**grid)
    except TypeError as exc:
        raise H.ConfigError(f"grid: {exc}") from None
    workers = args.threads or H.default_workers()
    report = H.run_grid(cfg, spec, _out_dir(args, cfg), workers)
    _print_report(report)
    return EXIT_OK


def _print_report(report: dict) -> None:
    cm = report["confusion_matrix"]
    print(f"cells {report['cells']}  completed {report['completed']}  "
          f"failed {len(report['failures'])}  "
          f"pairs {report['pairs']} (dropped {report['dropped_pairs']})")
    print(f"confusion x=0: {cm[0]}  x=1: {cm[1]}")
    chi2 = report["chi2"]
    print(f"chi2 {'n/a' if chi2 is None else f'{chi2:.3f}'}  p {report['chi2_p_bucket']}")
    for m, row in report["similarity_table"].items():
        print(f"{m:>12}  sim_task {row['sim_task']:.4f}  sim_share {row['sim_share']:.4f}  "
              f"diff {row['diff']:.4f}  auc {row['avg_auc']:.4f}")


def cmd_analyze(args) -> int:
    target = Path(args.out or ".")
    if (target / "grid.json").exists():
        _print_report(H.analyze(target))
        return EXIT_OK
    path = target if target.is_file() else target / "trace.jsonl"
    got = H.summarize_trace(H.read_trace(path))
    if got is None:
        print(f"{path}: run aborted or has no completed epoch", file=sys.stderr)
        return EXIT_DIVERGED
    summ, best = got
    print(json.dumps(dict(vars(summ), best_epoch=best), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg, _ = _base_config(args)
    ds_cfg = cfg.dataset
    if args.seed is not None:
        ds_cfg = replace(ds_cfg, seed=args.seed)
    ds = DS.gen_ranking(ds_cfg)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out / "data.csv")
    rep = ds.report()
    (out / "data_report.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    print(json.dumps(rep, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"toy": cmd_toy, "train": cmd_train, "grid": cmd_grid, "analyze": cmd_analyze,
            "gen-data": cmd_gen_data}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pubmto", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON experiment config")
        p.add_argument("--out", help="output directory (for analyze: a run or grid directory)")
        p.add_argument("--seed", type=int)
        p.add_argument("--method", choices=H.METHODS)
        p.add_argument("--solve-every", type=int, dest="solve_every")
        p.add_argument("--threads", type=int, help="worker processes for grid")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except H.CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
