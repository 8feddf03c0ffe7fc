"""Command-line entry point: train-ac, train-scaler, run, compare, report.

Exit codes: 0 success, 1 usage error, 2 config or I/O error, 3 invariant
violation during a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .. import admission as ac
from ..cloudsim import InvariantViolation
from ..scaler import save_table as save_scaler_table
from .config import PRESETS, ConfigError, ExperimentConfig, preset
from .experiment import (
    ac_config,
    admission_limit,
    make_scaler,
    pretrain_scaler,
    run_experiment,
    train_ac,
    write_json,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3

COMPARE_SCHEMES = ("sqlr-case1", "sqlr-case2", "ekf", "static-2", "static-10")

log = logging.getLogger("sqlr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for config/IO errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed (required unless set in the config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--scheme", help="sqlr | ekf | static, or a preset name")
    common.add_argument("--episodes", type=int, help="training episodes / pre-training passes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="sqlr", description="SQLR elastic provisioning simulator")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("train-ac", parents=[common], help="train the admission-control Q-table")
    sub.add_parser("train-scaler", parents=[common], help="pre-train the SQLR scaler Q-table")
    sub.add_parser("run", parents=[common], help="run one scheme on the test workload")
    cmp_ = sub.add_parser("compare", parents=[common], help="run every preset and tabulate")
    cmp_.add_argument("--schemes", default=",".join(COMPARE_SCHEMES))
    rep = sub.add_parser("report", parents=[common], help="render SVG plots for run directories")
    rep.add_argument("runs", nargs="*", help="run directories (default: subdirectories of --out)")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.scheme:
        cfg = preset(cfg, args.scheme) if args.scheme in PRESETS else cfg.replace(scheme=args.scheme)
    if args.out:
        cfg = cfg.replace(out=args.out)
    return cfg.validate()


def _out_dir(cfg: ExperimentConfig, default: str) -> Path:
    out = Path(cfg.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train_ac(args) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg, "runs/ac")
    agent = train_ac(cfg, args.episodes)
    acfg = ac_config(cfg)
    ac.save_table(agent.table, out / "ac_table.json")
    summary = ac.policy_summary(agent.table, acfg)
    write_json(out / "ac_policy.json", summary)
    print(f"x_lim = {summary['x_lim']}  ({agent.episodes} episodes) -> {out}")
    return EXIT_OK


def cmd_train_scaler(args) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg, "runs/scaler")
    x_lim = admission_limit(cfg, out)
    agent = make_scaler(cfg, x_lim)
    history = pretrain_scaler(cfg, agent, x_lim, args.episodes)
    save_scaler_table(agent.table, out / "scaler_table.json")
    write_json(out / "pretrain.json", {"x_lim": x_lim, "convergence": history})
    print(f"x_lim = {x_lim}  convergence = {history[-1] if history else 0.0:.3f} -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args)
    if args.episodes is not None:
        cfg = cfg.replace(pretrain_passes=args.episodes)
    res = run_experiment(cfg)
    t = res.bundle["totals"]
    print(
        f"{res.bundle['name']}: vm_hours={res.bundle['vm_hours']:.3f} "
        f"blocking={t['blocking']:.4f} within_sla={t['within_sla']:.4f}"
    )
    return EXIT_OK


def compare(base: ExperimentConfig, schemes, out: Path) -> list[dict]:
    from .report import summary_row

    bundles = {}
    for name in schemes:
        cfg = preset(base, name).replace(out=str(out / name))
        log.info("running %s", name)
        bundles[name] = run_experiment(cfg).bundle
    ref = bundles["static-10"]["vm_hours"] if "static-10" in bundles else None
    rows = [summary_row(bundles[n], ref) for n in schemes]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    write_json(out / "summary.json", rows)
    return rows


def cmd_compare(args) -> int:
    base = load_config(args)
    schemes = [s for s in args.schemes.split(",") if s]
    unknown = [s for s in schemes if s not in PRESETS]
    if unknown or not schemes:
        raise UsageError(f"unknown schemes: {', '.join(unknown) or '(none)'}")
    out = _out_dir(base, f"runs/compare-{base.seed}")
    rows = compare(base.replace(out=None), schemes, out)
    cols = list(rows[0])
    print("  ".join(cols))
    for r in rows:
        print("  ".join(str(r[c]) for c in cols))
    return EXIT_OK


def cmd_report(args) -> int:
    from . import plots

    dirs = [Path(d) for d in args.runs]
    if not dirs:
        if not args.out:
            raise UsageError("report needs run directories or --out")
        root = Path(args.out)
        if not root.is_dir():
            raise ConfigError(f"not a directory: {root}")
        dirs = sorted(d for d in root.iterdir() if (d / "config.json").is_file())
    for d in dirs:
        if not (d / "config.json").is_file():
            raise ConfigError(f"{d} is not a run directory (no config.json)")
        written = plots.render_run(d)
        print(f"{d}: {', '.join(p.name for p in written)}")
    if len(dirs) > 1:
        plots.render_comparison(dirs, dirs[0].parent)
    return EXIT_OK


COMMANDS = {
    "train-ac": cmd_train_ac,
    "train-scaler": cmd_train_scaler,
    "run": cmd_run,
    "compare": cmd_compare,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
