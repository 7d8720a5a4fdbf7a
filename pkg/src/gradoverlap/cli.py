"""Command-line entry point: ``gradoverlap {generate,run,audit}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EXPERIMENTS, build_config, config_hash, load_config
from .errors import ConfigError, DataError, NumericalError
from .paneldata import apply_overlap, load_csv_panel, save_csv_panel, save_ground_truth
from .reports import write_report

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _config(args, experiment):
    cfg = load_config(args.config, experiment) if args.config else build_config({}, experiment)
    if getattr(args, "seed_override", None) is not None:
        n = len(cfg.seeds)
        data = cfg.model_dump(mode="json")
        data["seed"] = args.seed_override
        data["seeds"] = [args.seed_override + i for i in range(n)]
        cfg = build_config(data, experiment)
    return cfg


def cmd_generate(args) -> int:
    from .experiments import make_panel

    cfg = _config(args, None)
    if cfg.panel.csv_path:
        raise ConfigError("panel.csv_path is set; generate only builds synthetic panels")
    panel, truth = make_panel(cfg, cfg.seed)
    if cfg.audit_alpha is not None:
        panel = apply_overlap(panel, float(cfg.audit_alpha), cfg.seed, cfg.n_per_task)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv_panel(panel, out / "panel.csv")
    save_ground_truth(truth, out / "ground_truth_weights.csv", out / "ground_truth_similarity.csv")
    print(f"wrote {out / 'panel.csv'} ({panel.n_samples} samples, {panel.n_tasks} tasks)")
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiments import run_experiment

    cfg = _config(args, args.experiment)
    report = run_experiment(cfg, parallel=args.parallel)
    jpath, cpath = write_report(report, args.out, config_hash(cfg))
    print(jpath)
    print(cpath)
    return EXIT_OK


def cmd_audit(args) -> int:
    from .experiments import run_audit

    panel = load_csv_panel(args.panel)
    data = load_config(args.config, "audit").model_dump(mode="json") if args.config else {}
    data.setdefault("panel", {})["csv_path"] = str(args.panel)
    cfg = build_config(data, "audit")
    report = run_audit(cfg, panel=panel)
    jpath, cpath = write_report(report, args.out, config_hash(cfg))
    d = report.derived
    print(f"median overlap {d['median_overlap_percent']:.1f}% over {d['n_pairs']} pairs; "
          f"regimes {d['regime_counts']}")
    print(jpath)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gradoverlap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic panel and its ground truth as CSV")
    g.add_argument("--config")
    g.add_argument("--out", default=".")
    g.add_argument("--seed-override", type=int)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an experiment and write JSON + CSV reports")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--config")
    r.add_argument("--out", default="results")
    r.add_argument("--seed-override", type=int)
    r.add_argument("--parallel", type=int, default=1)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="pairwise label-overlap audit of a panel CSV")
    a.add_argument("panel")
    a.add_argument("--config")
    a.add_argument("--out", default="results")
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "parallel", 1) < 1:
        print("error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
