"""``trajfair`` command line.

Exit codes: 0 success, 1 input error, 2 configuration error, 3 internal
invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import entropy as ent
from .config import CONFIG_ENV, AuditConfig
from .errors import ConfigError, InputError, InvariantError
from .fairness import select_pairs, violation_rate
from .grid import integrate_heatmaps, write_heatmap_csv, write_heatmap_pgm
from .ingest import load_demographics, load_geolife_plt, load_outcomes, load_trajectories
from .report import (METRIC_ROWS, analyse_cohort, emit_report, group_table,
                     run_audit, sweep_granularity)
from .similarity import write_matrix_csv

log = logging.getLogger("trajfair")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_inputs(p: argparse.ArgumentParser, outcomes: bool = False, required_outcomes: bool = False):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trajectories", type=Path, help="trajectory CSV (user_id,timestamp,lat,lon)")
    src.add_argument("--geolife", type=Path, help="Geolife root directory (<user>/Trajectory/*.plt)")
    p.add_argument("--columns", help="CSV column names for user_id,timestamp,lat,lon")
    if outcomes:
        p.add_argument("--outcomes", type=Path, required=required_outcomes,
                       help="outcome CSV (user_id,source,metric,value)")


def _add_config(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help=f"JSON AuditConfig (default: ${CONFIG_ENV})")
    p.add_argument("--granularity", type=float, help="cell size in meters")
    p.add_argument("--epsilon", type=float, help="trajectory similarity threshold")
    p.add_argument("--tau", type=float, help="outcome delta threshold")
    p.add_argument("--interval", type=float, dest="resample_interval", help="resampling interval (s)")
    p.add_argument("--seed", type=int, help="seed for every stochastic step")
    p.add_argument("--ssim-mode", choices=("pairwise", "effective"))
    p.add_argument("--gfs-mode", choices=("symmetric", "literal"))
    p.add_argument("--k", type=int, help="fix the number of clusters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajfair", description="Fairness audits for mobility models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("heatmap", help="write per-user and cohort heatmaps")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("csv", "pgm"), default="csv")

    p = sub.add_parser("similarity", help="pairwise and effective SSIM")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("entropy", help="per-user entropy profiles")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("pairs", help="similar pairs for one metric, with verdicts if outcomes given")
    _add_inputs(p, outcomes=True)
    _add_config(p)
    p.add_argument("--metric", choices=METRIC_ROWS, default="SSIM")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("audit", help="full individual + group fairness report")
    _add_inputs(p, outcomes=True, required_outcomes=True)
    _add_config(p)
    p.add_argument("--demographics", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")
    p.add_argument("--no-sweep", action="store_true", help="skip the granularity sweep")

    p = sub.add_parser("sweep", help="granularity sensitivity table")
    _add_inputs(p, outcomes=True, required_outcomes=True)
    _add_config(p)
    p.add_argument("--granularities", type=_floats, help="comma-separated cell sizes in meters")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("group", help="group fairness scores only")
    p.add_argument("--outcomes", type=Path, required=True)
    p.add_argument("--demographics", type=Path, required=True)
    _add_config(p)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _config(args) -> AuditConfig:
    return AuditConfig.load(
        args.config, granularity=args.granularity, epsilon=args.epsilon, tau=args.tau,
        resample_interval=args.resample_interval, seed=args.seed, ssim_mode=args.ssim_mode,
        gfs_mode=args.gfs_mode, k=args.k)


def _trajectories(args):
    if args.geolife:
        return load_geolife_plt(args.geolife)
    schema = None
    if args.columns:
        names = [c.strip() for c in args.columns.split(",")]
        if len(names) != 4:
            raise InputError("--columns needs four names: user_id,timestamp,lat,lon")
        schema = dict(zip(("user_id", "timestamp", "lat", "lon"), names))
    return load_trajectories(args.trajectories, schema)


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, allow_nan=False) + "\n")


def cmd_heatmap(args, config):
    cohort = analyse_cohort(_trajectories(args), config, with_entropy=False)
    args.out.mkdir(parents=True, exist_ok=True)
    write = write_heatmap_pgm if args.format == "pgm" else write_heatmap_csv
    for uid, h in zip(cohort.ids, cohort.heatmaps):
        write(h, args.out / f"{uid}.{args.format}")
    write(integrate_heatmaps(cohort.heatmaps), args.out / f"_integrated.{args.format}")
    _write_json(args.out / "grid.json", asdict(cohort.spec) | {"rows": cohort.spec.rows,
                                                               "cols": cohort.spec.cols})


def cmd_similarity(args, config):
    cohort = analyse_cohort(_trajectories(args), config, with_entropy=False)
    args.out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(cohort.pairwise, cohort.ids, args.out / "ssim_pairwise.csv")
    with (args.out / "effective_ssim.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "effective_ssim"])
        w.writerows([u, repr(cohort.effective[u])] for u in cohort.ids)


def cmd_entropy(args, config):
    cohort = analyse_cohort(_trajectories(args), config)
    args.out.mkdir(parents=True, exist_ok=True)
    ent.write_profiles_csv(cohort.profiles, args.out / "entropy.csv")


def cmd_pairs(args, config):
    with_entropy = args.metric != "SSIM"
    cohort = analyse_cohort(_trajectories(args), config, with_entropy=with_entropy)
    sel = select_pairs(cohort.similarity(args.metric, config.ssim_mode), config.epsilon, cohort.ids)
    args.out.mkdir(parents=True, exist_ok=True)
    with (args.out / "pairs.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_a", "user_b", "similarity"])
        w.writerows([a, b, repr(s)] for (a, b), s in zip(sel.pairs, sel.similarities))
    summary = {"metric": args.metric, "epsilon": config.epsilon, "qualifying_pairs": len(sel.pairs),
               "total_pairs": sel.total_pairs, "pair_percent": sel.percent}
    if args.outcomes:
        outcomes = load_outcomes(args.outcomes)
        with (args.out / "verdicts.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user_a", "user_b", "similarity", "source", "column", "delta", "violated"])
            summary["violations"] = {}
            for source, col in outcomes.columns():
                try:
                    res = violation_rate(sel, outcomes, source, col, config.tau, args.metric)
                except InputError as exc:
                    log.warning("%s", exc)
                    continue
                summary["violations"][f"{source}:{col}"] = res.percent
                w.writerows([v.user_a, v.user_b, repr(v.similarity), v.source, v.column,
                             repr(v.delta), v.violated] for v in res.verdicts)
    _write_json(args.out / "pairs.json", summary)


def cmd_audit(args, config):
    demographics = load_demographics(args.demographics) if args.demographics else None
    report = run_audit(_trajectories(args), load_outcomes(args.outcomes), demographics, config,
                       include_sweep=not args.no_sweep)
    for path in emit_report(report, args.format, args.out):
        print(path)


def cmd_sweep(args, config):
    rows = sweep_granularity(_trajectories(args), load_outcomes(args.outcomes), config, args.granularities)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "sweep.json", {"config": config.to_dict(), "sweep": rows})
    cols = list(rows[0]["violations"])
    with (args.out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["granularity", "median_ssim", "qualifying_pairs", "pair_percent"] + cols)
        for r in rows:
            cells = ["" if r["violations"][c] is None else repr(r["violations"][c]["percent"]) for c in cols]
            w.writerow([repr(r["granularity"]), repr(r["median_ssim"]), r["qualifying_pairs"],
                        repr(r["pair_percent"])] + cells)


def cmd_group(args, config):
    rows = group_table(load_outcomes(args.outcomes), load_demographics(args.demographics), config)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "group.json", {"config": config.to_dict(), "group": rows})


COMMANDS = {"heatmap": cmd_heatmap, "similarity": cmd_similarity, "entropy": cmd_entropy,
            "pairs": cmd_pairs, "audit": cmd_audit, "sweep": cmd_sweep, "group": cmd_group}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args)
        COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
