"""End-to-end audits and their JSON / CSV / text renderings."""

from __future__ import annotations

import csv
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import entropy as ent
from .config import AuditConfig
from .errors import InputError, InvariantError, TrajFairError
from .fairness import (choose_k, cluster_violation_rate, feature_matrix, group_fairness_score,
                       kmeans, select_pairs, violation_rate)
from .grid import GridSpec, Heatmap, build_heatmap, cohort_spec, integrate_heatmaps
from .ingest import DemographicTable, OutcomeTable, Trajectory
from .similarity import effective_ssim, fit_window, pairwise_ssim

log = logging.getLogger(__name__)

METRIC_ROWS = ("SE", "LE", "HE", "AE", "SSIM", "EOTs", "EOTs+SSIM")
FORMATS = ("json", "csv", "text")


@contextmanager
def stage(name: str):
    """Tag errors raised inside the block with the pipeline stage."""
    try:
        yield
    except TrajFairError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (ValueError, ArithmeticError, IndexError) as exc:
        err = InvariantError(f"{type(exc).__name__}: {exc}")
        err.stage = name
        raise err from exc


def column_key(source: str, metric: str) -> str:
    return f"{source}:{metric}"


@dataclass
class Cohort:
    """Everything derived from trajectories at one granularity."""

    ids: list[str]
    spec: GridSpec
    window: int
    heatmaps: list[Heatmap]
    integrated: Heatmap
    pairwise: np.ndarray
    effective: dict[str, float]
    profiles: list[ent.EntropyProfile] | None = None

    def similarity(self, metric: str, ssim_mode: str = "pairwise") -> np.ndarray:
        if metric == "SSIM":
            if ssim_mode == "effective":
                return ent.range_similarity([self.effective[u] for u in self.ids])
            return self.pairwise
        if metric == "EOTs+SSIM":
            return np.minimum(self.similarity(ent.EOTS), self.similarity("SSIM", ssim_mode))
        return ent.entropy_similarity(self.profiles, metric)


def analyse_cohort(trajectories: Sequence[Trajectory], config: AuditConfig,
                   granularity: float | None = None, with_entropy: bool = True) -> Cohort:
    trajs = sorted(trajectories, key=lambda t: t.user_id)
    ids = [t.user_id for t in trajs]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate user ids in trajectories")
    with stage("grid"):
        spec = cohort_spec(trajs, granularity or config.granularity)
        heatmaps = [build_heatmap(t, spec) for t in trajs]
        integrated = integrate_heatmaps(heatmaps)
    window = fit_window(config.ssim_window, spec.shape)
    if window != config.ssim_window:
        log.info("SSIM window shrunk to %d for a %dx%d grid", window, *spec.shape)
    params = config.ssim_params(window)
    with stage("similarity"):
        pair = pairwise_ssim(heatmaps, params) if len(heatmaps) > 1 else np.ones((1, 1))
        eff = {u: effective_ssim(h, integrated, params) for u, h in zip(ids, heatmaps)}
    profiles = None
    if with_entropy:
        with stage("entropy"):
            ep = config.entropy_params()
            profiles = []
            for t in trajs:
                try:
                    profiles.append(ent.entropy_profile(t, spec, ep))
                except InputError as exc:
                    raise InputError(f"user {t.user_id!r}: {exc}") from exc
    return Cohort(ids, spec, window, heatmaps, integrated, pair, eff, profiles)


def _median_offdiag(m: np.ndarray) -> float:
    iu = np.triu_indices(len(m), k=1)
    return float(np.median(m[iu]))


def _pct(x):
    return None if x is None else 100.0 * x


def _violation_cells(pairs, outcomes: OutcomeTable, columns, tau, metric) -> dict:
    cells = {}
    for source, col in columns:
        try:
            res = violation_rate(pairs, outcomes, source, col, tau, metric)
        except InputError:
            cells[column_key(source, col)] = None
            continue
        cells[column_key(source, col)] = {
            "percent": res.percent,
            "pairs": len(res.verdicts),
            "violations": res.violations,
        }
    return cells


def individual_table(cohort: Cohort, outcomes: OutcomeTable, config: AuditConfig) -> list[dict]:
    rows = []
    columns = outcomes.columns()
    for metric in METRIC_ROWS:
        sel = select_pairs(cohort.similarity(metric, config.ssim_mode), config.epsilon, cohort.ids)
        rows.append({
            "metric": metric,
            "qualifying_pairs": len(sel.pairs),
            "total_pairs": sel.total_pairs,
            "pair_percent": sel.percent,
            "violations": _violation_cells(sel, outcomes, columns, config.tau, metric),
        })
    return rows


def cluster_table(cohort: Cohort, outcomes: OutcomeTable, config: AuditConfig) -> dict:
    ids, x = feature_matrix(cohort.profiles, cohort.effective)
    n = len(ids)
    if config.k is not None:
        assignment = kmeans(x, min(config.k, n), config.seed, ids)
        diag = {"inertia": {str(assignment.k): assignment.inertia},
                "silhouette": {str(assignment.k): assignment.silhouette}}
    else:
        k_hi = min(config.k_max, n)
        k_lo = min(config.k_min, k_hi)
        choice = choose_k(x, k_lo, k_hi, config.seed, ids)
        assignment = choice.assignment
        diag = {"inertia": {str(k): v for k, v in choice.inertia.items()},
                "silhouette": {str(k): v for k, v in choice.silhouette.items()}}

    columns = outcomes.columns()
    per_col = {column_key(s, c): cluster_violation_rate(assignment, outcomes, s, c, config.tau)
               for s, c in columns}
    rows = []
    for c in range(assignment.k):
        members = assignment.members(c)
        if not members:
            continue
        cells = {}
        for key, results in per_col.items():
            hit = next((r for r in results if r.cluster == c), None)
            cells[key] = None if hit is None else {
                "percent": hit.percent, "users": hit.size,
                "violations": len(hit.violators), "singleton": hit.singleton}
        rows.append({"cluster": c + 1, "size": len(members), "violations": cells})

    average = {}
    for key, results in per_col.items():
        users = sum(r.size for r in results)
        bad = sum(len(r.violators) for r in results)
        average[key] = None if users == 0 else {"percent": 100.0 * bad / users,
                                                "users": users, "violations": bad}
    return {
        "k": assignment.k,
        "chosen_by": "config" if config.k is not None else "silhouette",
        "labels": dict(sorted(assignment.labels.items())),
        "inertia": diag["inertia"],
        "silhouette": diag["silhouette"],
        "rows": rows,
        "average": average,
    }


def group_table(outcomes: OutcomeTable, demographics: DemographicTable, config: AuditConfig) -> list[dict]:
    rows = []
    for attribute in demographics.attributes():
        by_value: dict[str, dict] = {}
        for source, col in outcomes.columns():
            try:
                result = group_fairness_score(outcomes, demographics, attribute, source, col, config.gfs_mode)
            except InputError as exc:
                log.info("group fairness skipped for %s %s/%s: %s", attribute, source, col, exc)
                continue
            for r in result:
                entry = by_value.setdefault(r.value, {"attribute": attribute, "value": r.value,
                                                      "users": r.users, "scores": {}})
                entry["users"] = max(entry["users"], r.users)
                entry["scores"][column_key(source, col)] = {
                    "mean": r.mean, "advantaged": r.advantaged,
                    "gfs": r.gfs, "gfs_percent": _pct(r.gfs), "fair": r.fair}
        rows.extend(by_value[v] for v in sorted(by_value))
    return rows


def sweep_granularity(trajectories: Sequence[Trajectory], outcomes: OutcomeTable,
                      config: AuditConfig, granularities: Sequence[float] | None = None) -> list[dict]:
    """Median pairwise SSIM and SSIM-pair violation rates per granularity."""
    grans = sorted(set(granularities if granularities is not None else config.sweep))
    if len(grans) < 2:
        raise InputError("a granularity sweep needs at least two granularities")
    trajs = _common_trajectories(trajectories, outcomes, [])
    rows = []
    for g in grans:
        cohort = analyse_cohort(trajs, config, g, with_entropy=False)
        with stage("sweep"):
            sel = select_pairs(cohort.similarity("SSIM", config.ssim_mode), config.epsilon, cohort.ids)
            rows.append({
                "granularity": g,
                "grid": list(cohort.spec.shape),
                "window": cohort.window,
                "median_ssim": _median_offdiag(cohort.pairwise),
                "qualifying_pairs": len(sel.pairs),
                "pair_percent": sel.percent,
                "violations": _violation_cells(sel, outcomes, outcomes.columns(), config.tau, "SSIM"),
            })
    return rows


def _common_trajectories(trajectories, outcomes: OutcomeTable, notices: list) -> list[Trajectory]:
    have = set(outcomes.users())
    common = [t for t in trajectories if t.user_id in have]
    missing = sorted(t.user_id for t in trajectories if t.user_id not in have)
    extra = sorted(have - {t.user_id for t in trajectories})
    if missing:
        notices.append(f"{len(missing)} users without outcomes were left out")
    if extra:
        notices.append(f"{len(extra)} users with outcomes but no trajectory were left out")
    if len(common) < 2:
        raise InputError("fewer than two users have both a trajectory and outcomes")
    return sorted(common, key=lambda t: t.user_id)


@dataclass
class FairnessReport:
    config: dict
    cohort: dict
    columns: list[str]
    individual: list[dict]
    clusters: dict | None
    group: list[dict] | None
    sweep: list[dict] | None
    notices: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cohort": self.cohort,
            "columns": self.columns,
            "individual": self.individual,
            "clusters": self.clusters,
            "group": self.group,
            "sweep": self.sweep,
            "notices": self.notices,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        return cls(d["config"], d["cohort"], d["columns"], d["individual"], d["clusters"],
                   d["group"], d["sweep"], d.get("notices", []))


def run_audit(trajectories: Sequence[Trajectory], outcomes: OutcomeTable,
              demographics: DemographicTable | None = None,
              config: AuditConfig = AuditConfig(), include_sweep: bool = True) -> FairnessReport:
    notices: list[str] = []
    with stage("ingest"):
        trajs = _common_trajectories(trajectories, outcomes, notices)
    cohort = analyse_cohort(trajs, config)
    if cohort.window != config.ssim_window:
        notices.append(f"SSIM window reduced to {cohort.window} to fit the "
                       f"{cohort.spec.rows}x{cohort.spec.cols} grid")
    with stage("pairs"):
        individual = individual_table(cohort, outcomes, config)
    with stage("clustering"):
        clusters = cluster_table(cohort, outcomes, config)
    group = None
    if demographics is None:
        notices.append("group fairness not available: no demographics supplied")
    else:
        with stage("group"):
            group = group_table(outcomes, demographics, config)
    sweep = None
    if include_sweep and len(set(config.sweep)) >= 2:
        sweep = sweep_granularity(trajs, outcomes, config)

    spec = cohort.spec
    cohort_info = {
        "users": cohort.ids,
        "grid": {"min_lat": spec.min_lat, "max_lat": spec.max_lat, "min_lon": spec.min_lon,
                 "max_lon": spec.max_lon, "cell_size": spec.cell_size,
                 "rows": spec.rows, "cols": spec.cols},
        "ssim_window": cohort.window,
        "median_pairwise_ssim": _median_offdiag(cohort.pairwise),
        "effective_ssim": dict(sorted(cohort.effective.items())),
        "entropy": [ent.profile_dict(p) for p in cohort.profiles],
    }
    report = FairnessReport(config.to_dict(), cohort_info,
                            [column_key(s, c) for s, c in outcomes.columns()],
                            individual, clusters, group, sweep, notices)
    _check_report(report)
    return report


def _check_report(report: FairnessReport):
    def check_pct(v, where):
        if v is not None and not (0.0 <= v <= 100.0):
            raise InvariantError(f"percentage {v} out of range in {where}")

    for row in report.individual:
        check_pct(row["pair_percent"], row["metric"])
        for cell in row["violations"].values():
            if cell:
                check_pct(cell["percent"], row["metric"])
    eots = next(r for r in report.individual if r["metric"] == "EOTs")["qualifying_pairs"]
    for row in report.individual:
        if row["metric"] in ent.KINDS and row["qualifying_pairs"] < eots:
            raise InvariantError("EOTs selected more pairs than a single entropy kind")


# -- rendering -----------------------------------------------------------

def _fmt_pct(v) -> str:
    return "-" if v is None else f"{v:.2f}%"


def _cell_pct(cell) -> str:
    return _fmt_pct(None if cell is None else cell["percent"])


def _align(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) if i else str(c).ljust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(header), "  ".join("-" * w for w in widths)]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def render_text(report: FairnessReport) -> str:
    cfg = report.config
    cols = report.columns
    parts = [
        "Individual fairness (epsilon-thresholding)",
        f"epsilon={cfg['epsilon']}  tau={cfg['tau']}  granularity={cfg['granularity']} m  "
        f"V% = share of similar pairs with outcome delta > tau",
        _align(["metric", "% of pairs"] + cols,
               [[r["metric"], _fmt_pct(r["pair_percent"])] + [_cell_pct(r["violations"][c]) for c in cols]
                for r in report.individual]),
    ]
    if report.clusters:
        cl = report.clusters
        rows = [[f"cluster {r['cluster']}", str(r["size"])] + [_cell_pct(r["violations"][c]) for c in cols]
                for r in cl["rows"]]
        rows.append(["average", "-"] + [_cell_pct(cl["average"][c]) for c in cols])
        parts += ["", f"Individual fairness (k-means, k={cl['k']}, chosen by {cl['chosen_by']})",
                  "V% = share of cluster members whose mean outcome delta > tau",
                  _align(["cluster", "size"] + cols, rows)]
    parts.append("")
    if report.group is None:
        parts.append("Group fairness: not available")
    else:
        rows = []
        for r in report.group:
            cells = []
            for c in cols:
                s = r["scores"].get(c)
                cells.append("-" if s is None or s["gfs"] is None else
                             f"{_fmt_pct(s['gfs_percent'])}{'' if s['fair'] else ' *'}")
            rows.append([r["attribute"], r["value"], str(r["users"])] + cells)
        parts += [f"Group fairness scores ({cfg['gfs_mode']}; * = below four-fifths)",
                  _align(["attribute", "group", "users"] + cols, rows)]
    if report.sweep:
        rows = [[f"{r['granularity']:g}", f"{r['median_ssim']:.4f}", _fmt_pct(r["pair_percent"])]
                + [_cell_pct(r["violations"][c]) for c in cols] for r in report.sweep]
        parts += ["", "Granularity sweep (SSIM pairs)",
                  _align(["granularity_m", "median_ssim", "% of pairs"] + cols, rows)]
    if report.notices:
        parts += ["", "Notices:"] + [f"  - {n}" for n in report.notices]
    return "\n".join(parts) + "\n"


def _num(v):
    return "" if v is None else repr(float(v)) if isinstance(v, float) else str(v)


def _cells_num(cells: dict, cols):
    return [_num(None if cells.get(c) is None else cells[c]["percent"]) for c in cols]


def write_csv_bundle(report: FairnessReport, out_dir: Path) -> list[Path]:
    cols = report.columns
    written = []

    def write(name, header, rows):
        path = out_dir / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    write("config.csv", ["key", "value"], [[k, json.dumps(v)] for k, v in report.config.items()])
    write("individual.csv", ["metric", "qualifying_pairs", "total_pairs", "pair_percent"] + cols,
          [[r["metric"], r["qualifying_pairs"], r["total_pairs"], _num(r["pair_percent"])]
           + _cells_num(r["violations"], cols) for r in report.individual])
    if report.clusters:
        cl = report.clusters
        rows = [[r["cluster"], r["size"]] + _cells_num(r["violations"], cols) for r in cl["rows"]]
        rows.append(["average", ""] + _cells_num(cl["average"], cols))
        write("clusters.csv", ["cluster", "size"] + cols, rows)
    if report.group is not None:
        rows = []
        for r in report.group:
            rows.append([r["attribute"], r["value"], r["users"]]
                        + [_num(None if r["scores"].get(c) is None else r["scores"][c]["gfs"]) for c in cols])
        write("group.csv", ["attribute", "value", "users"] + cols, rows)
    if report.sweep:
        write("sweep.csv", ["granularity", "median_ssim", "qualifying_pairs", "pair_percent"] + cols,
              [[_num(r["granularity"]), _num(r["median_ssim"]), r["qualifying_pairs"], _num(r["pair_percent"])]
               + _cells_num(r["violations"], cols) for r in report.sweep])
    return written


def emit_report(report: FairnessReport, fmt: str, out_dir) -> list[Path]:
    """Write the report as ``report.json``, a CSV bundle, or ``report.txt``."""
    if fmt not in FORMATS:
        raise InputError(f"unknown format {fmt!r}; choose from {FORMATS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = out / "report.json"
            path.write_text(report.to_json())
            return [path]
        if fmt == "csv":
            return write_csv_bundle(report, out)
        path = out / "report.txt"
        path.write_text(render_text(report))
        return [path]
    except OSError as exc:
        raise InputError(f"cannot write report to {out}: {exc}") from exc
