"""Loading trajectories, per-user model outcomes and demographics.

All loaders validate eagerly and return immutable objects.  Bad trajectory
rows are skipped and tallied in a :class:`LoadDiagnostics` instead of
aborting the load.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)

ORIGINAL = "original"
ORIGINAL_METRICS = ("uniqueness_accuracy", "predictability_accuracy")
MODEL_METRICS = ("privacy_gain", "utility_decline")
METRICS = ORIGINAL_METRICS + MODEL_METRICS

DEFAULT_SCHEMA = {"user_id": "user_id", "timestamp": "timestamp", "lat": "lat", "lon": "lon"}
DEFAULT_RESAMPLE_INTERVAL = 600.0

PLT_HEADER_LINES = 6


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    timestamp: float

    def __post_init__(self):
        problem = _point_problem(self.latitude, self.longitude, self.timestamp)
        if problem:
            raise InputError(problem)


def _point_problem(lat, lon, ts):
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        return f"latitude out of range: {lat}"
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        return f"longitude out of range: {lon}"
    if not (math.isfinite(ts) and ts >= 0):
        return f"invalid timestamp: {ts}"
    return None


@dataclass(frozen=True)
class Trajectory:
    """One user's time-ordered fixes."""

    user_id: str
    points: tuple[GeoPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise InputError(f"trajectory of user {self.user_id!r} has no points")
        ts = [p.timestamp for p in self.points]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InputError(f"timestamps of user {self.user_id!r} are not non-decreasing")

    def __len__(self):
        return len(self.points)

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self.points], dtype=float)

    @cached_property
    def latitudes(self) -> np.ndarray:
        return np.array([p.latitude for p in self.points], dtype=float)

    @cached_property
    def longitudes(self) -> np.ndarray:
        return np.array([p.longitude for p in self.points], dtype=float)

    @classmethod
    def from_points(cls, user_id: str, points: Iterable[GeoPoint]) -> "Trajectory":
        """Build a trajectory, sorting the points by timestamp (stable)."""
        return cls(str(user_id), tuple(sorted(points, key=lambda p: p.timestamp)))

    @classmethod
    def from_arrays(cls, user_id, timestamps, lats, lons) -> "Trajectory":
        pts = (GeoPoint(float(la), float(lo), float(t)) for t, la, lo in zip(timestamps, lats, lons))
        return cls.from_points(user_id, pts)


@dataclass
class LoadDiagnostics:
    """Counts of what a loader read and what it had to skip."""

    rows_read: int = 0
    rows_rejected: int = 0
    reasons: Counter = field(default_factory=Counter)
    files_read: int = 0

    def reject(self, reason: str):
        self.rows_rejected += 1
        self.reasons[reason] += 1

    def merge(self, other: "LoadDiagnostics"):
        self.rows_read += other.rows_read
        self.rows_rejected += other.rows_rejected
        self.reasons.update(other.reasons)
        self.files_read += other.files_read


def parse_timestamp(text: str) -> float:
    """Parse ISO-8601 with a ``Z`` suffix, or integer epoch seconds."""
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    if text.endswith("Z"):
        dt = datetime.fromisoformat(text[:-1])
        if dt.tzinfo is not None:
            raise ValueError(f"timestamp has both offset and Z: {text!r}")
        return dt.replace(tzinfo=timezone.utc).timestamp()
    if text.lstrip("-").isdigit():
        return float(int(text))
    raise ValueError(f"unrecognised timestamp {text!r} (need ISO-8601 with Z or epoch seconds)")


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _group_points(by_user: Mapping[str, list[GeoPoint]]) -> list[Trajectory]:
    return [Trajectory.from_points(uid, pts) for uid, pts in sorted(by_user.items()) if pts]


def load_trajectories(path, schema: Mapping[str, str] | None = None,
                      diagnostics: LoadDiagnostics | None = None) -> list[Trajectory]:
    """Read a trajectory CSV into one :class:`Trajectory` per user.

    ``schema`` maps the logical fields ``user_id``, ``timestamp``, ``lat``
    and ``lon`` to column names in the file.  Invalid rows are skipped and
    counted in ``diagnostics``.
    """
    path = _require_file(path)
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    diag = diagnostics if diagnostics is not None else LoadDiagnostics()
    by_user: dict[str, list[GeoPoint]] = defaultdict(list)

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f"{k}->{v}" for k, v in schema.items() if v not in header]
        if missing:
            raise InputError(f"{path}: cannot map columns {missing}; header is {header}")
        diag.files_read += 1
        for row in reader:
            diag.rows_read += 1
            uid = (row[schema["user_id"]] or "").strip()
            if not uid:
                diag.reject("missing user_id")
                continue
            try:
                ts = parse_timestamp(row[schema["timestamp"]] or "")
                lat = float(row[schema["lat"]])
                lon = float(row[schema["lon"]])
            except (TypeError, ValueError):
                diag.reject("unparseable field")
                continue
            problem = _point_problem(lat, lon, ts)
            if problem:
                diag.reject(problem.split(":")[0])
                continue
            by_user[uid].append(GeoPoint(lat, lon, ts))

    if diag.rows_rejected:
        log.warning("%s: rejected %d of %d rows (%s)", path, diag.rows_rejected,
                    diag.rows_read, dict(diag.reasons))
    trajectories = _group_points(by_user)
    if not trajectories:
        raise InputError(f"{path}: no valid trajectory rows")
    return trajectories


def parse_plt(lines: Iterable[str], diagnostics: LoadDiagnostics | None = None) -> list[GeoPoint]:
    """Parse the lines of one Geolife PLT file.

    Date and time fields are naive local times; they are read as UTC.
    """
    diag = diagnostics if diagnostics is not None else LoadDiagnostics()
    points = []
    for lineno, line in enumerate(lines):
        if lineno < PLT_HEADER_LINES:
            continue
        line = line.strip()
        if not line:
            continue
        diag.rows_read += 1
        fields = line.split(",")
        if len(fields) != 7:
            diag.reject("wrong field count")
            continue
        try:
            lat, lon = float(fields[0]), float(fields[1])
            dt = datetime.strptime(f"{fields[5]} {fields[6]}", "%Y-%m-%d %H:%M:%S")
        except ValueError:
            diag.reject("unparseable field")
            continue
        ts = dt.replace(tzinfo=timezone.utc).timestamp()
        problem = _point_problem(lat, lon, ts)
        if problem:
            diag.reject(problem.split(":")[0])
            continue
        points.append(GeoPoint(lat, lon, ts))
    return points


def _read_plt_file(path: Path):
    diag = LoadDiagnostics(files_read=1)
    try:
        with path.open(encoding="utf-8", errors="strict") as fh:
            points = parse_plt(fh, diag)
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return points, diag


def load_geolife_plt(directory, diagnostics: LoadDiagnostics | None = None,
                     workers: int = 1) -> list[Trajectory]:
    """Load a Geolife-style tree ``<user>/Trajectory/*.plt``.

    All PLT files of a user merge into a single trajectory.  Users whose
    files hold no valid records are left out.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"no such directory: {root}")
    diag = diagnostics if diagnostics is not None else LoadDiagnostics()

    jobs = []
    for user_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for plt in sorted((user_dir / "Trajectory").glob("*.plt")):
            jobs.append((user_dir.name, plt))
    if not jobs:
        raise InputError(f"{root}: no <user>/Trajectory/*.plt files found")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _read_plt_file(job[1]), jobs))
    else:
        results = [_read_plt_file(plt) for _, plt in jobs]

    by_user: dict[str, list[GeoPoint]] = defaultdict(list)
    for (uid, _), (points, file_diag) in zip(jobs, results):
        by_user[uid].extend(points)
        diag.merge(file_diag)
    if diag.rows_rejected:
        log.warning("%s: skipped %d malformed PLT records", root, diag.rows_rejected)
    return _group_points(by_user)


class OutcomeTable:
    """Per-user outcome values keyed by ``(user_id, source, metric)``.

    ``source`` is ``"original"`` for the single-task reference models
    (uniqueness / predictability accuracy) or a PUT model name (privacy
    gain / utility decline).
    """

    def __init__(self, cells: Mapping[tuple[str, str, str], float]):
        checked = {}
        for (user, source, metric), value in cells.items():
            _check_outcome_cell(user, source, metric, value)
            checked[(user, source, metric)] = float(value)
        self._cells = checked

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str, float]]) -> "OutcomeTable":
        cells = {}
        for user, source, metric, value in rows:
            key = (user, source, metric)
            if key in cells:
                raise InputError(f"duplicate outcome cell {key}")
            cells[key] = value
        return cls(cells)

    def __len__(self):
        return len(self._cells)

    def __eq__(self, other):
        return isinstance(other, OutcomeTable) and self._cells == other._cells

    def get(self, user: str, source: str, metric: str):
        return self._cells.get((user, source, metric))

    def users(self) -> list[str]:
        return sorted({u for u, _, _ in self._cells})

    def sources(self) -> list[str]:
        found = {s for _, s, _ in self._cells}
        models = sorted(found - {ORIGINAL})
        return ([ORIGINAL] if ORIGINAL in found else []) + models

    def columns(self) -> list[tuple[str, str]]:
        """(source, metric) pairs present, original first, in table order."""
        present = {(s, m) for _, s, m in self._cells}
        order = []
        for source in self.sources():
            metrics = ORIGINAL_METRICS if source == ORIGINAL else MODEL_METRICS
            order.extend((source, m) for m in metrics if (source, m) in present)
        return order

    def column(self, source: str, metric: str) -> dict[str, float]:
        return {u: v for (u, s, m), v in self._cells.items() if s == source and m == metric}

    def rows(self):
        for (u, s, m), v in sorted(self._cells.items()):
            yield u, s, m, v


def _check_outcome_cell(user, source, metric, value):
    if not user or not source:
        raise InputError("outcome cell needs a user_id and a source")
    if metric not in METRICS:
        raise InputError(f"unknown metric {metric!r}; expected one of {METRICS}")
    allowed = ORIGINAL_METRICS if source == ORIGINAL else MODEL_METRICS
    if metric not in allowed:
        raise InputError(f"metric {metric!r} is not valid for source {source!r}")
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise InputError(f"outcome {value} for {(user, source, metric)} outside [0, 1]")


def _read_csv_rows(path, header: tuple[str, ...]):
    path = _require_file(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != header:
            raise InputError(f"{path}: expected header {','.join(header)}, got {first}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def load_outcomes(path) -> OutcomeTable:
    """Read a long-format ``user_id,source,metric,value`` outcome CSV."""
    rows = []
    for lineno, (user, source, metric, value) in _read_csv_rows(path, ("user_id", "source", "metric", "value")):
        try:
            rows.append((user, source, metric, float(value)))
        except ValueError:
            raise InputError(f"{path}:{lineno}: value {value!r} is not a number") from None
    try:
        return OutcomeTable.from_rows(rows)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


class DemographicTable:
    """Categorical sensitive attributes, one value per (user, attribute)."""

    def __init__(self, cells: Mapping[tuple[str, str], str]):
        for (user, attr), value in cells.items():
            if not user or not attr:
                raise InputError("demographic row needs user_id and attribute")
            if not value:
                raise InputError(f"empty value for {(user, attr)}")
        self._cells = dict(cells)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str]]) -> "DemographicTable":
        cells = {}
        for user, attr, value in rows:
            if (user, attr) in cells:
                raise InputError(f"duplicate demographic entry {(user, attr)}")
            cells[(user, attr)] = value
        return cls(cells)

    def __len__(self):
        return len(self._cells)

    def attributes(self) -> list[str]:
        return sorted({a for _, a in self._cells})

    def value(self, user: str, attribute: str):
        return self._cells.get((user, attribute))

    def groups(self, attribute: str) -> dict[str, list[str]]:
        """Subgroup value -> sorted user ids."""
        out: dict[str, list[str]] = defaultdict(list)
        for (user, attr), value in self._cells.items():
            if attr == attribute:
                out[value].append(user)
        return {v: sorted(us) for v, us in sorted(out.items())}


def load_demographics(path) -> DemographicTable:
    rows = [tuple(r) for _, r in _read_csv_rows(path, ("user_id", "attribute", "value"))]
    try:
        return DemographicTable.from_rows(rows)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def resample_trajectory(traj: Trajectory, interval: float = DEFAULT_RESAMPLE_INTERVAL) -> Trajectory:
    """Resample onto a uniform time grid by carrying the last fix forward.

    The grid starts at the first observation.  If the last observation is
    off-grid it is appended as a terminal point.
    """
    if not interval > 0:
        raise InputError(f"resample interval must be positive, got {interval}")
    if len(traj) == 1:
        return traj
    ts = traj.timestamps
    t0, t_last = ts[0], ts[-1]
    steps = int(math.floor((t_last - t0) / interval))
    grid = t0 + interval * np.arange(steps + 1)
    # grid arithmetic can overshoot by an ulp
    grid = grid[grid <= t_last]
    idx = np.searchsorted(ts, grid, side="right") - 1
    points = [GeoPoint(traj.points[i].latitude, traj.points[i].longitude, float(g))
              for i, g in zip(idx, grid)]
    if grid[-1] < t_last:
        points.append(traj.points[-1])
    return Trajectory(traj.user_id, tuple(points))
