"""Synthetic cohorts for smoke tests and demos, plus writers for the input formats."""

from __future__ import annotations

import csv
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import METERS_PER_DEGREE
from .ingest import MODEL_METRICS, ORIGINAL, ORIGINAL_METRICS, DemographicTable, OutcomeTable, Trajectory

BEIJING = (39.9847, 116.3184)


def random_walk(user_id: str, steps: int, rng: np.random.Generator, start_m=(0.0, 0.0),
                step_m: float = 50.0, center=BEIJING, t0: float = 1_224_730_384.0,
                dt: float = 60.0) -> Trajectory:
    """Gaussian random walk in a local metric frame around ``center``."""
    moves = rng.normal(0.0, step_m, size=(steps - 1, 2))
    path = np.vstack([np.zeros((1, 2)), np.cumsum(moves, axis=0)]) + np.asarray(start_m)
    lat = center[0] + path[:, 0] / METERS_PER_DEGREE
    lon = center[1] + path[:, 1] / (METERS_PER_DEGREE * math.cos(math.radians(center[0])))
    ts = t0 + dt * np.arange(steps)
    return Trajectory.from_arrays(user_id, ts, lat, lon)


def random_walk_cohort(n_users: int = 20, steps: int = 1000, seed: int = 0,
                       spread_m: float = 3000.0, step_m: float = 50.0) -> list[Trajectory]:
    rng = np.random.default_rng(seed)
    trajs = []
    for i in range(n_users):
        start = rng.uniform(-spread_m, spread_m, size=2)
        trajs.append(random_walk(f"u{i:03d}", steps, rng, start, step_m))
    return trajs


def stationary(user_id: str, n: int = 12, center=BEIJING, t0: float = 1_224_730_384.0,
               dt: float = 600.0) -> Trajectory:
    return Trajectory.from_arrays(user_id, t0 + dt * np.arange(n), [center[0]] * n, [center[1]] * n)


def random_outcomes(user_ids: Sequence[str], seed: int = 0,
                    models: Sequence[str] = ("mo-pae", "trajgan")) -> OutcomeTable:
    rng = np.random.default_rng(seed)
    cells = {}
    for u in user_ids:
        for m in ORIGINAL_METRICS:
            cells[(u, ORIGINAL, m)] = float(rng.uniform(0.3, 1.0))
        for model in models:
            for m in MODEL_METRICS:
                cells[(u, model, m)] = float(rng.uniform(0.05, 1.0))
    return OutcomeTable(cells)


def random_demographics(user_ids: Sequence[str], seed: int = 0) -> DemographicTable:
    rng = np.random.default_rng(seed)
    cells = {}
    for u in user_ids:
        cells[(u, "gender")] = str(rng.choice(["male", "male", "female"]))
        cells[(u, "age")] = str(rng.choice(["<21", "22-27", "22-27", "28-33", ">39"]))
    return DemographicTable(cells)


def write_trajectories_csv(trajs: Sequence[Trajectory], path, iso: bool = True):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "timestamp", "lat", "lon"])
        for t in trajs:
            for p in t.points:
                if iso and float(p.timestamp).is_integer():
                    stamp = datetime.fromtimestamp(p.timestamp, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
                else:
                    stamp = str(int(p.timestamp))
                w.writerow([t.user_id, stamp, repr(p.latitude), repr(p.longitude)])


def write_outcomes_csv(table: OutcomeTable, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "source", "metric", "value"])
        for u, s, m, v in table.rows():
            w.writerow([u, s, m, repr(v)])


def write_demographics_csv(table: DemographicTable, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "attribute", "value"])
        for a in table.attributes():
            for value, users in table.groups(a).items():
                for u in users:
                    w.writerow([u, a, value])


PLT_HEADER = ("Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n"
              "0,2,255,My Track,0,0,2,8421376\n0\n")


def plt_line(lat: float, lon: float, ts: float, altitude: int = 0) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    days = ts / 86400.0 + 25569.0  # days since 1899-12-30
    return f"{lat},{lon},0,{altitude},{days:.10f},{dt:%Y-%m-%d},{dt:%H:%M:%S}"


def write_geolife(trajs: Sequence[Trajectory], root, files_per_user: int = 1):
    """Lay trajectories out as ``<user>/Trajectory/*.plt``, split into chunks."""
    root = Path(root)
    for t in trajs:
        folder = root / t.user_id / "Trajectory"
        folder.mkdir(parents=True, exist_ok=True)
        chunks = np.array_split(np.arange(len(t.points)), files_per_user)
        for i, idx in enumerate(chunks):
            lines = [plt_line(t.points[j].latitude, t.points[j].longitude, t.points[j].timestamp) for j in idx]
            (folder / f"2008102300000{i}.plt").write_text(PLT_HEADER + "\n".join(lines) + "\n")
