"""Regular spatial grids and visit-frequency heatmaps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .ingest import GeoPoint, Trajectory

METERS_PER_DEGREE = 111320.0
DEFAULT_GRANULARITY = 100.0
DEFAULT_SWEEP = (50.0, 100.0, 300.0, 500.0, 700.0, 900.0)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned bounding box cut into square cells of ``cell_size`` meters.

    Distances use a local equirectangular projection: 111320 m per degree of
    latitude, and the same scaled by cos(mid-latitude) for longitude.
    """

    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float
    cell_size: float

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise InputError(f"degenerate bounding box: {self}")
        if not self.cell_size > 0:
            raise InputError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def lon_scale(self) -> float:
        mid = math.radians((self.min_lat + self.max_lat) / 2.0)
        return METERS_PER_DEGREE * math.cos(mid)

    @property
    def height_m(self) -> float:
        return (self.max_lat - self.min_lat) * METERS_PER_DEGREE

    @property
    def width_m(self) -> float:
        return (self.max_lon - self.min_lon) * self.lon_scale

    @property
    def rows(self) -> int:
        return max(1, math.ceil(self.height_m / self.cell_size))

    @property
    def cols(self) -> int:
        return max(1, math.ceil(self.width_m / self.cell_size))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def with_cell_size(self, cell_size: float) -> "GridSpec":
        return GridSpec(self.min_lat, self.max_lat, self.min_lon, self.max_lon, cell_size)


def cohort_spec(trajectories: Sequence[Trajectory], cell_size: float = DEFAULT_GRANULARITY) -> GridSpec:
    """Bounding box over every user's points, padded by one cell on each side."""
    if not trajectories:
        raise InputError("cannot build a grid for an empty cohort")
    lats = np.concatenate([t.latitudes for t in trajectories])
    lons = np.concatenate([t.longitudes for t in trajectories])
    lo_lat, hi_lat = float(lats.min()), float(lats.max())
    lo_lon, hi_lon = float(lons.min()), float(lons.max())
    pad_lat = cell_size / METERS_PER_DEGREE
    mid = math.radians((lo_lat + hi_lat) / 2.0)
    pad_lon = cell_size / (METERS_PER_DEGREE * max(math.cos(mid), 1e-6))
    return GridSpec(max(-90.0, lo_lat - pad_lat), min(90.0, hi_lat + pad_lat),
                    max(-180.0, lo_lon - pad_lon), min(180.0, hi_lon + pad_lon), cell_size)


def project_cells(lats, lons, spec: GridSpec):
    """Vectorised projection.  Returns (rows, cols, inside_mask)."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    inside = ((lats >= spec.min_lat) & (lats <= spec.max_lat)
              & (lons >= spec.min_lon) & (lons <= spec.max_lon))
    north = (lats - spec.min_lat) * METERS_PER_DEGREE
    east = (lons - spec.min_lon) * spec.lon_scale
    # points on the far edge belong to the last cell
    r = np.minimum(np.floor(north / spec.cell_size), spec.rows - 1)
    c = np.minimum(np.floor(east / spec.cell_size), spec.cols - 1)
    r = np.where(inside, r, -1).astype(np.int64)
    c = np.where(inside, c, -1).astype(np.int64)
    return r, c, inside


def project_to_cell(p: GeoPoint, spec: GridSpec):
    """Cell ``(row, col)`` of a point, row 0 being the southern edge; None if outside."""
    r, c, inside = project_cells([p.latitude], [p.longitude], spec)
    if not inside[0]:
        return None
    return int(r[0]), int(c[0])


@dataclass(frozen=True, eq=False)
class Heatmap:
    spec: GridSpec
    counts: np.ndarray
    outside: int = 0
    user_id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != self.spec.shape:
            raise InputError(f"counts shape {counts.shape} does not match grid {self.spec.shape}")
        if counts.size and counts.min() < 0:
            raise InputError("heatmap counts must be non-negative")
        counts = counts.astype(np.int64, copy=True)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        return (isinstance(other, Heatmap) and self.spec == other.spec
                and np.array_equal(self.counts, other.counts))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def nonzero_cells(self) -> int:
        return int(np.count_nonzero(self.counts))


def build_heatmap(traj: Trajectory, spec: GridSpec) -> Heatmap:
    r, c, inside = project_cells(traj.latitudes, traj.longitudes, spec)
    counts = np.zeros(spec.shape, dtype=np.int64)
    np.add.at(counts, (r[inside], c[inside]), 1)
    return Heatmap(spec, counts, outside=int((~inside).sum()), user_id=traj.user_id)


def integrate_heatmaps(maps: Sequence[Heatmap]) -> Heatmap:
    """Element-wise sum of heatmaps sharing one grid."""
    if not maps:
        raise InputError("nothing to integrate")
    spec = maps[0].spec
    for h in maps[1:]:
        if h.spec != spec:
            raise InputError("cannot integrate heatmaps with different grids")
    total = reduce(np.add, (h.counts for h in maps[1:]), maps[0].counts.copy())
    return Heatmap(spec, total, outside=sum(h.outside for h in maps))


def write_heatmap_csv(h: Heatmap, path):
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh).writerows(h.counts.tolist())


def read_heatmap_csv(path, spec: GridSpec) -> Heatmap:
    with Path(path).open(newline="") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
    return Heatmap(spec, np.array(rows, dtype=np.int64))


def to_gray8(h: Heatmap) -> np.ndarray:
    peak = h.counts.max() if h.counts.size else 0
    if peak == 0:
        return np.zeros(h.spec.shape, dtype=np.uint8)
    return np.rint(255.0 * h.counts / peak).astype(np.uint8)


def write_heatmap_pgm(h: Heatmap, path):
    """Binary 8-bit PGM, first image row = first grid row."""
    img = to_gray8(h)
    rows, cols = img.shape
    with Path(path).open("wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
