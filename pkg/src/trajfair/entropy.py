"""Trajectory entropies and entropy-based user similarity.

Four measures are computed per user:

* SE -- Shannon entropy (bits) of the visit distribution over grid cells.
* LE -- fuzzy entropy of the resampled longitude and latitude series,
  averaged over the two axes.
* HE -- two-dimensional sample entropy of the user's heatmap.
* AE -- Lempel-Ziv "actual" entropy of the cell-novelty binary series.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError
from .grid import GridSpec, Heatmap, build_heatmap, project_cells
from .ingest import DEFAULT_RESAMPLE_INTERVAL, Trajectory, resample_trajectory

KINDS = ("SE", "LE", "HE", "AE")
EOTS = "EOTs"

_CHUNK = 256


@dataclass(frozen=True)
class EntropyParams:
    interval: float = DEFAULT_RESAMPLE_INTERVAL
    fuzzy_m: int = 2
    fuzzy_r_factor: float = 0.2
    fuzzy_n_pow: float = 2.0
    he_m: int = 1
    he_r_factor: float = 0.2
    he_log_scale: bool = True


@dataclass(frozen=True)
class EntropyProfile:
    user_id: str
    se: float
    le: float
    he: float | None
    ae: float

    def get(self, kind: str):
        return getattr(self, kind.lower())


@dataclass(frozen=True)
class NoveltySeries:
    user_id: str
    bits: tuple[int, ...]

    def __len__(self):
        return len(self.bits)


def _zero(x: float) -> float:
    # folds -0.0 into 0.0
    return x + 0.0


def shannon_entropy(traj: Trajectory, spec: GridSpec) -> float:
    """Entropy in bits of the fraction of in-grid fixes falling in each cell."""
    counts = build_heatmap(traj, spec).counts
    return shannon_from_counts(counts)


def shannon_from_counts(counts) -> float:
    counts = np.asarray(counts, dtype=float).ravel()
    total = counts.sum()
    if total <= 0:
        raise InputError("Shannon entropy needs at least one in-grid point")
    p = counts[counts > 0] / total
    return _zero(float(-(p * np.log2(p)).sum()))


def _fuzzy_phi(x: np.ndarray, m: int, count: int, r: float, n_pow: float) -> float:
    templates = sliding_window_view(x, m)[:count].astype(float)
    templates = templates - templates.mean(axis=1, keepdims=True)
    total = 0.0
    for start in range(0, count, _CHUNK):
        block = templates[start:start + _CHUNK]
        d = np.abs(block[:, None, :] - templates[None, :, :]).max(axis=2)
        total += np.exp(-(d ** n_pow) / r).sum()
    total -= count  # self matches, exp(0) each
    return total / (count * (count - 1))


def fuzzy_entropy(series, m: int = 2, r: float = 0.2, n_pow: float = 2.0) -> float:
    """Fuzzy entropy in nats.

    Templates of length ``m`` and ``m + 1`` (the same ``N - m`` starting
    positions for both) have their own mean removed, are compared with the
    Chebyshev distance ``d`` and scored with membership ``exp(-d**n_pow / r)``.
    Self-comparisons are excluded.
    """
    x = np.asarray(series, dtype=float)
    if m < 1:
        raise InputError(f"template length m must be >= 1, got {m}")
    if len(x) <= m + 1:
        raise InputError(f"series of length {len(x)} too short for m={m}")
    if not r > 0:
        raise InputError(f"tolerance r must be positive, got {r}")
    count = len(x) - m
    phi_m = _fuzzy_phi(x, m, count, r, n_pow)
    phi_m1 = _fuzzy_phi(x, m + 1, count, r, n_pow)
    if phi_m <= 0 or phi_m1 <= 0:
        raise InputError("fuzzy entropy undefined: template memberships underflow to zero")
    return _zero(math.log(phi_m) - math.log(phi_m1))


def _axis_fuzzy(values: np.ndarray, m, r_factor, n_pow) -> float:
    sd = float(np.std(values))
    if sd == 0:
        return 0.0
    return fuzzy_entropy(values, m, r_factor * sd, n_pow)


def lonlat_entropy(traj: Trajectory, interval: float = DEFAULT_RESAMPLE_INTERVAL,
                   m: int = 2, r_factor: float = 0.2, n_pow: float = 2.0) -> float:
    """Mean of the longitude and latitude fuzzy entropies of the resampled track.

    Each axis uses ``r = r_factor * std`` of its own series; an axis with
    zero variance contributes 0.
    """
    rs = resample_trajectory(traj, interval)
    lon = _axis_fuzzy(rs.longitudes, m, r_factor, n_pow)
    lat = _axis_fuzzy(rs.latitudes, m, r_factor, n_pow)
    return (lon + lat) / 2.0


def _window_rows(img: np.ndarray, size: int, n_rows: int, n_cols: int) -> np.ndarray:
    win = sliding_window_view(img, (size, size))[:n_rows, :n_cols]
    return win.reshape(n_rows * n_cols, size * size)


def _match_probability(windows: np.ndarray, r: float) -> float:
    """Average fraction of other windows within Chebyshev distance r."""
    n = len(windows)
    uniq, mult = np.unique(windows, axis=0, return_counts=True)
    matches = np.empty(len(uniq))
    for start in range(0, len(uniq), _CHUNK):
        block = uniq[start:start + _CHUNK]
        close = np.abs(block[:, None, :] - uniq[None, :, :]).max(axis=2) <= r
        matches[start:start + _CHUNK] = close @ mult
    return float((mult * (matches - 1)).sum() / (n * (n - 1)))


def sample_entropy_2d(h, m: int = 1, r: float | None = None,
                      log_scale: bool = False, r_factor: float = 0.2):
    """Two-dimensional sample entropy of an image or heatmap, in nats.

    Square windows of side ``m`` and ``m + 1`` start at the same
    ``(rows - m) * (cols - m)`` positions.  ``r`` defaults to
    ``r_factor * std(image)``.  Returns ``None`` when no window pair matches
    at either scale (the entropy is undefined).
    """
    img = np.asarray(h.counts if isinstance(h, Heatmap) else h, dtype=float)
    if log_scale:
        img = np.log1p(img)
    if img.ndim != 2 or min(img.shape) < m + 2:
        raise InputError(f"image of shape {img.shape} too small for m={m}")
    if r is None:
        r = r_factor * float(img.std())
        if r == 0:
            return 0.0  # constant image: every window matches at both scales
    elif not r > 0:
        raise InputError(f"tolerance r must be positive, got {r}")

    n_rows, n_cols = img.shape[0] - m, img.shape[1] - m
    u_m = _match_probability(_window_rows(img, m, n_rows, n_cols), r)
    u_m1 = _match_probability(_window_rows(img, m + 1, n_rows, n_cols), r)
    if u_m == 0 or u_m1 == 0:
        return None
    return _zero(-math.log(u_m1 / u_m))


def novelty_series(traj: Trajectory, spec: GridSpec,
                   interval: float = DEFAULT_RESAMPLE_INTERVAL) -> NoveltySeries:
    """1 where the resampled track enters a cell for the first time, else 0.

    Fixes outside the grid are dropped.
    """
    rs = resample_trajectory(traj, interval)
    rows, cols, inside = project_cells(rs.latitudes, rs.longitudes, spec)
    seen = set()
    bits = []
    for r, c in zip(rows[inside].tolist(), cols[inside].tolist()):
        cell = (r, c)
        bits.append(0 if cell in seen else 1)
        seen.add(cell)
    return NoveltySeries(traj.user_id, tuple(bits))


def lz_match_lengths(bits: Sequence[int]) -> list[int]:
    """For each position i, the length of the shortest substring starting at i
    that never occurs inside ``bits[:i]``.

    When even the whole suffix occurs in the prefix, the value is
    ``len(suffix) + 1``.
    """
    s = "".join("1" if b else "0" for b in bits)
    n = len(s)
    lengths = []
    k = 1
    for i in range(n):
        prefix = s[:i]
        # a match of length L at i implies one of length L - 1 at i + 1
        k = max(k - 1, 1)
        while i + k <= n and s[i:i + k] in prefix:
            k += 1
        lengths.append(k)
    return lengths


def actual_entropy(s) -> float:
    """Lempel-Ziv estimate ``ln(n) / mean(lengths)`` in nats."""
    bits = s.bits if isinstance(s, NoveltySeries) else tuple(s)
    n = len(bits)
    if n == 0:
        raise InputError("actual entropy of an empty series is undefined")
    lengths = lz_match_lengths(bits)
    return math.log(n) / (sum(lengths) / n)


def entropy_profile(traj: Trajectory, spec: GridSpec,
                    params: EntropyParams = EntropyParams()) -> EntropyProfile:
    """All four entropies of one user on a shared cohort grid.

    A user whose in-grid fixes all fall in one cell is treated as stationary:
    HE and AE are 0 for them, since the estimators' finite-sample bias would
    otherwise report spatial irregularity that is not there.
    """
    heat = build_heatmap(traj, spec)
    se = shannon_from_counts(heat.counts)
    le = lonlat_entropy(traj, params.interval, params.fuzzy_m,
                        params.fuzzy_r_factor, params.fuzzy_n_pow)
    if heat.nonzero_cells <= 1:
        return EntropyProfile(traj.user_id, se, le, 0.0, 0.0)
    he = sample_entropy_2d(heat, params.he_m, log_scale=params.he_log_scale,
                           r_factor=params.he_r_factor)
    ae = actual_entropy(novelty_series(traj, spec, params.interval))
    return EntropyProfile(traj.user_id, se, le, he, ae)


def entropy_similarity(profiles: Sequence[EntropyProfile], kind: str) -> np.ndarray:
    """User x user similarity from one entropy kind, or ``EOTs`` for all four.

    For one kind, ``1 - |E_i - E_j| / (max - min)`` over the cohort, so the
    scale is relative to the cohort and adding a user can change existing
    entries.  A cohort with zero range is all ones.  ``EOTs`` takes the
    element-wise minimum over the four kinds, so a pair is similar under it
    only if it is similar under every kind.
    """
    if len(profiles) < 2:
        raise InputError("entropy similarity needs at least two profiles")
    if kind == EOTS:
        return np.minimum.reduce([entropy_similarity(profiles, k) for k in KINDS])
    if kind not in KINDS:
        raise InputError(f"unknown entropy kind {kind!r}")
    values = []
    for p in profiles:
        v = p.get(kind)
        if v is None or not math.isfinite(v):
            raise InputError(f"user {p.user_id!r} has no {kind} value")
        values.append(v)
    return range_similarity(values)


def range_similarity(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    spread = v.max() - v.min()
    if spread == 0:
        return np.ones((len(v), len(v)))
    sim = 1.0 - np.abs(v[:, None] - v[None, :]) / spread
    return np.clip(sim, 0.0, 1.0)


def write_profiles_csv(profiles: Sequence[EntropyProfile], path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "se", "le", "he", "ae"])
        for p in profiles:
            w.writerow([p.user_id, *("" if p.get(k) is None else repr(p.get(k)) for k in KINDS)])


def read_profiles_csv(path) -> list[EntropyProfile]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EntropyProfile(r["user_id"], *(float(r[k.lower()]) if r[k.lower()] else None for k in KINDS))
            for r in rows]


def profile_dict(p: EntropyProfile) -> dict:
    return asdict(p)
