"""Windowed structural similarity (SSIM) between visit heatmaps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InputError
from .grid import GridSpec, Heatmap

DEFAULT_WINDOW = 7


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    L: float = 255.0
    window: int = DEFAULT_WINDOW
    log_scale: bool = False

    def __post_init__(self):
        if not self.L > 0:
            raise InputError(f"dynamic range L must be positive, got {self.L}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise InputError("k1 and k2 must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise InputError(f"window must be an odd positive integer, got {self.window}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.L) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.L) ** 2


@dataclass(frozen=True, eq=False)
class SsimMap:
    values: np.ndarray
    spec: GridSpec

    def mean(self) -> float:
        return float(self.values.mean())


def fit_window(window: int, shape: tuple[int, int]) -> int:
    """Largest odd window <= ``window`` that fits inside ``shape``."""
    w = min(window, *shape)
    return w if w % 2 == 1 else w - 1


def normalize_pair(a: np.ndarray, b: np.ndarray, L: float, log_scale: bool = False):
    """Scale two count grids linearly onto [0, L] using their joint maximum."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if log_scale:
        a, b = np.log1p(a), np.log1p(b)
    peak = max(a.max(initial=0.0), b.max(initial=0.0))
    if peak == 0:
        return np.zeros_like(a), np.zeros_like(b)
    return a * (L / peak), b * (L / peak)


def _box_sum(x: np.ndarray, window: int) -> np.ndarray:
    # zero padding == window clipped at the border
    ones = np.ones(window)
    return correlate1d(correlate1d(x, ones, axis=0, mode="constant"), ones, axis=1, mode="constant")


def ssim_values(x: np.ndarray, y: np.ndarray, window: int, c1: float, c2: float) -> np.ndarray:
    """Local SSIM of two equally shaped intensity images."""
    n = _box_sum(np.ones_like(x), window)
    mu_x = _box_sum(x, window) / n
    mu_y = _box_sum(y, window) / n
    var_x = _box_sum(x * x, window) / n - mu_x * mu_x
    var_y = _box_sum(y * y, window) / n - mu_y * mu_y
    cov = _box_sum(x * y, window) / n - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return np.clip(num / den, -1.0, 1.0)


def _check_pair(a: Heatmap, b: Heatmap, p: SsimParams):
    if a.spec != b.spec:
        raise InputError("SSIM needs heatmaps on the same grid")
    if p.window > min(a.spec.shape):
        raise InputError(f"window {p.window} larger than grid {a.spec.shape}")


def ssim_map(a: Heatmap, b: Heatmap, p: SsimParams = SsimParams()) -> SsimMap:
    _check_pair(a, b, p)
    x, y = normalize_pair(a.counts, b.counts, p.L, p.log_scale)
    return SsimMap(ssim_values(x, y, p.window, p.c1, p.c2), a.spec)


def ssim_global(a: Heatmap, b: Heatmap, p: SsimParams = SsimParams()) -> float:
    return ssim_map(a, b, p).mean()


def effective_ssim(user: Heatmap, integrated: Heatmap, p: SsimParams = SsimParams()) -> float:
    """Mean local SSIM against the cohort heatmap over cells the cohort visited."""
    if not integrated.counts.any():
        raise InputError("integrated heatmap is all zero")
    smap = ssim_map(user, integrated, p)
    return float(smap.values[integrated.counts > 0].mean())


def pairwise_ssim(users: Sequence[Heatmap], p: SsimParams = SsimParams()) -> np.ndarray:
    if len(users) < 2:
        raise InputError("pairwise SSIM needs at least two heatmaps")
    n = len(users)
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = ssim_global(users[i], users[j], p)
    return out


def write_matrix_csv(matrix: np.ndarray, ids: Sequence[str], path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", *ids])
        for uid, row in zip(ids, np.asarray(matrix)):
            w.writerow([uid, *(repr(float(v)) for v in row)])


def read_matrix_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if [r[0] for r in rows[1:]] != ids:
        raise InputError(f"{path}: row and column ids differ")
    return ids, matrix
