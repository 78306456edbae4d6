"""Audit configuration, loadable from JSON and overridable from the CLI."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .entropy import EntropyParams
from .errors import ConfigError
from .grid import DEFAULT_GRANULARITY, DEFAULT_SWEEP
from .similarity import DEFAULT_WINDOW, SsimParams

CONFIG_ENV = "TRAJFAIR_CONFIG"


@dataclass(frozen=True)
class AuditConfig:
    granularity: float = DEFAULT_GRANULARITY
    sweep: tuple[float, ...] = DEFAULT_SWEEP
    epsilon: float = 0.8
    tau: float = 0.2
    resample_interval: float = 600.0
    fuzzy_m: int = 2
    fuzzy_r_factor: float = 0.2
    fuzzy_n_pow: float = 2.0
    he_m: int = 1
    he_r_factor: float = 0.2
    he_log_scale: bool = True
    ssim_window: int = DEFAULT_WINDOW
    ssim_log_scale: bool = False
    ssim_mode: str = "pairwise"
    k_min: int = 2
    k_max: int = 8
    k: int | None = None
    seed: int = 0
    gfs_mode: str = "symmetric"

    def __post_init__(self):
        object.__setattr__(self, "sweep", tuple(float(g) for g in self.sweep))
        for name in ("epsilon", "tau"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.granularity <= 0 or any(g <= 0 for g in self.sweep):
            raise ConfigError("granularities must be positive")
        if self.resample_interval <= 0:
            raise ConfigError("resample_interval must be positive")
        if self.fuzzy_m < 1 or self.he_m < 1:
            raise ConfigError("template lengths must be >= 1")
        if self.fuzzy_r_factor <= 0 or self.he_r_factor <= 0 or self.fuzzy_n_pow <= 0:
            raise ConfigError("entropy tolerances must be positive")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigError(f"ssim_window must be odd and positive, got {self.ssim_window}")
        if self.ssim_mode not in ("pairwise", "effective"):
            raise ConfigError(f"ssim_mode must be 'pairwise' or 'effective', got {self.ssim_mode!r}")
        if self.gfs_mode not in ("symmetric", "literal"):
            raise ConfigError(f"gfs_mode must be 'symmetric' or 'literal', got {self.gfs_mode!r}")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError(f"bad k range [{self.k_min}, {self.k_max}]")
        if self.k is not None and self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")

    @classmethod
    def from_dict(cls, data: dict) -> "AuditConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path=None, **overrides) -> "AuditConfig":
        """Read a JSON config (``path`` or ``$TRAJFAIR_CONFIG``), then apply overrides.

        Overrides whose value is None are ignored.
        """
        path = path or os.environ.get(CONFIG_ENV)
        data = {}
        if path:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"config {path} must hold a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = list(self.sweep)
        return d

    def entropy_params(self) -> EntropyParams:
        return EntropyParams(self.resample_interval, self.fuzzy_m, self.fuzzy_r_factor,
                             self.fuzzy_n_pow, self.he_m, self.he_r_factor, self.he_log_scale)

    def ssim_params(self, window: int | None = None) -> SsimParams:
        return SsimParams(window=window or self.ssim_window, log_scale=self.ssim_log_scale)
