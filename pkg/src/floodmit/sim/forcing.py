"""Synthetic boundary forcing: a two-constituent tide and storm-pulse rain.

Tide is the sum of a semidiurnal (12.42 h) and a diurnal (24.84 h) sinusoid
around a mean, with small Gaussian noise.  Rain arrives as storms: a Bernoulli
arrival each hour, a geometric duration, and a gamma-distributed base
intensity modulated hour to hour.  Runoff routing (linear reservoir) is part
of the simulator step; its coefficient and lag live here because they are
forcing-response properties, not channel geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..series import ValidationError

SEMIDIURNAL_HOURS = 12.42
DIURNAL_HOURS = 24.84


@dataclass(frozen=True)
class ForcingConfig:
    tide_mean_ft: float = 1.2
    tide_amp_semidiurnal_ft: float = 1.1
    tide_amp_diurnal_ft: float = 0.35
    tide_phase_semidiurnal: float = 0.0
    tide_phase_diurnal: float = 0.8
    tide_noise_sigma_ft: float = 0.04
    storm_rate_per_hr: float = 0.02
    storm_duration_mean_hr: float = 6.0
    rain_gamma_shape: float = 2.0
    rain_gamma_scale: float = 0.25
    runoff_coeff: float = 4.0  # effective catchment-to-canal area ratio
    runoff_lag_hr: float = 6.0

    def __post_init__(self):
        if self.tide_amp_semidiurnal_ft < 0 or self.tide_amp_diurnal_ft < 0:
            raise ValidationError("tide amplitudes must be >= 0")
        if not 0.0 < self.storm_rate_per_hr < 1.0:
            raise ValidationError("storm rate must be in (0,1)")
        if self.rain_gamma_shape <= 0 or self.rain_gamma_scale <= 0:
            raise ValidationError("rain gamma parameters must be positive")
        if self.storm_duration_mean_hr < 1:
            raise ValidationError("storm duration mean must be >= 1 hour")
        if self.runoff_lag_hr < 1:
            raise ValidationError("runoff lag must be >= 1 hour")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ForcingConfig":
        return cls(**d)


def tide_series(cfg: ForcingConfig, T: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(T, dtype=np.float64)
    tide = (cfg.tide_mean_ft
            + cfg.tide_amp_semidiurnal_ft
            * np.sin(2 * np.pi * t / SEMIDIURNAL_HOURS + cfg.tide_phase_semidiurnal)
            + cfg.tide_amp_diurnal_ft
            * np.sin(2 * np.pi * t / DIURNAL_HOURS + cfg.tide_phase_diurnal))
    if cfg.tide_noise_sigma_ft > 0:
        tide = tide + rng.normal(0.0, cfg.tide_noise_sigma_ft, T)
    return tide


def rain_series(cfg: ForcingConfig, T: int, rng: np.random.Generator) -> np.ndarray:
    """Hourly basin-average rain (in/hr), spatially uniform."""
    rain = np.zeros(T)
    remaining = 0
    base = 0.0
    for t in range(T):
        if remaining == 0:
            if rng.random() < cfg.storm_rate_per_hr:
                remaining = 1 + rng.geometric(1.0 / cfg.storm_duration_mean_hr)
                base = rng.gamma(cfg.rain_gamma_shape, cfg.rain_gamma_scale)
        if remaining > 0:
            rain[t] = base * rng.uniform(0.5, 1.5)
            remaining -= 1
    return rain


def make_forcing(cfg: ForcingConfig, T: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (tide, rain) pair for a run of T hours."""
    rng = np.random.default_rng(seed)
    tide = tide_series(cfg, T, rng)
    rain = rain_series(cfg, T, rng)
    return tide, rain
