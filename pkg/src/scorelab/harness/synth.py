"""Synthetic ensemble forecasts with a known true predictive density.

A latent temperature follows a seasonal cycle plus station offsets and
noise. Member ``i`` forecasts the latent value with bias ``member_bias[i]``
and a case-specific spread ``tau``, so ensemble spread varies (which keeps
EMOS's ``d`` identifiable). The observation is drawn from the truth's
predictive density given the members.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..errors import SpecificationError
from .data import ForecastCase
from .postprocess import BmaParams, EmosParams

Truth = Union[BmaParams, EmosParams]


def default_member_bias(k):
    return tuple(np.round(np.linspace(-1.0, 2.5, k), 12).tolist())


def default_bma_truth(k=5, member_bias=None) -> BmaParams:
    """Bias-correcting BMA with decreasing member weights."""
    bias = np.asarray(member_bias if member_bias is not None else default_member_bias(k))
    w = np.arange(k, 0, -1, dtype=float)
    return BmaParams(tuple((0.3 - bias).tolist()), (1.0,) * k, tuple((w / w.sum()).tolist()), 1.0)


def default_emos_truth(k=5) -> EmosParams:
    b = np.full(k, 1.0 / k)
    b[0] += 0.2
    b[-1] -= 0.2
    return EmosParams(2.0, tuple(b.tolist()), 1.0, 0.8)


@dataclass(frozen=True)
class SynthConfig:
    n_days: int
    stations: int
    k: int
    truth: Optional[Truth] = None
    seed: int = 0
    start: str = "2008-01-01"
    member_bias: Optional[tuple[float, ...]] = None
    spread: float = 1.5
    spread_log_sd: float = 0.4
    climate: dict = field(default_factory=lambda: {"mean": 12.0, "amplitude": 8.0, "station_sd": 3.0, "noise_sd": 3.0})

    def resolved_truth(self) -> Truth:
        return self.truth if self.truth is not None else default_bma_truth(self.k, self.bias())

    def bias(self):
        return tuple(self.member_bias) if self.member_bias is not None else default_member_bias(self.k)


def synth_generate(config: SynthConfig) -> list[ForecastCase]:
    """``n_days * stations`` cases ordered by date, then station; deterministic in ``seed``."""
    if config.n_days < 1 or config.stations < 1:
        raise SpecificationError("n_days and stations must be >= 1")
    if config.k < 2:
        raise SpecificationError("k must be >= 2")
    truth = config.resolved_truth()
    if truth.k != config.k:
        raise SpecificationError(f"truth has {truth.k} members, config has k={config.k}")
    bias = np.asarray(config.bias(), dtype=float)
    if bias.size != config.k:
        raise SpecificationError("member_bias needs k entries")

    rng = np.random.Generator(np.random.Philox(config.seed))
    clim = config.climate
    offsets = clim["station_sd"] * rng.standard_normal(config.stations)
    day = np.repeat(np.arange(config.n_days), config.stations)
    station = np.tile(np.arange(config.stations), config.n_days)
    n = day.size
    theta = (
        clim["mean"]
        + clim["amplitude"] * np.sin(2.0 * np.pi * day / 365.25)
        + offsets[station]
        + clim["noise_sd"] * rng.standard_normal(n)
    )
    tau = config.spread * np.exp(config.spread_log_sd * rng.standard_normal(n))
    F = theta[:, None] + bias + tau[:, None] * rng.standard_normal((n, config.k))
    y = truth.draw(F, rng)

    start = dt.date.fromisoformat(config.start)
    dates = [(start + dt.timedelta(days=int(d))).isoformat() for d in range(config.n_days)]
    return [
        ForecastCase(
            f"C{i + 1:06d}",
            dates[day[i]],
            f"S{station[i] + 1:03d}",
            tuple(F[i].tolist()),
            float(y[i]),
        )
        for i in range(n)
    ]
