"""Multi-step workflows shared by the CLI and the acceptance suite."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import calib, sim
from .clock import CONVERGENCE_TAGS, ClockSpec
from .core import CalibrationCurve, ConfigError, DetectorConfig, LaserConfig, TagStream
from .correct import deadtime_filter


def calibrate(
    tags: TagStream,
    clock: ClockSpec,
    discard_tags: int | None = None,
    **curve_kwargs,
) -> CalibrationCurve:
    """Clock recovery, pair extraction and curve building in one call.

    Pairs ending in the first ``discard_tags`` tags are dropped; by default
    that is the PLL convergence window, or nothing for an ideal clock.
    """
    if discard_tags is None:
        discard_tags = 0 if clock.ideal_phase_ps is not None else CONVERGENCE_TAGS
    model = clock.recover(tags)
    pairs = calib.extract_pairs(tags, model, start=discard_tags)
    return calib.build_curve(pairs, **curve_kwargs)


@dataclass(frozen=True, eq=False)
class RateSweep:
    incident_cps: np.ndarray
    detected_cps: np.ndarray
    usable_cps: np.ndarray
    normalized_efficiency: np.ndarray
    three_db_incident_cps: float | None


def rate_sweep(
    laser: LaserConfig,
    det: DetectorConfig,
    photon_rates: Sequence[float],
    seed,
    deadtime_ps: int,
    paralyzable: bool = False,
    target_photons: int | None = 200_000,
) -> RateSweep:
    """Detected and dead-time-filtered ("usable") rate versus incident rate."""
    rates = np.asarray(photon_rates, dtype=np.float64)
    if rates.shape[0] < 2 or np.any(rates <= 0) or np.any(np.diff(rates) <= 0):
        raise ConfigError("need at least two positive ascending rates", "photon_rates")
    detected = np.empty_like(rates)
    usable = np.empty_like(rates)
    for i, (rate, ss) in enumerate(zip(rates, np.random.SeedSequence(seed).spawn(rates.shape[0]))):
        cfg = laser.with_photon_rate(rate)
        if target_photons:
            cfg = dataclasses.replace(cfg, duration_ps=max(1, int(target_photons / rate * 1e12)))
        tags = sim.simulate(cfg, det, ss)
        seconds = cfg.duration_ps * 1e-12
        detected[i] = len(tags) / seconds
        usable[i] = len(deadtime_filter(tags, deadtime_ps, paralyzable)) / seconds
    eff = detected / rates
    eff = eff / eff[0]
    return RateSweep(rates, detected, usable, eff, sim.three_db_crossing(rates, eff))
