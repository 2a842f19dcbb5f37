"""Laser clock recovery and per-tag delay residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ConfigError, IntegrityError, StatisticsError, TagStream

DEFAULT_KP = 0.01
DEFAULT_KI = 1e-4
CONVERGENCE_TAGS = 100
UNLOCK_WINDOW = 10_000


class UnlockedError(StatisticsError):
    def __init__(self, window: int, median_ps: float):
        super().__init__(f"clock unlocked in window {window} (median residual {median_ps:.1f} ps)")
        self.window = window


@dataclass(frozen=True, eq=False)
class ClockModel:
    """Recovered clock: tick index and residual for every tag of one stream.

    ``residuals_ps`` lie in ``(-period/2, period/2]``.  ``phase_ps`` is the
    time of tick 0 under the final period estimate.
    """

    nominal_period_ps: float
    ticks: np.ndarray
    residuals_ps: np.ndarray
    period_ps: float
    phase_ps: float
    ideal: bool = False

    def __len__(self) -> int:
        return self.ticks.shape[0]


def _validate_period(period_ps: float) -> None:
    if not period_ps > 0:
        raise ConfigError("must be > 0", "nominal_period_ps")


def ideal_clock(tags: TagStream, period_ps: float, phase_ps: float = 0.0) -> ClockModel:
    """Residuals against a known clock (simulated data, or a dedicated sync channel)."""
    _validate_period(period_ps)
    x = tags.times.astype(np.float64) - phase_ps
    ticks = np.ceil(x / period_ps - 0.5).astype(np.int64)
    res = x - ticks * period_ps
    return ClockModel(period_ps, ticks, res, period_ps, phase_ps, ideal=True)


def pll_recover(
    tags: TagStream,
    nominal_period_ps: float,
    kp: float = DEFAULT_KP,
    ki: float = DEFAULT_KI,
    check_lock: bool = True,
) -> ClockModel:
    """Software PLL: track phase and period from the tags themselves.

    The loop anchors on the first tag, so a constant offset is absorbed
    immediately.  Captures nominal periods within about 100 ppm.  Raises
    :class:`UnlockedError` if any window of ``UNLOCK_WINDOW`` tags has a
    residual median beyond a quarter period, or a median residual magnitude
    beyond an eighth of one (uniformly spread residuals sit at a quarter).
    """
    _validate_period(nominal_period_ps)
    if len(tags) == 0:
        return ClockModel(nominal_period_ps, np.zeros(0, np.int64), np.zeros(0), nominal_period_ps, 0.0)
    t0 = int(tags.times[0])
    t = (tags.times - t0).astype(np.float64)
    ticks, res, period, t_ref = kernels.pll_loop(t, float(nominal_period_ps), float(kp), float(ki))
    if check_lock:
        for w, start in enumerate(range(0, res.shape[0], UNLOCK_WINDOW)):
            chunk = res[start:start + UNLOCK_WINDOW]
            med = float(np.median(chunk))
            if abs(med) > period / 4 or float(np.median(np.abs(chunk))) > period / 8:
                raise UnlockedError(w, med)
    phase = t0 + t_ref - int(ticks[-1]) * period
    return ClockModel(nominal_period_ps, ticks, res, period, phase)


@dataclass(frozen=True)
class ClockSpec:
    """How to obtain a clock for a stream: ideal (phase given) or PLL."""

    nominal_period_ps: float
    kp: float = DEFAULT_KP
    ki: float = DEFAULT_KI
    ideal_phase_ps: float | None = None

    def recover(self, tags: TagStream) -> ClockModel:
        if self.ideal_phase_ps is not None:
            return ideal_clock(tags, self.nominal_period_ps, self.ideal_phase_ps)
        return pll_recover(tags, self.nominal_period_ps, self.kp, self.ki)


def residuals(tags: TagStream, clock: ClockModel):
    """(tag index, tick, residual) arrays for downstream calibration."""
    if len(tags) != len(clock):
        raise IntegrityError(f"clock covers {len(clock)} tags, stream has {len(tags)}")
    return np.arange(len(tags)), clock.ticks, clock.residuals_ps
