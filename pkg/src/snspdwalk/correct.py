"""Streaming time-walk correction and software dead time."""

from __future__ import annotations

import warnings

import numpy as np

from . import kernels
from .core import (
    FLAG_CORRECTED,
    CalibrationCurve,
    ConfigError,
    DomainError,
    TagStream,
    sort_tags,
)


class ReorderWarning(UserWarning):
    """Correction changed the relative order of some tags; they were re-sorted."""


def _curve_arrays(curve: CalibrationCurve) -> tuple[np.ndarray, np.ndarray]:
    if len(curve.bins) < 2:
        raise ConfigError(f"curve has {len(curve.bins)} bins, need at least 2", "curve.bins")
    return curve.t_prime, curve.d_med


def interpolate_delay(curve: CalibrationCurve, dt_ps) -> float | np.ndarray:
    """Piecewise-linear lookup of the delay for a gap ``dt_ps``.

    Gaps outside the calibrated range take the nearest end value.
    """
    tp, dm = _curve_arrays(curve)
    dt = np.asarray(dt_ps, dtype=np.float64)
    if np.any(dt <= 0):
        raise DomainError("gap must be positive")
    out = np.interp(dt, tp, dm)
    return float(out) if out.ndim == 0 else out


def _round(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5).astype(np.int64)


def correct_stream(tags: TagStream, curve: CalibrationCurve, chained: bool = False) -> TagStream:
    """Subtract the looked-up delay from every tag that has a predecessor.

    The gap is measured to the previous *raw* tag on the same channel.  With
    ``chained=True`` it is measured to the previous *corrected* tag instead
    (sequential; used to check that the choice does not matter).  The first
    tag of each channel is passed through without the corrected flag.
    """
    tp, dm = _curve_arrays(curve)
    times = tags.times.copy()
    flags = tags.flags.copy()
    for ch in np.unique(tags.channels):
        sel = np.nonzero(tags.channels == ch)[0]
        if sel.shape[0] < 2:
            continue
        t = tags.times[sel]
        if chained:
            times[sel] = kernels.correct_chained(t, tp, dm)
        else:
            times[sel[1:]] = t[1:] - _round(np.interp(np.diff(t).astype(np.float64), tp, dm))
        flags[sel[1:]] |= FLAG_CORRECTED
    times, chans, flags, moved = sort_tags(times, tags.channels.copy(), flags)
    if moved:
        warnings.warn(f"{moved} tags re-sorted after correction", ReorderWarning, stacklevel=2)
    return TagStream(times, chans, flags, channel_count=tags.channel_count, version=tags.version)


def deadtime_filter(tags: TagStream, deadtime_ps: int, paralyzable: bool = False) -> TagStream:
    """Drop tags arriving within ``deadtime_ps`` of an earlier tag on their channel.

    Default is non-paralyzable: the gap is measured to the previous *kept*
    tag.  ``paralyzable=True`` measures it to the previous tag of any kind,
    so rejected tags extend the dead window; at high rates this rejects
    almost everything.
    """
    if deadtime_ps < 0:
        raise ConfigError("must be >= 0", "deadtime_ps")
    keep = np.zeros(len(tags), np.bool_)
    for ch in np.unique(tags.channels):
        sel = np.nonzero(tags.channels == ch)[0]
        t = tags.times[sel]
        if paralyzable:
            k = np.ones(t.shape[0], np.bool_)
            k[1:] = np.diff(t) >= deadtime_ps
        else:
            k = kernels.deadtime_loop(t, np.int64(deadtime_ps))
        keep[sel] = k
    return TagStream(
        tags.times[keep], tags.channels[keep], tags.flags[keep],
        channel_count=tags.channel_count, version=tags.version,
    )
