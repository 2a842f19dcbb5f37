"""IRF histograms, width-at-fraction statistics and before/after reports."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Callable

import numpy as np

from .clock import ClockModel, ClockSpec
from .core import (
    DelayHistogram,
    FormatError,
    IntegrityError,
    StatisticsError,
    TagIOError,
    TagStream,
    WidthMetrics,
)

REPORT_FRACTIONS = {"fwhm_ps": 0.5, "fw10m_ps": 0.1, "fw1m_ps": 0.01}


class DegenerateHistogramError(StatisticsError):
    pass


def histogram_window(values: np.ndarray, period_ps: float, bin_width_ps: float = 1.0) -> DelayHistogram:
    """Histogram over ``(-period/2, period/2]`` with right-closed bins."""
    origin = -period_ps / 2
    nbins = max(1, math.ceil(period_ps / bin_width_ps))
    idx = np.ceil((np.asarray(values, np.float64) - origin) / bin_width_ps).astype(np.int64) - 1
    np.clip(idx, 0, nbins - 1, out=idx)
    return DelayHistogram(bin_width_ps, origin, np.bincount(idx, minlength=nbins))


def build_irf(tags: TagStream, clock: ClockModel, bin_width_ps: float = 1.0) -> DelayHistogram:
    """Histogram of every tag's residual delay against ``clock``."""
    if len(clock) != len(tags):
        raise IntegrityError(f"clock covers {len(clock)} tags, stream has {len(tags)}")
    return histogram_window(clock.residuals_ps, clock.period_ps, bin_width_ps)


def smooth3(y: np.ndarray) -> np.ndarray:
    """Centred 3-bin moving average, edges averaged over the bins present."""
    s = np.convolve(y, np.ones(3), mode="same")
    n = np.full(y.shape[0], 3.0)
    if y.shape[0] > 1:
        n[0] = n[-1] = 2.0
    else:
        n[0] = 1.0
    return s / n


def _profile(hist: DelayHistogram, smooth: bool) -> np.ndarray:
    y = hist.counts.astype(np.float64)
    if y.max() == y.min():
        raise DegenerateHistogramError("histogram has no peak (all bins equal)")
    return smooth3(y) if smooth else y


def width_at_fraction(hist: DelayHistogram, fraction: float, smooth: bool | None = None) -> float:
    """Full width at ``fraction`` of the maximum, between the outermost crossings.

    Bin values sit at bin centres; crossings are linearly interpolated
    between neighbouring bins.  ``smooth=None`` applies the 3-bin moving
    average only for fractions of 1 % and below, where shot noise on
    fine bins otherwise dominates.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if smooth is None:
        smooth = fraction <= 0.01
    y = _profile(hist, smooth)
    thr = fraction * y.max()
    above = np.nonzero(y >= thr)[0]
    c = hist.centers
    w = hist.bin_width_ps
    i, j = int(above[0]), int(above[-1])
    if i == 0:
        left = c[0]
    else:
        left = c[i - 1] + (thr - y[i - 1]) / (y[i] - y[i - 1]) * w
    if j == y.shape[0] - 1:
        right = c[-1]
    else:
        right = c[j] + (y[j] - thr) / (y[j] - y[j + 1]) * w
    return float(right - left)


def peak_position(hist: DelayHistogram, smooth: bool = True) -> float:
    y = _profile(hist, smooth)
    return float(hist.centers[int(np.argmax(y))])


def width_metrics(hist: DelayHistogram, smooth: bool | None = None) -> WidthMetrics:
    widths = {k: width_at_fraction(hist, f, smooth) for k, f in REPORT_FRACTIONS.items()}
    return WidthMetrics(
        peak_position_ps=peak_position(hist, True if smooth is None else smooth),
        total_counts=hist.total,
        **widths,
    )


def count_rate(tags: TagStream) -> float:
    """Mean event rate in counts/s from first to last tag."""
    if len(tags) < 2:
        raise StatisticsError("count rate needs at least two tags")
    span = int(tags.times[-1]) - int(tags.times[0])
    if span <= 0:
        raise StatisticsError("all tags share one timestamp")
    return (len(tags) - 1) / (span * 1e-12)


def _as_clock(clock) -> Callable[[TagStream], ClockModel]:
    if isinstance(clock, ClockSpec):
        return clock.recover
    if isinstance(clock, ClockModel):
        return lambda tags: clock
    return clock


def stream_report(tags: TagStream, clock, bin_width_ps: float = 1.0) -> tuple[dict, DelayHistogram]:
    hist = build_irf(tags, _as_clock(clock)(tags), bin_width_ps)
    m = width_metrics(hist)
    rep = {
        "count_rate_cps": count_rate(tags) if len(tags) >= 2 else 0.0,
        "fwhm_ps": m.fwhm_ps,
        "fw10m_ps": m.fw10m_ps,
        "fw1m_ps": m.fw1m_ps,
        "peak_position_ps": m.peak_position_ps,
        "total_counts": m.total_counts,
    }
    return rep, hist


def compare_widths(before: TagStream, after: TagStream, clock, bin_width_ps: float = 1.0) -> dict:
    """Width statistics of two streams and their after/before ratios.

    ``clock`` is a :class:`ClockSpec` (recovered per stream), a fixed
    :class:`ClockModel`, or any callable mapping a stream to a ClockModel.
    """
    b, hb = stream_report(before, clock, bin_width_ps)
    a, ha = stream_report(after, clock, bin_width_ps)
    ratio = {k: a[k] / b[k] for k in REPORT_FRACTIONS}
    return {"before": b, "after": a, "ratio": ratio, "histograms": (hb, ha)}


# --------------------------------------------------------------------------- files


def write_histogram_csv(hist: DelayHistogram, path: str | os.PathLike) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_start_ps", "count"])
            for start, n in zip(hist.edges[:-1], hist.counts):
                w.writerow([repr(float(start)), int(n)])
    except OSError as e:
        raise TagIOError(e.errno, f"cannot write histogram: {e.strerror}", os.fspath(path)) from e


def read_histogram_csv(path: str | os.PathLike) -> DelayHistogram:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise TagIOError(e.errno, f"cannot read histogram: {e.strerror}", os.fspath(path)) from e
    if not rows or rows[0] != ["bin_start_ps", "count"]:
        raise FormatError(f"{path}: missing 'bin_start_ps,count' header")
    try:
        starts = np.array([float(r[0]) for r in rows[1:]])
        counts = np.array([int(r[1]) for r in rows[1:]], dtype=np.uint64)
    except (ValueError, IndexError) as e:
        raise FormatError(f"{path}: malformed row ({e})") from None
    if starts.shape[0] == 0:
        raise FormatError(f"{path}: no bins")
    width = float(starts[1] - starts[0]) if starts.shape[0] > 1 else 1.0
    return DelayHistogram(width, float(starts[0]), counts)


def write_report_json(report: dict, path: str | os.PathLike) -> None:
    body = {k: report[k] for k in ("before", "after", "ratio") if k in report}
    try:
        with open(path, "w") as fh:
            json.dump(body, fh, indent=2)
            fh.write("\n")
    except OSError as e:
        raise TagIOError(e.errno, f"cannot write report: {e.strerror}", os.fspath(path)) from e
