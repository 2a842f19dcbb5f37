"""Time-walk calibration: median delay of the second event of each pair
versus the number of laser periods separating the pair."""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass

import jsonschema
import numpy as np

from .clock import ClockModel
from .core import (
    CalibrationBin,
    CalibrationCurve,
    ConfigError,
    DelayHistogram,
    FormatError,
    IntegrityError,
    StatisticsError,
    TagIOError,
    TagStream,
)
from .metrics import histogram_window, width_at_fraction

CURVE_VERSION = 1


class InsufficientStatisticsError(StatisticsError):
    def __init__(self, best_n: int | None, best_count: int, min_samples: int):
        super().__init__(
            f"no pair separation reaches {min_samples} samples "
            f"(best populated: n={best_n} with {best_count})"
        )
        self.best_n = best_n
        self.best_count = best_count


class NoBaselineError(StatisticsError):
    pass


class WrapRiskWarning(UserWarning):
    """Delay distribution reaches the edge of the +-period/2 window."""


@dataclass(frozen=True)
class PairRecord:
    n: int
    t_prime_ps: float
    d_ps: float


@dataclass(frozen=True, eq=False)
class Pairs:
    """Columnar PairRecords plus the clock period that defines ``t_prime``."""

    n: np.ndarray
    d_ps: np.ndarray
    period_ps: float
    dropped_same_tick: int = 0

    @property
    def t_prime_ps(self) -> np.ndarray:
        return self.n * self.period_ps

    def __len__(self) -> int:
        return self.n.shape[0]

    def __getitem__(self, i: int) -> PairRecord:
        return PairRecord(int(self.n[i]), float(self.n[i] * self.period_ps), float(self.d_ps[i]))


def extract_pairs(tags: TagStream, clock: ClockModel, start: int = 0) -> Pairs:
    """Adjacent same-channel tag pairs: tick separation and second residual.

    Pairs whose second tag has stream index below ``start`` are skipped
    (clock convergence window).
    """
    if len(clock) != len(tags):
        raise IntegrityError(f"clock covers {len(clock)} tags, stream has {len(tags)}")
    ns, ds = [], []
    for ch in np.unique(tags.channels):
        sel = np.nonzero(tags.channels == ch)[0]
        if sel.shape[0] < 2:
            continue
        second = sel[1:] >= start
        ns.append(np.diff(clock.ticks[sel])[second])
        ds.append(clock.residuals_ps[sel[1:]][second])
    n = np.concatenate(ns) if ns else np.zeros(0, np.int64)
    d = np.concatenate(ds) if ds else np.zeros(0)
    if np.any(n < 0):
        raise IntegrityError("clock ticks decrease along the stream", index=int(np.argmax(n < 0)) + 1)
    keep = n > 0
    return Pairs(n[keep], d[keep], clock.period_ps, int(np.count_nonzero(~keep)))


def _median_from_rows(counts: np.ndarray, origin: float, width: float) -> np.ndarray:
    """Histogram median per row, linear inside the median bin."""
    cum = np.cumsum(counts, axis=1)
    total = cum[:, -1].astype(np.float64)
    half = total / 2
    j = np.argmax(cum >= half[:, None], axis=1)
    rows = np.arange(counts.shape[0])
    prev = np.where(j > 0, cum[rows, np.maximum(j - 1, 0)], 0).astype(np.float64)
    inbin = counts[rows, j].astype(np.float64)
    return origin + width * (j + (half - prev) / inbin)


def build_curve(
    pairs: Pairs,
    bin_width_ps: float = 1.0,
    min_samples: int = 100,
    baseline_tprime_ps: float = 500_000.0,
    max_tprime_ps: float | None = None,
) -> CalibrationCurve:
    """Median delay and its FWHM per pair separation, baseline-subtracted.

    Separations with fewer than ``min_samples`` pairs are left out.  The
    baseline is the mean median over retained separations at or beyond
    ``baseline_tprime_ps``; it is subtracted so the curve tends to zero.
    """
    if not bin_width_ps > 0:
        raise ConfigError("must be > 0", "bin_width_ps")
    if len(pairs) == 0:
        raise InsufficientStatisticsError(None, 0, min_samples)
    n, d = pairs.n, pairs.d_ps
    if max_tprime_ps is not None:
        sel = n * pairs.period_ps <= max_tprime_ps
        n, d = n[sel], d[sel]
    uniq, cnt = np.unique(n, return_counts=True)
    admitted = uniq[cnt >= min_samples]
    if admitted.shape[0] == 0:
        best = int(np.argmax(cnt)) if cnt.shape[0] else None
        raise InsufficientStatisticsError(
            None if best is None else int(uniq[best]), 0 if best is None else int(cnt[best]), min_samples
        )
    tprime = admitted * pairs.period_ps
    if not np.any(tprime >= baseline_tprime_ps):
        raise NoBaselineError(
            f"no calibrated separation at or beyond {baseline_tprime_ps:g} ps "
            f"(largest is {tprime[-1]:g} ps)"
        )

    g = np.searchsorted(admitted, n)
    sel = (g < admitted.shape[0]) & (admitted[np.minimum(g, admitted.shape[0] - 1)] == n)
    g, dsel = g[sel], d[sel]
    template = histogram_window(np.zeros(0), pairs.period_ps, bin_width_ps)
    nbins = template.counts.shape[0]
    origin = template.origin_ps
    b = np.clip(np.ceil((dsel - origin) / bin_width_ps).astype(np.int64) - 1, 0, nbins - 1)
    counts = np.bincount(g * nbins + b, minlength=admitted.shape[0] * nbins).reshape(-1, nbins)

    med = _median_from_rows(counts, origin, bin_width_ps)
    fwhm = np.array([
        width_at_fraction(DelayHistogram(bin_width_ps, origin, row), 0.5, smooth=False)
        for row in counts
    ])

    edge = max(1, int(math.ceil(0.05 * nbins)))
    outer = counts[:, :edge].sum(axis=1) + counts[:, -edge:].sum(axis=1)
    risky = outer > 0.01 * counts.sum(axis=1)
    if np.any(risky):
        warnings.warn(
            f"{int(risky.sum())} separations have >1% of delays in the outer 5% of the "
            f"window (first n={int(admitted[np.argmax(risky)])}); delays may wrap",
            WrapRiskWarning,
            stacklevel=2,
        )

    baseline = float(med[tprime >= baseline_tprime_ps].mean())
    bins = tuple(
        CalibrationBin(float(tp), float(m - baseline), float(w), int(c))
        for tp, m, w, c in zip(tprime, med, fwhm, counts.sum(axis=1))
    )
    return CalibrationCurve(float(pairs.period_ps), baseline, bins, int(min_samples))


# --------------------------------------------------------------------------- curve file

CURVE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "laser_period_ps", "baseline_ps", "min_samples", "bins"],
    "properties": {
        "version": {"const": CURVE_VERSION},
        "laser_period_ps": {"type": "number", "exclusiveMinimum": 0},
        "baseline_ps": {"type": "number"},
        "min_samples": {"type": "integer", "minimum": 0},
        "bins": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["t_prime_ps", "d_med_ps", "d_fwhm_ps", "n_samples"],
                "properties": {
                    "t_prime_ps": {"type": "number", "exclusiveMinimum": 0},
                    "d_med_ps": {"type": "number"},
                    "d_fwhm_ps": {"type": "number", "minimum": 0},
                    "n_samples": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
}


def curve_to_dict(curve: CalibrationCurve) -> dict:
    return {
        "version": CURVE_VERSION,
        "laser_period_ps": curve.laser_period_ps,
        "baseline_ps": curve.baseline_ps,
        "min_samples": curve.min_samples,
        "bins": [
            {"t_prime_ps": b.t_prime_ps, "d_med_ps": b.d_med_ps,
             "d_fwhm_ps": b.d_fwhm_ps, "n_samples": b.n_samples}
            for b in curve.bins
        ],
    }


def curve_from_dict(data) -> CalibrationCurve:
    try:
        jsonschema.validate(data, CURVE_SCHEMA)
    except jsonschema.ValidationError as e:
        raise FormatError(f"curve file {e.json_path}: {e.message}") from None
    bins = [CalibrationBin(float(b["t_prime_ps"]), float(b["d_med_ps"]),
                           float(b["d_fwhm_ps"]), int(b["n_samples"])) for b in data["bins"]]
    try:
        return CalibrationCurve(float(data["laser_period_ps"]), float(data["baseline_ps"]),
                                tuple(bins), int(data["min_samples"]))
    except IntegrityError as e:
        raise FormatError(f"curve file $.{e}") from None


def dumps_curve(curve: CalibrationCurve) -> str:
    return json.dumps(curve_to_dict(curve), indent=2) + "\n"


def write_curve(curve: CalibrationCurve, path: str | os.PathLike) -> None:
    text = dumps_curve(curve)
    curve_from_dict(json.loads(text))
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise TagIOError(e.errno, f"cannot write curve: {e.strerror}", os.fspath(path)) from e


def read_curve(path: str | os.PathLike) -> CalibrationCurve:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise TagIOError(e.errno, f"cannot read curve: {e.strerror}", os.fspath(path)) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None
    return curve_from_dict(data)
