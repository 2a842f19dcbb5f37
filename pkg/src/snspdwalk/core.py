"""Shared domain types, error classes and the TTG1 binary tag file format.

A TTG1 file is a 16-byte header followed by fixed 16-byte records::

    header : b"TTG1" | version u16 LE | channel_count u16 LE | 8 zero bytes
    record : time_ps i64 LE | channel u16 LE | flags u16 LE | 4 zero bytes

Tag streams are held column-wise as numpy arrays; a single ``TimeTag`` is
only materialised on indexing.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

MAGIC = b"TTG1"
FORMAT_VERSION = 1
HEADER_SIZE = 16
RECORD_SIZE = 16

FLAG_CORRECTED = 0x1
FLAG_SYNTHETIC = 0x2
_FLAG_RESERVED = 0xFFFF & ~(FLAG_CORRECTED | FLAG_SYNTHETIC)

_HEADER = struct.Struct("<4sHH8s")
RECORD_DTYPE = np.dtype(
    [("time_ps", "<i8"), ("channel", "<u2"), ("flags", "<u2"), ("reserved", "<u4")]
)


class WalkError(Exception):
    """Base class for all toolkit errors."""


class FormatError(WalkError):
    """Malformed file: bad magic, unsupported version, bad layout."""


class IntegrityError(WalkError):
    """Data violates an ordering or consistency invariant."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConfigError(WalkError, ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class StatisticsError(WalkError):
    """Not enough data to compute the requested quantity."""


class DomainError(WalkError, ValueError):
    """Argument outside the mathematical domain of a function."""


class TagIOError(WalkError, OSError):
    """I/O failure while reading or writing a file, carrying the path."""


@dataclass(frozen=True)
class TimeTag:
    time_ps: int
    channel: int = 0
    flags: int = 0

    @property
    def corrected(self) -> bool:
        return bool(self.flags & FLAG_CORRECTED)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TagStream:
    """Time-ordered detection events, stored as parallel arrays.

    Construction does not validate ordering (it is O(n) and the simulator
    sorts anyway); call :meth:`validate` or :func:`check_order` when the
    source is untrusted.  ``read_tags``/``write_tags`` always validate.
    """

    times: np.ndarray
    channels: np.ndarray = None  # type: ignore[assignment]
    flags: np.ndarray = None  # type: ignore[assignment]
    channel_count: int = 1
    version: int = FORMAT_VERSION

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.int64)
        n = times.shape[0]
        chans = self.channels
        chans = np.zeros(n, np.uint16) if chans is None else np.ascontiguousarray(chans, dtype=np.uint16)
        flags = self.flags
        flags = np.zeros(n, np.uint16) if flags is None else np.ascontiguousarray(flags, dtype=np.uint16)
        if times.ndim != 1 or chans.shape != times.shape or flags.shape != times.shape:
            raise IntegrityError("times, channels and flags must be 1-D arrays of equal length")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "channels", _frozen(chans))
        object.__setattr__(self, "flags", _frozen(flags))

    @classmethod
    def from_tags(cls, tags: Sequence[TimeTag], channel_count: int = 1) -> "TagStream":
        return cls(
            np.array([t.time_ps for t in tags], dtype=np.int64),
            np.array([t.channel for t in tags], dtype=np.uint16),
            np.array([t.flags for t in tags], dtype=np.uint16),
            channel_count=channel_count,
        )

    def __len__(self) -> int:
        return self.times.shape[0]

    def __getitem__(self, i: int) -> TimeTag:
        return TimeTag(int(self.times[i]), int(self.channels[i]), int(self.flags[i]))

    def __iter__(self) -> Iterator[TimeTag]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.channel_count == other.channel_count
            and self.version == other.version
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.flags, other.flags)
        )

    __hash__ = None  # type: ignore[assignment]

    def channel_mask(self, channel: int) -> np.ndarray:
        return self.channels == channel

    def validate(self) -> None:
        check_order(self.times, self.channels)
        if len(self) and int(self.channels.max()) >= self.channel_count:
            bad = int(np.argmax(self.channels >= self.channel_count))
            raise IntegrityError(
                f"record {bad}: channel {int(self.channels[bad])} >= channel_count {self.channel_count}",
                index=bad,
            )
        if len(self) and np.any(self.flags & _FLAG_RESERVED):
            bad = int(np.argmax(self.flags & _FLAG_RESERVED))
            raise IntegrityError(f"record {bad}: reserved flag bits set", index=bad)


def check_order(times: np.ndarray, channels: np.ndarray | None = None) -> None:
    """Raise IntegrityError at the first record breaking (time, channel) order."""
    if times.shape[0] < 2:
        return
    dt = np.diff(times)
    bad = dt < 0
    if channels is not None:
        bad |= (dt == 0) & (np.diff(channels.astype(np.int32)) < 0)
    if bad.any():
        i = int(np.argmax(bad)) + 1
        raise IntegrityError(
            f"record {i}: ordering violation (time {int(times[i])} after {int(times[i - 1])})",
            index=i,
        )


def sort_tags(times: np.ndarray, channels: np.ndarray, flags: np.ndarray):
    """Stable sort by (time, channel); returns the permuted arrays and the
    number of positions that were out of order."""
    order = np.lexsort((channels, times))
    moved = int(np.count_nonzero(order != np.arange(order.shape[0])))
    return times[order], channels[order], flags[order], moved


@dataclass(frozen=True)
class LaserConfig:
    """Attenuated pulsed source.  One photon at most per pulse."""

    period_ps: float = 1e12 / 537.5e6
    mean_photon_number: float = 0.005
    duration_ps: int = 100_000_000_000
    phase_ps: float = 0.0

    def __post_init__(self):
        if not self.period_ps > 0:
            raise ConfigError("must be > 0", "laser.period_ps")
        if not 0 < self.mean_photon_number < 1:
            raise ConfigError("must lie in (0, 1)", "laser.mean_photon_number")
        if int(self.duration_ps) <= 0:
            raise ConfigError("must be > 0", "laser.duration_ps")
        if not self.phase_ps >= 0:
            raise ConfigError("must be >= 0", "laser.phase_ps")

    @property
    def pulse_probability(self) -> float:
        return -float(np.expm1(-self.mean_photon_number))

    @property
    def photon_rate_cps(self) -> float:
        return self.pulse_probability / self.period_ps * 1e12

    def with_photon_rate(self, rate_cps: float) -> "LaserConfig":
        """Copy with ``mean_photon_number`` set to give ``rate_cps`` photons/s."""
        p = rate_cps * self.period_ps * 1e-12
        if not 0 < p < 1:
            raise ConfigError(f"photon rate {rate_cps:g} cps unreachable at this period", "photon_rate_cps")
        return LaserConfig(self.period_ps, -float(np.log1p(-p)), self.duration_ps, self.phase_ps)


@dataclass(frozen=True)
class DetectorConfig:
    """Nanowire + readout chain parameters.  Times in ps, voltages in mV."""

    tau_bias_ps: float = 40_000.0
    tau_rf_ps: float = 5_000.0
    rise_time_ps: float = 300.0
    pulse_height_mv: float = 125.0
    threshold_mv: float = 50.0
    highpass_cuton_hz: float = 80e6
    intrinsic_jitter_sigma_ps: float = 21.0
    efficiency_max: float = 0.9
    efficiency_exponent: float = 4.0
    holdoff: bool = True

    def __post_init__(self):
        for name in ("tau_bias_ps", "tau_rf_ps", "rise_time_ps", "pulse_height_mv",
                     "threshold_mv", "efficiency_exponent"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", f"detector.{name}")
        for name in ("highpass_cuton_hz", "intrinsic_jitter_sigma_ps"):
            if not getattr(self, name) >= 0:
                raise ConfigError("must be >= 0", f"detector.{name}")
        if not 0 < self.efficiency_max <= 1:
            raise ConfigError("must lie in (0, 1]", "detector.efficiency_max")
        if not self.threshold_mv < self.pulse_height_mv:
            raise ConfigError("threshold must be below pulse height", "detector.threshold_mv")

    @property
    def full_latency_ps(self) -> float:
        """Threshold-crossing latency of a fully reset pulse."""
        return self.rise_time_ps * self.threshold_mv / self.pulse_height_mv

    @property
    def highpass_tau_ps(self) -> float:
        """Time constant of the readout high-pass pole (0 when disabled)."""
        if self.highpass_cuton_hz == 0:
            return 0.0
        return 1e12 / (2 * np.pi * self.highpass_cuton_hz)


@dataclass(frozen=True)
class DelayHistogram:
    """Fixed-width histogram; bin ``i`` covers ``(origin + i*w, origin + (i+1)*w]``."""

    bin_width_ps: float
    origin_ps: float
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.uint64)
        if counts.ndim != 1 or counts.shape[0] < 1:
            raise ConfigError("histogram needs at least one bin", "counts")
        if not self.bin_width_ps > 0:
            raise ConfigError("must be > 0", "bin_width_ps")
        object.__setattr__(self, "counts", _frozen(counts))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def edges(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.counts.shape[0] + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * (np.arange(self.counts.shape[0]) + 0.5)

    def merge(self, other: "DelayHistogram") -> "DelayHistogram":
        if (other.bin_width_ps, other.origin_ps, other.counts.shape) != (
            self.bin_width_ps, self.origin_ps, self.counts.shape
        ):
            raise IntegrityError("cannot merge histograms with different binning")
        return DelayHistogram(self.bin_width_ps, self.origin_ps, self.counts + other.counts)


@dataclass(frozen=True)
class WidthMetrics:
    fwhm_ps: float
    fw10m_ps: float
    fw1m_ps: float
    peak_position_ps: float
    total_counts: int


@dataclass(frozen=True)
class CalibrationBin:
    t_prime_ps: float
    d_med_ps: float
    d_fwhm_ps: float
    n_samples: int


@dataclass(frozen=True)
class CalibrationCurve:
    laser_period_ps: float
    baseline_ps: float
    bins: tuple[CalibrationBin, ...]
    min_samples: int

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(self.bins))
        tp = self.t_prime
        if tp.shape[0] > 1 and np.any(np.diff(tp) <= 0):
            i = int(np.argmax(np.diff(tp) <= 0)) + 1
            raise IntegrityError(f"bins[{i}].t_prime_ps: bins must be strictly increasing", index=i)
        for i, b in enumerate(self.bins):
            if b.n_samples < self.min_samples:
                raise IntegrityError(f"bins[{i}].n_samples: {b.n_samples} < min_samples {self.min_samples}", index=i)

    @property
    def t_prime(self) -> np.ndarray:
        return np.array([b.t_prime_ps for b in self.bins], dtype=np.float64)

    @property
    def d_med(self) -> np.ndarray:
        return np.array([b.d_med_ps for b in self.bins], dtype=np.float64)

    @property
    def d_fwhm(self) -> np.ndarray:
        return np.array([b.d_fwhm_ps for b in self.bins], dtype=np.float64)


# --------------------------------------------------------------------------- I/O


def write_tags(stream: TagStream, path: str | os.PathLike) -> None:
    """Write ``stream`` as TTG1.  Invariants are checked before the file is opened."""
    stream.validate()
    if stream.channel_count > 0xFFFF or stream.channel_count < 1:
        raise IntegrityError(f"channel_count {stream.channel_count} out of range")
    rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
    rec["time_ps"] = stream.times
    rec["channel"] = stream.channels
    rec["flags"] = stream.flags
    header = _HEADER.pack(MAGIC, stream.version, stream.channel_count, bytes(8))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rec.tobytes())
    except OSError as e:
        raise TagIOError(e.errno, f"cannot write tag file: {e.strerror}", os.fspath(path)) from e


def read_tags(path: str | os.PathLike) -> TagStream:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise TagIOError(e.errno, f"cannot read tag file: {e.strerror}", os.fspath(path)) from e
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, channel_count, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if reserved != bytes(8):
        raise FormatError(f"{path}: nonzero reserved header bytes")
    body = len(raw) - HEADER_SIZE
    if body % RECORD_SIZE:
        raise FormatError(f"{path}: {body % RECORD_SIZE} trailing bytes after last record")
    rec = np.frombuffer(raw, dtype=RECORD_DTYPE, offset=HEADER_SIZE)
    if rec.shape[0] and np.any(rec["reserved"]):
        i = int(np.argmax(rec["reserved"] != 0))
        raise FormatError(f"{path}: record {i} has nonzero reserved bytes")
    stream = TagStream(
        rec["time_ps"].copy(), rec["channel"].copy(), rec["flags"].copy(),
        channel_count=channel_count, version=version,
    )
    stream.validate()
    return stream
