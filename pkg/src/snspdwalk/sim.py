"""Monte Carlo model of an attenuated pulsed laser feeding an SNSPD readout.

The detector model is deliberately simple so that its time walk has a
closed form (:func:`analytic_walk`), which the calibration tests use as an
oracle:

* amplitude follows the bias-current recovery, ``A = A_max * (1 - exp(-dt/tau_bias))``
* the rising edge is a linear ramp of fixed duration, so a comparator at
  ``V_th`` fires ``rise_time * V_th / A`` after the edge starts
* a single high-pass pole in the readout leaves a negative tail after every
  pulse; an edge starting on that tail crosses threshold later
* detection efficiency scales as ``eta_max * r**p`` with ``r`` the recovered
  bias fraction
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import kernels
from .core import (
    FLAG_SYNTHETIC,
    ConfigError,
    DetectorConfig,
    LaserConfig,
    TagIOError,
    TagStream,
    sort_tags,
)


@dataclass(frozen=True, eq=False)
class PhotonTimes:
    """Photon arrivals on the laser pulse grid.

    ``pulse_index[i]`` is the laser pulse that carried photon ``i``;
    ``times`` is its arrival rounded to the nearest ps.
    """

    pulse_index: np.ndarray
    laser: LaserConfig

    @property
    def exact_times(self) -> np.ndarray:
        return self.laser.phase_ps + self.pulse_index * self.laser.period_ps

    @property
    def times(self) -> np.ndarray:
        return np.floor(self.exact_times + 0.5).astype(np.int64)

    def __len__(self) -> int:
        return self.pulse_index.shape[0]


@dataclass(frozen=True, eq=False)
class Detections:
    """Emitted events before rounding, with their source photon and pulse height."""

    tag_times_ps: np.ndarray
    photon_index: np.ndarray
    amplitude_mv: np.ndarray
    photons: PhotonTimes

    def to_stream(self) -> TagStream:
        times = np.floor(self.tag_times_ps + 0.5).astype(np.int64)
        chans = np.zeros(times.shape[0], np.uint16)
        flags = np.full(times.shape[0], FLAG_SYNTHETIC, np.uint16)
        times, chans, flags, _ = sort_tags(times, chans, flags)
        return TagStream(times, chans, flags)


def generate_photons(laser: LaserConfig, seed) -> PhotonTimes:
    """Thin the pulse train independently with ``p = 1 - exp(-mu)`` per pulse.

    Gaps between occupied pulses are drawn as geometric variates, which is
    the same distribution as a Bernoulli trial on every pulse without
    touching the empty ones.
    """
    rng = np.random.default_rng(seed)
    p = laser.pulse_probability
    n_pulses = math.ceil(laser.duration_ps / laser.period_ps)
    expected = n_pulses * p
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    parts = []
    last = -1
    while True:
        idx = last + np.cumsum(rng.geometric(p, size=chunk))
        parts.append(idx)
        last = int(idx[-1])
        if last >= n_pulses:
            break
        chunk = max(chunk // 4, 16)
    idx = np.concatenate(parts)
    idx = idx[idx < n_pulses]
    return PhotonTimes(idx.astype(np.int64), laser)


def recovered_fraction(dt_ps, det: DetectorConfig):
    """Fraction of the bias current restored ``dt_ps`` after a detection."""
    dt = np.asarray(dt_ps, dtype=np.float64)
    if np.any(dt <= 0):
        raise ConfigError("must be > 0", "dt_ps")
    r = -np.expm1(-dt / det.tau_bias_ps)
    return float(r) if r.ndim == 0 else r


def no_trigger_gap_ps(det: DetectorConfig) -> float:
    """Largest gap for which the recovered pulse cannot reach threshold."""
    return -det.tau_bias_ps * math.log1p(-det.threshold_mv / det.pulse_height_mv)


def analytic_walk(dt_ps: float, det: DetectorConfig) -> float | None:
    """Extra crossing latency relative to a full pulse, or None if no trigger."""
    amp = det.pulse_height_mv * recovered_fraction(dt_ps, det)
    if amp <= det.threshold_mv:
        return None
    return det.rise_time_ps * det.threshold_mv * (1.0 / amp - 1.0 / det.pulse_height_mv)


def analytic_walk_array(dt_ps, det: DetectorConfig) -> np.ndarray:
    """Vectorised :func:`analytic_walk`; NaN marks no-trigger gaps."""
    amp = det.pulse_height_mv * np.atleast_1d(recovered_fraction(dt_ps, det))
    with np.errstate(divide="ignore"):
        w = det.rise_time_ps * det.threshold_mv * (1.0 / amp - 1.0 / det.pulse_height_mv)
    return np.where(amp > det.threshold_mv, w, np.nan)


def undershoot_mv(x_ps: float, amplitude_mv: float, det: DetectorConfig) -> float:
    """Closed-form high-passed voltage ``x_ps`` after a pulse edge started."""
    return kernels.undershoot(
        float(x_ps), float(amplitude_mv), det.rise_time_ps, det.tau_rf_ps, det.highpass_tau_ps
    )


def detect_events(photons: PhotonTimes, det: DetectorConfig, seed) -> Detections:
    rng = np.random.default_rng(seed)
    n = len(photons)
    u = rng.random(n)
    if det.intrinsic_jitter_sigma_ps > 0:
        z = rng.standard_normal(n)
    else:
        z = np.zeros(n)
    t, idx, amp = kernels.detect_loop(
        photons.exact_times, u, z,
        det.tau_bias_ps, det.tau_rf_ps, det.rise_time_ps, det.pulse_height_mv,
        det.threshold_mv, det.highpass_tau_ps, det.intrinsic_jitter_sigma_ps,
        det.efficiency_max, det.efficiency_exponent, det.holdoff,
    )
    return Detections(t, idx, amp, photons)


def detect(photons: PhotonTimes, det: DetectorConfig, seed) -> TagStream:
    """Run the detector model and return the sorted, rounded tag stream."""
    return detect_events(photons, det, seed).to_stream()


def simulate(laser: LaserConfig, det: DetectorConfig, seed) -> TagStream:
    """Photon generation plus detection from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_photons, s_detect = ss.spawn(2)
    return detect(generate_photons(laser, s_photons), det, s_detect)


@dataclass(frozen=True, eq=False)
class WaveformTrace:
    sample_period_ps: float
    samples: np.ndarray
    epoch_ps: float

    @property
    def times(self) -> np.ndarray:
        return self.epoch_ps + self.sample_period_ps * np.arange(self.samples.shape[0])

    def integral(self) -> float:
        """Rectangle-rule time integral in mV*ps."""
        return float(self.samples.sum() * self.sample_period_ps)


def pulse_area(amplitude_mv: float, det: DetectorConfig) -> float:
    """Area of one unfiltered pulse in mV*ps."""
    return amplitude_mv * (det.rise_time_ps / 2 + det.tau_rf_ps)


def waveform_trace(
    detections: Sequence[tuple[float, float]],
    det: DetectorConfig,
    span: tuple[float, float],
    sample_period_ps: float = 1.0,
) -> WaveformTrace:
    """Sampled readout voltage for a list of (edge start time, amplitude).

    Pulses are superposed unfiltered and then run through a discrete RC
    high-pass, so this is an independent route to the closed-form
    :func:`undershoot_mv`.
    """
    from scipy.signal import lfilter

    start, stop = float(span[0]), float(span[1])
    if not stop > start:
        return WaveformTrace(sample_period_ps, np.zeros(0), start)
    dts = sample_period_ps
    h = det.highpass_tau_ps
    memory = 50.0 * max(det.tau_rf_ps, h) + det.rise_time_ps
    det_arr = np.asarray(detections, dtype=np.float64).reshape(-1, 2)
    det_arr = det_arr[(det_arr[:, 0] >= start - memory) & (det_arr[:, 0] < stop)]

    lead = 0
    if det_arr.shape[0]:
        lead = max(0, math.ceil((start - det_arr[:, 0].min()) / dts))
    t0 = start - lead * dts
    n = lead + math.ceil((stop - start) / dts)
    x = np.zeros(n)
    for te, amp in det_arr:
        j0 = max(0, math.ceil((te - t0) / dts))
        j1 = min(n, math.ceil((te + memory - t0) / dts))
        if j0 >= j1:
            continue
        tau = t0 + dts * np.arange(j0, j1) - te
        x[j0:j1] += np.where(
            tau < det.rise_time_ps,
            amp * tau / det.rise_time_ps,
            amp * np.exp(-(tau - det.rise_time_ps) / det.tau_rf_ps),
        )
    if h > 0:
        alpha = h / (h + dts)
        x = lfilter([alpha, -alpha], [1.0, -alpha], x)
    return WaveformTrace(sample_period_ps, x[lead:], start)


# --------------------------------------------------------------------------- MCR


@dataclass(frozen=True, eq=False)
class MCRSweep:
    incident_cps: np.ndarray
    detected_cps: np.ndarray
    normalized_efficiency: np.ndarray
    three_db_incident_cps: float | None
    three_db_detected_cps: float | None


def three_db_crossing(x: np.ndarray, eff: np.ndarray) -> float | None:
    """First ``x`` where ``eff`` falls to 0.5, linearly interpolated."""
    below = np.nonzero(eff <= 0.5)[0]
    if below.size == 0:
        return None
    j = int(below[0])
    if j == 0:
        return float(x[0])
    x0, x1, e0, e1 = x[j - 1], x[j], eff[j - 1], eff[j]
    return float(x0 + (e0 - 0.5) / (e0 - e1) * (x1 - x0))


def mcr_sweep(
    laser: LaserConfig,
    det: DetectorConfig,
    photon_rates: Sequence[float],
    seed,
    target_photons: int | None = 200_000,
) -> MCRSweep:
    """Detected rate and normalised efficiency versus incident photon rate.

    Each point uses ``laser`` with its mean photon number adjusted to the
    requested rate; with ``target_photons`` set, the duration is scaled so
    every point sees about that many photons.
    """
    rates = np.asarray(photon_rates, dtype=np.float64)
    if rates.shape[0] < 2:
        raise ConfigError("need at least two rates", "photon_rates")
    if np.any(rates <= 0) or np.any(np.diff(rates) <= 0):
        raise ConfigError("rates must be positive and ascending", "photon_rates")
    detected = np.empty_like(rates)
    seeds = np.random.SeedSequence(seed).spawn(rates.shape[0])
    for i, (rate, ss) in enumerate(zip(rates, seeds)):
        cfg = laser.with_photon_rate(rate)
        if target_photons:
            cfg = dataclasses.replace(cfg, duration_ps=max(1, int(target_photons / rate * 1e12)))
        tags = simulate(cfg, det, ss)
        detected[i] = len(tags) / (cfg.duration_ps * 1e-12)
    eff = detected / rates
    eff = eff / eff[0]
    x3 = three_db_crossing(rates, eff)
    d3 = None if x3 is None else float(np.interp(x3, rates, detected))
    return MCRSweep(rates, detected, eff, x3, d3)


# --------------------------------------------------------------------------- config file

_SECTIONS = {"laser": LaserConfig, "detector": DetectorConfig}


def _coerce(section: str, name: str, value: Any, ftype: Any):
    path = f"{section}.{name}"
    if ftype in (bool, "bool"):
        if not isinstance(value, bool):
            raise ConfigError("expected true/false", path)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {type(value).__name__}", path)
    if ftype in (int, "int"):
        if float(value) != int(value):
            raise ConfigError("expected an integer", path)
        return int(value)
    return float(value)


def config_from_dict(data: dict) -> tuple[LaserConfig, DetectorConfig]:
    """Build configs from ``{"laser": {...}, "detector": {...}}``; unknown keys rejected."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", "$")
    extra = set(data) - set(_SECTIONS)
    if extra:
        raise ConfigError("unknown key", sorted(extra)[0])
    out = []
    for section, cls in _SECTIONS.items():
        body = data.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError("must be an object", section)
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(body) - set(fields)
        if unknown:
            raise ConfigError("unknown key", f"{section}.{sorted(unknown)[0]}")
        kwargs = {k: _coerce(section, k, v, fields[k]) for k, v in body.items()}
        out.append(cls(**kwargs))
    return out[0], out[1]


def config_to_dict(laser: LaserConfig, det: DetectorConfig) -> dict:
    return {"laser": dataclasses.asdict(laser), "detector": dataclasses.asdict(det)}


def load_config(path: str | os.PathLike) -> tuple[LaserConfig, DetectorConfig]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as e:
        raise TagIOError(e.errno, f"cannot read config: {e.strerror}", os.fspath(path)) from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}", os.fspath(path)) from e
    return config_from_dict(data)
