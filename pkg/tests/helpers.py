"""Shared constructors for the test modules."""

import numpy as np

from snspdwalk.core import LaserConfig, TagStream

PERIOD_PS = 1e12 / 537.5e6


def stream(times, channels=None, flags=None, channel_count=1):
    times = np.asarray(times, dtype=np.int64)
    if channels is None:
        channels = np.zeros(times.shape[0], np.uint16)
    if flags is None:
        flags = np.zeros(times.shape[0], np.uint16)
    return TagStream(times, np.asarray(channels, np.uint16), np.asarray(flags, np.uint16),
                     channel_count=channel_count)


def laser_at(rate_cps, seconds, period_ps=PERIOD_PS):
    return LaserConfig(period_ps=period_ps, duration_ps=int(seconds * 1e12)).with_photon_rate(rate_cps)
