import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snspdwalk.core import (
    FLAG_CORRECTED,
    CalibrationBin,
    CalibrationCurve,
    ConfigError,
    DelayHistogram,
    DetectorConfig,
    FormatError,
    IntegrityError,
    LaserConfig,
    TagIOError,
    TagStream,
    TimeTag,
    read_tags,
    write_tags,
)

from helpers import stream


def reference_bytes(times, channels, flags, channel_count=1):
    """Byte layout built field by field with struct, independent of the numpy dtype."""
    out = b"TTG1" + struct.pack("<HH", 1, channel_count) + bytes(8)
    for t, c, f in zip(times, channels, flags):
        out += struct.pack("<qHH", int(t), int(c), int(f)) + bytes(4)
    return out


def test_two_tag_round_trip(tmp_path):
    s = TagStream.from_tags([TimeTag(0, 0), TimeTag(1860, 0)])
    p = tmp_path / "a.ttg"
    write_tags(s, p)
    back = read_tags(p)
    assert back == s
    assert [t.time_ps for t in back] == [0, 1860]


def test_bytes_match_reference_layout(tmp_path):
    times, chans, flags = [-5, 0, 0, 2**40], [1, 0, 1, 2], [0, FLAG_CORRECTED, 2, 3]
    order = np.lexsort((chans, times))
    times, chans, flags = (np.array(a)[order] for a in (times, chans, flags))
    s = stream(times, chans, flags, channel_count=3)
    p = tmp_path / "a.ttg"
    write_tags(s, p)
    assert p.read_bytes() == reference_bytes(times, chans, flags, 3)


def test_empty_stream_is_header_only(tmp_path):
    p = tmp_path / "e.ttg"
    write_tags(stream([]), p)
    assert p.read_bytes() == reference_bytes([], [], [])
    assert len(p.read_bytes()) == 16
    assert len(read_tags(p)) == 0


def test_out_of_order_file_names_record(tmp_path):
    p = tmp_path / "bad.ttg"
    p.write_bytes(reference_bytes([100, 50], [0, 0], [0, 0]))
    with pytest.raises(IntegrityError) as e:
        read_tags(p)
    assert e.value.index == 1


def test_equal_times_need_ascending_channel(tmp_path):
    p = tmp_path / "tie.ttg"
    p.write_bytes(reference_bytes([7, 7], [1, 0], [0, 0], channel_count=2))
    with pytest.raises(IntegrityError) as e:
        read_tags(p)
    assert e.value.index == 1


def test_unordered_stream_refused_before_writing(tmp_path):
    p = tmp_path / "never.ttg"
    with pytest.raises(IntegrityError):
        write_tags(stream([100, 50]), p)
    assert not p.exists()


def test_channel_beyond_header_count_rejected(tmp_path):
    with pytest.raises(IntegrityError):
        write_tags(stream([1, 2], [0, 1], channel_count=1), tmp_path / "x.ttg")


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"TTG2" + b[4:],
        lambda b: b[:4] + struct.pack("<H", 2) + b[6:],
        lambda b: b[:8] + b"\x01" + b[9:],
        lambda b: b + b"\x00" * 3,
        lambda b: b[:10],
        lambda b: b[:16 + 12] + b"\x01" + b[16 + 13:],
    ],
    ids=["magic", "version", "reserved-header", "trailing", "truncated", "reserved-record"],
)
def test_corrupted_files_rejected(tmp_path, mutate):
    good = reference_bytes([1, 2], [0, 0], [0, 0])
    p = tmp_path / "c.ttg"
    p.write_bytes(mutate(good))
    with pytest.raises(FormatError):
        read_tags(p)


def test_reserved_flag_bits_rejected(tmp_path):
    p = tmp_path / "f.ttg"
    p.write_bytes(reference_bytes([1], [0], [0x8]))
    with pytest.raises(IntegrityError):
        read_tags(p)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(TagIOError) as e:
        read_tags(tmp_path / "nope.ttg")
    assert "nope.ttg" in str(e.value)
    assert isinstance(e.value, OSError)


def test_million_tag_round_trip(tmp_path):
    rng = np.random.default_rng(2024)
    times = np.cumsum(rng.integers(0, 5000, size=1_000_000))
    chans = rng.integers(0, 4, size=times.shape[0]).astype(np.uint16)
    order = np.lexsort((chans, times))
    s = stream(times[order], chans[order], rng.integers(0, 4, size=times.shape[0]), channel_count=4)
    p = tmp_path / "m.ttg"
    write_tags(s, p)
    assert p.stat().st_size == 16 + 16 * len(s)
    assert read_tags(p) == s
    first = p.read_bytes()
    write_tags(read_tags(p), p)
    assert p.read_bytes() == first


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-(2**62), 2**62), st.integers(0, 5), st.integers(0, 3)),
                max_size=50))
def test_round_trip_property(tmp_path_factory, rows):
    rows.sort(key=lambda r: (r[0], r[1]))
    times = [r[0] for r in rows]
    chans = [r[1] for r in rows]
    flags = [r[2] for r in rows]
    s = stream(times, chans, flags, channel_count=6)
    p = tmp_path_factory.mktemp("rt") / "p.ttg"
    write_tags(s, p)
    assert p.read_bytes() == reference_bytes(times, chans, flags, 6)
    assert read_tags(p) == s


def test_laser_config_validation():
    with pytest.raises(ConfigError):
        LaserConfig(mean_photon_number=1.0)
    with pytest.raises(ConfigError):
        LaserConfig(period_ps=0)
    las = LaserConfig(mean_photon_number=5e-4)
    assert las.pulse_probability == pytest.approx(1 - np.exp(-5e-4), rel=1e-12)
    assert las.with_photon_rate(1e6).photon_rate_cps == pytest.approx(1e6, rel=1e-12)


def test_detector_threshold_must_be_below_pulse_height():
    with pytest.raises(ConfigError) as e:
        DetectorConfig(threshold_mv=125.0)
    assert e.value.field == "detector.threshold_mv"
    assert DetectorConfig().full_latency_ps == pytest.approx(120.0)


def test_histogram_merge_and_edges():
    a = DelayHistogram(1.0, -2.0, np.array([1, 2, 3, 4]))
    b = DelayHistogram(1.0, -2.0, np.array([0, 1, 0, 1]))
    m = a.merge(b)
    assert m.total == a.total + b.total
    assert list(m.edges) == [-2, -1, 0, 1, 2]
    with pytest.raises(IntegrityError):
        a.merge(DelayHistogram(0.5, -2.0, np.zeros(4)))


def test_curve_invariants():
    bins = [CalibrationBin(100.0, 5.0, 1.0, 200), CalibrationBin(50.0, 9.0, 1.0, 200)]
    with pytest.raises(IntegrityError):
        CalibrationCurve(1860.0, 0.0, tuple(bins), 100)
    with pytest.raises(IntegrityError):
        CalibrationCurve(1860.0, 0.0, (CalibrationBin(1.0, 0.0, 0.0, 5),), 100)
