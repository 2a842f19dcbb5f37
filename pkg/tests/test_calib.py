import json
import warnings

import numpy as np
import pytest
from scipy import stats

from snspdwalk import calib, clock, sim
from snspdwalk.core import CalibrationBin, CalibrationCurve, DetectorConfig, FormatError

from helpers import PERIOD_PS, laser_at, stream


@pytest.fixture(scope="module")
def jitterless():
    det = DetectorConfig(intrinsic_jitter_sigma_ps=0.0, highpass_cuton_hz=0.0)
    tags = sim.simulate(laser_at(8e6, 0.4), det, 31)
    return det, tags, clock.ideal_clock(tags, PERIOD_PS, 0.0)


@pytest.fixture(scope="module")
def noisy():
    det = DetectorConfig(highpass_cuton_hz=0.0)
    tags = sim.simulate(laser_at(8e6, 0.6), det, 10)
    model = clock.ideal_clock(tags, PERIOD_PS, 0.0)
    return det, calib.build_curve(calib.extract_pairs(tags, model))


@pytest.fixture(scope="module")
def default_curve():
    tags = sim.simulate(laser_at(8e6, 0.6), DetectorConfig(), 6)
    model = clock.ideal_clock(tags, PERIOD_PS, 0.0)
    return calib.build_curve(calib.extract_pairs(tags, model))


def test_pair_from_two_ticks():
    tags = stream([0, 5 * 1860 + 5])
    pairs = calib.extract_pairs(tags, clock.ideal_clock(tags, 1860.0))
    assert len(pairs) == 1
    assert pairs[0] == calib.PairRecord(5, 9300.0, 5.0)


def test_single_tag_no_pairs():
    tags = stream([42])
    assert len(calib.extract_pairs(tags, clock.ideal_clock(tags, 1860.0))) == 0


def test_pairs_are_per_channel():
    tags = stream([0, 10, 1860, 1870], channels=[0, 1, 0, 1], channel_count=2)
    pairs = calib.extract_pairs(tags, clock.ideal_clock(tags, 1860.0))
    assert sorted(pairs.n.tolist()) == [1, 1]
    assert sorted(pairs.d_ps.tolist()) == [0.0, 10.0]


def test_same_tick_pairs_counted_and_dropped():
    tags = stream([0, 3, 1860])
    pairs = calib.extract_pairs(tags, clock.ideal_clock(tags, 1860.0))
    assert pairs.dropped_same_tick == 1
    assert pairs.n.tolist() == [1]


def test_clock_length_mismatch():
    with pytest.raises(calib.IntegrityError):
        calib.extract_pairs(stream([0, 1]), clock.ideal_clock(stream([0]), 1860.0))


def test_jitterless_pairs_match_oracle(jitterless):
    det, tags, model = jitterless
    pairs = calib.extract_pairs(tags, model)
    expected = det.full_latency_ps + sim.analytic_walk_array(pairs.n * PERIOD_PS, det)
    assert np.all(np.isfinite(expected))
    assert np.max(np.abs(pairs.d_ps - expected)) <= 0.5 + 1e-4  # float ulp at ~1e11 ps
    assert np.all(np.abs(pairs.t_prime_ps - pairs.n * PERIOD_PS) <= 0.5)


def test_degenerate_distribution():
    n = np.array([10] * 200 + [300] * 200 + [400] * 200)
    d = np.array([100.0] * 200 + [0.0] * 400)
    curve = calib.build_curve(calib.Pairs(n, d, PERIOD_PS))
    first = curve.bins[0]
    assert first.t_prime_ps == pytest.approx(10 * PERIOD_PS)
    assert first.d_med_ps == pytest.approx(100.0, abs=1e-9)
    assert first.d_fwhm_ps == pytest.approx(1.0)
    assert [b.n_samples for b in curve.bins] == [200, 200, 200]


def test_jitterless_curve_recovers_walk(jitterless):
    det, tags, model = jitterless
    curve = calib.build_curve(calib.extract_pairs(tags, model))
    walk = sim.analytic_walk_array(curve.t_prime, det)
    assert len(curve.bins) > 100
    assert np.max(np.abs(curve.d_med - walk)) <= 1.0
    assert np.max(curve.d_fwhm) <= 2.0
    assert curve.baseline_ps == pytest.approx(det.full_latency_ps, abs=0.5)


def test_median_error_within_standard_error_bound(noisy):
    det, curve = noisy
    n = np.array([b.n_samples for b in curve.bins])
    big = n >= 10_000
    assert big.sum() >= 50
    # per-bin estimator before baseline subtraction; the baseline's own error is checked below
    raw = curve.d_med + curve.baseline_ps - det.full_latency_ps
    err = np.abs(raw - sim.analytic_walk_array(curve.t_prime, det))[big]
    sigma = det.intrinsic_jitter_sigma_ps
    bound = 3 * sigma / np.sqrt(n[big])
    # the bound sits at 3/1.2533 median standard errors, so each bin exceeds it with
    # probability ~1.7%; test the exceedance count against that binomial law
    p_exceed = 2 * stats.norm.sf(3 / 1.2533)
    k = int(np.count_nonzero(err > bound))
    assert stats.binom.sf(k - 1, err.shape[0], p_exceed) > 1e-3
    assert np.all(err <= 5 * 1.2533 * sigma / np.sqrt(n[big]))
    base = curve.t_prime >= 500_000
    base_se = 1.2533 * sigma / np.sqrt(n[base]) / base.sum() ** 0.5
    assert abs(curve.baseline_ps - det.full_latency_ps) <= 5 * base_se.max()


def test_baseline_region_mean_is_zero(noisy):
    _, curve = noisy
    base = curve.t_prime >= 500_000
    assert abs(curve.d_med[base].mean()) < 1e-9


def test_default_curve_monotone(default_curve):
    c = default_curve
    n = np.array([b.n_samples for b in c.bins])
    d = c.d_med[n >= 10_000]
    assert d.shape[0] > 50
    running_min = np.minimum.accumulate(d)
    assert np.all(d <= running_min + 1.0)


def test_default_curve_rises_steeply_below_100ns(default_curve):
    c = default_curve

    def at(tp):
        return float(np.interp(tp, c.t_prime, c.d_med))

    assert at(50_000) - at(100_000) > 3 * (at(100_000) - at(150_000))
    assert at(50_000) > 40.0


def test_insufficient_statistics_names_best_n():
    with pytest.raises(calib.InsufficientStatisticsError) as e:
        calib.build_curve(calib.Pairs(np.array([3, 3, 7]), np.zeros(3), PERIOD_PS))
    assert e.value.best_n == 3
    assert "n=3" in str(e.value)
    with pytest.raises(calib.InsufficientStatisticsError):
        calib.build_curve(calib.Pairs(np.zeros(0, np.int64), np.zeros(0), PERIOD_PS))


def test_no_baseline_region():
    with pytest.raises(calib.NoBaselineError):
        calib.build_curve(calib.Pairs(np.full(500, 10), np.zeros(500), PERIOD_PS))


def test_wrap_risk_warning():
    n = np.array([10] * 200 + [300] * 200)
    d = np.concatenate([np.full(200, 0.49 * PERIOD_PS), np.zeros(200)])
    with pytest.warns(calib.WrapRiskWarning):
        calib.build_curve(calib.Pairs(n, d, PERIOD_PS))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        calib.build_curve(calib.Pairs(n, np.zeros(400), PERIOD_PS))


# ---------------------------------------------------------------- curve file

def sample_curve():
    bins = (CalibrationBin(50_000.0, 120.25, 30.5, 150), CalibrationBin(100_000.0, 30.0, 22.0, 400),
            CalibrationBin(600_000.0, 0.0, 21.0, 1000))
    return CalibrationCurve(1860.4651162790697, 119.75, bins, 100)


def test_curve_round_trip(tmp_path):
    c = sample_curve()
    p = tmp_path / "c.json"
    calib.write_curve(c, p)
    assert calib.read_curve(p) == c
    first = p.read_bytes()
    calib.write_curve(calib.read_curve(p), p)
    assert p.read_bytes() == first


def test_simulated_curve_round_trip(tmp_path, noisy):
    p = tmp_path / "c.json"
    calib.write_curve(noisy[1], p)
    assert calib.read_curve(p) == noisy[1]


def test_curve_bins_out_of_order(tmp_path):
    data = calib.curve_to_dict(sample_curve())
    data["bins"][0], data["bins"][1] = data["bins"][1], data["bins"][0]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    with pytest.raises(FormatError) as e:
        calib.read_curve(p)
    assert "bins[1].t_prime_ps" in str(e.value)


def test_curve_missing_baseline(tmp_path):
    data = calib.curve_to_dict(sample_curve())
    del data["baseline_ps"]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    with pytest.raises(FormatError) as e:
        calib.read_curve(p)
    assert "baseline_ps" in str(e.value)


@pytest.mark.parametrize("patch, path", [
    (lambda d: d["bins"][0].update(d_fwhm_ps=-1), "$.bins[0].d_fwhm_ps"),
    (lambda d: d.update(extra=1), "$"),
    (lambda d: d.update(version=2), "$.version"),
])
def test_curve_schema_errors_carry_path(patch, path):
    data = calib.curve_to_dict(sample_curve())
    patch(data)
    with pytest.raises(FormatError) as e:
        calib.curve_from_dict(data)
    assert path in str(e.value)


def test_curve_not_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(FormatError):
        calib.read_curve(p)
