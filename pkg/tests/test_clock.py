import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snspdwalk import clock
from snspdwalk.core import ConfigError, IntegrityError

from helpers import PERIOD_PS, stream


def pulse_train(period, n, occupancy, rng, offset=0.0, sigma=0.0):
    k = np.cumsum(rng.geometric(occupancy, n))
    t = offset + k * period + (rng.normal(0, sigma, n) if sigma else 0.0)
    return stream(np.floor(t + 0.5).astype(np.int64))


def test_constant_offset_absorbed():
    rng = np.random.default_rng(1)
    k = np.cumsum(rng.geometric(0.02, 20_000))
    tags = stream(37 + 1860 * k)
    model = clock.pll_recover(tags, 1860.0)
    assert np.max(np.abs(model.residuals_ps[clock.CONVERGENCE_TAGS:])) < 0.5
    assert model.period_ps == pytest.approx(1860.0, abs=1e-6)
    assert (model.phase_ps - 37) % 1860 == pytest.approx(0.0, abs=1e-3)


def test_frequency_offset_tracked_to_injected_jitter():
    rng = np.random.default_rng(2)
    tags = pulse_train(1860.465, 200_000, 0.05, rng, sigma=10.0)
    model = clock.pll_recover(tags, 1860.4)  # 35 ppm low
    settled = model.residuals_ps[20_000:]
    assert np.std(settled) == pytest.approx(10.0, rel=0.10)
    assert model.period_ps == pytest.approx(1860.465, abs=0.01)


def test_zero_jitter_exact_period():
    rng = np.random.default_rng(3)
    tags = pulse_train(1860.0, 20_000, 0.01, rng, offset=900.0)
    model = clock.pll_recover(tags, 1860.0)
    assert np.max(np.abs(model.residuals_ps[100:])) < 0.5


def test_empty_stream():
    model = clock.pll_recover(stream([]), PERIOD_PS)
    assert len(model) == 0
    assert len(clock.ideal_clock(stream([]), PERIOD_PS)) == 0


def test_nonpositive_period_rejected():
    with pytest.raises(ConfigError):
        clock.pll_recover(stream([1]), 0.0)


@pytest.mark.parametrize("offset, expected", [(0.0, 0.0), (5.0, 5.0), (0.6 * 1860, -0.4 * 1860),
                                              (0.5 * 1860, 0.5 * 1860)])
def test_ideal_clock_wrap_rule(offset, expected):
    tags = stream([int(3 * 1860 + offset)])
    model = clock.ideal_clock(tags, 1860.0)
    assert model.residuals_ps[0] == pytest.approx(expected)


def test_residuals_accessor():
    tags = stream([0, 9305])
    model = clock.ideal_clock(tags, 1860.0)
    idx, ticks, res = clock.residuals(tags, model)
    assert list(idx) == [0, 1]
    assert list(ticks) == [0, 5]
    assert list(res) == [0.0, 5.0]
    with pytest.raises(IntegrityError):
        clock.residuals(stream([0]), model)


def test_phase_offset_invariance():
    rng = np.random.default_rng(4)
    tags = pulse_train(PERIOD_PS, 30_000, 0.01, rng, sigma=21.0)
    shifted = stream(tags.times + 123_457)
    a = clock.pll_recover(tags, PERIOD_PS)
    b = clock.pll_recover(shifted, PERIOD_PS)
    bins = np.linspace(-PERIOD_PS / 2, PERIOD_PS / 2, 1861)
    ha = np.histogram(a.residuals_ps[100:], bins)[0]
    hb = np.histogram(b.residuals_ps[100:], bins)[0]
    assert np.array_equal(ha, hb)
    assert (b.phase_ps - a.phase_ps - 123_457) % b.period_ps == pytest.approx(0.0, abs=1e-3)


def test_unlock_reported_with_window():
    rng = np.random.default_rng(5)
    tags = pulse_train(PERIOD_PS * 1.001, 50_000, 0.01, rng)
    with pytest.raises(clock.UnlockedError) as e:
        clock.pll_recover(tags, PERIOD_PS)
    assert e.value.window == 0
    random_times = stream(np.sort(rng.integers(0, 10**11, 30_000)))
    with pytest.raises(clock.UnlockedError):
        clock.pll_recover(random_times, PERIOD_PS)
    clock.pll_recover(random_times, PERIOD_PS, check_lock=False)


def test_clock_spec_selects_mode():
    tags = stream([10, 1870, 3730])
    ideal = clock.ClockSpec(1860.0, ideal_phase_ps=10.0).recover(tags)
    assert ideal.ideal and list(ideal.residuals_ps) == [0.0, 0.0, 0.0]
    assert not clock.ClockSpec(1860.0).recover(tags).ideal


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=300), st.floats(100.0, 5000.0))
def test_residual_window_and_ticks(times, period):
    tags = stream(sorted(times))
    for model in (clock.ideal_clock(tags, period, 3.0), clock.pll_recover(tags, period, check_lock=False)):
        r = model.residuals_ps
        p = model.period_ps if not model.ideal else period
        assert np.all(r > -p / 2 - 1e-6) and np.all(r <= p / 2 + 1e-6)
        assert np.all(np.diff(model.ticks) >= 0)
