import pytest

from snspdwalk.core import DetectorConfig

from helpers import PERIOD_PS


@pytest.fixture
def period():
    return PERIOD_PS


@pytest.fixture
def quiet_det():
    """Detector with timing noise and undershoot switched off."""
    return DetectorConfig(intrinsic_jitter_sigma_ps=0.0, highpass_cuton_hz=0.0)

