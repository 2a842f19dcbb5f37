"""Count-rate-dependent time-walk calibration and correction for SNSPD time tags."""

from .core import (
    FLAG_CORRECTED,
    FLAG_SYNTHETIC,
    CalibrationBin,
    CalibrationCurve,
    ConfigError,
    DelayHistogram,
    DetectorConfig,
    DomainError,
    FormatError,
    IntegrityError,
    LaserConfig,
    StatisticsError,
    TagStream,
    TimeTag,
    WalkError,
    WidthMetrics,
    read_tags,
    write_tags,
)

__version__ = "0.1.0"
