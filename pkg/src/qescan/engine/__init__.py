"""Measurement engine: nested sweep/scan loops over live instrument sessions."""

from .config import RunConfig, SplitRatioTable, load_run_config  # noqa: F401
from .runner import MeasurementEngine  # noqa: F401
