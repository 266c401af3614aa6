"""Run configuration and the splitter conversion table."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import yaml

from ..bench.config import BenchConfig, bench_config_from_dict, load_bench_config
from ..errors import CalibrationError, ConfigError
from ..quantities import Wavelength
from ..uncertainty import (
    DEFAULT_PICOAMMETER_REL,
    DEFAULT_POWER_METER_BANDS,
    CalibrationBand,
    validate_bands,
)
from ..filters import DEFAULT_FILTER_CUTONS_NM
from ..scanpath import ScanGrid


@dataclass(frozen=True)
class SplitEntry:
    lambda_nm: float
    k_mon_to_dut: float  # monitor-arm power times k = DUT-arm power
    method: str  # single | exchanged
    uncertainty_rel: float

    def __post_init__(self):
        if self.k_mon_to_dut <= 0:
            raise CalibrationError(f"k must be > 0, got {self.k_mon_to_dut!r}")
        if self.method not in ("single", "exchanged"):
            raise CalibrationError(f"unknown calibration method {self.method!r}")


class SplitRatioTable:
    """Wavelength-indexed monitor-to-DUT power conversion, linear between
    entries. Refusing to extrapolate is deliberate: beam geometry outside
    the calibrated span is unknown."""

    def __init__(self, entries: Sequence[SplitEntry]):
        ordered = sorted(entries, key=lambda e: e.lambda_nm)
        if not ordered:
            raise CalibrationError("splitter table has no entries")
        for a, b in zip(ordered, ordered[1:]):
            if a.lambda_nm == b.lambda_nm:
                raise CalibrationError(f"duplicate table entry at {a.lambda_nm} nm")
        self.entries: tuple[SplitEntry, ...] = tuple(ordered)

    def k_at(self, nm: float) -> float:
        entries = self.entries
        if len(entries) == 1:
            if nm == entries[0].lambda_nm:
                return entries[0].k_mon_to_dut
            raise CalibrationError(
                f"splitter table has a single entry at {entries[0].lambda_nm} nm; "
                f"cannot convert at {nm} nm")
        if not entries[0].lambda_nm <= nm <= entries[-1].lambda_nm:
            raise CalibrationError(
                f"{nm} nm outside the calibrated span "
                f"[{entries[0].lambda_nm:g}, {entries[-1].lambda_nm:g}] nm")
        for a, b in zip(entries, entries[1:]):
            if a.lambda_nm <= nm <= b.lambda_nm:
                frac = (nm - a.lambda_nm) / (b.lambda_nm - a.lambda_nm)
                return a.k_mon_to_dut + frac * (b.k_mon_to_dut - a.k_mon_to_dut)
        raise AssertionError("unreachable")

    def uncertainty_at(self, nm: float) -> float:
        nearest = min(self.entries, key=lambda e: abs(e.lambda_nm - nm))
        return nearest.uncertainty_rel


@dataclass(frozen=True)
class CalibrationConfig:
    method: str = "exchanged"  # single | exchanged
    samples: int = 5
    wavelengths: tuple[float, ...] = ()  # empty: 50 nm grid over run span
    min_monitor_power_w: float = 1e-12

    def __post_init__(self):
        if self.method not in ("single", "exchanged"):
            raise ConfigError(f"calibration method must be single|exchanged, "
                              f"got {self.method!r}")
        if self.samples < 2:
            raise ConfigError("calibration needs >= 2 samples per point")


@dataclass(frozen=True)
class SettleConfig:
    gwave_s: float = 0.5
    filter_s: float = 1.0
    stage_s: float = 0.2  # after MOVING? returns 0
    shutter_s: float = 0.2


@dataclass(frozen=True)
class RunConfig:
    endpoints: dict[str, str] = field(default_factory=lambda: {
        "picoammeter": "loop", "monochromator": "loop",
        "powermeter": "loop", "stage": "loop"})
    bench: Optional[BenchConfig] = None  # co-launched when endpoints are loop
    seed: int = 1  # forwarded to a co-launched bench
    averaging_window_s: float = 1.0
    samples_per_point: int = 10
    wavelengths: tuple[float, ...] = ()
    grid: Optional[ScanGrid] = None
    fixed_position: Optional[tuple[float, float]] = None
    max_read_skew_s: float = 0.010
    dark_every: int = 0  # points between dark re-measurements; 0 = start only
    splitter_table_path: Optional[str] = None
    settle: SettleConfig = field(default_factory=SettleConfig)
    force_filter: Optional[int] = None
    lamp_setpoint: Optional[float] = None
    feedback: bool = True
    filter_cutons_nm: tuple[float, float, float, float] = DEFAULT_FILTER_CUTONS_NM
    bands: tuple[CalibrationBand, ...] = DEFAULT_POWER_METER_BANDS
    picoammeter_rel: float = DEFAULT_PICOAMMETER_REL
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    timeout_ms: int = 5000
    clock_accel: float = 1.0  # engine-side clock for TCP endpoints

    def __post_init__(self):
        if self.samples_per_point < 2:
            raise ConfigError("samples_per_point must be >= 2")
        if not self.wavelengths:
            raise ConfigError("at least one wavelength is required")
        for nm in self.wavelengths:
            try:
                Wavelength(nm).require_engine_range()
            except Exception as exc:
                raise ConfigError(f"wavelength {nm}: {exc}") from exc
        if (self.grid is None) == (self.fixed_position is None):
            raise ConfigError("exactly one of grid / fixed_position must be set")
        if self.max_read_skew_s <= 0:
            raise ConfigError("max_read_skew_s must be > 0")
        if self.force_filter is not None and not 0 <= self.force_filter <= 4:
            raise ConfigError("force_filter must be in 0..4")
        validate_bands(self.bands)

    def calibration_wavelengths(self) -> tuple[float, ...]:
        if self.calibration.wavelengths:
            return self.calibration.wavelengths
        lo, hi = min(self.wavelengths), max(self.wavelengths)
        if lo == hi:
            return (lo,) if True else ()
        grid = [lo]
        nm = lo
        while nm + 50.0 < hi:
            nm += 50.0
            grid.append(nm)
        grid.append(hi)
        return tuple(grid)


def expand_wavelengths(spec) -> tuple[float, ...]:
    """Accept an explicit list or a {start, stop, step} range (inclusive)."""
    if isinstance(spec, dict):
        missing = {"start", "stop", "step"} - set(spec)
        if missing:
            raise ConfigError(f"wavelength range needs start/stop/step, missing {sorted(missing)}")
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        if step <= 0 or stop < start:
            raise ConfigError("wavelength range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 6) for i in range(count))
    if isinstance(spec, (list, tuple)):
        return tuple(float(v) for v in spec)
    raise ConfigError(f"wavelengths must be a list or a start/stop/step mapping, got {spec!r}")


def run_config_from_dict(data: dict, base_dir: Optional[Path] = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("run config must be a mapping")
    data = dict(data)
    kwargs = {}

    if "endpoints" in data:
        kwargs["endpoints"] = dict(data.pop("endpoints"))
    bench_spec = data.pop("bench", None)
    bench_path = data.pop("bench_config", None)
    if bench_spec is not None and bench_path is not None:
        raise ConfigError("give either an inline bench or a bench_config path, not both")
    if bench_spec is not None:
        kwargs["bench"] = bench_config_from_dict(bench_spec)
    elif bench_path is not None:
        path = Path(bench_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        kwargs["bench"] = load_bench_config(path)

    if "wavelengths" in data:
        kwargs["wavelengths"] = expand_wavelengths(data.pop("wavelengths"))
    if "grid" in data:
        grid = data.pop("grid")
        if grid is not None:
            try:
                kwargs["grid"] = ScanGrid(**grid)
            except TypeError as exc:
                raise ConfigError(f"grid: {exc}") from exc
    if "fixed_position" in data:
        pos = data.pop("fixed_position")
        if pos is not None:
            kwargs["fixed_position"] = (float(pos[0]), float(pos[1]))
    if "max_read_skew_ms" in data:
        kwargs["max_read_skew_s"] = float(data.pop("max_read_skew_ms")) / 1000.0
    if "settle" in data:
        try:
            kwargs["settle"] = SettleConfig(**data.pop("settle"))
        except TypeError as exc:
            raise ConfigError(f"settle: {exc}") from exc
    if "calibration" in data:
        cal = dict(data.pop("calibration"))
        if "wavelengths" in cal:
            cal["wavelengths"] = expand_wavelengths(cal["wavelengths"])
        try:
            kwargs["calibration"] = CalibrationConfig(**cal)
        except TypeError as exc:
            raise ConfigError(f"calibration: {exc}") from exc
    if "bands" in data:
        rows = data.pop("bands")
        kwargs["bands"] = tuple(CalibrationBand(*map(float, row)) for row in rows)
    if "filter_cutons_nm" in data:
        kwargs["filter_cutons_nm"] = tuple(float(v) for v in data.pop("filter_cutons_nm"))
    if "splitter_table" in data:
        table = data.pop("splitter_table")
        if table is not None:
            path = Path(table)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            kwargs["splitter_table_path"] = str(path)

    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown run config key {key!r}")
        kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load run config {path}: {exc}") from exc
    return run_config_from_dict(raw, base_dir=path.parent)


def run_config_snapshot(cfg: RunConfig) -> dict:
    """Plain-dict snapshot of the full effective configuration (for the
    run manifest; keys sorted at serialization time)."""
    snap = dataclasses.asdict(cfg)
    if cfg.grid is not None:
        snap["grid"] = dataclasses.asdict(cfg.grid)
    return snap
