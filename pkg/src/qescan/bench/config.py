"""Bench configuration: dataclasses, YAML loading, cathode map grid files.

Every knob the physics models expose lives here with defaults that describe
a plausible station: ~1 nW at the device under test, a near-50:50 splitter,
a lamp wandering 0.1%/sqrt(s) unless the feedback loop holds it, and
instrument noise matching the shipped calibration budget.

Systematic instrument errors are drawn once per run (seeded), uniformly
within +-bound — the rectangular distribution conventionally assigned to a
calibration certificate's accuracy bound. White read noise is Gaussian and
varies per read.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from ..errors import ConfigError


@dataclass(frozen=True)
class ClockConfig:
    mode: str = "stepped"  # stepped | realtime
    accel: float = 1.0
    command_latency_s: float = 0.005
    ctrl_dt_s: float = 0.05  # lamp dynamics integration step


@dataclass(frozen=True)
class LampConfig:
    base_power_w: float = 1e-9  # mono output at 100% setpoint, attenuation 1
    setpoint_pct: float = 80.0
    drift_rate: float = 0.001  # random-walk sigma, relative per sqrt(s)
    feedback_on: bool = True
    feedback_gain_p: float = 0.8
    feedback_gain_i: float = 2.0
    feedback_sensor_rel: float = 2e-4


@dataclass(frozen=True)
class MonoConfig:
    min_nm: float = 250.0
    max_nm: float = 1100.0
    initial_nm: float = 500.0
    stray_second_order_frac: float = 0.01
    filter_cutons_nm: tuple[float, float, float, float] = (320.0, 420.0, 600.0, 900.0)
    blocked_transmission: float = 1e-6  # below a filter's cut-on


@dataclass(frozen=True)
class SplitterConfig:
    dut_fraction: float = 0.52
    ripple_rel: float = 0.005  # relative ripple amplitude across the range
    ripple_cycles: float = 1.0

    def fraction_at(self, nm: float) -> float:
        ripple = self.ripple_rel * math.sin(
            2.0 * math.pi * self.ripple_cycles * (nm - 250.0) / 850.0
        )
        return self.dut_fraction * (1.0 + ripple)


@dataclass(frozen=True)
class SpectralCurve:
    """Planted QE-vs-wavelength curve: a Gaussian bump on a floor, or an
    interpolated table of (nm, qe) points."""

    kind: str = "gauss"  # gauss | table
    peak: float = 0.30
    center_nm: float = 400.0
    width_nm: float = 180.0
    floor: float = 0.02
    points: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("gauss", "table"):
            raise ConfigError(f"unknown spectral curve kind {self.kind!r}")
        if self.kind == "table" and len(self.points) < 2:
            raise ConfigError("table curve needs at least 2 points")

    def value_at(self, nm: float) -> float:
        if self.kind == "gauss":
            return self.floor + self.peak * math.exp(-(((nm - self.center_nm) / self.width_nm) ** 2))
        pts = sorted(self.points)
        if nm <= pts[0][0]:
            return pts[0][1]
        if nm >= pts[-1][0]:
            return pts[-1][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x0 <= nm <= x1:
                return y0 + (y1 - y0) * (nm - x0) / (x1 - x0)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class StructureSpec:
    """A region of modified response on the photocathode (multiplier mask)."""

    shape: str  # cross | rect | disc
    multiplier: float
    center_x_um: float
    center_z_um: float
    # cross: arm_width/arm_length; rect: size_x/size_z; disc: radius
    arm_width_um: float = 0.0
    arm_length_um: float = 0.0
    size_x_um: float = 0.0
    size_z_um: float = 0.0
    radius_um: float = 0.0

    def __post_init__(self):
        if self.shape not in ("cross", "rect", "disc"):
            raise ConfigError(f"unknown structure shape {self.shape!r}")


@dataclass(frozen=True)
class CathodeConfig:
    center_x_um: float = 40000.0
    center_z_um: float = 40000.0
    disc_radius_um: float = 40000.0  # 80 mm active disc
    pitch_um: float = 100.0
    base_multiplier: float = 1.0
    curve: SpectralCurve = field(default_factory=SpectralCurve)
    structures: tuple[StructureSpec, ...] = ()
    map_file: Optional[str] = None  # grid file overriding the procedural map


@dataclass(frozen=True)
class NoiseConfig:
    # (lambda_min, lambda_max, bound) triples; gaps in the calibration
    # certificate are filled conservatively so the meter reads everywhere.
    pm_sys_bands: tuple[tuple[float, float, float], ...] = (
        (220.0, 300.0, 0.0345),
        (300.0, 430.0, 0.0167),
        (430.0, 1000.0, 0.0113),
        (1000.0, 1035.0, 0.0433),
        (1035.0, 1065.0, 0.0433),
        (1065.0, 1101.0, 0.0433),
    )
    pm_white_rel: float = 0.001
    pm_floor_w: float = 1e-13
    pico_sys_bound: float = 0.004
    pico_white_rel: float = 0.0005
    dark_current_a: float = 2e-12
    # Calibration reference diode pair errors (multiplicative), used only
    # while the calibration fixture is mounted.
    cal_probe_errors: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class StageConfig:
    velocity_um_s: float = 50000.0  # 50 mm/s
    settle_s: float = 0.1
    accuracy_um: float = 5.0
    repeatability_um: float = 2.0
    travel_um: float = 300000.0


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 1
    clock: ClockConfig = field(default_factory=ClockConfig)
    lamp: LampConfig = field(default_factory=LampConfig)
    mono: MonoConfig = field(default_factory=MonoConfig)
    splitter: SplitterConfig = field(default_factory=SplitterConfig)
    cathode: CathodeConfig = field(default_factory=CathodeConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    stage: StageConfig = field(default_factory=StageConfig)
    spot_diameter_um: float = 1000.0  # top-hat beam footprint on the cathode
    attenuation: float = 1.0  # fiber/core attenuation factor, <= 1
    pico_range_a: float = 2e-8  # 20 nA range
    log_transcript: bool = False

    def __post_init__(self):
        if not 200.0 <= self.spot_diameter_um <= 2000.0:
            raise ConfigError("spot diameter must be within [200, 2000] um")
        if not 0.0 < self.attenuation <= 1.0:
            raise ConfigError("attenuation must be in (0, 1]")


def _from_dict(cls, data, path="config"):
    """Build a (possibly nested) dataclass from a plain dict, rejecting
    unknown keys so config typos fail loudly."""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping for {cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)} for {cls.__name__}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _convert_field(fields[name], value, f"{path}.{name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _convert_field(field_def, value, path):
    ftype = field_def.type
    nested = {
        "ClockConfig": ClockConfig, "LampConfig": LampConfig, "MonoConfig": MonoConfig,
        "SplitterConfig": SplitterConfig, "SpectralCurve": SpectralCurve,
        "CathodeConfig": CathodeConfig, "NoiseConfig": NoiseConfig,
        "StageConfig": StageConfig,
    }
    for name, cls in nested.items():
        if name in str(ftype):
            return _from_dict(cls, value, path)
    if "StructureSpec" in str(ftype):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list of structures")
        return tuple(_from_dict(StructureSpec, v, f"{path}[{i}]") for i, v in enumerate(value))
    if isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def bench_config_from_dict(data: dict, path="bench") -> BenchConfig:
    return _from_dict(BenchConfig, data, path)


def load_bench_config(path: str | Path) -> BenchConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load bench config {path}: {exc}") from exc
    cfg = bench_config_from_dict(raw, str(path))
    # map_file paths are taken relative to the config file
    if cfg.cathode.map_file is not None:
        resolved = str((path.parent / cfg.cathode.map_file).resolve())
        cfg = dataclasses.replace(cfg, cathode=dataclasses.replace(cfg.cathode, map_file=resolved))
    return cfg


def bench_config_to_dict(cfg: BenchConfig) -> dict:
    return dataclasses.asdict(cfg)


# --- cathode map grid files -------------------------------------------------
#
# Row-major CSV with comment headers carrying the grid geometry:
#   # qescan-cathode-map v1
#   # pitch_um: 100
#   # x0_um: 0          (center of cell [row 0, col 0])
#   # z0_um: 0
# then nz rows of nx comma-separated multipliers.

MAP_SCHEMA = "qescan-cathode-map v1"


def write_map_grid(path: str | Path, values: np.ndarray, pitch_um: float,
                   x0_um: float, z0_um: float) -> None:
    buf = io.StringIO()
    buf.write(f"# {MAP_SCHEMA}\n")
    buf.write(f"# pitch_um: {pitch_um!r}\n")
    buf.write(f"# x0_um: {x0_um!r}\n")
    buf.write(f"# z0_um: {z0_um!r}\n")
    np.savetxt(buf, values, fmt="%.10g", delimiter=",")
    Path(path).write_text(buf.getvalue())


def read_map_grid(path: str | Path) -> tuple[np.ndarray, float, float, float]:
    path = Path(path)
    meta = {}
    rows = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    meta[key.strip()] = val.strip()
                continue
            rows.append(line)
    try:
        pitch = float(meta["pitch_um"])
        x0 = float(meta["x0_um"])
        z0 = float(meta["z0_um"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: missing or bad grid header: {exc}") from exc
    values = np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2)
    return values, pitch, x0, z0
