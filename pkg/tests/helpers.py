"""Shared scaffolding: configured benches and engines wired over loopback."""

import dataclasses

from qescan.bench.config import (
    BenchConfig,
    CathodeConfig,
    LampConfig,
    NoiseConfig,
    SpectralCurve,
)
from qescan.bench.core import SimBench
from qescan.engine.config import CalibrationConfig, RunConfig
from qescan.engine.instruments import BenchFixture
from qescan.engine.runner import MeasurementEngine
from qescan.transport import open_sessions

CENTER = (40000.0, 40000.0)


def quiet_noise(dark_a=2e-12, **overrides):
    """All stochastic noise off; systematic bounds at zero width."""
    base = NoiseConfig()
    return NoiseConfig(
        pm_sys_bands=tuple((lo, hi, 1e-300) for lo, hi, _ in base.pm_sys_bands),
        pm_white_rel=0.0, pm_floor_w=0.0,
        pico_sys_bound=0.0, pico_white_rel=0.0,
        dark_current_a=dark_a, **overrides)


def flat_curve(qe0=0.25):
    return SpectralCurve(kind="table", points=((250.0, qe0), (1100.0, qe0)))


def quiet_lamp():
    return LampConfig(drift_rate=0.0, feedback_sensor_rel=0.0)


def make_bench(seed=7, curve=None, noise=None, lamp=None, cathode_kwargs=None,
               **bench_overrides):
    cathode_kwargs = dict(cathode_kwargs or {})
    cathode_kwargs.setdefault("disc_radius_um", 10000.0)
    if curve is not None:
        cathode_kwargs["curve"] = curve
    cfg = BenchConfig(
        seed=seed,
        lamp=lamp if lamp is not None else quiet_lamp(),
        cathode=CathodeConfig(**cathode_kwargs),
        noise=noise if noise is not None else quiet_noise(),
        **bench_overrides,
    )
    return SimBench(cfg)


def make_engine(bench, run_config, table=None, progress=None):
    sessions = open_sessions(run_config.endpoints, bench.clock, bench=bench)
    engine = MeasurementEngine(run_config, sessions, bench.clock,
                               splitter_table=table, progress=progress)
    engine.setup_instruments()
    return engine


def calibrated_engine(bench, run_config, method=None, progress=None):
    engine = make_engine(bench, run_config, progress=progress)
    engine.table = engine.calibrate_splitter(BenchFixture(bench), method=method)
    return engine


def spectrum_config(wavelengths, position=CENTER, **overrides):
    overrides.setdefault("calibration", CalibrationConfig(samples=3))
    return RunConfig(wavelengths=tuple(wavelengths), fixed_position=position,
                     **overrides)


def scan_config(grid, nm, **overrides):
    overrides.setdefault("calibration", CalibrationConfig(samples=3))
    return RunConfig(wavelengths=(nm,), grid=grid, **overrides)
