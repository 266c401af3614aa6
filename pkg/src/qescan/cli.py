"""Command-line front end.

Subcommands: ``simulate`` (serve a virtual bench over TCP),
``calibrate-splitter``, ``spectrum``, ``scan2d``, ``analyze`` (recompute
results from raw logs), ``compare`` (overlay several spectra).

Exit codes: 0 success; 2 bad usage/config; 3 instrument or file I/O
failure; 4 measurement refused (unsafe diffraction order); 1 other errors.
"""

from __future__ import annotations

import dataclasses
import functools
import sys
import time
from pathlib import Path

import click

from . import __version__
from .analysis import analyze_map, analyze_spectrum, is_map_run
from .bench.clock import RealtimeClock, SteppedClock
from .bench.config import load_bench_config
from .bench.core import SimBench
from .bench.server import BenchServer
from . import dataio
from .engine.config import RunConfig, load_run_config, run_config_snapshot
from .engine.instruments import BenchFixture, PromptFixture
from .engine.runner import MeasurementEngine
from .errors import ConfigError, QescanError, TransportError, UnsafeOrderError
from .transport import KIND_ALIASES, open_sessions

EXIT_CODES = {"usage": 2, "io": 3, "refused": 4}


def _fail(category: str, message: str) -> None:
    click.echo(f"error: {category}: {message}", err=True)
    sys.exit(EXIT_CODES.get(category, 1))


def wraps_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail("usage", str(exc))
        except TransportError as exc:
            _fail("io", str(exc))
        except UnsafeOrderError as exc:
            _fail("refused", str(exc))
        except OSError as exc:
            _fail("io", str(exc))
        except QescanError as exc:
            _fail(exc.category if exc.category in EXIT_CODES else "error", str(exc))
    return wrapper


@click.group()
@click.version_option(__version__)
def main():
    """Photocathode quantum-efficiency measurement station."""


# --- station wiring -----------------------------------------------------------


@dataclasses.dataclass
class Station:
    config: RunConfig
    engine: MeasurementEngine
    bench: SimBench | None
    clock: object
    deterministic: bool

    def fixture(self):
        return BenchFixture(self.bench) if self.bench is not None else PromptFixture()

    def close(self):
        self.engine.close()


def parse_endpoint_overrides(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        key, sep, address = part.partition("=")
        if not sep or KIND_ALIASES.get(key.strip()) is None:
            raise ConfigError(f"bad endpoint override {part!r}; expected "
                              f"kind=host:port with kind in {sorted(set(KIND_ALIASES))}")
        out[key.strip()] = address.strip()
    return out


def build_station(config: RunConfig, seed: int | None, endpoints: str | None,
                  force_filter: int | None, dark_every: int | None,
                  progress=None) -> Station:
    overrides = parse_endpoint_overrides(endpoints)
    if overrides:
        merged = dict(config.endpoints)
        merged.update(overrides)
        config = dataclasses.replace(config, endpoints=merged)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    if force_filter is not None:
        config = dataclasses.replace(config, force_filter=force_filter)
    if dark_every is not None:
        config = dataclasses.replace(config, dark_every=dark_every)

    addresses = {KIND_ALIASES.get(k, k): v for k, v in config.endpoints.items()}
    all_loop = all(addr == "loop" for addr in addresses.values())
    any_loop = any(addr == "loop" for addr in addresses.values())
    bench = None
    if any_loop:
        if config.bench is None:
            raise ConfigError("loopback endpoints need a bench (or bench_config) "
                              "in the run config")
        bench_cfg = dataclasses.replace(config.bench, seed=config.seed)
        bench = SimBench(bench_cfg)
        clock = bench.clock
    else:
        clock = RealtimeClock(accel=config.clock_accel)
    sessions = open_sessions(addresses, clock, bench=bench,
                             timeout_ms=config.timeout_ms)
    engine = MeasurementEngine(config, sessions, clock, progress=progress)
    deterministic = all_loop and isinstance(clock, SteppedClock)
    return Station(config=config, engine=engine, bench=bench, clock=clock,
                   deterministic=deterministic)


def make_manifest(station: Station, calibration_table: str) -> dataio.RunManifest:
    snapshot = run_config_snapshot(station.config)
    run_id, created = dataio.make_run_id(snapshot, station.config.seed,
                                         station.deterministic)
    return dataio.RunManifest(
        run_id=run_id, seed=station.config.seed, created=created,
        software_version=__version__,
        instruments=station.engine.instrument_identities(),
        calibration_table=calibration_table, config=snapshot)


def load_table(config: RunConfig):
    if config.splitter_table_path is None:
        raise ConfigError("run config has no splitter_table; run "
                          "calibrate-splitter first and point the config at "
                          "its output")
    table, _ = dataio.read_splitter_csv(Path(config.splitter_table_path))
    return table


def check_any_success(records, failures):
    if records:
        return
    refused = [f for f in failures if f.category == "refused"]
    if refused:
        raise UnsafeOrderError(f"all points refused; first: {refused[0].message}")
    detail = f"; first: {failures[0].category}: {failures[0].message}" if failures else ""
    raise QescanError(f"no measurement points succeeded{detail}")


def _progress_printer(quiet: bool):
    if quiet:
        return None
    return lambda message: click.echo(f"[qescan] {message}", err=True)


# --- subcommands ------------------------------------------------------------------

run_options = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(exists=True, dir_okay=False),
                 help="Run config YAML."),
    click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
                 help="Output directory for the result bundle."),
    click.option("--seed", type=int, default=None,
                 help="Override the run seed (forwarded to a co-launched bench)."),
    click.option("--endpoints", default=None,
                 help="Endpoint overrides, e.g. pico=127.0.0.1:7001,stage=loop."),
    click.option("--quiet", is_flag=True, help="Suppress progress output."),
]


def with_run_options(fn):
    for option in reversed(run_options):
        fn = option(fn)
    return fn


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Bench config YAML.")
@click.option("--seed", type=int, default=None, help="Override the bench seed.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--base-port", type=int, default=7001, show_default=True,
              help="First of four consecutive ports (pico, mono, pm, stage).")
@click.option("--duration", type=float, default=None,
              help="Serve for N seconds then exit (default: until interrupted).")
@wraps_errors
def simulate(config_path, seed, host, base_port, duration):
    """Serve a virtual bench on four TCP endpoints."""
    config = load_bench_config(config_path)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    if config.clock.mode == "stepped":
        # detached benches must advance on their own
        config = dataclasses.replace(
            config, clock=dataclasses.replace(config.clock, mode="realtime"))
    bench = SimBench(config)
    server = BenchServer(bench, host=host, base_port=base_port).start()
    for kind, address in server.addresses.items():
        click.echo(f"{kind} {address}")
    try:
        if duration is not None:
            time.sleep(duration)
        else:
            while True:
                time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()


@main.command("calibrate-splitter")
@with_run_options
@click.option("--method", type=click.Choice(["single", "exchanged"]), default=None,
              help="Override the calibration method from the config.")
@wraps_errors
def calibrate_splitter(config_path, out_dir, seed, endpoints, quiet, method):
    """Measure the splitter conversion table k(lambda)."""
    config = load_run_config(config_path)
    station = build_station(config, seed, endpoints, None, None,
                            progress=_progress_printer(quiet))
    try:
        station.engine.setup_instruments()
        table = station.engine.calibrate_splitter(station.fixture(), method=method)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = make_manifest(station, "splitter_table.csv")
        dataio.write_manifest(out / "manifest.json", manifest)
        dataio.write_splitter_csv(out / "splitter_table.csv", table, manifest.run_id)
        click.echo(f"wrote {out / 'splitter_table.csv'}")
    finally:
        station.close()


@main.command()
@with_run_options
@click.option("--force-filter", type=click.IntRange(0, 4), default=None,
              help="Pin the order-sorting filter slot (stray-light studies).")
@click.option("--dark-every", type=int, default=None,
              help="Re-measure dark current every N points.")
@wraps_errors
def spectrum(config_path, out_dir, seed, endpoints, quiet, force_filter, dark_every):
    """QE vs wavelength at a fixed cathode position."""
    config = load_run_config(config_path)
    station = build_station(config, seed, endpoints, force_filter, dark_every,
                            progress=_progress_printer(quiet))
    try:
        station.engine.table = load_table(station.config)
        station.engine.setup_instruments()
        t0 = station.clock.now()
        result = station.engine.sweep_spectrum()
        duration = station.clock.now() - t0
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = make_manifest(station, station.config.splitter_table_path or "")
        dataio.write_manifest(out / "manifest.json", manifest)
        check_any_success(result.records, result.failures)
        dataio.write_spectrum_csv(out / "spectrum.csv", result.records, manifest.run_id)
        dataio.write_samples_csv(out / "samples_raw.csv", result.raw_samples,
                                 manifest.run_id)
        summary = dataio.render_summary(
            manifest, "spectrum", len(result.records), result.failures,
            result.dark_a, duration, station.config.bands,
            station.config.picoammeter_rel)
        dataio.atomic_write_text(out / "summary.txt", summary)
        click.echo(f"wrote {out / 'spectrum.csv'} "
                   f"({len(result.records)} points, {len(result.failures)} failed)")
    finally:
        station.close()


@main.command()
@with_run_options
@click.option("--force-filter", type=click.IntRange(0, 4), default=None)
@click.option("--dark-every", type=int, default=None)
@click.option("--heatmap/--no-heatmap", default=True, show_default=True,
              help="Also write a greyscale PGM of the map.")
@wraps_errors
def scan2d(config_path, out_dir, seed, endpoints, quiet, force_filter,
           dark_every, heatmap):
    """2D QE map over the configured grid at one wavelength."""
    config = load_run_config(config_path)
    station = build_station(config, seed, endpoints, force_filter, dark_every,
                            progress=_progress_printer(quiet))
    try:
        station.engine.table = load_table(station.config)
        station.engine.setup_instruments()
        t0 = station.clock.now()
        result = station.engine.scan_2d()
        duration = station.clock.now() - t0
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = make_manifest(station, station.config.splitter_table_path or "")
        dataio.write_manifest(out / "manifest.json", manifest)
        dataio.check_map_consistency(result.records, station.config.grid)
        dataio.write_map_csv(out / "map.csv", result.records, manifest.run_id)
        dataio.write_matrix(out / "map_matrix.txt", result.matrix, manifest.run_id)
        if heatmap:
            dataio.write_heatmap(out / "heatmap.pgm", result.matrix)
        dataio.write_samples_csv(out / "samples_raw.csv", result.raw_samples,
                                 manifest.run_id)
        extra = [f"aborted: {result.aborted}"] if result.aborted else []
        summary = dataio.render_summary(
            manifest, "scan2d", len(result.records), result.failures,
            result.dark_a, duration, station.config.bands,
            station.config.picoammeter_rel, extra=extra)
        dataio.atomic_write_text(out / "summary.txt", summary)
        if result.aborted:
            raise TransportError(f"scan aborted after {len(result.records)} "
                                 f"points (checkpoint flushed): {result.aborted}")
        check_any_success(result.records, result.failures)
        click.echo(f"wrote {out / 'map.csv'} ({len(result.records)} pixels)")
    finally:
        station.close()


@main.command()
@click.option("--raw", "raw_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="samples_raw.csv from a previous run.")
@click.option("--manifest", "manifest_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="manifest.json (default: sibling of --raw).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@wraps_errors
def analyze(raw_path, manifest_path, out_dir):
    """Recompute QE results from a raw sample log."""
    raw_path = Path(raw_path)
    if manifest_path is None:
        manifest_path = raw_path.parent / "manifest.json"
    manifest = dataio.read_manifest(Path(manifest_path))
    samples, _ = dataio.read_samples_csv(raw_path)
    if not samples:
        raise QescanError("raw log holds no samples")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if is_map_run(manifest):
        records, matrix = analyze_map(samples, manifest)
        dataio.write_map_csv(out / "map.csv", records, manifest.run_id)
        dataio.write_matrix(out / "map_matrix.txt", matrix, manifest.run_id)
        click.echo(f"wrote {out / 'map.csv'} ({len(records)} pixels)")
    else:
        records = analyze_spectrum(samples, manifest)
        dataio.write_spectrum_csv(out / "spectrum.csv", records, manifest.run_id)
        click.echo(f"wrote {out / 'spectrum.csv'} ({len(records)} points)")


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Output overlay CSV.")
@click.argument("spectra", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@wraps_errors
def compare(out_path, spectra):
    """Overlay several spectrum CSVs into one wide table."""
    labeled = []
    seen = set()
    for path in spectra:
        records, _ = dataio.read_spectrum_csv(Path(path))
        label = Path(path).stem
        if label in seen:
            label = f"{label}_{len(labeled)}"
        seen.add(label)
        labeled.append((label, records))
    out = Path(out_path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_compare_csv(out, labeled)
    click.echo(f"wrote {out} ({len(labeled)} spectra)")


if __name__ == "__main__":
    main()
