"""Acceptance suite: one test per criterion, each printing a pass line.

Closed-loop criteria run the real engine over loopback sessions against
benches with planted ground truth; nothing here stubs out the measurement
chain. Run with ``pytest tests/test_acceptance.py -v -s`` to see the
per-criterion lines.
"""

import functools
import math
import random
import statistics
import time

import pytest
import yaml
from click.testing import CliRunner

from qescan.bench.config import (
    BenchConfig,
    CathodeConfig,
    LampConfig,
    NoiseConfig,
    SpectralCurve,
    SplitterConfig,
    StructureSpec,
)
from qescan.bench.core import SimBench
from qescan.bench.models import LampDynamics
from qescan.cli import main as cli_main
from qescan.engine.config import CalibrationConfig, RunConfig, SplitEntry, SplitRatioTable
from qescan.engine.instruments import BenchFixture
from qescan.errors import ProtocolError
from qescan.protocol import (
    CommandFrame,
    ResponseFrame,
    StreamParser,
    encode_command,
    parse_line,
)
from qescan.quantities import CONSTANTS, Wavelength
from qescan.scanpath import ScanGrid, snake_path
from qescan.uncertainty import QUADRATURE_NOTE, combined_uncertainty

from helpers import (
    CENTER,
    calibrated_engine,
    flat_curve,
    make_bench,
    make_engine,
    quiet_noise,
    scan_config,
    spectrum_config,
)


def report(number: int, description: str) -> None:
    print(f"ACCEPTANCE {number:2d} PASS: {description}")


def runtime_budget(seconds: float):
    """Assert a criterion finishes inside its stated runtime limit."""
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.monotonic()
            result = fn(*args, **kwargs)
            elapsed = time.monotonic() - t0
            assert elapsed < seconds, (
                f"runtime {elapsed:.1f} s exceeds {seconds:g} s budget")
            return result
        return wrapper
    return decorate


@runtime_budget(1)
def test_criterion_01_error_budget_reproduction():
    """Quadrature totals match the published budget rows."""
    # rows 2 and 4 agree with the published totals
    row2 = combined_uncertainty(0.0167, 0.004)
    row4 = combined_uncertainty(0.0433, 0.004)
    assert abs(row2.total_rel - 0.0171) <= 0.005
    assert abs(row4.total_rel - 0.0435) <= 0.005
    assert abs(row2.total_rel * 100 - 1.71) <= 0.01
    assert abs(row4.total_rel * 100 - 4.35) <= 0.01
    # rows 1 and 3: exact quadrature, published totals differ and the
    # discrepancy is recorded in output docs
    row1 = combined_uncertainty(0.0345, 0.004)
    row3 = combined_uncertainty(0.0113, 0.004)
    assert abs(row1.total_rel * 100 - 3.47) <= 0.005
    assert abs(row3.total_rel * 100 - 1.20) <= 0.005
    for legacy in ("3.52", "1.16", "3.47", "1.20"):
        assert legacy in QUADRATURE_NOTE
    report(1, "error budget: 1.71%/4.35% reproduced; 3.47%/1.20% exact "
              "quadrature with documented 3.52%/1.16% discrepancy")


@runtime_budget(120)
def test_criterion_02_closed_loop_spectrum_recovery():
    """Full-noise sweeps recover the planted curve within the budget."""
    wavelengths = tuple(round(250.0 + 5.0 * i, 6) for i in range(171))
    within_1 = within_3 = total = 0
    uncovered = set()
    for seed in range(20):
        bench = SimBench(BenchConfig(seed=seed))
        cfg = spectrum_config(wavelengths, seed=seed,
                              calibration=CalibrationConfig(samples=5))
        engine = calibrated_engine(bench, cfg)
        result = engine.sweep_spectrum()
        for failure in result.failures:
            uncovered.add(failure.label)
        for record in result.records:
            truth = bench.ground_truth_qe(record.wavelength_nm, *CENTER)
            rel_err = abs(record.qe.mean / truth - 1.0)
            budget = record.qe.systematic_rel
            total += 1
            if rel_err <= budget:
                within_1 += 1
            if rel_err <= 3.0 * budget:
                within_3 += 1
    assert total == 20 * (171 - 13)  # 13 wavelengths have no calibration band
    assert len(uncovered) == 13
    frac_1 = within_1 / total
    frac_3 = within_3 / total
    assert frac_1 >= 0.68, f"only {frac_1:.1%} within 1 sigma"
    assert frac_3 >= 0.99, f"only {frac_3:.1%} within 3 sigma"
    report(2, f"spectrum recovery over 20 noisy runs: {frac_1:.1%} within "
              f"1x budget (>=68%), {frac_3:.1%} within 3x (>=99%)")


@runtime_budget(10)
def test_criterion_03_exchange_correction_cancellation():
    """Geometric-mean calibration cancels the diode pair miscalibration."""
    def run(method):
        noise = quiet_noise(cal_probe_errors=(0.02, -0.02))
        bench = make_bench(seed=5, curve=flat_curve(0.25), noise=noise,
                           splitter=SplitterConfig(dut_fraction=0.52,
                                                   ripple_rel=0.0))
        cfg = spectrum_config([410.0],
                              calibration=CalibrationConfig(
                                  samples=3, wavelengths=(410.0, 500.0)))
        engine = calibrated_engine(bench, cfg, method=method)
        result = engine.sweep_spectrum()
        truth = bench.ground_truth_qe(410.0, *CENTER)
        return result.records[0].qe.mean / truth - 1.0

    bias_single = run("single")
    bias_exchanged = run("exchanged")
    assert abs(bias_single) >= 0.035, f"single bias {bias_single:.4f}"
    assert abs(bias_exchanged) <= 0.001, f"exchanged bias {bias_exchanged:.5f}"
    report(3, f"splitter exchange: single-method QE biased "
              f"{bias_single * 100:+.2f}% (>=3.5%), exchanged within "
              f"{abs(bias_exchanged) * 100:.3f}% (<=0.1%)")


@runtime_budget(10)
def test_criterion_04_stray_light_gate():
    """Unfiltered second-order leak biases QE by the predicted amount;
    automatic filter selection removes it."""
    curve = SpectralCurve(kind="table",
                          points=((250.0, 0.2), (400.0, 0.2), (800.0, 0.02),
                                  (1100.0, 0.02)))

    def build_bench():
        return make_bench(seed=9, curve=curve)

    # independent prediction by spectral integration over the planted model
    twin = build_bench()
    twin.transact("stage", b"MOVX 40000\r\n")
    twin.transact("stage", b"MOVZ 40000\r\n")
    twin.tick(10.0)
    twin.transact("monochromator", b"GWAVE 800\r\n")
    twin.transact("monochromator", b"FILT 0\r\n")
    twin.transact("monochromator", b"SHUT O\r\n")
    hc = CONSTANTS.h * CONSTANTS.c
    electron_rate = sum(
        watts * (nm * 1e-9) / hc * twin.ground_truth_qe(nm, *CENTER)
        for nm, watts in twin.beam_components("dut"))
    frac800 = twin.config.splitter.fraction_at(800.0)
    k_true = frac800 / (1.0 - frac800)
    p_dut_est = twin.optical_power_at("monitor") * k_true
    qe_predicted = electron_rate / (p_dut_est * 800e-9 / hc)
    truth = twin.ground_truth_qe(800.0, *CENTER)
    bias_predicted = qe_predicted / truth - 1.0
    assert bias_predicted > 0.02  # the planted model makes this a ~4% effect

    table = SplitRatioTable([SplitEntry(800.0, k_true, "single", 0.0)])

    def run(force_filter):
        bench = build_bench()
        cfg = spectrum_config([800.0], force_filter=force_filter)
        engine = make_engine(bench, cfg, table=table)
        result = engine.sweep_spectrum()
        assert not result.failures
        return result.records[0].qe.mean / bench.ground_truth_qe(800.0, *CENTER) - 1.0

    bias_forced = run(force_filter=0)
    bias_auto = run(force_filter=None)
    assert abs(bias_forced - bias_predicted) <= 0.1 * abs(bias_predicted), (
        f"forced-slot-0 bias {bias_forced:.4f} vs predicted {bias_predicted:.4f}")
    assert abs(bias_auto) <= 0.001, f"auto-filter bias {bias_auto:.5f}"
    report(4, f"stray light at 800 nm: forced slot 0 biases QE "
              f"{bias_forced * 100:+.2f}% (predicted {bias_predicted * 100:+.2f}%, "
              f"within 10%); select_filter leaves {abs(bias_auto) * 100:.3f}% (<=0.1%)")


@runtime_budget(30)
def test_criterion_05_feedback_stabilization():
    """PI loop holds the lamp to 0.2% where the free walk drifts past 1%."""
    held = []
    drifts = []
    steps = int(600.0 / 0.05)
    for seed in range(100):
        on = LampDynamics(LampConfig(feedback_on=True), 0.05,
                          random.Random(f"{seed}|lamp"))
        values = []
        for _ in range(steps):
            on._step()
            values.append(on.relative_output)
        held.append(statistics.pstdev(values) / statistics.fmean(values))

        off = LampDynamics(LampConfig(feedback_on=False), 0.05,
                           random.Random(f"{seed}|lamp"))
        off.advance(600.0)
        drifts.append(abs(off.relative_output - 1.0))
    assert max(held) <= 0.002, f"worst feedback-on std {max(held):.5f}"
    median_drift = statistics.median(drifts)
    assert median_drift >= 0.01, f"median free drift {median_drift:.5f}"
    report(5, f"lamp over 600 s x 100 seeds: feedback-on rel std max "
              f"{max(held) * 100:.3f}% (<=0.2%), free median drift "
              f"{median_drift * 100:.2f}% (>=1%)")


@runtime_budget(5)
def test_criterion_06_snake_path_properties():
    """Every grid up to 20x20: full cover, no repeats, unit-step moves."""
    checked = 0
    for nx in range(1, 21):
        for nz in range(1, 21):
            grid = ScanGrid(0.0, 0.0, 500.0, nx, nz)
            path = snake_path(grid)
            visited = [(p.ix, p.iz) for p in path]
            assert len(visited) == nx * nz
            assert len(set(visited)) == nx * nz
            expected = {(ix, iz) for iz in range(nz) for ix in range(nx)}
            assert set(visited) == expected
            for a, b in zip(path, path[1:]):
                assert (abs(b.ix - a.ix), abs(b.iz - a.iz)) in ((1, 0), (0, 1))
            checked += 1
    assert checked == 400
    report(6, "snake path on all 400 grids up to 20x20: exact cover with "
              "unit-step adjacency")


@runtime_budget(60)
def test_criterion_07_map_recovery_planted_cross():
    """A planted low-QE cross is recovered pixel-for-pixel."""
    grid = ScanGrid(35000.0, 35000.0, 500.0, 21, 21)
    cross = StructureSpec(shape="cross", multiplier=0.5,
                          center_x_um=40000.0, center_z_um=40000.0,
                          arm_width_um=1500.0, arm_length_um=11000.0)

    def planted(ix, iz):
        x, z = grid.point_xz(ix, iz)
        return abs(x - 40000.0) <= 750.0 or abs(z - 40000.0) <= 750.0

    def classify(matrix):
        values = [v for row in matrix for v in row if v is not None]
        threshold = (min(values) + max(values)) / 2.0
        hits = 0
        for iz in range(grid.nz):
            for ix in range(grid.nx):
                assert matrix[iz][ix] is not None
                if (matrix[iz][ix] < threshold) == planted(ix, iz):
                    hits += 1
        return hits / (grid.nx * grid.nz)

    # noiseless, small spot: pixel-exact
    clean = make_bench(seed=21, curve=flat_curve(0.3),
                       cathode_kwargs={"structures": (cross,)},
                       spot_diameter_um=200.0)
    cfg = scan_config(grid, 410.0, samples_per_point=2, averaging_window_s=0.1,
                      calibration=CalibrationConfig(samples=3, wavelengths=(410.0, 500.0)))
    engine = calibrated_engine(clean, cfg)
    result = engine.scan_2d()
    assert not result.failures and result.aborted is None
    exact = classify(result.matrix)
    assert exact == 1.0, f"noiseless classification {exact:.3%}"

    # default noise, default 1 mm spot: >= 99% correct classification
    noisy = SimBench(BenchConfig(
        seed=22,
        cathode=CathodeConfig(curve=flat_curve(0.3), structures=(cross,))))
    cfg_noisy = scan_config(grid, 410.0, seed=22,
                            calibration=CalibrationConfig(samples=3,
                                                          wavelengths=(410.0, 500.0)))
    engine = calibrated_engine(noisy, cfg_noisy)
    result = engine.scan_2d()
    assert result.aborted is None
    noisy_frac = classify(result.matrix)
    assert noisy_frac >= 0.99, f"noisy classification {noisy_frac:.3%}"
    # with default noise, per-pixel repeatability stays below 1% at 410 nm
    assert max(r.qe.repeatability_rel for r in result.records) <= 0.01
    report(7, f"planted cross at 410 nm: noiseless recovery pixel-exact, "
              f"{noisy_frac:.1%} correct under default noise (>=99%)")


@runtime_budget(30)
def test_criterion_08_protocol_robustness():
    """1e5 frame round-trips, chunking equivalence, crash-free fuzzing."""
    rng = random.Random(0xACCE55)
    verb_alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    verb_tail = verb_alphabet + "0123456789:*"
    token_chars = "".join(chr(c) for c in range(0x21, 0x7F))

    def random_frame():
        verb = (rng.choice(verb_alphabet + "*")
                + "".join(rng.choice(verb_tail) for _ in range(rng.randrange(0, 8))))
        args = tuple("".join(rng.choice(token_chars)
                             for _ in range(rng.randrange(1, 9)))
                     for _ in range(rng.randrange(0, 4)))
        return CommandFrame(verb, args, rng.random() < 0.5)

    frames = []
    for _ in range(100_000):
        frame = random_frame()
        assert parse_line(encode_command(frame), mode="command") == frame
        if len(frames) < 2000:
            frames.append(frame)

    blob = b"".join(encode_command(f) for f in frames)
    whole = StreamParser(mode="command").feed(blob)
    assert whole == frames
    for trial in range(20):
        chunk_rng = random.Random(trial)
        parser = StreamParser(mode="command")
        got = []
        i = 0
        while i < len(blob):
            j = min(len(blob), i + chunk_rng.randint(1, 97))
            got.extend(parser.feed(blob[i:j]))
            i = j
        assert got == whole

    fuzz = StreamParser(mode="auto")
    for _ in range(10_000):
        chunk = bytes(rng.randrange(256) for _ in range(rng.randrange(1, 48)))
        for item in fuzz.feed(chunk):
            assert isinstance(item, (CommandFrame, ResponseFrame, ProtocolError))
    report(8, "protocol: 100000 round-trips exact, 20 random chunkings match "
              "whole-buffer parse, fuzzing never crashes")


def _acceptance_run_config(tmp_path):
    bench = {
        "seed": 33,
        "cathode": {"disc_radius_um": 10000.0,
                    "curve": {"kind": "gauss", "peak": 0.3, "center_nm": 400.0,
                              "width_nm": 180.0, "floor": 0.02}},
    }
    spectrum_cfg = {
        "bench": bench, "seed": 33,
        "wavelengths": [350.0, 410.0, 500.0, 700.0, 900.0],
        "fixed_position": [40000.0, 40000.0],
        "samples_per_point": 5, "averaging_window_s": 0.25,
        "calibration": {"samples": 3, "wavelengths": [350.0, 600.0, 900.0]},
        "splitter_table": str(tmp_path / "cal" / "splitter_table.csv"),
    }
    scan_cfg = dict(spectrum_cfg)
    scan_cfg.pop("fixed_position")
    scan_cfg["wavelengths"] = [410.0]
    scan_cfg["grid"] = {"origin_x_um": 39000.0, "origin_z_um": 39000.0,
                        "step_um": 500.0, "nx": 4, "nz": 4}
    spectrum_path = tmp_path / "run_spectrum.yaml"
    spectrum_path.write_text(yaml.safe_dump(spectrum_cfg))
    scan_path = tmp_path / "run_scan.yaml"
    scan_path.write_text(yaml.safe_dump(scan_cfg))
    return spectrum_path, scan_path


@runtime_budget(120)
def test_criterion_09_determinism(tmp_path):
    """Identical config and seed give byte-identical result bundles."""
    runner = CliRunner()
    spectrum_cfg, scan_cfg = _acceptance_run_config(tmp_path)
    result = runner.invoke(cli_main, ["calibrate-splitter", "--config",
                                      str(spectrum_cfg), "--out",
                                      str(tmp_path / "cal"), "--quiet"])
    assert result.exit_code == 0, result.output
    bundles = {}
    for tag in ("one", "two"):
        spec_out = tmp_path / f"spec_{tag}"
        scan_out = tmp_path / f"scan_{tag}"
        r1 = runner.invoke(cli_main, ["spectrum", "--config", str(spectrum_cfg),
                                      "--out", str(spec_out), "--quiet"])
        assert r1.exit_code == 0, r1.output
        r2 = runner.invoke(cli_main, ["scan2d", "--config", str(scan_cfg),
                                      "--out", str(scan_out), "--quiet"])
        assert r2.exit_code == 0, r2.output
        files = {}
        for directory in (spec_out, scan_out):
            kind = directory.name.split("_")[0]
            for path in sorted(directory.iterdir()):
                files[f"{kind}:{path.name}"] = path.read_bytes()
        bundles[tag] = files
    names_one = {k.split(":", 1)[1] for k in bundles["one"]}
    assert {"manifest.json", "spectrum.csv", "samples_raw.csv", "summary.txt",
            "map.csv", "map_matrix.txt", "heatmap.pgm"} <= names_one
    assert bundles["one"].keys() == bundles["two"].keys()
    for name in bundles["one"]:
        assert bundles["one"][name] == bundles["two"][name], f"{name} differs"
    report(9, f"determinism: {len(bundles['one'])} bundle files byte-identical "
              f"across repeated runs")


@runtime_budget(60)
def test_criterion_10_simultaneity_contract():
    """Accepted sample pairs always satisfy the skew bound; violations are
    retried and then errored, never silently kept."""
    # normal run: every accepted pair inside the 10 ms bound
    bench = SimBench(BenchConfig(seed=44))
    cfg = spectrum_config([410.0, 500.0, 700.0], seed=44,
                          calibration=CalibrationConfig(samples=3,
                                                        wavelengths=(410.0, 700.0)))
    engine = calibrated_engine(bench, cfg)
    result = engine.sweep_spectrum()
    assert result.raw_samples
    worst = max(abs(r.t_power_s - r.t_current_s) for r in result.raw_samples)
    assert worst <= cfg.max_read_skew_s
    # impossible bound: loud retry then per-point skew failures, zero
    # accepted samples
    bench2 = make_bench(seed=45, curve=flat_curve())
    tight = spectrum_config([410.0], max_read_skew_s=0.001)
    messages = []
    engine2 = calibrated_engine(bench2, tight, progress=messages.append)
    result2 = engine2.sweep_spectrum()
    assert not result2.records
    assert not result2.raw_samples
    assert result2.failures and "skew" in result2.failures[0].message.lower()
    assert any("retrying" in m for m in messages)
    report(10, f"simultaneity: worst accepted skew "
               f"{worst * 1e3:.1f} ms <= 10 ms; impossible bound retries "
               f"then errors with no samples accepted")
