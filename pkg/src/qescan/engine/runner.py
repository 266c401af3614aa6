"""The measurement orchestrator.

Loop structure, innermost first: paired power/current sampling averaged
over a settable window; a wavelength loop (any order, scattered or
incremental); an optional outer 2D scan loop following a snake path.

Operational choices that the hardware does not dictate:

* "Simultaneous" reads are a skew bound: a sample pair is accepted only
  when its two timestamps differ by at most ``max_read_skew_s``; a
  violating pair is retried once and then the point fails loudly.
* Dark current is measured with the shutter closed at run start (and every
  ``dark_every`` points when configured) and subtracted from every sample.
* Running without a splitter calibration table is an error, never a silent
  assumption of 1.0.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

from ..errors import (
    CalibrationError,
    ConfigError,
    OverRangeError,
    QescanError,
    SkewError,
    TransportError,
    UncoveredWavelengthError,
    UnsafeOrderError,
    ZeroPowerError,
)
from ..filters import select_filter
from ..quantities import Wavelength
from ..scanpath import snake_path
from ..transport import Session
from ..uncertainty import band_lookup, combined_uncertainty
from .config import CalibrationConfig, RunConfig, SplitEntry, SplitRatioTable
from .instruments import (
    CalibrationFixture,
    Monochromator,
    Picoammeter,
    PowerMeter,
    Stage,
)
from .records import (
    MapRecord,
    PointFailure,
    RawSample,
    ScanResult,
    SpectrumRecord,
    SweepResult,
    map_record_from_rows,
    spectrum_record_from_rows,
)

STAGE_MOTION_TIMEOUT_S = 120.0  # virtual seconds before a move is a fault

POINT_ERRORS = (UncoveredWavelengthError, UnsafeOrderError, SkewError,
                OverRangeError, ZeroPowerError, CalibrationError)


def _failure(label: str, exc: QescanError) -> PointFailure:
    return PointFailure(label=label, category=exc.category, message=str(exc))


class MeasurementEngine:
    def __init__(self, config: RunConfig, sessions: dict[str, Session], clock,
                 splitter_table: Optional[SplitRatioTable] = None,
                 progress: Optional[Callable[[str], None]] = None):
        self.config = config
        self.clock = clock
        self.pico = Picoammeter(sessions["picoammeter"])
        self.mono = Monochromator(sessions["monochromator"])
        self.pm = PowerMeter(sessions["powermeter"])
        self.stage = Stage(sessions["stage"])
        self.table = splitter_table
        self._progress = progress or (lambda message: None)
        self._dark_a: Optional[float] = None
        self._filter_slot: Optional[int] = None

    # --- lifecycle -----------------------------------------------------------

    def setup_instruments(self) -> None:
        self.pico.zero_check(False)
        self.pico.set_range(2e-8)
        if self.config.lamp_setpoint is not None:
            self.mono.set_lamp(self.config.lamp_setpoint)
        self.mono.set_feedback(self.config.feedback)
        self.mono.set_shutter(True)
        self.clock.sleep(self.config.settle.shutter_s)

    def close(self) -> None:
        for client in (self.pico, self.mono, self.pm, self.stage):
            client.close()

    def instrument_identities(self) -> dict[str, str]:
        """Identity strings for the run manifest. Only the picoammeter
        grammar has *IDN?; the rest identify by endpoint address."""
        return {
            "picoammeter": self.pico.idn(),
            "monochromator": f"endpoint {self.mono.session.endpoint.address}",
            "powermeter": f"endpoint {self.pm.session.endpoint.address}",
            "stage": f"endpoint {self.stage.session.endpoint.address}",
        }

    # --- primitives ----------------------------------------------------------

    def measure_dark(self) -> float:
        """Shutter-closed current, averaged; cached for subtraction."""
        settle = self.config.settle.shutter_s
        self.mono.set_shutter(False)
        self.clock.sleep(settle)
        reads = [self.pico.read_current()[1]
                 for _ in range(self.config.samples_per_point)]
        self.mono.set_shutter(True)
        self.clock.sleep(settle)
        self._dark_a = math.fsum(reads) / len(reads)
        self._progress(f"dark current: {self._dark_a:.3e} A")
        return self._dark_a

    def _paired_read(self) -> tuple[float, float, float, float]:
        """One simultaneous sample: (t_current, amps, t_power, watts)."""
        for attempt in (0, 1):
            t_i, amps = self.pico.read_current()
            t_p, watts = self.pm.read_power(1)
            skew = abs(t_p - t_i)
            if skew <= self.config.max_read_skew_s:
                return t_i, amps, t_p, watts
            self._progress(f"read skew {skew * 1e3:.1f} ms over bound; "
                           f"{'retrying' if attempt == 0 else 'giving up'}")
        raise SkewError(
            f"paired read skew {skew * 1e3:.3f} ms exceeds "
            f"{self.config.max_read_skew_s * 1e3:.3f} ms after retry")

    def select_filter_slot(self, wl: Wavelength) -> int:
        if self.config.force_filter is not None:
            return self.config.force_filter
        return select_filter(wl, self.config.filter_cutons_nm)

    def prepare_wavelength(self, nm: float) -> int:
        """Order-sorting filter, grating position, meter correction; settles."""
        slot = self.select_filter_slot(Wavelength(nm))
        if slot != self._filter_slot:
            self.mono.set_filter(slot)
            self._filter_slot = slot
            self.clock.sleep(self.config.settle.filter_s)
        self.mono.set_wavelength(nm)
        self.pm.set_lambda(nm)
        self.clock.sleep(self.config.settle.gwave_s)
        return slot

    def measure_point(self, nm: float, *, point_index: int, x_um: float,
                      z_um: float, filter_slot: int) -> list[RawSample]:
        """samples_per_point paired reads spread over the averaging window."""
        if self.table is None:
            raise ConfigError("no splitter calibration table loaded; "
                              "run calibrate-splitter first")
        if self._dark_a is None:
            raise ConfigError("dark current not measured before sampling")
        k = self.table.k_at(nm)
        n = self.config.samples_per_point
        period = self.config.averaging_window_s / n
        rows: list[RawSample] = []
        for s in range(n):
            t_start = self.clock.now()
            try:
                t_i, amps, t_p, watts = self._paired_read()
            except OverRangeError as exc:
                raise OverRangeError(str(exc), partial=rows) from None
            rows.append(RawSample(
                point_index=point_index, lambda_nm=nm, x_um=x_um, z_um=z_um,
                filter_slot=filter_slot, sample_index=s,
                t_power_s=t_p, monitor_power_w=watts,
                t_current_s=t_i, current_a=amps,
                dark_a=self._dark_a, k_mon_to_dut=k,
            ))
            if s < n - 1:
                elapsed = self.clock.now() - t_start
                if period > elapsed:
                    self.clock.sleep(period - elapsed)
        return rows

    def _move_and_settle(self, x_um: float, z_um: float) -> None:
        self.stage.move_x(x_um)
        self.stage.move_z(z_um)
        t0 = self.clock.now()
        while self.stage.moving():
            if self.clock.now() - t0 > STAGE_MOTION_TIMEOUT_S:
                raise TransportError(
                    f"stage did not settle within {STAGE_MOTION_TIMEOUT_S:g} s "
                    f"moving to ({x_um:g}, {z_um:g}) um")
        self.clock.sleep(self.config.settle.stage_s)

    def _systematic_rel(self, nm: float) -> float:
        budget = combined_uncertainty(
            band_lookup(self.config.bands, Wavelength(nm)),
            self.config.picoammeter_rel)
        return budget.total_rel

    # --- calibration -----------------------------------------------------------

    def calibrate_splitter(self, fixture: CalibrationFixture,
                           wavelengths: Optional[tuple[float, ...]] = None,
                           method: Optional[str] = None) -> SplitRatioTable:
        """Measure k(lambda) = DUT-arm power / monitor-arm power.

        single: one pass, probe A on the monitor arm, probe B on the DUT
        arm; k carries the pair's relative miscalibration.
        exchanged: a second pass with the probes swapped; the geometric
        mean of the two ratios cancels the pair's relative miscalibration.
        """
        cal: CalibrationConfig = self.config.calibration
        method = method or cal.method
        wavelengths = wavelengths or self.config.calibration_wavelengths()
        self.mono.set_shutter(True)
        self.clock.sleep(self.config.settle.shutter_s)

        def one_pass(arrangement: str) -> dict[float, tuple[float, float, float]]:
            fixture.mount(arrangement)
            out = {}
            for nm in wavelengths:
                try:
                    self.prepare_wavelength(nm)
                except UnsafeOrderError as exc:
                    self._progress(f"calibration skips {nm:g} nm: {exc}")
                    continue
                monitor_ch, dut_ch = (1, 2) if arrangement == "normal" else (2, 1)
                ratios = []
                for _ in range(cal.samples):
                    p_mon = self.pm.read_power(monitor_ch)[1]
                    p_dut = self.pm.read_power(dut_ch)[1]
                    if p_mon < cal.min_monitor_power_w:
                        fixture.mount("none")
                        raise CalibrationError(
                            f"monitor power {p_mon:.3e} W at {nm} nm below "
                            f"{cal.min_monitor_power_w:.1e} W; no beam?")
                    ratios.append(p_dut / p_mon)
                mean = math.fsum(ratios) / len(ratios)
                var = math.fsum((r - mean) ** 2 for r in ratios) / (len(ratios) - 1)
                sem_rel = math.sqrt(var) / (mean * math.sqrt(len(ratios)))
                out[nm] = (mean, sem_rel, 0.0)
            return out

        normal = one_pass("normal")
        entries = []
        if method == "single":
            for nm, (k, sem_rel, _) in normal.items():
                entries.append(SplitEntry(nm, k, "single", sem_rel))
        else:
            swapped = one_pass("swapped")
            for nm in normal:
                k1, sem1, _ = normal[nm]
                k2, sem2, _ = swapped[nm]
                k = math.sqrt(k1 * k2)
                entries.append(SplitEntry(
                    nm, k, "exchanged", 0.5 * math.hypot(sem1, sem2)))
        fixture.mount("none")
        if not entries:
            raise CalibrationError(
                "no calibration wavelength admits a safe diffraction order")
        self._progress(f"splitter calibrated at {len(entries)} wavelengths "
                       f"({method})")
        return SplitRatioTable(entries)

    # --- sweeps -----------------------------------------------------------------

    def sweep_spectrum(self) -> SweepResult:
        """QE vs wavelength at a fixed cathode position."""
        cfg = self.config
        if cfg.fixed_position is None:
            raise ConfigError("sweep_spectrum needs fixed_position")
        self._move_and_settle(*cfg.fixed_position)
        self.measure_dark()
        records: list[SpectrumRecord] = []
        failures: list[PointFailure] = []
        raw: list[RawSample] = []
        x_um, z_um = cfg.fixed_position
        for j, nm in enumerate(cfg.wavelengths):
            if cfg.dark_every and j and j % cfg.dark_every == 0:
                self.measure_dark()
            label = f"{nm:g} nm"
            try:
                systematic = self._systematic_rel(nm)
                slot = self.prepare_wavelength(nm)
                rows = self.measure_point(nm, point_index=j, x_um=x_um,
                                          z_um=z_um, filter_slot=slot)
                records.append(spectrum_record_from_rows(rows, systematic))
                raw.extend(rows)
                self._progress(f"{label}: qe={records[-1].qe.mean:.4f}")
            except POINT_ERRORS as exc:
                if isinstance(exc, OverRangeError) and exc.partial:
                    raw.extend(exc.partial)
                failures.append(_failure(label, exc))
                self._progress(f"{label}: failed ({exc.category}): {exc}")
        return SweepResult(records=records, failures=failures, raw_samples=raw,
                           dark_a=self._dark_a)

    def scan_2d(self) -> ScanResult:
        """QE map at a single wavelength over the configured grid."""
        cfg = self.config
        if cfg.grid is None:
            raise ConfigError("scan_2d needs a grid")
        if len(cfg.wavelengths) != 1:
            raise ConfigError("scan_2d takes exactly one wavelength")
        nm = cfg.wavelengths[0]
        systematic = self._systematic_rel(nm)  # refuse scan early if uncovered
        slot = self.prepare_wavelength(nm)     # and if order-unsafe
        path = snake_path(cfg.grid)
        records: list[MapRecord] = []
        failures: list[PointFailure] = []
        raw: list[RawSample] = []
        aborted = None
        dark_pending = True
        for idx, point in enumerate(path):
            label = f"point {point.index} (ix {point.ix}, iz {point.iz})"
            try:
                self._move_and_settle(point.x_um, point.z_um)
                if dark_pending or (cfg.dark_every and idx
                                    and idx % cfg.dark_every == 0):
                    self.measure_dark()
                    dark_pending = False
                rows = self.measure_point(nm, point_index=point.index,
                                          x_um=point.x_um, z_um=point.z_um,
                                          filter_slot=slot)
                records.append(map_record_from_rows(rows, point, systematic))
                raw.extend(rows)
            except POINT_ERRORS as exc:
                if isinstance(exc, OverRangeError) and exc.partial:
                    raw.extend(exc.partial)
                failures.append(_failure(label, exc))
            except TransportError as exc:
                aborted = f"{label}: {exc}"
                self._progress(f"scan aborted, checkpointing: {aborted}")
                break
            if (idx + 1) % 50 == 0:
                self._progress(f"scan progress: {idx + 1}/{len(path)} points")
        matrix = assemble_matrix(cfg.grid.nx, cfg.grid.nz, records)
        return ScanResult(records=records, failures=failures, raw_samples=raw,
                          dark_a=self._dark_a, matrix=matrix, aborted=aborted)


def assemble_matrix(nx: int, nz: int, records: list[MapRecord]
                    ) -> list[list[Optional[float]]]:
    """Dense QE matrix; cells without a record stay None, never zero."""
    matrix: list[list[Optional[float]]] = [[None] * nx for _ in range(nz)]
    for record in records:
        matrix[record.point.iz][record.point.ix] = record.qe.mean
    return matrix
