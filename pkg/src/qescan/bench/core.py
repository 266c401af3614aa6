"""The virtual bench: four instrument personalities over one physics state.

All state mutation passes through ``transact``: a command arrives, gets
stamped by the virtual clock, physics catches up to the stamp, the command
is validated against its grammar and applied, and exactly one response
line goes back. With a stepped clock the whole trajectory is a pure
function of (seed, config, command transcript), bit-exact across runs.

Modeling notes:

* Beam spectrum: a primary line at the set wavelength plus, when the
  second order falls inside the source range and no blocking filter is
  engaged, a leak line at half the wavelength carrying a configured
  fraction of the primary power. Power meters read the total over all
  lines; the photocathode responds per line.
* The calibration reference diode pair only affects readings while the
  calibration fixture is mounted (``mount_calibration_probes``); the
  station's own monitor sensor carries the per-band systematic that the
  error budget accounts for.
* Collection at the biased first dynode is taken as unity: every emitted
  photoelectron is counted.
"""

from __future__ import annotations

import random
import threading
from typing import Optional

from ..errors import ProtocolError, RangeError
from ..filters import select_filter
from ..grammars import (
    ERR_BAD_ARG,
    ERR_OVERRANGE,
    ERR_SYNTAX,
    command_set,
    format_current_a,
    format_fixed3,
    format_power_w,
    validate_frame,
)
from ..protocol import CommandFrame, ResponseFrame, encode_response, parse_line
from ..quantities import CONSTANTS, Wavelength
from ..errors import UnsafeOrderError
from .clock import make_clock
from .config import BenchConfig
from .models import CathodeMap, LampDynamics, StageAxis

IDN_STRING = "QESCAN,PICOAMMETER-6485,SN000001,FW1.0"

ARRANGEMENTS = ("none", "normal", "swapped")


class SimBench:
    def __init__(self, config: BenchConfig, clock=None):
        self.config = config
        self.clock = clock if clock is not None else make_clock(
            config.clock.mode, config.clock.accel, config.clock.command_latency_s)
        self._lock = threading.RLock()
        seed = config.seed

        def stream(name: str) -> random.Random:
            return random.Random(f"{seed}|{name}")

        sys_rng = stream("systematics")
        self._pm_band_draws = tuple(
            sys_rng.uniform(-bound, bound) for (_, _, bound) in config.noise.pm_sys_bands
        )
        self._pico_sys = sys_rng.uniform(-config.noise.pico_sys_bound,
                                         config.noise.pico_sys_bound)
        acc = config.stage.accuracy_um
        offset_x = sys_rng.uniform(-acc, acc)
        offset_z = sys_rng.uniform(-acc, acc)

        self.lamp = LampDynamics(config.lamp, config.clock.ctrl_dt_s, stream("lamp"))
        self.cathode = CathodeMap.from_config(config.cathode)
        self.stage_x = StageAxis(config.stage, offset_x, stream("stage"))
        self.stage_z = StageAxis(config.stage, offset_z, stream("stage-z"))
        self._pm_rng = stream("pm")
        self._pico_rng = stream("pico")

        # operational state
        self.wavelength_nm = config.mono.initial_nm
        self.shutter_open = False
        self.filter_slot = 0
        self.filter_auto = False
        self.pm_lambda_nm = config.mono.initial_nm
        self.pico_range_a = config.pico_range_a
        self.zero_check = False
        self.probe_arrangement = "none"

        self._grammars = {kind: command_set(kind) for kind in
                          ("picoammeter", "monochromator", "powermeter", "stage")}
        self._t_last = self.clock.now()
        self.transcript: Optional[list[tuple[float, str, str, str]]] = (
            [] if config.log_transcript else None)

    # --- time ---------------------------------------------------------------

    def _advance_to(self, t: float) -> None:
        if t > self._t_last:
            self.lamp.advance(t - self._t_last)
            self._t_last = t

    def tick(self, dt: float) -> None:
        """Advance the bench by dt seconds of virtual time."""
        if dt <= 0:
            raise ValueError("tick needs dt > 0")
        with self._lock:
            self.clock.sleep(dt)
            self._advance_to(self.clock.now())

    # --- optics (ground truth, no read noise) --------------------------------

    def source_power_w(self) -> float:
        """Mono output scale before the splitter, current lamp state."""
        cfg = self.config
        return (cfg.lamp.base_power_w * (self.lamp.setpoint_pct / 100.0)
                * self.lamp.relative_output * cfg.attenuation)

    def _filter_transmission(self, nm: float) -> float:
        if self.filter_slot == 0:
            return 1.0
        cuton = self.config.mono.filter_cutons_nm[self.filter_slot - 1]
        return 1.0 if nm > cuton else self.config.mono.blocked_transmission

    def beam_components(self, arm: str) -> list[tuple[float, float]]:
        """(wavelength_nm, watts) per spectral line reaching ``arm``."""
        if arm not in ("monitor", "dut"):
            raise ValueError(f"arm must be monitor|dut, got {arm!r}")
        if not self.shutter_open:
            return []
        source = self.source_power_w()
        mono = self.config.mono
        lines = [(self.wavelength_nm,
                  source * self._filter_transmission(self.wavelength_nm))]
        half = self.wavelength_nm / 2.0
        if half >= mono.min_nm and mono.stray_second_order_frac > 0.0:
            lines.append((half, source * mono.stray_second_order_frac
                          * self._filter_transmission(half)))
        out = []
        for nm, watts in lines:
            frac = self.config.splitter.fraction_at(nm)
            out.append((nm, watts * (frac if arm == "dut" else 1.0 - frac)))
        return out

    def optical_power_at(self, arm: str) -> float:
        return sum(watts for _, watts in self.beam_components(arm))

    def true_photocurrent_a(self) -> float:
        """Cathode current incl. dark offset, before instrument errors."""
        t = self.clock.now()
        x = self.stage_x.position(t)
        z = self.stage_z.position(t)
        hc = CONSTANTS.h * CONSTANTS.c
        electrons = 0.0
        for nm, watts in self.beam_components("dut"):
            rate = watts * (nm * 1e-9) / hc
            electrons += rate * self.cathode.qe_at(x, z, nm, self.config.spot_diameter_um)
        return CONSTANTS.e * electrons + self.config.noise.dark_current_a

    def ground_truth_qe(self, nm: float, x_um: Optional[float] = None,
                        z_um: Optional[float] = None) -> float:
        """Planted QE under the beam footprint (the verification oracle)."""
        t = self.clock.now()
        x = self.stage_x.position(t) if x_um is None else x_um
        z = self.stage_z.position(t) if z_um is None else z_um
        return self.cathode.qe_at(x, z, nm, self.config.spot_diameter_um)

    # --- instrument readings (noise applied) ---------------------------------

    def _pm_band_sys(self) -> float:
        nm = self.pm_lambda_nm
        bands = self.config.noise.pm_sys_bands
        hit = None
        for i, (lo, hi, _) in enumerate(bands):
            if lo <= nm <= hi:
                hit = i
                if lo == nm:
                    break
        if hit is None:
            return 0.0
        return self._pm_band_draws[hit]

    def pm_reading_w(self, channel: int) -> float:
        noise = self.config.noise
        arrangement = self.probe_arrangement
        if arrangement == "none":
            arm = "monitor" if channel == 1 else None
            probe_err = 0.0
        elif arrangement == "normal":
            arm = "monitor" if channel == 1 else "dut"
            probe_err = noise.cal_probe_errors[channel - 1]
        else:  # swapped
            arm = "dut" if channel == 1 else "monitor"
            probe_err = noise.cal_probe_errors[channel - 1]
        truth = self.optical_power_at(arm) if arm is not None else 0.0
        white = self._pm_rng.gauss(0.0, noise.pm_white_rel)
        floor = self._pm_rng.gauss(0.0, noise.pm_floor_w)
        return truth * (1.0 + probe_err) * (1.0 + self._pm_band_sys()) * (1.0 + white) + floor

    def pico_reading_a(self) -> float:
        noise = self.config.noise
        white = self._pico_rng.gauss(0.0, noise.pico_white_rel)
        if self.zero_check:
            return 0.0
        truth = self.true_photocurrent_a()
        return truth * (1.0 + self._pico_sys) * (1.0 + white)

    # --- calibration fixture --------------------------------------------------

    def mount_calibration_probes(self, arrangement: str) -> None:
        if arrangement not in ARRANGEMENTS:
            raise ValueError(f"arrangement must be one of {ARRANGEMENTS}")
        with self._lock:
            self.probe_arrangement = arrangement

    # --- wire entry -----------------------------------------------------------

    def transact(self, kind: str, line: bytes) -> tuple[float, bytes]:
        """Process one command line for one endpoint; returns (stamp, reply)."""
        with self._lock:
            t = self.clock.stamp_transaction()
            self._advance_to(t)
            grammar = self._grammars[kind]  # KeyError = caller bug
            try:
                frame = parse_line(line, mode="command")
            except ProtocolError as exc:
                response = ResponseFrame("ERR", ERR_SYNTAX,
                                         tuple(str(exc).upper().split()[:6]))
                return t, self._log_and_encode(t, kind, line, response)
            bad = validate_frame(grammar, frame)
            if bad is not None:
                code, message = bad
                response = ResponseFrame("ERR", code, tuple(message.split()))
            else:
                response = self._dispatch(kind, frame, t)
            return t, self._log_and_encode(t, kind, line, response)

    def _log_and_encode(self, t: float, kind: str, line: bytes,
                        response: ResponseFrame) -> bytes:
        data = encode_response(response)
        if self.transcript is not None:
            self.transcript.append((t, kind, ">", line.decode("ascii", "replace").rstrip()))
            self.transcript.append((t, kind, "<", data.decode("ascii").rstrip()))
        return data

    def transcript_text(self) -> str:
        if self.transcript is None:
            raise ValueError("transcript logging is disabled; set log_transcript")
        return "\n".join(f"{t:.6f} {kind} {d} {text}"
                         for t, kind, d, text in self.transcript)

    # --- dispatch ---------------------------------------------------------------

    def _dispatch(self, kind: str, frame: CommandFrame, t: float) -> ResponseFrame:
        handler = getattr(self, f"_handle_{kind}")
        return handler(frame, t)

    @staticmethod
    def _ok(*payload: str) -> ResponseFrame:
        return ResponseFrame("OK", payload=tuple(payload))

    def _handle_picoammeter(self, frame: CommandFrame, t: float) -> ResponseFrame:
        key = frame.key
        if key == "*IDN?":
            return self._ok(IDN_STRING)
        if key == "READ?":
            reading = self.pico_reading_a()
            if abs(reading) > self.pico_range_a:
                return ResponseFrame("ERR", ERR_OVERRANGE, ("OVERRANGE",))
            return self._ok(format_current_a(reading))
        if key == "RANG":
            self.pico_range_a = float(frame.args[0])
            return self._ok()
        if key == "RANG?":
            return self._ok(format_current_a(self.pico_range_a))
        if key == "ZCH":
            self.zero_check = frame.args[0] == "ON"
            return self._ok()
        raise AssertionError(key)

    def _handle_monochromator(self, frame: CommandFrame, t: float) -> ResponseFrame:
        key = frame.key
        mono = self.config.mono
        if key == "GWAVE":
            nm = float(frame.args[0])
            if not mono.min_nm <= nm <= mono.max_nm:
                return ResponseFrame("ERR", ERR_BAD_ARG, ("WAVELENGTH", "OUT", "OF", "RANGE"))
            if self.filter_auto:
                try:
                    slot = select_filter(Wavelength(nm), mono.filter_cutons_nm,
                                         source_min_nm=mono.min_nm)
                except UnsafeOrderError:
                    return ResponseFrame("ERR", ERR_BAD_ARG, ("NO", "SAFE", "FILTER"))
                self.filter_slot = slot
            self.wavelength_nm = nm
            return self._ok()
        if key == "WAVE?":
            return self._ok(format_fixed3(self.wavelength_nm))
        if key == "FILT":
            if frame.args[0] == "AUTO":
                try:
                    slot = select_filter(Wavelength(self.wavelength_nm),
                                         mono.filter_cutons_nm,
                                         source_min_nm=mono.min_nm)
                except UnsafeOrderError:
                    return ResponseFrame("ERR", ERR_BAD_ARG, ("NO", "SAFE", "FILTER"))
                self.filter_auto = True
                self.filter_slot = slot
            else:
                self.filter_auto = False
                self.filter_slot = int(float(frame.args[0]))
            return self._ok()
        if key == "FILT?":
            return self._ok(str(self.filter_slot))
        if key == "SHUT":
            self.shutter_open = frame.args[0] == "O"
            return self._ok()
        if key == "SHUT?":
            return self._ok("O" if self.shutter_open else "C")
        if key == "LAMP":
            self.lamp.setpoint_pct = float(frame.args[0])
            return self._ok()
        if key == "LAMP?":
            return self._ok(f"{self.lamp.setpoint_pct:.1f}")
        if key == "FBK":
            turning_on = frame.args[0] == "ON"
            if turning_on and not self.lamp.feedback_on:
                self.lamp.reset_feedback()
            self.lamp.feedback_on = turning_on
            return self._ok()
        raise AssertionError(key)

    def _handle_powermeter(self, frame: CommandFrame, t: float) -> ResponseFrame:
        key = frame.key
        if key == "PM:LAMBDA":
            self.pm_lambda_nm = float(frame.args[0])
            return self._ok()
        if key == "PM:LAMBDA?":
            return self._ok(format_fixed3(self.pm_lambda_nm))
        if key == "PM:POW?":
            return self._ok(format_power_w(self.pm_reading_w(int(float(frame.args[0])))))
        if key == "PM:UNIT?":
            return self._ok("W")
        raise AssertionError(key)

    def _handle_stage(self, frame: CommandFrame, t: float) -> ResponseFrame:
        key = frame.key
        if key in ("MOVX", "MOVZ"):
            axis = self.stage_x if key == "MOVX" else self.stage_z
            try:
                axis.command(float(frame.args[0]), t)
            except RangeError:
                return ResponseFrame("ERR", ERR_BAD_ARG, ("TARGET", "OUT", "OF", "TRAVEL"))
            return self._ok()
        if key == "POSX?":
            return self._ok(format_fixed3(self.stage_x.position(t)))
        if key == "POSZ?":
            return self._ok(format_fixed3(self.stage_z.position(t)))
        if key == "HOME":
            self.stage_x.command(0.0, t)
            self.stage_z.command(0.0, t)
            return self._ok()
        if key == "MOVING?":
            moving = self.stage_x.moving(t) or self.stage_z.moving(t)
            return self._ok("1" if moving else "0")
        raise AssertionError(key)
