"""Typed client wrappers over raw instrument sessions."""

from __future__ import annotations

from ..errors import OverRangeError, ProtocolError
from ..grammars import ERR_OVERRANGE
from ..protocol import CommandFrame, ResponseFrame
from ..transport import Session


class InstrumentClient:
    def __init__(self, session: Session):
        self.session = session

    def _exchange(self, verb: str, *args: str, query: bool = False
                  ) -> tuple[float, ResponseFrame]:
        frame = CommandFrame(verb, tuple(args), query)
        t, response = self.session.query(frame)
        if not response.ok:
            if response.code == ERR_OVERRANGE:
                raise OverRangeError(f"{self.session.endpoint.kind}: over-range "
                                     f"({response.text()})")
            raise ProtocolError(f"{self.session.endpoint.kind}: {verb} rejected: "
                                f"ERR {response.code} {response.text()}")
        return t, response

    def _set(self, verb: str, *args: str) -> None:
        self._exchange(verb, *args)

    def _ask(self, verb: str, *args: str) -> tuple[float, str]:
        t, response = self._exchange(verb, *args, query=True)
        return t, response.text()

    def close(self) -> None:
        self.session.close()


class Picoammeter(InstrumentClient):
    def idn(self) -> str:
        return self._ask("*IDN")[1]

    def read_current(self) -> tuple[float, float]:
        t, text = self._ask("READ")
        return t, float(text)

    def set_range(self, amps: float) -> None:
        self._set("RANG", f"{amps:.6E}")

    def zero_check(self, on: bool) -> None:
        self._set("ZCH", "ON" if on else "OFF")


class Monochromator(InstrumentClient):
    def set_wavelength(self, nm: float) -> None:
        self._set("GWAVE", f"{nm:.3f}")

    def wavelength(self) -> float:
        return float(self._ask("WAVE")[1])

    def set_filter(self, slot) -> None:
        self._set("FILT", str(slot))

    def filter_slot(self) -> int:
        return int(self._ask("FILT")[1])

    def set_shutter(self, open_: bool) -> None:
        self._set("SHUT", "O" if open_ else "C")

    def shutter_open(self) -> bool:
        return self._ask("SHUT")[1] == "O"

    def set_lamp(self, pct: float) -> None:
        self._set("LAMP", f"{pct:.1f}")

    def set_feedback(self, on: bool) -> None:
        self._set("FBK", "ON" if on else "OFF")


class PowerMeter(InstrumentClient):
    def set_lambda(self, nm: float) -> None:
        self._set("PM:LAMBDA", f"{nm:.3f}")

    def read_power(self, channel: int) -> tuple[float, float]:
        t, text = self._ask("PM:POW", str(channel))
        return t, float(text)

    def unit(self) -> str:
        return self._ask("PM:UNIT")[1]


class Stage(InstrumentClient):
    def move_x(self, um: float) -> None:
        self._set("MOVX", f"{um:.3f}")

    def move_z(self, um: float) -> None:
        self._set("MOVZ", f"{um:.3f}")

    def pos_x(self) -> float:
        return float(self._ask("POSX")[1])

    def pos_z(self) -> float:
        return float(self._ask("POSZ")[1])

    def home(self) -> None:
        self._set("HOME")

    def moving(self) -> bool:
        return self._ask("MOVING")[1] == "1"


class CalibrationFixture:
    """How the two reference diodes get (re)mounted on the splitter arms.

    ``mount`` takes "normal" (probe A on the monitor arm, B on the DUT
    arm), "swapped", or "none" (probes removed, PMT back in place).
    """

    def mount(self, arrangement: str) -> None:
        raise NotImplementedError


class BenchFixture(CalibrationFixture):
    """Drives a co-located virtual bench directly."""

    def __init__(self, bench):
        self.bench = bench

    def mount(self, arrangement: str) -> None:
        self.bench.mount_calibration_probes(arrangement)


class PromptFixture(CalibrationFixture):
    """Asks the operator to move the probes (real hardware over TCP)."""

    INSTRUCTIONS = {
        "normal": "mount probe A on the MONITOR arm, probe B on the DUT arm",
        "swapped": "swap the probes: A on the DUT arm, B on the MONITOR arm",
        "none": "remove both probes and restore the device under test",
    }

    def __init__(self, prompt=input):
        self._prompt = prompt

    def mount(self, arrangement: str) -> None:
        self._prompt(f"[fixture] {self.INSTRUCTIONS[arrangement]}; press enter when done ")
