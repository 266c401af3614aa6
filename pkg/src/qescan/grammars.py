"""Command grammars for the four instrument classes.

One table per instrument kind: verb, argument schema, response schema.
These grammars are normative for this station; they follow SCPI framing
conventions but make no claim of compatibility with any vendor firmware.

Numeric wire formats: currents in signed scientific notation with 6+
significant digits (sign mandatory), powers in scientific notation,
wavelengths/positions as fixed-point with 3 decimals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import UnknownInstrumentError
from .protocol import CommandFrame

INSTRUMENT_KINDS = ("picoammeter", "monochromator", "powermeter", "stage")

# Wire error codes.
ERR_SYNTAX = 100
ERR_UNKNOWN_VERB = 101
ERR_BAD_ARG = 102
ERR_OVERRANGE = 201


@dataclass(frozen=True)
class ArgSpec:
    """One positional argument: a bounded number and/or a keyword choice.

    ``kind`` is "float" or "int"; ``choices`` lists keywords additionally
    accepted verbatim (e.g. FILT takes 0..4 or AUTO).
    """

    name: str
    kind: str = "float"
    lo: Optional[float] = None
    hi: Optional[float] = None
    choices: tuple[str, ...] = ()

    def validate(self, token: str) -> Optional[str]:
        """Return an error message, or None when the token is acceptable."""
        if token in self.choices:
            return None
        if self.kind == "keyword":
            return f"{self.name} must be one of {'|'.join(self.choices)}"
        try:
            value = float(token)
        except ValueError:
            expected = "|".join((*self.choices, self.kind))
            return f"{self.name} must be {expected}, got {token!r}"
        if self.kind == "int" and value != int(value):
            return f"{self.name} must be an integer, got {token!r}"
        if self.lo is not None and value < self.lo:
            return f"{self.name} below {self.lo:g}"
        if self.hi is not None and value > self.hi:
            return f"{self.name} above {self.hi:g}"
        return None


@dataclass(frozen=True)
class VerbSpec:
    verb: str
    is_query: bool
    args: tuple[ArgSpec, ...] = ()
    response: str = "OK"  # schema tag of the reply payload

    @property
    def key(self) -> str:
        return self.verb + ("?" if self.is_query else "")


def _table(*specs: VerbSpec) -> dict[str, VerbSpec]:
    return {spec.key: spec for spec in specs}


_ONOFF = ArgSpec("state", kind="keyword", choices=("ON", "OFF"))

PICOAMMETER_GRAMMAR = _table(
    VerbSpec("*IDN", True, response="ident-string"),
    VerbSpec("READ", True, response="current-amperes-sci"),
    VerbSpec("RANG", False, (ArgSpec("range_a", "float", 2e-11, 2e-2),)),
    VerbSpec("RANG", True, response="current-amperes-sci"),
    VerbSpec("ZCH", False, (_ONOFF,)),
)

MONOCHROMATOR_GRAMMAR = _table(
    VerbSpec("GWAVE", False, (ArgSpec("wavelength_nm", "float", 250.0, 1100.0),)),
    VerbSpec("WAVE", True, response="wavelength-nm-fixed3"),
    VerbSpec("FILT", False, (ArgSpec("slot", "int", 0, 4, choices=("AUTO",)),)),
    VerbSpec("FILT", True, response="filter-slot-int"),
    VerbSpec("SHUT", False, (ArgSpec("position", kind="keyword", choices=("O", "C")),)),
    VerbSpec("SHUT", True, response="shutter-O-or-C"),
    VerbSpec("LAMP", False, (ArgSpec("setpoint_pct", "float", 0.0, 100.0),)),
    VerbSpec("LAMP", True, response="percent-fixed1"),
    VerbSpec("FBK", False, (_ONOFF,)),
)

POWERMETER_GRAMMAR = _table(
    VerbSpec("PM:LAMBDA", False, (ArgSpec("wavelength_nm", "float", 220.0, 1100.0),)),
    VerbSpec("PM:LAMBDA", True, response="wavelength-nm-fixed3"),
    VerbSpec("PM:POW", True, (ArgSpec("channel", "int", 1, 2),), response="power-watts-sci"),
    VerbSpec("PM:UNIT", True, response="unit-keyword"),
)

STAGE_GRAMMAR = _table(
    VerbSpec("MOVX", False, (ArgSpec("target_um", "float", 0.0, 300000.0),)),
    VerbSpec("MOVZ", False, (ArgSpec("target_um", "float", 0.0, 300000.0),)),
    VerbSpec("POSX", True, response="position-um-fixed3"),
    VerbSpec("POSZ", True, response="position-um-fixed3"),
    VerbSpec("HOME", False),
    VerbSpec("MOVING", True, response="flag-0-or-1"),
)

_GRAMMARS = {
    "picoammeter": PICOAMMETER_GRAMMAR,
    "monochromator": MONOCHROMATOR_GRAMMAR,
    "powermeter": POWERMETER_GRAMMAR,
    "stage": STAGE_GRAMMAR,
}


def command_set(kind: str) -> dict[str, VerbSpec]:
    """Full verb/arity/response table for one instrument kind."""
    try:
        return _GRAMMARS[kind]
    except KeyError:
        raise UnknownInstrumentError(
            f"unknown instrument kind {kind!r}; expected one of {INSTRUMENT_KINDS}"
        ) from None


def validate_frame(grammar: dict[str, VerbSpec], frame: CommandFrame
                   ) -> Optional[tuple[int, str]]:
    """Check a command against a grammar.

    Returns None when valid, else (wire error code, message).
    """
    spec = grammar.get(frame.key)
    if spec is None:
        return ERR_UNKNOWN_VERB, f"UNKNOWN VERB {frame.key}"
    if len(frame.args) != len(spec.args):
        return ERR_BAD_ARG, f"EXPECTED {len(spec.args)} ARGS"
    for arg_spec, token in zip(spec.args, frame.args):
        message = arg_spec.validate(token)
        if message is not None:
            return ERR_BAD_ARG, message.upper().replace(",", ";")
    return None


def format_current_a(value: float) -> str:
    return f"{value:+.6E}"


def format_power_w(value: float) -> str:
    return f"{value:.6E}"


def format_fixed3(value: float) -> str:
    return f"{value:.3f}"
