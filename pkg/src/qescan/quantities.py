"""Unit-carrying physical quantities and the photon/electron QE conversion.

The photocurrent-to-QE conversion used everywhere is the quantum form

    QE = (I / e) / (P * lambda / (h * c))

i.e. emitted electrons per second over incident photons per second. The
shorthand ratio I/P (amperes per watt) is a spectral responsivity, not a
quantum efficiency; this module always applies the full conversion.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InsufficientDataError, WavelengthRangeError, ZeroPowerError

# CODATA exact values (SI, post-2019 definitions).
PLANCK_J_S = 6.62607015e-34
LIGHT_SPEED_M_S = 299792458.0
ELECTRON_CHARGE_C = 1.602176634e-19

# Wavelength window the measurement engine accepts (sensor coverage) and the
# wider window calibration data may span.
ENGINE_RANGE_NM = (250.0, 1100.0)
CALIBRATION_RANGE_NM = (220.0, 1065.0)


@dataclass(frozen=True, slots=True)
class PhysicalConstants:
    """Fixed fundamental constants; not meant to be overridden by config."""

    h: float = PLANCK_J_S
    c: float = LIGHT_SPEED_M_S
    e: float = ELECTRON_CHARGE_C


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True, slots=True)
class Wavelength:
    nm: float

    def __post_init__(self):
        if not (isinstance(self.nm, (int, float)) and math.isfinite(self.nm)):
            raise WavelengthRangeError(f"wavelength must be a finite number, got {self.nm!r}")
        if self.nm <= 0:
            raise WavelengthRangeError(f"wavelength must be positive, got {self.nm} nm")

    @property
    def meters(self) -> float:
        return self.nm * 1e-9

    def require_engine_range(self) -> "Wavelength":
        lo, hi = ENGINE_RANGE_NM
        if not lo <= self.nm <= hi:
            raise WavelengthRangeError(
                f"{self.nm} nm outside engine-accepted range [{lo:g}, {hi:g}] nm"
            )
        return self


@dataclass(frozen=True, slots=True)
class OpticalPower:
    watts: float

    def __post_init__(self):
        if not math.isfinite(self.watts) or self.watts < 0:
            raise ValueError(f"optical power must be finite and >= 0, got {self.watts!r}")


@dataclass(frozen=True, slots=True)
class Photocurrent:
    """First-dynode current; may be negative (noise around the dark level)."""

    amps: float

    def __post_init__(self):
        if not math.isfinite(self.amps):
            raise ValueError(f"photocurrent must be finite, got {self.amps!r}")


# QE means outside [0, 1] are tolerated within this window (noise at low
# signal); anything beyond it indicates a broken pipeline, not noise.
QE_TOLERATED = (-0.01, 1.05)


@dataclass(frozen=True, slots=True)
class QeValue:
    """A measured QE with its two error classes.

    ``repeatability_rel`` is the relative sample standard deviation over
    repeated measurements; ``systematic_rel`` the relative calibration
    uncertainty of the instruments at this wavelength.
    """

    mean: float
    repeatability_rel: float
    systematic_rel: float
    n_samples: int

    def __post_init__(self):
        lo, hi = QE_TOLERATED
        if not math.isfinite(self.mean) or not lo <= self.mean <= hi:
            raise ValueError(f"QE mean {self.mean!r} outside tolerated window [{lo}, {hi}]")
        if self.repeatability_rel < 0:
            raise ValueError("repeatability_rel must be >= 0")
        if self.systematic_rel < 0:
            raise ValueError("systematic_rel must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    @property
    def flagged(self) -> bool:
        """True when the mean left the physical [0, 1] interval."""
        return not 0.0 <= self.mean <= 1.0

    @property
    def total_rel(self) -> float:
        return math.sqrt(self.repeatability_rel**2 + self.systematic_rel**2)

    @classmethod
    def from_samples(cls, samples: Sequence[float], systematic_rel: float) -> "QeValue":
        mean, stdev = repeatability(samples)
        rel = stdev / abs(mean) if mean != 0.0 else math.inf
        return cls(mean=mean, repeatability_rel=rel, systematic_rel=systematic_rel,
                   n_samples=len(samples))


def photon_rate(p: OpticalPower, wl: Wavelength,
                constants: PhysicalConstants = CONSTANTS) -> float:
    """Photons per second in a monochromatic beam of power ``p`` at ``wl``."""
    wl.require_engine_range()
    return p.watts * wl.meters / (constants.h * constants.c)


def quantum_efficiency(i: Photocurrent, p_dut: OpticalPower, wl: Wavelength,
                       constants: PhysicalConstants = CONSTANTS) -> float:
    """Electrons emitted per incident photon.

    Negative or >1 results are passed through untouched; flagging noisy
    values is the caller's job so that averaging stays unbiased.
    """
    if p_dut.watts == 0.0:
        raise ZeroPowerError("cannot compute QE with zero optical power on the DUT")
    rate = photon_rate(p_dut, wl, constants)
    return (i.amps / constants.e) / rate


def repeatability(samples: Iterable[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1 denominator)."""
    values = list(samples)
    if len(values) < 2:
        raise InsufficientDataError(
            f"repeatability needs at least 2 samples, got {len(values)}"
        )
    return statistics.fmean(values), statistics.stdev(values)
