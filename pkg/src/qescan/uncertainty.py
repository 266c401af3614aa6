"""Calibration bands and the instrument error budget.

The default power-meter bands mirror the NIST-traceable probe calibration
certificate: a relative accuracy bound per wavelength band, with gaps where
the certificate provides none (1000-1035 nm and above 1065 nm). The
picoammeter contributes a flat 0.4% in its 20 nA range.

Budget totals are always the exact quadrature sum of the two components.
Two legacy quoted totals for the shipped bands (3.52% for 220-300 nm and
1.16% for 430-1000 nm) are not quadrature-consistent (exact: 3.47% and
1.20%) and are deliberately not reproduced; run summaries record this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import UncoveredWavelengthError
from .quantities import Wavelength

# Relative tolerance for the quadrature identity in UncertaintyBudget.
QUADRATURE_RTOL = 1e-12


@dataclass(frozen=True, slots=True)
class CalibrationBand:
    lambda_min_nm: float
    lambda_max_nm: float
    rel_uncertainty: float

    def __post_init__(self):
        if not self.lambda_min_nm < self.lambda_max_nm:
            raise ValueError(
                f"band must have lambda_min < lambda_max, got "
                f"[{self.lambda_min_nm}, {self.lambda_max_nm}]"
            )
        if not self.rel_uncertainty > 0:
            raise ValueError("band rel_uncertainty must be > 0")

    def contains(self, nm: float) -> bool:
        return self.lambda_min_nm <= nm <= self.lambda_max_nm


DEFAULT_POWER_METER_BANDS: tuple[CalibrationBand, ...] = (
    CalibrationBand(220.0, 300.0, 0.0345),
    CalibrationBand(300.0, 430.0, 0.0167),
    CalibrationBand(430.0, 1000.0, 0.0113),
    CalibrationBand(1035.0, 1065.0, 0.0433),
)

DEFAULT_PICOAMMETER_REL = 0.004


@dataclass(frozen=True, slots=True)
class UncertaintyBudget:
    power_meter_rel: float
    picoammeter_rel: float
    total_rel: float

    def __post_init__(self):
        if self.power_meter_rel < 0 or self.picoammeter_rel < 0:
            raise ValueError("budget components must be >= 0")
        exact = math.hypot(self.power_meter_rel, self.picoammeter_rel)
        if exact == 0.0:
            ok = self.total_rel == 0.0
        else:
            ok = abs(self.total_rel - exact) <= QUADRATURE_RTOL * exact
        if not ok:
            raise ValueError(
                f"total_rel {self.total_rel!r} is not the quadrature sum "
                f"{exact!r} of the components"
            )


def combined_uncertainty(power_meter_rel: float, picoammeter_rel: float) -> UncertaintyBudget:
    """Quadrature combination of the two instrument accuracy bounds."""
    if power_meter_rel < 0 or picoammeter_rel < 0:
        raise ValueError(
            f"uncertainty components must be >= 0, got "
            f"({power_meter_rel!r}, {picoammeter_rel!r})"
        )
    return UncertaintyBudget(
        power_meter_rel=power_meter_rel,
        picoammeter_rel=picoammeter_rel,
        total_rel=math.hypot(power_meter_rel, picoammeter_rel),
    )


def validate_bands(bands: Sequence[CalibrationBand]) -> tuple[CalibrationBand, ...]:
    """Sort bands and reject overlapping interiors (shared edges are fine)."""
    ordered = tuple(sorted(bands, key=lambda b: b.lambda_min_nm))
    for a, b in zip(ordered, ordered[1:]):
        if b.lambda_min_nm < a.lambda_max_nm:
            raise ValueError(
                f"bands overlap: [{a.lambda_min_nm}, {a.lambda_max_nm}] and "
                f"[{b.lambda_min_nm}, {b.lambda_max_nm}]"
            )
    return ordered


def band_lookup(bands: Sequence[CalibrationBand], wl: Wavelength) -> float:
    """Relative uncertainty of the band containing ``wl``.

    On a shared band edge the upper band wins (a certificate entry starting
    at that wavelength describes it). Wavelengths in a coverage gap raise
    UncoveredWavelengthError carrying the nearest band.
    """
    ordered = validate_bands(bands)
    hits = [b for b in ordered if b.contains(wl.nm)]
    if hits:
        for band in hits:
            if band.lambda_min_nm == wl.nm:
                return band.rel_uncertainty
        return hits[0].rel_uncertainty

    def distance(band: CalibrationBand) -> float:
        if wl.nm < band.lambda_min_nm:
            return band.lambda_min_nm - wl.nm
        return wl.nm - band.lambda_max_nm

    nearest = min(ordered, key=distance)
    raise UncoveredWavelengthError(
        f"{wl.nm} nm is not covered by any calibration band; nearest is "
        f"[{nearest.lambda_min_nm:g}, {nearest.lambda_max_nm:g}] nm "
        f"({distance(nearest):g} nm away)",
        nearest=nearest,
    )


def budget_at(bands: Sequence[CalibrationBand], wl: Wavelength,
              picoammeter_rel: float = DEFAULT_PICOAMMETER_REL) -> UncertaintyBudget:
    """Full instrument budget at one wavelength."""
    return combined_uncertainty(band_lookup(bands, wl), picoammeter_rel)


# Note recorded in run summaries; see module docstring.
QUADRATURE_NOTE = (
    "budget totals are exact quadrature of the component columns; "
    "legacy quoted totals 3.52 (220-300 nm) and 1.16 (430-1000 nm) deviate "
    "from quadrature (3.47, 1.20) and are not used"
)
