"""Result record types and the raw-sample -> QE assembly.

``assemble_point`` is the single code path turning logged raw samples into
QE numbers; both the live engine and the offline re-analysis call it, so
recomputation from raw logs reproduces engine output bit for bit.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

from ..quantities import OpticalPower, Photocurrent, QeValue, Wavelength, quantum_efficiency
from ..scanpath import PathPoint


@dataclass(frozen=True, slots=True)
class RawSample:
    """One accepted power/current sample pair plus the conversion context."""

    point_index: int
    lambda_nm: float
    x_um: float
    z_um: float
    filter_slot: int
    sample_index: int
    t_power_s: float
    monitor_power_w: float
    t_current_s: float
    current_a: float
    dark_a: float
    k_mon_to_dut: float


@dataclass(frozen=True, slots=True)
class SpectrumRecord:
    wavelength_nm: float
    qe: QeValue
    p_dut_mean_w: float
    i_mean_a: float
    filter_slot: int
    timestamp_s: float


@dataclass(frozen=True, slots=True)
class MapRecord:
    point: PathPoint
    qe: QeValue
    p_dut_mean_w: float
    i_mean_a: float


@dataclass(frozen=True, slots=True)
class PointFailure:
    label: str  # "410 nm" or "point 37 (ix 3, iz 1)"
    category: str
    message: str


@dataclass(frozen=True)
class SweepResult:
    records: list[SpectrumRecord]
    failures: list[PointFailure]
    raw_samples: list[RawSample]
    dark_a: float


@dataclass(frozen=True)
class ScanResult:
    records: list[MapRecord]
    failures: list[PointFailure]
    raw_samples: list[RawSample]
    dark_a: float
    matrix: list[list[Optional[float]]]  # nz rows x nx cols, None = absent
    aborted: Optional[str] = None  # fault description when incomplete


def assemble_point(rows: Sequence[RawSample]) -> tuple[list[float], float, float]:
    """Per-sample QE list, mean DUT power and mean dark-corrected current.

    Each sample pairs its own power and current read, so the QE spread
    honestly reflects correlated source fluctuations.
    """
    if not rows:
        raise ValueError("no samples to assemble")
    wl = Wavelength(rows[0].lambda_nm)
    qe_samples = []
    p_dut = []
    i_corr = []
    for row in rows:
        p = row.monitor_power_w * row.k_mon_to_dut
        i = row.current_a - row.dark_a
        qe_samples.append(quantum_efficiency(Photocurrent(i), OpticalPower(p), wl))
        p_dut.append(p)
        i_corr.append(i)
    return qe_samples, statistics.fmean(p_dut), statistics.fmean(i_corr)


def spectrum_record_from_rows(rows: Sequence[RawSample], systematic_rel: float
                              ) -> SpectrumRecord:
    qe_samples, p_mean, i_mean = assemble_point(rows)
    return SpectrumRecord(
        wavelength_nm=rows[0].lambda_nm,
        qe=QeValue.from_samples(qe_samples, systematic_rel),
        p_dut_mean_w=p_mean,
        i_mean_a=i_mean,
        filter_slot=rows[0].filter_slot,
        timestamp_s=rows[0].t_power_s,
    )


def map_record_from_rows(rows: Sequence[RawSample], point: PathPoint,
                         systematic_rel: float) -> MapRecord:
    qe_samples, p_mean, i_mean = assemble_point(rows)
    return MapRecord(
        point=point,
        qe=QeValue.from_samples(qe_samples, systematic_rel),
        p_dut_mean_w=p_mean,
        i_mean_a=i_mean,
    )
