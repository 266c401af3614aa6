"""Offline recomputation of QE results from raw sample logs.

Shares the assembly code with the live engine, so re-analysis of a run's
``samples_raw.csv`` reproduces the engine's spectrum/map output exactly
(bit for bit once written, since raw floats round-trip through the log).
"""

from __future__ import annotations

from typing import Optional, Sequence

from .dataio import RunManifest
from .engine.records import (
    MapRecord,
    RawSample,
    SpectrumRecord,
    map_record_from_rows,
    spectrum_record_from_rows,
)
from .engine.runner import assemble_matrix
from .errors import ConfigError
from .quantities import Wavelength
from .scanpath import PathPoint, ScanGrid, snake_path
from .uncertainty import CalibrationBand, band_lookup, combined_uncertainty


def _bands_from_config(config: dict) -> tuple[tuple[CalibrationBand, ...], float]:
    try:
        bands = tuple(CalibrationBand(b["lambda_min_nm"], b["lambda_max_nm"],
                                      b["rel_uncertainty"])
                      for b in config["bands"])
        return bands, float(config["picoammeter_rel"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"manifest config lacks band information: {exc}") from exc


def _grid_from_config(config: dict) -> Optional[ScanGrid]:
    grid = config.get("grid")
    if grid is None:
        return None
    mask_center = grid.get("mask_center_um")
    return ScanGrid(
        origin_x_um=grid["origin_x_um"], origin_z_um=grid["origin_z_um"],
        step_um=grid["step_um"], nx=grid["nx"], nz=grid["nz"],
        mask_radius_um=grid.get("mask_radius_um"),
        mask_center_um=tuple(mask_center) if mask_center else None)


def _group_by_point(samples: Sequence[RawSample]) -> list[list[RawSample]]:
    groups: dict[int, list[RawSample]] = {}
    for row in samples:
        groups.setdefault(row.point_index, []).append(row)
    out = []
    for index in sorted(groups):
        rows = sorted(groups[index], key=lambda r: r.sample_index)
        out.append(rows)
    return out


def analyze_spectrum(samples: Sequence[RawSample], manifest: RunManifest
                     ) -> list[SpectrumRecord]:
    bands, pico_rel = _bands_from_config(manifest.config)
    records = []
    for rows in _group_by_point(samples):
        nm = rows[0].lambda_nm
        systematic = combined_uncertainty(
            band_lookup(bands, Wavelength(nm)), pico_rel).total_rel
        records.append(spectrum_record_from_rows(rows, systematic))
    return records


def analyze_map(samples: Sequence[RawSample], manifest: RunManifest
                ) -> tuple[list[MapRecord], list[list[Optional[float]]]]:
    bands, pico_rel = _bands_from_config(manifest.config)
    grid = _grid_from_config(manifest.config)
    if grid is None:
        raise ConfigError("manifest has no grid; this run was not a 2D scan")
    path = {p.index: p for p in snake_path(grid)}
    records = []
    for rows in _group_by_point(samples):
        nm = rows[0].lambda_nm
        systematic = combined_uncertainty(
            band_lookup(bands, Wavelength(nm)), pico_rel).total_rel
        point = path.get(rows[0].point_index)
        if point is None:
            point = PathPoint(index=rows[0].point_index, ix=0, iz=0,
                              x_um=rows[0].x_um, z_um=rows[0].z_um)
        records.append(map_record_from_rows(rows, point, systematic))
    matrix = assemble_matrix(grid.nx, grid.nz, records)
    return records, matrix


def is_map_run(manifest: RunManifest) -> bool:
    return manifest.config.get("grid") is not None
