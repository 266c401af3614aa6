"""Result persistence: run manifests, CSV schemas, matrix files, heatmaps.

Every file is self-describing: a ``# schema:`` line and a ``# manifest:``
line referencing the run it belongs to. Floats are written with ``repr``
(shortest round-trip form, '.' decimal, no locale), lines end with LF, and
writes are atomic (temp file + rename), so identical runs produce
byte-identical bundles.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .engine.config import SplitEntry, SplitRatioTable
from .engine.records import MapRecord, RawSample, SpectrumRecord
from .errors import ConfigError, ConsistencyError
from .quantities import QeValue
from .scanpath import PathPoint, ScanGrid
from .uncertainty import QUADRATURE_NOTE, combined_uncertainty

MANIFEST_SCHEMA = "qescan-manifest v1"
SPECTRUM_SCHEMA = "qescan-spectrum v1"
MAP_SCHEMA = "qescan-map v1"
MATRIX_SCHEMA = "qescan-map-matrix v1"
SAMPLES_SCHEMA = "qescan-samples v1"
SPLITTER_SCHEMA = "qescan-splitter v1"
COMPARE_SCHEMA = "qescan-compare v1"
SUMMARY_SCHEMA = "qescan-summary v1"

SPECTRUM_COLUMNS = ("wavelength_nm", "qe", "qe_repeatability_rel",
                    "qe_systematic_rel", "qe_total_rel", "p_dut_w", "i_a",
                    "filter_slot", "n_samples")
MAP_COLUMNS = ("index", "ix", "iz", "x_um", "z_um", "qe", "rep_rel", "sys_rel")
SAMPLES_COLUMNS = ("point_index", "lambda_nm", "x_um", "z_um", "filter_slot",
                   "sample_index", "t_power_s", "monitor_power_w",
                   "t_current_s", "current_a", "dark_a", "k_mon_to_dut")
SPLITTER_COLUMNS = ("lambda_nm", "k_mon_to_dut", "method", "uncertainty_rel")


def fmt(value: float) -> str:
    """Shortest exact decimal form of a float."""
    return repr(float(value))


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_text(text, newline="\n")
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


# --- manifest ----------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    seed: int
    created: str
    software_version: str
    instruments: dict[str, str]
    calibration_table: str
    config: dict


def make_run_id(config_snapshot: dict, seed: int, deterministic: bool) -> tuple[str, str]:
    """(run_id, created) for a run.

    Deterministic (loopback) runs derive the id from a digest of the
    configuration so identical runs share identical bundles; live runs use
    a wall-clock stamp.
    """
    if deterministic:
        digest = hashlib.sha256(
            (json.dumps(config_snapshot, sort_keys=True) + f"|{seed}").encode()
        ).hexdigest()[:12]
        return f"{digest}-{seed:08x}", "deterministic"
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return f"{stamp}-{seed:08x}", stamp


def write_manifest(path: Path, manifest: RunManifest) -> None:
    payload = {"schema": MANIFEST_SCHEMA, **dataclasses.asdict(manifest)}
    atomic_write_text(Path(path), json.dumps(payload, sort_keys=True, indent=1) + "\n")


def read_manifest(path: Path) -> RunManifest:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if payload.get("schema") != MANIFEST_SCHEMA:
        raise ConfigError(f"{path}: not a {MANIFEST_SCHEMA} file")
    payload.pop("schema")
    return RunManifest(**payload)


# --- generic CSV helpers -------------------------------------------------------


def _emit_csv(schema: str, manifest_ref: str, columns: Sequence[str],
              rows: Sequence[Sequence[str]]) -> str:
    lines = [f"# schema: {schema}", f"# manifest: {manifest_ref}",
             ",".join(columns)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def _read_csv(path: Path, schema: str, columns: Sequence[str]
              ) -> tuple[list[list[str]], str]:
    """Rows + the manifest reference, validating the schema header."""
    seen_schema = None
    manifest_ref = ""
    header = None
    rows: list[list[str]] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("schema:"):
                seen_schema = body.partition(":")[2].strip()
            elif body.startswith("manifest:"):
                manifest_ref = body.partition(":")[2].strip()
            continue
        if header is None:
            header = line.split(",")
            if header != list(columns):
                raise ConfigError(f"{path}: unexpected columns {header}")
            continue
        rows.append(line.split(","))
    if seen_schema != schema:
        raise ConfigError(f"{path}: expected schema {schema!r}, got {seen_schema!r}")
    return rows, manifest_ref


# --- spectrum ------------------------------------------------------------------


def write_spectrum_csv(path: Path, records: Sequence[SpectrumRecord],
                       manifest_ref: str) -> None:
    if not records:
        raise ConsistencyError("refusing to write an empty spectrum")
    rows = []
    for r in records:
        rows.append((fmt(r.wavelength_nm), fmt(r.qe.mean),
                     fmt(r.qe.repeatability_rel), fmt(r.qe.systematic_rel),
                     fmt(r.qe.total_rel), fmt(r.p_dut_mean_w), fmt(r.i_mean_a),
                     str(r.filter_slot), str(r.qe.n_samples)))
    atomic_write_text(Path(path), _emit_csv(SPECTRUM_SCHEMA, manifest_ref,
                                            SPECTRUM_COLUMNS, rows))


def read_spectrum_csv(path: Path) -> tuple[list[SpectrumRecord], str]:
    rows, manifest_ref = _read_csv(Path(path), SPECTRUM_SCHEMA, SPECTRUM_COLUMNS)
    records = []
    for row in rows:
        qe = QeValue(mean=float(row[1]), repeatability_rel=float(row[2]),
                     systematic_rel=float(row[3]), n_samples=int(row[8]))
        records.append(SpectrumRecord(
            wavelength_nm=float(row[0]), qe=qe, p_dut_mean_w=float(row[5]),
            i_mean_a=float(row[6]), filter_slot=int(row[7]),
            timestamp_s=0.0))
    return records, manifest_ref


# --- 2D map ----------------------------------------------------------------------


def write_map_csv(path: Path, records: Sequence[MapRecord], manifest_ref: str) -> None:
    rows = []
    for r in records:
        rows.append((str(r.point.index), str(r.point.ix), str(r.point.iz),
                     fmt(r.point.x_um), fmt(r.point.z_um), fmt(r.qe.mean),
                     fmt(r.qe.repeatability_rel), fmt(r.qe.systematic_rel)))
    atomic_write_text(Path(path), _emit_csv(MAP_SCHEMA, manifest_ref,
                                            MAP_COLUMNS, rows))


def read_map_csv(path: Path) -> tuple[list[tuple[PathPoint, float, float, float]], str]:
    rows, manifest_ref = _read_csv(Path(path), MAP_SCHEMA, MAP_COLUMNS)
    out = []
    for row in rows:
        point = PathPoint(index=int(row[0]), ix=int(row[1]), iz=int(row[2]),
                          x_um=float(row[3]), z_um=float(row[4]))
        out.append((point, float(row[5]), float(row[6]), float(row[7])))
    return out, manifest_ref


def write_matrix(path: Path, matrix: Sequence[Sequence[Optional[float]]],
                 manifest_ref: str) -> None:
    nz = len(matrix)
    nx = len(matrix[0]) if nz else 0
    lines = [f"# schema: {MATRIX_SCHEMA}", f"# manifest: {manifest_ref}",
             f"# nx: {nx}", f"# nz: {nz}"]
    for row in matrix:
        if len(row) != nx:
            raise ConsistencyError("ragged matrix")
        lines.append(" ".join("NA" if v is None else fmt(v) for v in row))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_matrix(path: Path) -> list[list[Optional[float]]]:
    matrix: list[list[Optional[float]]] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        matrix.append([None if tok == "NA" else float(tok)
                       for tok in line.split()])
    return matrix


def check_map_consistency(records: Sequence[MapRecord], grid: ScanGrid) -> None:
    for r in records:
        if not (0 <= r.point.ix < grid.nx and 0 <= r.point.iz < grid.nz):
            raise ConsistencyError(
                f"record at (ix {r.point.ix}, iz {r.point.iz}) outside "
                f"{grid.nx}x{grid.nz} grid")
        x, z = grid.point_xz(r.point.ix, r.point.iz)
        if (x, z) != (r.point.x_um, r.point.z_um):
            raise ConsistencyError(
                f"record {r.point.index} coordinates disagree with the grid")


# --- raw samples -------------------------------------------------------------------


def write_samples_csv(path: Path, samples: Sequence[RawSample],
                      manifest_ref: str) -> None:
    rows = []
    for s in samples:
        rows.append((str(s.point_index), fmt(s.lambda_nm), fmt(s.x_um),
                     fmt(s.z_um), str(s.filter_slot), str(s.sample_index),
                     fmt(s.t_power_s), fmt(s.monitor_power_w),
                     fmt(s.t_current_s), fmt(s.current_a), fmt(s.dark_a),
                     fmt(s.k_mon_to_dut)))
    atomic_write_text(Path(path), _emit_csv(SAMPLES_SCHEMA, manifest_ref,
                                            SAMPLES_COLUMNS, rows))


def read_samples_csv(path: Path) -> tuple[list[RawSample], str]:
    rows, manifest_ref = _read_csv(Path(path), SAMPLES_SCHEMA, SAMPLES_COLUMNS)
    samples = []
    for row in rows:
        samples.append(RawSample(
            point_index=int(row[0]), lambda_nm=float(row[1]),
            x_um=float(row[2]), z_um=float(row[3]), filter_slot=int(row[4]),
            sample_index=int(row[5]), t_power_s=float(row[6]),
            monitor_power_w=float(row[7]), t_current_s=float(row[8]),
            current_a=float(row[9]), dark_a=float(row[10]),
            k_mon_to_dut=float(row[11])))
    return samples, manifest_ref


# --- splitter table -------------------------------------------------------------------


def write_splitter_csv(path: Path, table: SplitRatioTable, manifest_ref: str) -> None:
    rows = [(fmt(e.lambda_nm), fmt(e.k_mon_to_dut), e.method,
             fmt(e.uncertainty_rel)) for e in table.entries]
    atomic_write_text(Path(path), _emit_csv(SPLITTER_SCHEMA, manifest_ref,
                                            SPLITTER_COLUMNS, rows))


def read_splitter_csv(path: Path) -> tuple[SplitRatioTable, str]:
    rows, manifest_ref = _read_csv(Path(path), SPLITTER_SCHEMA, SPLITTER_COLUMNS)
    entries = [SplitEntry(lambda_nm=float(r[0]), k_mon_to_dut=float(r[1]),
                          method=r[2], uncertainty_rel=float(r[3]))
               for r in rows]
    return SplitRatioTable(entries), manifest_ref


# --- heatmap ----------------------------------------------------------------------------


def heatmap_pgm(matrix: Sequence[Sequence[Optional[float]]]) -> bytes:
    """8-bit binary PGM; intensity is linear in QE (1..255), absent cells 0."""
    values = [v for row in matrix for v in row if v is not None]
    nz = len(matrix)
    nx = len(matrix[0]) if nz else 0
    lo = min(values) if values else 0.0
    hi = max(values) if values else 1.0
    span = hi - lo
    pixels = bytearray()
    for row in matrix:
        for v in row:
            if v is None:
                pixels.append(0)
            elif span == 0.0:
                pixels.append(128)
            else:
                pixels.append(1 + round(254 * (v - lo) / span))
    return f"P5\n{nx} {nz}\n255\n".encode() + bytes(pixels)


def write_heatmap(path: Path, matrix: Sequence[Sequence[Optional[float]]]) -> None:
    atomic_write_bytes(Path(path), heatmap_pgm(matrix))


# --- compare overlay -----------------------------------------------------------------------


def write_compare_csv(path: Path, labeled: Sequence[tuple[str, list[SpectrumRecord]]]
                      ) -> None:
    """Wide overlay of several spectra: one qe column per source."""
    wavelengths = sorted({r.wavelength_nm for _, records in labeled for r in records})
    columns = ["wavelength_nm"] + [f"qe_{label}" for label, _ in labeled]
    by_source = [{r.wavelength_nm: r.qe.mean for r in records}
                 for _, records in labeled]
    rows = []
    for nm in wavelengths:
        row = [fmt(nm)]
        for table in by_source:
            row.append(fmt(table[nm]) if nm in table else "NA")
        rows.append(row)
    sources = " ".join(label for label, _ in labeled)
    atomic_write_text(Path(path), _emit_csv(COMPARE_SCHEMA, sources, columns, rows))


# --- run summary ------------------------------------------------------------------------------


def render_summary(manifest: RunManifest, mode: str, n_ok: int,
                   failures: Sequence, dark_a: Optional[float],
                   duration_s: float, bands, picoammeter_rel: float,
                   extra: Sequence[str] = ()) -> str:
    lines = [
        f"# schema: {SUMMARY_SCHEMA}",
        f"# manifest: {manifest.run_id}",
        f"run_id: {manifest.run_id}",
        f"mode: {mode}",
        f"seed: {manifest.seed}",
        f"software_version: {manifest.software_version}",
        f"points_ok: {n_ok}",
        f"points_failed: {len(failures)}",
    ]
    for failure in failures:
        lines.append(f"failure: {failure.label}: {failure.category}: {failure.message}")
    if dark_a is not None:
        lines.append(f"dark_current_a: {fmt(dark_a)}")
    lines.append(f"virtual_duration_s: {fmt(duration_s)}")
    lines.append("uncertainty_budget:")
    for band in bands:
        total = combined_uncertainty(band.rel_uncertainty, picoammeter_rel).total_rel
        lines.append(
            f"  band {band.lambda_min_nm:g}-{band.lambda_max_nm:g} nm: "
            f"power {band.rel_uncertainty * 100:.2f}% "
            f"pico {picoammeter_rel * 100:.2f}% total {total * 100:.2f}%")
    lines.append(f"note: {QUADRATURE_NOTE}")
    lines.extend(extra)
    return "\n".join(lines) + "\n"
