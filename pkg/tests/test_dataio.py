"""File format tests: round-trips, consistency checks, heatmap mapping."""

import math

import pytest

from qescan.dataio import (
    RunManifest,
    check_map_consistency,
    heatmap_pgm,
    make_run_id,
    read_manifest,
    read_map_csv,
    read_matrix,
    read_samples_csv,
    read_spectrum_csv,
    read_splitter_csv,
    write_manifest,
    write_map_csv,
    write_matrix,
    write_samples_csv,
    write_spectrum_csv,
    write_splitter_csv,
    write_compare_csv,
    render_summary,
)
from qescan.engine.config import SplitEntry, SplitRatioTable
from qescan.engine.records import MapRecord, RawSample, SpectrumRecord
from qescan.errors import ConfigError, ConsistencyError
from qescan.quantities import QeValue
from qescan.scanpath import PathPoint, ScanGrid
from qescan.uncertainty import DEFAULT_POWER_METER_BANDS


def sample_records():
    qe1 = QeValue(0.2512345678901234, 0.0012345, 0.01717, 10)
    qe2 = QeValue(0.1987654321098765, 0.0023456, 0.0120, 10)
    return [
        SpectrumRecord(410.0, qe1, 4.17e-10, 8.27e-11, 1, 12.5),
        SpectrumRecord(505.5, qe2, 4.21e-10, 6.60e-11, 2, 14.0),
    ]


class TestSpectrumCsv:
    def test_header_and_line_count(self, tmp_path):
        path = tmp_path / "spectrum.csv"
        write_spectrum_csv(path, sample_records()[:1], "run-1")
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema: qescan-spectrum v1"
        assert lines[1] == "# manifest: run-1"
        assert lines[2].startswith("wavelength_nm,qe,")
        assert len(lines) == 4  # schema, manifest, header, one record

    def test_bit_identical_round_trip(self, tmp_path):
        path = tmp_path / "spectrum.csv"
        records = sample_records()
        write_spectrum_csv(path, records, "run-1")
        got, ref = read_spectrum_csv(path)
        assert ref == "run-1"
        for a, b in zip(records, got):
            assert b.qe.mean == a.qe.mean  # exact, not approx
            assert b.qe.repeatability_rel == a.qe.repeatability_rel
            assert b.qe.systematic_rel == a.qe.systematic_rel
            assert b.p_dut_mean_w == a.p_dut_mean_w
            assert b.i_mean_a == a.i_mean_a

    def test_total_column_is_quadrature(self, tmp_path):
        path = tmp_path / "spectrum.csv"
        write_spectrum_csv(path, sample_records(), "run-1")
        for line in path.read_text().splitlines()[3:]:
            cols = line.split(",")
            rep, sys_, total = float(cols[2]), float(cols[3]), float(cols[4])
            assert total == pytest.approx(math.hypot(rep, sys_), rel=1e-12)

    def test_lf_endings_and_no_locale(self, tmp_path):
        path = tmp_path / "spectrum.csv"
        write_spectrum_csv(path, sample_records(), "run-1")
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert b";" not in raw.splitlines()[3]

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ConsistencyError):
            write_spectrum_csv(tmp_path / "x.csv", [], "run-1")


class TestMapFiles:
    def make_map_records(self):
        qe = QeValue(0.25, 0.001, 0.0172, 10)
        return [
            MapRecord(PathPoint(0, 0, 0, 1000.0, 2000.0), qe, 1e-10, 2e-11),
            MapRecord(PathPoint(1, 1, 0, 1500.0, 2000.0), qe, 1e-10, 2e-11),
        ]

    def test_map_csv_round_trip(self, tmp_path):
        path = tmp_path / "map.csv"
        write_map_csv(path, self.make_map_records(), "run-2")
        rows, ref = read_map_csv(path)
        assert ref == "run-2"
        assert rows[0][0] == PathPoint(0, 0, 0, 1000.0, 2000.0)
        assert rows[0][1] == 0.25

    def test_matrix_na_cells(self, tmp_path):
        path = tmp_path / "matrix.txt"
        write_matrix(path, [[0.25, None], [None, 0.5]], "run-2")
        text = path.read_text()
        assert "NA" in text
        assert read_matrix(path) == [[0.25, None], [None, 0.5]]

    def test_matrix_dimensions(self, tmp_path):
        write_matrix(tmp_path / "m.txt", [[0.1, 0.2], [0.3, 0.4]], "r")
        matrix = read_matrix(tmp_path / "m.txt")
        assert len(matrix) == 2 and len(matrix[0]) == 2

    def test_consistency_check(self):
        grid = ScanGrid(1000.0, 2000.0, 500.0, 2, 1)
        check_map_consistency(self.make_map_records(), grid)
        bad_grid = ScanGrid(0.0, 0.0, 500.0, 2, 1)
        with pytest.raises(ConsistencyError):
            check_map_consistency(self.make_map_records(), bad_grid)
        tiny = ScanGrid(1000.0, 2000.0, 500.0, 1, 1)
        with pytest.raises(ConsistencyError):
            check_map_consistency(self.make_map_records(), tiny)


class TestSamplesCsv:
    def test_round_trip_exact(self, tmp_path):
        rows = [RawSample(0, 410.0, 40000.0, 40000.0, 1, s, 1.23 + s,
                          3.82e-10 * (1 + 1e-15 * s), 1.225 + s, 8.27e-11,
                          2.003e-12, 1.0833333333333333)
                for s in range(3)]
        path = tmp_path / "samples.csv"
        write_samples_csv(path, rows, "run-3")
        got, ref = read_samples_csv(path)
        assert ref == "run-3"
        assert got == rows  # dataclass equality on exact floats


class TestSplitterCsv:
    def test_round_trip(self, tmp_path):
        table = SplitRatioTable([
            SplitEntry(400.0, 1.08333, "exchanged", 2e-4),
            SplitEntry(600.0, 1.09, "exchanged", 2e-4),
        ])
        path = tmp_path / "table.csv"
        write_splitter_csv(path, table, "run-4")
        got, _ = read_splitter_csv(path)
        assert got.entries == table.entries

    def test_schema_mismatch_rejected(self, tmp_path):
        path = tmp_path / "table.csv"
        path.write_text("# schema: something-else v9\nlambda_nm,k_mon_to_dut,"
                        "method,uncertainty_rel\n")
        with pytest.raises(ConfigError):
            read_splitter_csv(path)


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = RunManifest(run_id="abc-00000001", seed=1,
                               created="deterministic", software_version="0.1.0",
                               instruments={"picoammeter": "QESCAN,..."},
                               calibration_table="table.csv",
                               config={"seed": 1, "bands": []})
        path = tmp_path / "manifest.json"
        write_manifest(path, manifest)
        assert read_manifest(path) == manifest

    def test_deterministic_run_id_stability(self):
        snapshot = {"a": 1, "b": [1, 2]}
        id1, created1 = make_run_id(snapshot, 7, deterministic=True)
        id2, created2 = make_run_id(snapshot, 7, deterministic=True)
        assert (id1, created1) == (id2, created2)
        assert created1 == "deterministic"
        id3, _ = make_run_id(snapshot, 8, deterministic=True)
        assert id3 != id1

    def test_live_run_id_has_stamp(self):
        run_id, created = make_run_id({}, 7, deterministic=False)
        assert created != "deterministic"
        assert run_id.endswith("-00000007")


class TestHeatmap:
    def test_monotone_in_qe(self):
        # planted gradient: intensity must be nondecreasing along the row
        matrix = [[0.1 + 0.02 * i for i in range(10)]]
        pgm = heatmap_pgm(matrix)
        header, pixels = pgm.split(b"255\n", 1)
        assert header.startswith(b"P5\n10 1\n")
        values = list(pixels)
        assert values == sorted(values)
        assert len(set(values)) == 10

    def test_absent_cells_are_zero(self):
        pgm = heatmap_pgm([[None, 0.2, 0.4]])
        pixels = pgm.split(b"255\n", 1)[1]
        assert pixels[0] == 0
        assert pixels[1] >= 1

    def test_flat_map_mid_gray(self):
        pgm = heatmap_pgm([[0.25, 0.25]])
        assert list(pgm.split(b"255\n", 1)[1]) == [128, 128]


class TestCompare:
    def test_overlay_union_with_na(self, tmp_path):
        qe = QeValue(0.25, 0.001, 0.017, 10)
        a = [SpectrumRecord(400.0, qe, 1e-10, 1e-11, 1, 0.0),
             SpectrumRecord(500.0, qe, 1e-10, 1e-11, 2, 0.0)]
        b = [SpectrumRecord(500.0, qe, 1e-10, 1e-11, 2, 0.0),
             SpectrumRecord(600.0, qe, 1e-10, 1e-11, 3, 0.0)]
        path = tmp_path / "overlay.csv"
        write_compare_csv(path, [("pmt_a", a), ("pmt_b", b)])
        lines = path.read_text().splitlines()
        assert lines[2] == "wavelength_nm,qe_pmt_a,qe_pmt_b"
        assert lines[3].startswith("400.0,0.25,NA")
        assert lines[5].startswith("600.0,NA,0.25")


class TestSummary:
    def test_budget_note_records_discrepancy(self):
        manifest = RunManifest(run_id="x", seed=1, created="deterministic",
                               software_version="0.1.0", instruments={},
                               calibration_table="", config={})
        text = render_summary(manifest, "spectrum", 10, [], 2e-12, 100.0,
                              DEFAULT_POWER_METER_BANDS, 0.004)
        # exact quadrature totals present, legacy non-quadrature totals documented
        assert "total 3.47%" in text
        assert "total 1.20%" in text
        assert "total 1.72%" in text
        assert "3.52" in text and "1.16" in text
