#!/usr/bin/env python3
"""End-to-end demo against the in-process virtual bench.

Calibrates the splitter, sweeps a spectrum, maps the planted cross at
410 nm, and re-analyzes the raw logs, all from the shipped configs:

    python3 scripts/run_demo.py

Results land in <repo>/out/ and are reproducible: run twice and diff.
"""

import pathlib
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
OUT = ROOT / "out"


def run(*args):
    cmd = [sys.executable, "-m", "qescan.cli", *[str(a) for a in args]]
    print("+", " ".join(str(a) for a in args))
    subprocess.run(cmd, check=True, cwd=ROOT)


def main():
    run("calibrate-splitter", "--config", CONFIGS / "run_spectrum.yaml",
        "--out", OUT / "calibration", "--quiet")
    run("spectrum", "--config", CONFIGS / "run_spectrum.yaml",
        "--out", OUT / "spectrum", "--quiet")
    run("scan2d", "--config", CONFIGS / "run_scan.yaml",
        "--out", OUT / "scan410", "--quiet")
    run("analyze", "--raw", OUT / "spectrum" / "samples_raw.csv",
        "--out", OUT / "reanalysis")
    original = (OUT / "spectrum" / "spectrum.csv").read_bytes()
    recomputed = (OUT / "reanalysis" / "spectrum.csv").read_bytes()
    print("re-analysis reproduces the engine output:",
          "yes" if original == recomputed else "NO (bug!)")
    print(f"done; see {OUT}/ (heatmap: {OUT / 'scan410' / 'heatmap.pgm'})")


if __name__ == "__main__":
    main()
