"""Deterministic virtual instrument bench.

Serves the four instrument grammars over TCP or in-process loopback, with
physically motivated lamp/monochromator/splitter/photocathode/stage models
and a planted ground truth used as the verification oracle for the
measurement engine.
"""

from .clock import RealtimeClock, SteppedClock, make_clock  # noqa: F401
from .config import BenchConfig, load_bench_config  # noqa: F401
from .core import SimBench  # noqa: F401
from .server import BenchServer, serve  # noqa: F401
