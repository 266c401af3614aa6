"""Virtual time.

Two modes:

* stepped -- time advances only through transactions (a fixed per-command
  latency models the serial round-trip) and explicit ``sleep`` calls. Runs
  are bit-reproducible and arbitrarily faster than real time. This is the
  mode used when bench and engine share a process.
* realtime -- time is wall clock times an acceleration factor; suitable
  for serving TCP clients in a separate process. Not bit-reproducible.
"""

from __future__ import annotations

import time


class SteppedClock:
    def __init__(self, command_latency_s: float = 0.005):
        if command_latency_s <= 0:
            raise ValueError("command latency must be > 0")
        self.command_latency_s = command_latency_s
        self._t = 0.0

    def now(self) -> float:
        return self._t

    def sleep(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("cannot sleep a negative interval")
        self._t += dt

    def stamp_transaction(self) -> float:
        """Arrival time of a command; processing consumes one latency."""
        t = self._t
        self._t += self.command_latency_s
        return t


class RealtimeClock:
    def __init__(self, accel: float = 1.0):
        if accel <= 0:
            raise ValueError("acceleration factor must be > 0")
        self.accel = accel
        self._t0 = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._t0) * self.accel

    def sleep(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("cannot sleep a negative interval")
        time.sleep(dt / self.accel)

    def stamp_transaction(self) -> float:
        return self.now()


def make_clock(mode: str = "stepped", accel: float = 1.0,
               command_latency_s: float = 0.005):
    if mode == "stepped":
        return SteppedClock(command_latency_s=command_latency_s)
    if mode == "realtime":
        return RealtimeClock(accel=accel)
    raise ValueError(f"unknown clock mode {mode!r}")
