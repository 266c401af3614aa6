"""Physical models behind the bench: lamp dynamics, photocathode map, stage.

All stochastic behaviour draws from dedicated random streams handed in by
the bench, with a fixed number of draws per event, so state trajectories
are bit-reproducible for a given seed and virtual-time history.
"""

from __future__ import annotations

import math
import random
from typing import Optional

import numpy as np

from ..errors import RangeError
from .config import CathodeConfig, LampConfig, SpectralCurve, StageConfig, StructureSpec

QE_CEILING = 0.45  # physical cap for the planted ground truth


class LampDynamics:
    """Lamp relative output: a random walk, optionally held by a PI loop.

    The walk models arc wander; the feedback photodiode (thermo-electrically
    cooled, watching the broadband emission) closes a discrete PI loop that
    trims the lamp drive. Integration runs in fixed ``ctrl_dt`` steps with a
    carry, so the number of random draws depends only on elapsed virtual
    time. Exactly two draws happen per step whether or not feedback is on.
    """

    def __init__(self, config: LampConfig, ctrl_dt_s: float, rng: random.Random):
        self.config = config
        self.ctrl_dt = ctrl_dt_s
        self.rng = rng
        self.feedback_on = config.feedback_on
        self.setpoint_pct = config.setpoint_pct
        self._walk = 1.0
        self._trim = 0.0
        self._integral = 0.0
        self._carry = 0.0

    @property
    def relative_output(self) -> float:
        return self._walk + self._trim

    def reset_feedback(self) -> None:
        self._integral = 0.0

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("cannot advance lamp by negative time")
        self._carry += dt
        steps = int(self._carry / self.ctrl_dt)
        self._carry -= steps * self.ctrl_dt
        for _ in range(steps):
            self._step()

    def _step(self) -> None:
        cfg = self.config
        walk_kick = self.rng.gauss(0.0, cfg.drift_rate * math.sqrt(self.ctrl_dt))
        sensor_noise = self.rng.gauss(0.0, cfg.feedback_sensor_rel)
        self._walk += walk_kick
        if not self.feedback_on:
            return
        measured = self.relative_output * (1.0 + sensor_noise)
        error = 1.0 - measured
        self._integral += error * self.ctrl_dt
        self._trim = cfg.feedback_gain_p * error + cfg.feedback_gain_i * self._integral


class CathodeMap:
    """Planted QE ground truth over the photocathode disc.

    A multiplier grid (row-major, z rows by x columns, cell centers on a
    ``pitch_um`` lattice) scaled by a spectral curve. Values outside the
    disc, and off the grid entirely, are zero. The top-hat beam spot is
    averaged over the cells it covers.
    """

    def __init__(self, values: np.ndarray, pitch_um: float, x0_um: float,
                 z0_um: float, curve: SpectralCurve):
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("cathode map must be a 2D grid")
        self.pitch_um = float(pitch_um)
        self.x0_um = float(x0_um)
        self.z0_um = float(z0_um)
        self.curve = curve
        self._spot_cache: dict[float, np.ndarray] = {}

    @classmethod
    def from_config(cls, cfg: CathodeConfig) -> "CathodeMap":
        if cfg.map_file is not None:
            from .config import read_map_grid

            values, pitch, x0, z0 = read_map_grid(cfg.map_file)
            return cls(values, pitch, x0, z0, cfg.curve)
        half = cfg.disc_radius_um
        n = 2 * int(round(half / cfg.pitch_um)) + 1
        x0 = cfg.center_x_um - (n - 1) / 2 * cfg.pitch_um
        z0 = cfg.center_z_um - (n - 1) / 2 * cfg.pitch_um
        xs = x0 + cfg.pitch_um * np.arange(n)
        zs = z0 + cfg.pitch_um * np.arange(n)
        xx, zz = np.meshgrid(xs, zs)
        rr = np.hypot(xx - cfg.center_x_um, zz - cfg.center_z_um)
        values = np.where(rr <= cfg.disc_radius_um, cfg.base_multiplier, 0.0)
        for spec in cfg.structures:
            values = values * np.where(_structure_mask(spec, xx, zz), spec.multiplier, 1.0)
        return cls(values, cfg.pitch_um, x0, z0, cfg.curve)

    def _spot_offsets(self, radius_um: float) -> np.ndarray:
        key = round(radius_um, 6)
        cached = self._spot_cache.get(key)
        if cached is None:
            ncells = int(radius_um / self.pitch_um)
            offsets = [
                (dz, dx)
                for dz in range(-ncells, ncells + 1)
                for dx in range(-ncells, ncells + 1)
                if (dx * self.pitch_um) ** 2 + (dz * self.pitch_um) ** 2 <= radius_um**2
            ]
            cached = np.array(offsets, dtype=np.int64)
            self._spot_cache[key] = cached
        return cached

    def spot_multiplier(self, x_um: float, z_um: float, spot_diameter_um: float) -> float:
        """Mean multiplier under a top-hat spot centered at (x, z)."""
        ci = int(round((x_um - self.x0_um) / self.pitch_um))
        cj = int(round((z_um - self.z0_um) / self.pitch_um))
        offsets = self._spot_offsets(spot_diameter_um / 2.0)
        rows = offsets[:, 0] + cj
        cols = offsets[:, 1] + ci
        nz, nx = self.values.shape
        inside = (rows >= 0) & (rows < nz) & (cols >= 0) & (cols < nx)
        total = float(self.values[rows[inside], cols[inside]].sum())
        return total / len(offsets)  # cells off the grid contribute zero

    def qe_at(self, x_um: float, z_um: float, nm: float, spot_diameter_um: float) -> float:
        qe = self.curve.value_at(nm) * self.spot_multiplier(x_um, z_um, spot_diameter_um)
        return min(max(qe, 0.0), QE_CEILING)


def _structure_mask(spec: StructureSpec, xx: np.ndarray, zz: np.ndarray) -> np.ndarray:
    dx = np.abs(xx - spec.center_x_um)
    dz = np.abs(zz - spec.center_z_um)
    if spec.shape == "cross":
        half_w = spec.arm_width_um / 2.0
        half_l = spec.arm_length_um / 2.0
        return ((dx <= half_w) & (dz <= half_l)) | ((dz <= half_w) & (dx <= half_l))
    if spec.shape == "rect":
        return (dx <= spec.size_x_um / 2.0) & (dz <= spec.size_z_um / 2.0)
    if spec.shape == "disc":
        return np.hypot(dx, dz) <= spec.radius_um
    raise AssertionError(spec.shape)


class StageAxis:
    """One linear axis: commanded moves at fixed velocity, a per-run
    accuracy offset and a per-move repeatability draw on the settled
    position."""

    def __init__(self, config: StageConfig, accuracy_offset_um: float,
                 rng: random.Random):
        self.config = config
        self.accuracy_offset_um = accuracy_offset_um
        self.rng = rng
        self._from_um = 0.0
        self._target_um = 0.0
        self._t_start = 0.0
        self._t_arrive = 0.0
        self._settled_um = 0.0

    def command(self, target_um: float, t: float) -> None:
        if not 0.0 <= target_um <= self.config.travel_um:
            raise RangeError(
                f"target {target_um:g} um outside travel [0, {self.config.travel_um:g}]"
            )
        here = self._true_position(t)
        self._from_um = here
        self._target_um = target_um
        self._t_start = t
        travel_time = abs(target_um - here) / self.config.velocity_um_s
        self._t_arrive = t + travel_time + self.config.settle_s
        repeat = self.rng.uniform(-self.config.repeatability_um,
                                  self.config.repeatability_um)
        self._settled_um = target_um + self.accuracy_offset_um + repeat

    def _true_position(self, t: float) -> float:
        if t >= self._t_arrive:
            return self._settled_um
        motion_end = self._t_arrive - self.config.settle_s
        if t >= motion_end:
            return self._target_um
        span = motion_end - self._t_start
        if span <= 0:
            return self._target_um
        frac = (t - self._t_start) / span
        return self._from_um + (self._target_um - self._from_um) * frac

    def position(self, t: float) -> float:
        return self._true_position(t)

    def moving(self, t: float) -> bool:
        return t < self._t_arrive
