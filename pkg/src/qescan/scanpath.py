"""Raster geometry: grid construction, snake ordering, pixel mapping.

Convention (fixed for reproducibility): X is the fast axis, Z the slow
axis; even rows (iz = 0, 2, ...) run left to right, odd rows right to
left. An optional disc mask skips points outside the photocathode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import PixelMappingError, RangeError

STAGE_TRAVEL_UM = (0.0, 300000.0)


@dataclass(frozen=True, slots=True)
class ScanGrid:
    origin_x_um: float
    origin_z_um: float
    step_um: float
    nx: int
    nz: int
    mask_radius_um: Optional[float] = None
    mask_center_um: Optional[tuple[float, float]] = None  # defaults to grid center

    def __post_init__(self):
        if self.step_um <= 0:
            raise RangeError(f"step must be > 0, got {self.step_um}")
        if self.nx < 1 or self.nz < 1:
            raise RangeError(f"grid counts must be >= 1, got {self.nx}x{self.nz}")
        lo, hi = STAGE_TRAVEL_UM
        max_x = self.origin_x_um + (self.nx - 1) * self.step_um
        max_z = self.origin_z_um + (self.nz - 1) * self.step_um
        if (self.origin_x_um < lo or self.origin_z_um < lo
                or max_x > hi or max_z > hi):
            raise RangeError(
                f"grid spans x [{self.origin_x_um:g}, {max_x:g}] um, "
                f"z [{self.origin_z_um:g}, {max_z:g}] um; stage travel is "
                f"[{lo:g}, {hi:g}] um"
            )
        if self.mask_radius_um is not None and self.mask_radius_um <= 0:
            raise RangeError("mask radius must be > 0 when given")

    def point_xz(self, ix: int, iz: int) -> tuple[float, float]:
        return (self.origin_x_um + ix * self.step_um,
                self.origin_z_um + iz * self.step_um)

    def _mask_center(self) -> tuple[float, float]:
        if self.mask_center_um is not None:
            return self.mask_center_um
        return (self.origin_x_um + (self.nx - 1) * self.step_um / 2.0,
                self.origin_z_um + (self.nz - 1) * self.step_um / 2.0)

    def in_mask(self, ix: int, iz: int) -> bool:
        """True when the point is to be visited."""
        if self.mask_radius_um is None:
            return True
        cx, cz = self._mask_center()
        x, z = self.point_xz(ix, iz)
        return math.hypot(x - cx, z - cz) <= self.mask_radius_um


@dataclass(frozen=True, slots=True)
class PathPoint:
    index: int
    ix: int
    iz: int
    x_um: float
    z_um: float


def snake_path(grid: ScanGrid) -> list[PathPoint]:
    """Boustrophedon visit order over all unmasked grid points."""
    points: list[PathPoint] = []
    index = 0
    for iz in range(grid.nz):
        cols = range(grid.nx) if iz % 2 == 0 else range(grid.nx - 1, -1, -1)
        for ix in cols:
            if not grid.in_mask(ix, iz):
                continue
            x, z = grid.point_xz(ix, iz)
            points.append(PathPoint(index=index, ix=ix, iz=iz, x_um=x, z_um=z))
            index += 1
    return points


def pixel_of(grid: ScanGrid, x_um: float, z_um: float) -> tuple[int, int]:
    """Nearest grid indices for a stage position (inverse of point_xz).

    Accepts positions up to step/2 beyond the grid edge; ties round toward
    the grid interior at the edges, up otherwise.
    """

    def to_index(value: float, origin: float, count: int, axis: str) -> int:
        v = (value - origin) / grid.step_um
        if v < -0.5 or v > count - 0.5:
            raise PixelMappingError(
                f"{axis} = {value:g} um outside grid bounds +- step/2"
            )
        return min(math.floor(v + 0.5), count - 1)

    return (to_index(x_um, grid.origin_x_um, grid.nx, "x"),
            to_index(z_um, grid.origin_z_um, grid.nz, "z"))
