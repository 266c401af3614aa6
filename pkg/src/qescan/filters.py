"""Order-sorting filter selection.

A grating monochromator set to wavelength L also passes its second
diffraction order at L/2. A long-pass filter whose cut-on lies strictly
between L/2 and L blocks the contamination while passing the line of
interest. Below twice the source's short-wavelength limit there is nothing
to block and the open wheel position (slot 0) is safe.
"""

from __future__ import annotations

from typing import Sequence

from .errors import UnsafeOrderError
from .quantities import ENGINE_RANGE_NM, Wavelength

DEFAULT_FILTER_CUTONS_NM = (320.0, 420.0, 600.0, 900.0)


def select_filter(wl: Wavelength, cutons_nm: Sequence[float] = DEFAULT_FILTER_CUTONS_NM,
                  source_min_nm: float = ENGINE_RANGE_NM[0]) -> int:
    """Pick the wheel slot (1-based; 0 = open) for measuring at ``wl``.

    Chooses the largest cut-on strictly inside (wl/2, wl). With no
    admissible filter, slot 0 is returned only when the second order falls
    below ``source_min_nm`` (no source power there); otherwise the
    measurement is refused with UnsafeOrderError.
    """
    wl.require_engine_range()
    if len(cutons_nm) != 4:
        raise ValueError(f"filter wheel holds 4 filters, got {len(cutons_nm)} cut-ons")
    half = wl.nm / 2.0
    best_slot = 0
    best_cuton = None
    for slot, cuton in enumerate(cutons_nm, start=1):
        if half < cuton < wl.nm and (best_cuton is None or cuton > best_cuton):
            best_slot, best_cuton = slot, cuton
    if best_slot:
        return best_slot
    if half < source_min_nm:
        return 0
    raise UnsafeOrderError(
        f"no filter cut-on inside ({half:g}, {wl.nm:g}) nm and the second order "
        f"at {half:g} nm is within source range (>= {source_min_nm:g} nm)"
    )
