"""qescan: photocathode quantum-efficiency measurement station.

A measurement engine that drives four instruments (picoammeter,
monochromator/lamp, dual-channel power meter, 2D stage) over a
line-oriented ASCII wire protocol, together with a deterministic virtual
bench that serves the same protocol and plants known ground truth so the
whole measurement chain can be verified closed-loop.
"""

__version__ = "0.1.0"

from .quantities import (  # noqa: F401
    OpticalPower,
    Photocurrent,
    QeValue,
    Wavelength,
    photon_rate,
    quantum_efficiency,
    repeatability,
)
from .uncertainty import (  # noqa: F401
    CalibrationBand,
    UncertaintyBudget,
    band_lookup,
    combined_uncertainty,
)
