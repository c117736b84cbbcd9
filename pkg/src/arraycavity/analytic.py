"""Closed-form estimates for array cavities in (lambda0, gamma0) units."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidArgument
from .geometry import K0

DEFAULT_Q = 6.3e7  # omega0 / gamma0 of the Rb D2 line


def collective_linewidth(a: float) -> float:
    """Linewidth 3 pi / (k0 a)^2 of the uniform excitation of a square array."""
    if not a > 0:
        raise InvalidArgument("lattice constant must be positive")
    if a >= 0.9:
        warnings.warn("lattice constant close to the wavelength; Bragg orders may appear",
                      RuntimeWarning, stacklevel=2)
    return 3.0 * np.pi / (K0 * a) ** 2


def radius_of_curvature(L: float, w0: float) -> float:
    return L / 2.0 + K0 ** 2 * w0 ** 4 / (2.0 * L)


@dataclass
class AnalyticEstimates:
    Gamma0: float
    g_est: float
    R_curv: float
    kappa_est: Optional[float] = None
    C_est: Optional[float] = None
    zeta: Optional[float] = None
    g_conv: Optional[float] = None


def estimates(a: float, L: float, w0: float, gamma_a: float = 1.0,
              R_mirror: Optional[float] = None, gamma_ratio: float = 1.0,
              Q: Optional[float] = None) -> AnalyticEstimates:
    """g, kappa and C predicted from the array and beam parameters.

    ``gamma_ratio`` is gamma_a / gamma_3D; ``R_mirror`` the single-mirror
    reflectance at the cavity resonance. ``zeta`` and ``g_conv`` need ``Q``.
    """
    for name, v in (("a", a), ("L", L), ("w0", w0), ("gamma_a", gamma_a),
                    ("gamma_ratio", gamma_ratio)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive")
    Gamma0 = collective_linewidth(a)
    out = AnalyticEstimates(
        Gamma0=Gamma0,
        g_est=float(np.sqrt(9.0 * np.pi * gamma_a) / (K0 ** 2 * w0 * a)),
        R_curv=radius_of_curvature(L, w0),
    )
    if R_mirror is not None:
        if not 0.0 <= R_mirror <= 1.0:
            raise InvalidArgument("R_mirror must lie in [0, 1]")
        out.kappa_est = (1.0 - R_mirror) * Gamma0 / 2.0
        if R_mirror >= 1.0:
            raise DomainError("cooperativity estimate diverges for a perfect mirror")
        out.C_est = 6.0 / np.pi ** 2 * gamma_ratio / (1.0 - R_mirror) / w0 ** 2
    if Q is not None:
        if not Q > 0:
            raise InvalidArgument("Q must be positive")
        out.zeta = Gamma0 * L * np.pi / Q
        volume = np.pi * w0 ** 2 * L / 4.0
        out.g_conv = float(np.sqrt(1.5 * np.pi * gamma_a * Q / (K0 ** 3 * volume)))
    return out


def stark_waist(L: float, w_stark: float, alpha: float, Gamma0: float) -> float:
    """Waist selected by a quadratic light-shift profile on flat mirrors."""
    for name, v in (("L", L), ("w_stark", w_stark), ("Gamma0", Gamma0)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive")
    if alpha == 0:
        warnings.warn("no light shift: waist is set by the finite mirror", RuntimeWarning,
                      stacklevel=2)
        return float("inf")
    if alpha < 0:
        raise InvalidArgument("alpha must be positive")
    w0 = (L * w_stark ** 2 * Gamma0 / (4.0 * np.pi * alpha)) ** 0.25
    if K0 * w0 ** 2 < 3.0 * L:
        warnings.warn("k0 w0^2 is not large compared to L; estimate unreliable", RuntimeWarning,
                      stacklevel=2)
    return float(w0)
