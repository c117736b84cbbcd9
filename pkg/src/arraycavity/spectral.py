"""Target-atom self-energy, spectral function, gamma_3D and excited-state amplitude."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from .errors import InvalidArgument, NumericalFailure
from .interaction import BlockHamiltonian

log = logging.getLogger(__name__)


@dataclass
class SpectrumCurve:
    omega: np.ndarray
    sigma: np.ndarray
    gamma_a: float

    @property
    def A(self) -> np.ndarray:
        """Spectral function gamma_a - 2 Im Sigma."""
        return self.gamma_a - 2.0 * self.sigma.imag


def _target_vectors(blocks: BlockHamiltonian, target: int):
    if not 0 <= target < blocks.n_target:
        raise InvalidArgument(f"no target atom {target}")
    t = blocks.n_array + target
    return blocks.H[t, : blocks.n_array], blocks.H[: blocks.n_array, t], blocks.H[t, t]


def _solve_shifted(H_AA, omega, rhs):
    n = H_AA.shape[0]
    M = -H_AA.copy()
    M[np.diag_indices(n)] += omega
    x = np.linalg.solve(M, rhs)
    res = np.linalg.norm(M @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return x, res


def self_energy_at(blocks: BlockHamiltonian, omega: complex, target: int = 0) -> complex:
    """H_TA (omega - H_AA)^-1 H_AT by a dense solve; omega may be complex."""
    H_TA, H_AT, _ = _target_vectors(blocks, target)
    if blocks.n_array == 0:
        return 0j
    H_AA = blocks.H_AA
    for shift in (0.0, 1e-9):
        try:
            x, res = _solve_shifted(H_AA, omega + shift, H_AT)
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(res) and res < 1e-10:
            return complex(H_TA @ x)
        # one step of iterative refinement
        M = -H_AA.copy()
        M[np.diag_indices_from(M)] += omega + shift
        x = x + np.linalg.solve(M, H_AT - M @ x)
        res = np.linalg.norm(M @ x - H_AT) / max(np.linalg.norm(H_AT), 1e-300)
        if res < 1e-10:
            return complex(H_TA @ x)
    raise NumericalFailure(f"singular resolvent at omega = {omega}")


def self_energy(blocks: BlockHamiltonian, omega_grid, target: int = 0) -> SpectrumCurve:
    """Self-energy of one target on a frequency grid (one linear solve per point)."""
    omega = np.asarray(omega_grid, dtype=float)
    sig = np.array([self_energy_at(blocks, w, target) for w in omega], dtype=complex)
    gamma_a = -2.0 * blocks.H[blocks.n_array + target, blocks.n_array + target].imag
    return SpectrumCurve(omega, sig, gamma_a)


def self_energy_eigensum(values, g2, omega) -> np.ndarray:
    """Sum over modes of g2_n / (omega - lambda_n)."""
    omega = np.asarray(omega)
    return (g2[None, :] / (omega.reshape(-1, 1) - values[None, :])).sum(axis=1).reshape(omega.shape)


def background_self_energy(blocks: BlockHamiltonian, lam_c: complex, g2_c: complex,
                           target: int = 0, omega: Optional[float] = None) -> complex:
    """Sigma(omega) - g^2 / (omega - lambda_c), by default at omega = Re(lambda_c)."""
    w = lam_c.real if omega is None else float(omega)
    return self_energy_at(blocks, w, target) - g2_c / (w - lam_c)


def gamma_3d(blocks: BlockHamiltonian, lam_c: complex, g2_c: complex, target: int = 0,
             step: float = 0.02, threshold: float = 0.05):
    """Background decay rate at the cavity resonance with the cavity pole removed.

    Returns ``(gamma_3d, reliable)``. ``reliable`` is False when the background has
    a second difference larger than ``threshold * gamma_a`` over +-``step``, or
    when the value is negative.
    """
    _, _, H_tt = _target_vectors(blocks, target)
    gamma_a = -2.0 * H_tt.imag
    w0 = lam_c.real

    def background(w):
        return gamma_a - 2.0 * background_self_energy(blocks, lam_c, g2_c, target, w).imag

    b0 = background(w0)
    curv = background(w0 + step) - 2 * b0 + background(w0 - step)
    reliable = bool(b0 > 0 and abs(curv) <= threshold * gamma_a)
    if not reliable:
        log.warning("gamma_3d background is not smooth (second difference %.3g)", curv)
    return float(b0), reliable


def lorentzian_fit(curve: SpectrumCurve, center: float, halfwidth: float):
    """Fit Im Sigma near an isolated resonance with a Lorentzian plus linear background.

    Returns ``(g2, kappa, omega_c)``.
    """
    sel = np.abs(curve.omega - center) <= halfwidth
    w = curve.omega[sel]
    y = curve.sigma.imag[sel]

    def model(w, g2, wc, kappa, b0, b1):
        return -g2 * (kappa / 2) / ((w - wc) ** 2 + kappa ** 2 / 4) + b0 + b1 * (w - center)

    i = np.argmin(y)
    depth = y[i] - np.median(y)
    k0 = halfwidth / 5
    p0 = (-depth * k0 / 2, w[i], k0, np.median(y), 0.0)
    p, _ = curve_fit(model, w, y, p0=p0, maxfev=20000)
    return float(p[0]), float(abs(p[2])), float(p[1])


# -- time domain ---------------------------------------------------------------

def _propagate_ode(H, psi0, t_grid, rtol=1e-10, atol=1e-12):
    t_grid = np.asarray(t_grid, dtype=float)
    sol = solve_ivp(lambda t, y: -1j * (H @ y), (0.0, float(t_grid.max())), psi0.astype(complex),
                    method="DOP853", t_eval=t_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalFailure(f"ODE integration failed: {sol.message}")
    return sol.y


def amplitude_ode(blocks: BlockHamiltonian, t_grid, target: int = 0) -> np.ndarray:
    """Target amplitude by direct propagation of the single-excitation equations."""
    t = blocks.n_array + target
    psi0 = np.zeros(blocks.H.shape[0], complex)
    psi0[t] = 1.0
    return _propagate_ode(blocks.H, psi0, t_grid)[t]


def amplitude_resolvent(blocks: BlockHamiltonian, t_grid, target: int = 0,
                        window: float = 300.0, damping: Optional[float] = None,
                        chunk: int = 2048) -> np.ndarray:
    """Target amplitude from the inverse transform of its resolvent.

    The integral runs along Im(omega) = ``damping`` > 0 where the resolvent is
    smooth; the free-atom pole is subtracted and added back analytically.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    t_max = max(float(t_grid.max()), 1.0)
    eta = 1.0 / t_max if damping is None else float(damping)
    t = blocks.n_array + target
    z0 = blocks.H[t, t]
    bath = np.delete(np.arange(blocks.H.shape[0]), t)
    Hb = blocks.H[np.ix_(bath, bath)]
    u = blocks.H[t, bath]
    v = blocks.H[bath, t]
    period = 25.0 / eta
    dw = 2 * np.pi / period
    w = np.arange(-window, window + dw / 2, dw) + z0.real
    z = w + 1j * eta
    diff = np.empty(len(w), complex)
    eye = np.eye(len(bath))
    for s in range(0, len(w), chunk):
        zz = z[s: s + chunk]
        if len(bath):
            M = zz[:, None, None] * eye - Hb
            x = np.linalg.solve(M, np.broadcast_to(v, (len(zz), len(v)))[..., None])[..., 0]
            sig = x @ u
        else:
            sig = np.zeros(len(zz), complex)
        g = 1.0 / (zz - z0 - sig)
        g0 = 1.0 / (zz - z0)
        diff[s: s + chunk] = g - g0
    phase = np.exp(-1j * np.outer(t_grid, w))
    integral = (phase @ diff) * dw * np.exp(eta * t_grid)
    return np.exp(-1j * z0 * t_grid) + 1j / (2 * np.pi) * integral


def excited_amplitude(blocks: BlockHamiltonian, t_grid, target: int = 0, check: bool = True,
                      tolerance: float = 1e-4, **resolvent_kw) -> np.ndarray:
    """Amplitude c_a(t) of an initially excited target (arrays start in the ground state).

    Computed by ODE propagation; with ``check`` it is cross-validated against the
    resolvent inversion and a disagreement above ``tolerance`` raises.
    """
    c = amplitude_ode(blocks, t_grid, target)
    if check:
        c2 = amplitude_resolvent(blocks, t_grid, target, **resolvent_kw)
        err = float(np.abs(c - c2).max())
        if err > tolerance:
            raise NumericalFailure(f"ODE and resolvent amplitudes differ by {err:.3g}")
    return c
