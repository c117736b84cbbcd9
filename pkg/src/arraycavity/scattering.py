"""Weak-drive steady state, reradiated fields, mirror and cavity transmission.

Conventions: the paraxial beam of :class:`GaussianBeam` travels towards -z; its
complex conjugate is the counter-propagating mode. With the steady state
``sigma = (H - omega_L)^-1 Omega`` and total field
``E = E_in + (3 pi / k0) sum_i G(r - r_i) e_i sqrt(gamma_i) sigma_i``, projecting
the reradiated field onto a normalised paraxial mode u gives
``(3 pi i / 2 k0^2) sum_i sqrt(gamma_i) conj(u(r_i)) . e_i sigma_i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, InvalidArgument, NumericalFailure
from .geometry import K0, DipoleSet, GaussianBeam, gaussian_mode_field
from .interaction import COUPLING_PREFACTOR, BlockHamiltonian, _radial_coefficients

PROJECTION_PREFACTOR = 1j * 3.0 * np.pi / (2.0 * K0 ** 2)


@dataclass
class ScatterCoefficients:
    r: complex
    t: complex

    @property
    def R(self) -> float:
        return float(abs(self.r) ** 2)

    @property
    def T(self) -> float:
        return float(abs(self.t) ** 2)

    @property
    def S(self) -> float:
        return 1.0 - self.R - self.T


@dataclass
class TransmissionSpectrum:
    omega: np.ndarray
    t: np.ndarray
    r: np.ndarray

    @property
    def T(self) -> np.ndarray:
        return np.abs(self.t) ** 2

    @property
    def R(self) -> np.ndarray:
        return np.abs(self.r) ** 2

    @property
    def S(self) -> np.ndarray:
        return 1.0 - self.T - self.R


def infinite_mirror_response(delta, Gamma_k, Delta_k=0.0):
    """Plane-wave (r, t) of an infinite array; ``delta`` is omega_L - omega0."""
    if np.any(np.asarray(Gamma_k) <= 0):
        raise InvalidArgument("Gamma_k must be positive")
    r = 0.5j * Gamma_k / (Delta_k - np.asarray(delta) - 0.5j * Gamma_k)
    return r, 1.0 + r


def _mode(beam: GaussianBeam, direction: int):
    if direction not in (-1, 1):
        raise InvalidArgument("direction must be +1 or -1")
    if direction == -1:
        return lambda r: gaussian_mode_field(beam, r)
    return lambda r: np.conj(gaussian_mode_field(beam, r))


def steady_state(blocks: BlockHamiltonian, drive, omega_L: float = 0.0, lu=None) -> np.ndarray:
    """Linear-response amplitudes sigma solving (H - omega_L) sigma = Omega."""
    drive = np.asarray(drive, dtype=complex)
    n = blocks.H.shape[0]
    if drive.shape != (n,):
        raise InvalidArgument("drive vector does not match the Hamiltonian")
    h = blocks.H - omega_L * np.eye(n)
    try:
        if lu is None:
            lu = sla.lu_factor(h, check_finite=False)
        x = sla.lu_solve(lu, drive)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"singular steady-state system at omega_L = {omega_L}") from exc
    scale = max(np.linalg.norm(drive), 1e-300)
    res = drive - h @ x
    if np.linalg.norm(res) > 1e-10 * scale:
        x = x + sla.lu_solve(lu, res)
        if np.linalg.norm(drive - h @ x) > 1e-10 * scale:
            raise NumericalFailure(f"steady-state residual too large at omega_L = {omega_L}")
    if not np.all(np.isfinite(x)):
        raise NumericalFailure(f"singular steady-state system at omega_L = {omega_L}")
    return x


def _source_vectors(layout: DipoleSet, sigma):
    return layout.orientations * (np.sqrt(layout.linewidths) * np.asarray(sigma))[:, None]


def reradiated_field(amplitudes, layout: DipoleSet, points, block: int = 2048) -> np.ndarray:
    """(3 pi / k0) sum_i G(r - r_i) e_i sqrt(gamma_i) sigma_i at each point; shape (M, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    src = _source_vectors(layout, amplitudes)
    out = np.zeros((len(pts), 3), complex)
    for s in range(0, len(pts), block):
        d = pts[s: s + block, None, :] - layout.positions[None, :, :]
        r = np.linalg.norm(d, axis=-1)
        if np.any(r < 1e-9):
            raise DomainError("observation point coincides with an atom")
        A, B = _radial_coefficients(r)
        rhat = d / r[..., None]
        proj = np.einsum("mnk,nk->mn", rhat, src)
        out[s: s + block] = (np.einsum("mn,nk->mk", A, src)
                             + np.einsum("mn,mnk->mk", B * proj, rhat))
    return COUPLING_PREFACTOR * out


def scattered_field(amplitudes, layout: DipoleSet, r, incident=None) -> np.ndarray:
    """Total field: optional incident field plus reradiation, at point(s) ``r``."""
    pts = np.atleast_2d(np.asarray(r, dtype=float))
    E = reradiated_field(amplitudes, layout, pts)
    if incident is not None:
        E = E + incident(pts)
    return E[0] if np.ndim(r) == 1 else E


def _projection(layout: DipoleSet, sigma, mode_values) -> complex:
    """Closed-form overlap of the reradiated field with a mode, given conj(u) at the atoms."""
    return complex(PROJECTION_PREFACTOR * np.sum(
        np.sqrt(layout.linewidths) * np.einsum("ik,ik->i", mode_values, layout.orientations) * sigma))


def _coefficients_closed_form(layout, sigma, u_in_at_atoms) -> ScatterCoefficients:
    t = 1.0 + _projection(layout, sigma, np.conj(u_in_at_atoms))
    r = _projection(layout, sigma, u_in_at_atoms)
    return ScatterCoefficients(r, t)


def _plane_overlap(layout, sigma, mode, z, w, n):
    x = np.linspace(-3 * w, 3 * w, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
    E = reradiated_field(sigma, layout, pts)
    f = np.einsum("mk,mk->m", np.conj(mode(pts)), E).reshape(n, n)
    return complex(np.trapezoid(np.trapezoid(f, x, axis=1), x))


def _overlap_converged(layout, sigma, mode, z, w, n0=48, tol=1e-6, n_max=800):
    prev = _plane_overlap(layout, sigma, mode, z, w, n0)
    n = n0
    while n < n_max:
        n = 2 * n - 1
        cur = _plane_overlap(layout, sigma, mode, z, w, n)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise NumericalFailure("overlap quadrature did not converge")


def mirror_coefficients(layout: DipoleSet, beam: GaussianBeam, delta: float,
                        direction: int = -1, method: str = "closed",
                        blocks: Optional[BlockHamiltonian] = None,
                        plane_offset: float = 5.0) -> ScatterCoefficients:
    """Reflection and transmission of the beam mode for a layout at probe detuning ``delta``.

    ``direction`` is the propagation direction of the incident mode along z.
    Phases are referenced to the beam focus. ``method="closed"`` evaluates the
    mode overlaps from the atomic amplitudes directly; ``method="quadrature"``
    integrates the reradiated field over planes ``plane_offset`` beyond the atoms.
    """
    from .interaction import assemble_hamiltonian

    if blocks is None:
        blocks = assemble_hamiltonian(layout)
    mode = _mode(beam, direction)
    u_at = mode(layout.positions)
    drive = np.sqrt(layout.linewidths) * np.einsum("ik,ik->i", layout.orientations.conj(), u_at)
    drive = drive * blocks.drive_scale
    sigma = steady_state(blocks, drive, delta)
    if method == "closed":
        return _coefficients_closed_form(layout, sigma, u_at)
    if method != "quadrature":
        raise InvalidArgument(f"unknown method {method!r}")
    z = layout.positions[:, 2]
    z_t = (z.min() - plane_offset) if direction == -1 else (z.max() + plane_offset)
    z_r = (z.max() + plane_offset) if direction == -1 else (z.min() - plane_offset)
    retro = _mode(beam, -direction)
    t = 1.0 + _overlap_converged(layout, sigma, mode, z_t, float(beam.width(z_t)))
    r = _overlap_converged(layout, sigma, retro, z_r, float(beam.width(z_r)))
    return ScatterCoefficients(r, t)


def mirror_response(layout: DipoleSet, beam: GaussianBeam, omega_grid, direction: int = -1,
                    blocks: Optional[BlockHamiltonian] = None) -> TransmissionSpectrum:
    """Closed-form (r, t) of a layout over a probe-frequency grid."""
    from .interaction import assemble_hamiltonian

    if blocks is None:
        blocks = assemble_hamiltonian(layout)
    omega = np.asarray(omega_grid, dtype=float)
    u_at = _mode(beam, direction)(layout.positions)
    drive = blocks.drive_scale * np.sqrt(layout.linewidths) * np.einsum(
        "ik,ik->i", layout.orientations.conj(), u_at)
    r = np.empty(len(omega), complex)
    t = np.empty(len(omega), complex)
    for k, w in enumerate(omega):
        c = _coefficients_closed_form(layout, steady_state(blocks, drive, w), u_at)
        r[k], t[k] = c.r, c.t
    return TransmissionSpectrum(omega, t, r)


def cavity_transmission_spectrum(layout: DipoleSet, beam: GaussianBeam, omega_grid,
                                 blocks: Optional[BlockHamiltonian] = None) -> TransmissionSpectrum:
    """Transmission and reflection of a two-mirror layout (targets included) for a
    beam incident through the +z mirror."""
    return mirror_response(layout, beam, omega_grid, direction=-1, blocks=blocks)


def fabry_perot(r, t, L: float, k0: float = K0) -> np.ndarray:
    """|t^2 / (1 - r^2 exp(2 i k0 L))|^2 for mirror responses referenced at the mirror plane."""
    r = np.asarray(r)
    t = np.asarray(t)
    return np.abs(t ** 2 / (1.0 - r ** 2 * np.exp(2j * k0 * L))) ** 2


def far_field_pattern(amplitudes, layout: DipoleSet, theta_grid, radius: float = 1e4,
                      n_phi: int = 72) -> np.ndarray:
    """Azimuthally averaged radiated intensity |E|^2 R^2 versus polar angle from +z."""
    theta = np.asarray(theta_grid, dtype=float)
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    pts = radius * np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
    amps = np.asarray(amplitudes, dtype=complex)
    if len(amps) != len(layout):
        raise InvalidArgument("one amplitude per atom is required")
    E = reradiated_field(amps, layout, pts.reshape(-1, 3))
    inten = (np.abs(E) ** 2).sum(axis=1).reshape(T.shape) * radius ** 2
    return inten.mean(axis=1)


def cone_power_fraction(theta, intensity, theta_max: float) -> float:
    """Share of the emitted power within ``theta_max`` of the +z or -z axis."""
    theta = np.asarray(theta)
    w = np.asarray(intensity) * np.sin(theta)
    total = np.trapezoid(w, theta)
    inside = (theta <= theta_max) | (theta >= np.pi - theta_max)
    return float(np.trapezoid(np.where(inside, w, 0.0), theta) / total)
