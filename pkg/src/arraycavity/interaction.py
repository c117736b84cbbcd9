"""Free-space dyadic Green's function and the effective non-Hermitian Hamiltonian.

The single-excitation Hamiltonian has diagonal ``detuning_i - i*gamma_i/2`` and
off-diagonal couplings ``-(3 pi / k0) sqrt(gamma_i gamma_j) e_i^* . G(r_i - r_j) . e_j``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidArgument
from .geometry import K0, Dipole, DipoleSet, GaussianBeam, gaussian_mode_field

COUPLING_PREFACTOR = 3.0 * np.pi / K0

_MAGIC = b"ACAVHAM\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIQQdddd")


def _radial_coefficients(r, k0=K0):
    """Scalar factors A, B of G = A*I + B*rhat rhat."""
    kr = k0 * r
    pref = np.exp(1j * kr) / (4.0 * np.pi * r)
    inv = 1.0 / kr ** 2
    A = pref * (1.0 + (1j * kr - 1.0) * inv)
    B = pref * (-1.0 + (3.0 - 3.0j * kr) * inv)
    return A, B


def greens_dyadic(r, k0: float = K0) -> np.ndarray:
    """Free-space Green's tensor for separation vector(s) ``r``; shape ``(..., 3, 3)``."""
    r = np.asarray(r, dtype=float)
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist == 0):
        raise DomainError("Green's function is singular at zero separation")
    A, B = _radial_coefficients(dist, k0)
    rhat = r / dist[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    return A[..., None, None] * np.eye(3) + B[..., None, None] * outer


def coupling_coefficient(d_i: Dipole, d_j: Dipole) -> complex:
    """Delta_ij - i Gamma_ij / 2 between two distinct dipoles, in units of gamma0."""
    sep = np.asarray(d_i.position, float) - np.asarray(d_j.position, float)
    if np.linalg.norm(sep) == 0:
        raise DomainError("coincident dipoles")
    G = greens_dyadic(sep)
    ei = np.asarray(d_i.orientation, complex)
    ej = np.asarray(d_j.orientation, complex)
    return complex(-COUPLING_PREFACTOR * np.sqrt(d_i.linewidth * d_j.linewidth)
                   * (ei.conj() @ G @ ej))


def coupling_matrix(pos_i, ori_i, gam_i, pos_j, ori_j, gam_j, exclude_self: bool = False,
                    block: int = 512) -> np.ndarray:
    """Dense coupling matrix between two groups of dipoles.

    Works row-block by row-block so memory stays a few (block x n) arrays.
    With ``exclude_self`` the i == j entries are left at zero.
    """
    pos_i = np.atleast_2d(pos_i)
    pos_j = np.atleast_2d(pos_j)
    ni, nj = len(pos_i), len(pos_j)
    out = np.zeros((ni, nj), dtype=complex)
    conj_i = np.conj(ori_i)
    sq_j = np.sqrt(gam_j)
    for start in range(0, ni, block):
        stop = min(start + block, ni)
        d = pos_i[start:stop, None, :] - pos_j[None, :, :]
        r = np.sqrt(np.einsum("abk,abk->ab", d, d))
        if exclude_self:
            idx = np.arange(start, stop)
            r[idx - start, idx] = 1.0
        if np.any(r == 0):
            raise DomainError("overlapping atoms")
        A, B = _radial_coefficients(r)
        rhat = d / r[..., None]
        ee = conj_i[start:stop] @ ori_j.T
        er_i = np.einsum("ak,abk->ab", conj_i[start:stop], rhat)
        er_j = np.einsum("bk,abk->ab", ori_j, rhat)
        blk = A * ee + B * er_i * er_j
        blk *= -COUPLING_PREFACTOR * np.sqrt(gam_i[start:stop])[:, None] * sq_j[None, :]
        if exclude_self:
            blk[idx - start, idx] = 0.0
        out[start:stop] = blk
    return out


@dataclass
class BlockHamiltonian:
    """Single-excitation Hamiltonian of a layout, partitioned into array/target blocks.

    ``drive_scale`` multiplies every drive amplitude (fast-motion averaging).
    """

    H: np.ndarray
    n_array: int
    layout: DipoleSet
    sigma: float = 0.0
    drive_scale: float = 1.0

    @property
    def H_AA(self) -> np.ndarray:
        return self.H[: self.n_array, : self.n_array]

    @property
    def H_AT(self) -> np.ndarray:
        return self.H[: self.n_array, self.n_array:]

    @property
    def H_TA(self) -> np.ndarray:
        return self.H[self.n_array:, : self.n_array]

    @property
    def H_TT(self) -> np.ndarray:
        return self.H[self.n_array:, self.n_array:]

    @property
    def n_target(self) -> int:
        return self.H.shape[0] - self.n_array

    def coherent_dissipative(self):
        """Split H = Delta - i Gamma/2 into Hermitian parts (Delta, Gamma)."""
        Delta = (self.H + self.H.conj().T) / 2.0
        Gamma = 1j * (self.H - self.H.conj().T)
        return Delta, Gamma


def assemble_hamiltonian(layout: DipoleSet, motion_sigma: Optional[float] = None
                         ) -> BlockHamiltonian:
    """Dense Hamiltonian for all atoms of ``layout``.

    With ``motion_sigma`` the fast-motion average is applied: off-diagonal terms
    times exp(-k0^2 sigma^2), drive amplitudes times exp(-k0^2 sigma^2 / 2).
    """
    sigma = 0.0 if motion_sigma is None else float(motion_sigma)
    if sigma < 0:
        raise InvalidArgument("motion sigma must be non-negative")
    pos, ori, gam = layout.positions, layout.orientations, layout.linewidths
    H = coupling_matrix(pos, ori, gam, pos, ori, gam, exclude_self=True)
    if sigma > 0:
        H *= np.exp(-(K0 * sigma) ** 2)
    H[np.diag_indices_from(H)] = layout.detunings - 0.5j * gam
    return BlockHamiltonian(H, layout.n_array, layout, sigma,
                            float(np.exp(-(K0 * sigma) ** 2 / 2.0)))


def drive_vector(layout: DipoleSet, beam: GaussianBeam, amplitude: complex = 1.0,
                 blocks: Optional[BlockHamiltonian] = None) -> np.ndarray:
    """Rabi frequencies sqrt(gamma_i) e_i^* . E(r_i), scaled by ``amplitude``.

    The sqrt(gamma_i) factor is the dipole moment in units of the array dipole.
    """
    E = gaussian_mode_field(beam, layout.positions)
    omega = amplitude * np.sqrt(layout.linewidths) * np.einsum("ik,ik->i", layout.orientations.conj(), E)
    if blocks is not None:
        omega = omega * blocks.drive_scale
    return omega


def save_hamiltonian(blocks: BlockHamiltonian, path) -> None:
    """Binary dump: fixed header followed by row-major little-endian complex64 entries."""
    lay = blocks.layout
    header = _HEADER.pack(_MAGIC, _VERSION, blocks.n_array, blocks.n_target,
                          float(lay.a) if lay.a is not None else np.nan,
                          float(lay.L) if lay.L is not None else np.nan,
                          float(lay.w0) if lay.w0 is not None else np.nan,
                          float(blocks.sigma))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(blocks.H, dtype="<c8").tobytes())


def load_hamiltonian(path):
    """Read a dump written by :func:`save_hamiltonian`; returns ``(H, header_dict)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, n_array, n_t, a, L, w0, sigma = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise InvalidArgument("not a Hamiltonian dump")
    if version != _VERSION:
        raise InvalidArgument(f"unsupported dump version {version}")
    n = n_array + n_t
    H = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size, count=n * n).reshape(n, n)
    return H.astype(complex), dict(version=version, n_array=n_array, n_target=n_t, a=a,
                                   L=L, w0=w0, sigma=sigma)
