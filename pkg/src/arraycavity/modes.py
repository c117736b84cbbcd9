"""Eigenmodes of the array block, cavity-mode identification and (g, kappa, omega_c)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import curve_fit
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .errors import DomainError, InvalidArgument, NumericalFailure
from .geometry import DipoleSet, GaussianBeam

log = logging.getLogger(__name__)


@dataclass
class EigenmodeSet:
    """Biorthogonal eigenpairs: ``H @ right[:, n] = values[n] * right[:, n]`` and
    ``left[n] @ H = values[n] * left[n]`` with ``left @ right = I``."""

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    @property
    def omega(self) -> np.ndarray:
        return self.values.real

    @property
    def kappa(self) -> np.ndarray:
        return -2.0 * self.values.imag

    def biorthogonality_error(self) -> float:
        return float(np.abs(self.left @ self.right - np.eye(self.right.shape[1])).max())

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.values) @ self.left


@dataclass
class CavityParams:
    g: float
    kappa: float
    omega_c: float
    gamma_3d: float
    mode_index: int
    g2: complex = 0j
    gamma_3d_reliable: bool = True
    cooperativity: float = field(init=False)

    def __post_init__(self):
        self.cooperativity = 4.0 * self.g ** 2 / (self.kappa * self.gamma_3d)


def _is_complex_symmetric(H, tol=1e-12) -> bool:
    scale = max(np.abs(H).max(), 1.0)
    return bool(np.abs(H - H.T).max() <= tol * scale)


def _bilinear_normalize(V: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Scale columns so v^T v = 1; fix bilinear orthogonality inside degenerate clusters."""
    V = V.astype(complex, copy=True)
    n = len(values)
    scale = max(np.abs(values).max(), 1.0)
    order = np.argsort(values.real)
    done = np.zeros(n, bool)
    for i in order:
        if done[i]:
            continue
        close = np.flatnonzero(np.abs(values - values[i]) < 1e-9 * scale)
        done[close] = True
        if len(close) == 1:
            v = V[:, i]
            V[:, i] = v / np.sqrt(v @ v)
        else:
            Vc = V[:, close]
            M = Vc.T @ Vc
            V[:, close] = Vc @ np.linalg.inv(sla.sqrtm(M))
    return V


def eigenmodes(H_AA: np.ndarray, check: bool = True) -> EigenmodeSet:
    """Full eigendecomposition of a (complex-symmetric) array block.

    Left eigenvectors are the transposed right eigenvectors after bilinear
    normalisation; a general non-symmetric block falls back to ``inv(V_R)``.
    """
    H = np.asarray(H_AA, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidArgument("eigenmodes needs a square matrix")
    try:
        w, V = np.linalg.eig(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    if _is_complex_symmetric(H):
        V = _bilinear_normalize(V, w)
        modes = EigenmodeSet(w, V, V.T.copy())
    else:
        modes = EigenmodeSet(w, V, np.linalg.inv(V))
    if check and len(w):
        hn = np.abs(H).max()
        res = np.abs(H @ modes.right - modes.right * w).max(axis=0)
        res /= np.linalg.norm(modes.right, axis=0)
        if np.any(res > 1e-8 * max(hn, 1.0) * np.sqrt(len(w))):
            raise NumericalFailure("eigenvector residual too large")
    return modes


def nearby_modes(H_AA: np.ndarray, shift: complex, k: int = 6) -> EigenmodeSet:
    """The ``k`` eigenpairs closest to ``shift`` by shift-invert Arnoldi on a dense LU.

    Used where full decompositions are too costly (Monte Carlo sweeps).
    """
    H = np.asarray(H_AA, dtype=complex)
    n = H.shape[0]
    if k >= n - 1:
        modes = eigenmodes(H)
        idx = np.argsort(np.abs(modes.values - shift))[:k]
        return EigenmodeSet(modes.values[idx], modes.right[:, idx], modes.left[idx])
    lu = sla.lu_factor(H - shift * np.eye(n))
    op = LinearOperator((n, n), matvec=lambda x: H @ x, dtype=complex)
    opinv = LinearOperator((n, n), matvec=lambda x: sla.lu_solve(lu, x), dtype=complex)
    # fixed start vector: ARPACK's own random start would break bit-reproducibility
    v0 = np.random.default_rng(0).standard_normal(n).astype(complex)
    try:
        w, V = eigs(op, k=k, sigma=shift, OPinv=opinv, v0=v0, tol=1e-12, maxiter=5000)
    except ArpackNoConvergence as exc:
        raise NumericalFailure("shift-invert iteration did not converge") from exc
    V = _bilinear_normalize(V, w)
    return EigenmodeSet(w, V, V.T.copy())


def couple_strengths(modes: EigenmodeSet, H_TA, H_AT) -> np.ndarray:
    """Complex g^2 of every mode for one target: (H_TA . v_R)(v_L . H_AT)."""
    H_TA = np.asarray(H_TA, dtype=complex).reshape(-1)
    H_AT = np.asarray(H_AT, dtype=complex).reshape(-1)
    if H_TA.shape[0] != modes.right.shape[0] or H_AT.shape[0] != modes.left.shape[1]:
        raise InvalidArgument("coupling vectors do not match the mode basis")
    return (H_TA @ modes.right) * (modes.left @ H_AT)


def rank_modes(modes: EigenmodeSet, g2: np.ndarray) -> np.ndarray:
    """Mode indices ordered by Re(g^2)/kappa, largest first; ties go to the smaller kappa."""
    kappa = np.maximum(modes.kappa, 1e-300)
    ratio = g2.real / kappa
    return np.lexsort((kappa, -ratio))


def identify_cavity_mode(modes: EigenmodeSet, g2: np.ndarray) -> int:
    """Index of the mode with the largest Re(g^2)/kappa."""
    if len(modes) == 0:
        raise InvalidArgument("empty mode set")
    kappa = np.maximum(modes.kappa, 1e-300)
    ratio = g2.real / kappa
    best = ratio.max()
    cand = np.flatnonzero(ratio >= best - 1e-9 * abs(best))
    return int(cand[np.argmin(kappa[cand])])


def gaussian_overlaps(modes: EigenmodeSet, layout: DipoleSet, beam: GaussianBeam) -> np.ndarray:
    """|<u|v_n>| / (|u||v_n|) with u the beam profile sampled on the array atoms."""
    pos = layout.positions[layout.array_slice]
    u = beam.scalar(pos)
    # each mirror sees the beam's standing-wave profile, so compare magnitudes per mirror
    ov = np.zeros(len(modes))
    for m in np.unique(layout.mirror_index):
        sel = layout.mirror_index == m
        um = np.abs(u[sel])
        vm = np.abs(modes.right[sel])
        ov += (um @ vm) / (np.linalg.norm(um) * np.linalg.norm(vm, axis=0) + 1e-300)
    return ov / len(np.unique(layout.mirror_index))


def identify_by_gaussian_overlap(modes: EigenmodeSet, layout: DipoleSet, w0: float,
                                 tolerance: float = 0.01) -> int:
    """Fundamental mode for target-free layouts: smallest kappa among the modes whose
    Gaussian overlap is within ``tolerance`` of the best one."""
    ov = gaussian_overlaps(modes, layout, GaussianBeam(w0))
    cand = np.flatnonzero(ov >= ov.max() - tolerance)
    return int(cand[np.argmin(modes.kappa[cand])])


def mode_splitting(Gamma0: float, L: float, R_curv: float, order: int) -> float:
    """Transverse splitting (Gamma0/2) tan[(m+n) arccos(1 - L/R)] of narrow-band mirrors."""
    arg = 1.0 - L / R_curv
    if not -1.0 <= arg <= 1.0:
        raise DomainError("1 - L/R outside [-1, 1]")
    return 0.5 * Gamma0 * np.tan(order * np.arccos(arg))


def fit_mode_waist(vector: np.ndarray, layout: DipoleSet, mirror: int = 1) -> float:
    """Gaussian width w of |v| on one mirror, fitted as A exp(-rho^2 / w^2)."""
    sel = np.flatnonzero(layout.mirror_index[: layout.n_array] == mirror)
    xy = layout.positions[sel, :2]
    amp = np.abs(vector[sel])
    rho2 = (xy ** 2).sum(axis=1)
    amp_n = amp / amp.max()
    # second-moment guess: <rho^2> under |v|^2 equals w^2/2 for a Gaussian
    w_guess = np.sqrt(2.0 * (rho2 * amp_n ** 2).sum() / (amp_n ** 2).sum())
    model = lambda r2, A, w: A * np.exp(-r2 / w ** 2)
    (A, w), _ = curve_fit(model, rho2, amp_n, p0=(1.0, w_guess), maxfev=10000)
    return float(abs(w))


def cavity_params(blocks, target: int = 0, modes: Optional[EigenmodeSet] = None,
                  mode_index: Optional[int] = None, **gamma_kw) -> CavityParams:
    """g, kappa, omega_c, gamma_3D and C of the cavity mode seen by target ``target``."""
    from .spectral import gamma_3d

    if blocks.n_target < 1:
        raise InvalidArgument("cavity_params needs a target atom")
    if modes is None:
        modes = eigenmodes(blocks.H_AA)
    t = blocks.n_array + target
    H_TA = blocks.H[t, : blocks.n_array]
    H_AT = blocks.H[: blocks.n_array, t]
    g2 = couple_strengths(modes, H_TA, H_AT)
    idx = identify_cavity_mode(modes, g2) if mode_index is None else int(mode_index)
    lam = modes.values[idx]
    g2c = g2[idx]
    if abs(g2c.imag) > 0.05 * abs(g2c.real):
        log.info("mode %d: Im g^2 / Re g^2 = %.3g", idx, g2c.imag / g2c.real)
    g3, reliable = gamma_3d(blocks, lam, g2c, target=target, **gamma_kw)
    return CavityParams(g=float(np.sqrt(max(g2c.real, 0.0))), kappa=float(-2 * lam.imag),
                        omega_c=float(lam.real), gamma_3d=float(g3), mode_index=idx, g2=complex(g2c),
                        gamma_3d_reliable=reliable)


def modes_table(modes: EigenmodeSet, g2: np.ndarray) -> list[dict]:
    """Rows (Re lambda, Im lambda, Re g2, Im g2, g2/kappa) sorted by g2/kappa, descending."""
    order = rank_modes(modes, g2)
    kappa = np.maximum(modes.kappa, 1e-300)
    return [dict(re_lambda=float(modes.values[i].real), im_lambda=float(modes.values[i].imag),
                 re_g2=float(g2[i].real), im_g2=float(g2[i].imag),
                 g2_over_kappa=float(g2[i].real / kappa[i])) for i in order]
