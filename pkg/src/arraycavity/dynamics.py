"""Single-excitation dynamics with Lambda-system target atoms driven in a Raman configuration.

Basis: one state per array atom, then |e_j> and |g2_j> for every target j. In
the frame used here a cavity photon has energy omega_c, |e_j> sits at
omega_c - Delta1 and |g2_j> at omega_c - Delta1 + Delta2. The classical field
couples |e_j> and |g2_j> with matrix element Omega.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, InvalidArgument, NumericalFailure
from .interaction import BlockHamiltonian
from .modes import EigenmodeSet, eigenmodes

log = logging.getLogger(__name__)


@dataclass
class RamanConfig:
    Omega: float
    Delta1: float
    Delta2: float

    @property
    def epsilon(self) -> float:
        return self.Omega / self.Delta1

    @property
    def mean_detuning(self) -> float:
        return 0.5 * (self.Delta1 + self.Delta2)


@dataclass
class RamanEffective:
    g_eff: float
    gamma_eff: float
    stark_g2: float
    stark_photon: float


def raman_effective(config: RamanConfig, g: float, gamma3d: float, kappa: float = 0.0) -> RamanEffective:
    """Two-level parameters after eliminating |e>: coupling, decay and light shifts."""
    D = config.mean_detuning
    if D == 0:
        raise DomainError("Raman detuning must be non-zero")
    Om = config.Omega
    if Om != 0 and min(abs(config.Delta1), abs(config.Delta2)) < 10 * max(abs(Om), abs(g)):
        warnings.warn("detunings are not large compared to Omega and g", RuntimeWarning, stacklevel=2)
    if kappa > 0 and gamma3d > 0 and abs(config.Delta1) < np.sqrt(4 * g ** 2 / (kappa * gamma3d)) * gamma3d:
        warnings.warn("|Delta1| is below sqrt(C) gamma_3D", RuntimeWarning, stacklevel=2)
    return RamanEffective(g_eff=g * Om / D, gamma_eff=Om ** 2 * gamma3d / D ** 2,
                          stark_g2=Om ** 2 / D, stark_photon=g ** 2 / D)


def two_photon_detuning(Omega: float, Delta1: float, g2_sum: float,
                        lamb_shift: float = 0.0) -> float:
    """Delta2 that puts the dressed |g2> level on the dressed cavity photon.

    ``g2_sum`` is the sum of g^2 over the targets the photon couples to and
    ``lamb_shift`` the background shift of |e> near the cavity frequency. The
    |e>-|g2> light shift is kept to all orders in Omega.
    """
    d_e = Delta1 - lamb_shift
    photon = g2_sum / d_e

    def mismatch(D2):
        d = D2 - lamb_shift
        light = 0.5 * d * (np.sqrt(1.0 + 4.0 * Omega ** 2 / d ** 2) - 1.0)
        return D2 - Delta1 + light - photon

    lo, hi = Delta1 - 0.5 * abs(Delta1), Delta1 + 0.5 * abs(Delta1)
    return float(brentq(mismatch, lo, hi, xtol=1e-14 * abs(Delta1), rtol=1e-15))


def matched_raman(g: float, kappa: float, gamma3d: float, Delta1: float,
                  n_targets: int = 1, retune: bool = True, lamb_shift: float = 0.0) -> RamanConfig:
    """Omega chosen so that gamma_eff = kappa, Delta2 tuned to two-photon resonance."""
    if not (kappa > 0 and gamma3d > 0):
        raise InvalidArgument("kappa and gamma_3d must be positive")
    if Delta1 <= 0:
        raise InvalidArgument("Delta1 must be positive")
    Om = Delta1 * np.sqrt(kappa / gamma3d)
    D2 = two_photon_detuning(Om, Delta1, n_targets * g ** 2, lamb_shift) if retune else Delta1
    return RamanConfig(float(Om), float(Delta1), float(D2))


def fidelity_prediction(C: float, mode: str = "single") -> float:
    """exp(-pi / sqrt C) for a transfer into the cavity, exp(-pi sqrt(2/C)) for an exchange."""
    if not C > 0:
        raise DomainError("cooperativity must be positive")
    if mode == "single":
        return float(np.exp(-np.pi / np.sqrt(C)))
    if mode == "exchange":
        return float(np.exp(-np.pi * np.sqrt(2.0 / C)))
    raise InvalidArgument(f"unknown mode {mode!r}")


# -- Hamiltonian ---------------------------------------------------------------

@dataclass
class LambdaSystem:
    H: np.ndarray
    n_array: int
    n_target: int
    omega_c: float
    cavity_vector: Optional[np.ndarray] = None  # right eigenvector of the cavity mode, v^T v = 1

    def e(self, j: int) -> int:
        return self.n_array + 2 * j

    def g2(self, j: int) -> int:
        return self.n_array + 2 * j + 1

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def basis_state(self, kind: str, j: int = 0) -> np.ndarray:
        psi = np.zeros(self.dim, complex)
        if kind == "e":
            psi[self.e(j)] = 1
        elif kind == "g2":
            psi[self.g2(j)] = 1
        elif kind == "cavity":
            if self.cavity_vector is None:
                raise InvalidArgument("no cavity mode attached")
            v = self.cavity_vector
            psi[: self.n_array] = v / np.linalg.norm(v)
        elif kind == "dressed_g2":
            psi = self.dressed_g2(j)
        else:
            raise InvalidArgument(f"unknown basis state {kind!r}")
        return psi

    def dressed_g2(self, j: int) -> np.ndarray:
        """Light-shifted |g2_j> level: eigenvector of the local |e_j>, |g2_j> block
        with the larger |g2_j> weight, as reached by switching Omega on adiabatically."""
        idx = [self.e(j), self.g2(j)]
        w, V = np.linalg.eig(self.H[np.ix_(idx, idx)])
        k = int(np.argmax(np.abs(V[1])))
        psi = np.zeros(self.dim, complex)
        psi[idx] = V[:, k] / np.linalg.norm(V[:, k])
        return psi


def lambda_hamiltonian(blocks: BlockHamiltonian, raman: RamanConfig, omega_c: float,
                       cavity_vector: Optional[np.ndarray] = None) -> LambdaSystem:
    """Embed the array block and Lambda-type targets into one non-Hermitian matrix.

    Target-target dipole couplings act between the |e> states; the targets'
    free-space linewidths stay on |e>.
    """
    nA, nT = blocks.n_array, blocks.n_target
    if nT < 1:
        raise InvalidArgument("at least one target atom is needed")
    n = nA + 2 * nT
    H = np.zeros((n, n), complex)
    H[:nA, :nA] = blocks.H_AA
    e_idx = nA + 2 * np.arange(nT)
    g_idx = e_idx + 1
    H[np.ix_(e_idx, np.arange(nA))] = blocks.H_TA
    H[np.ix_(np.arange(nA), e_idx)] = blocks.H_AT
    TT = blocks.H_TT.copy()
    gam = -2.0 * np.diag(TT).imag
    np.fill_diagonal(TT, omega_c - raman.Delta1 - 0.5j * gam)
    H[np.ix_(e_idx, e_idx)] = TT
    H[g_idx, g_idx] = omega_c - raman.Delta1 + raman.Delta2
    H[e_idx, g_idx] = raman.Omega
    H[g_idx, e_idx] = raman.Omega
    return LambdaSystem(H, nA, nT, float(omega_c), cavity_vector)


# -- propagation -------------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    psi: np.ndarray  # shape (len(t), dim)
    system: LambdaSystem

    def population(self, index: int) -> np.ndarray:
        return np.abs(self.psi[:, index]) ** 2

    def e_population(self, j: int) -> np.ndarray:
        return self.population(self.system.e(j))

    def g2_population(self, j: int) -> np.ndarray:
        return self.population(self.system.g2(j))

    def cavity_population(self) -> np.ndarray:
        v = self.system.cavity_vector
        if v is None:
            raise InvalidArgument("no cavity mode attached")
        return np.abs(self.psi[:, : self.system.n_array] @ v) ** 2

    def array_population(self) -> np.ndarray:
        return (np.abs(self.psi[:, : self.system.n_array]) ** 2).sum(axis=1)

    def norm(self) -> np.ndarray:
        return (np.abs(self.psi) ** 2).sum(axis=1)


class EigenPropagator:
    """psi(t) = V exp(-i Lambda t) V^-1 psi0 from one decomposition of H."""

    def __init__(self, H: np.ndarray):
        self.modes: EigenmodeSet = eigenmodes(H)

    def __call__(self, psi0: np.ndarray, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c = self.modes.left @ psi0
        ph = np.exp(-1j * np.outer(t, self.modes.values))
        return (ph * c) @ self.modes.right.T


def evolve(system: LambdaSystem, psi0, t_grid, method: str = "eigen",
           rtol: float = 1e-10, atol: float = 1e-12,
           propagator: Optional[EigenPropagator] = None) -> Trajectory:
    """Propagate ``psi0`` under the non-Hermitian Hamiltonian of ``system``."""
    psi0 = np.asarray(psi0, dtype=complex)
    t = np.asarray(t_grid, dtype=float)
    if psi0.shape != (system.dim,):
        raise InvalidArgument("initial state has the wrong dimension")
    if method == "eigen":
        prop = propagator or EigenPropagator(system.H)
        psi = prop(psi0, t)
    elif method == "ode":
        H = system.H
        sol = solve_ivp(lambda _, y: -1j * (H @ y), (float(t[0]), float(t[-1])), psi0,
                        method="DOP853", t_eval=t, rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericalFailure(f"integration failed: {sol.message}")
        psi = sol.y.T
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    if not np.all(np.isfinite(psi)):
        raise NumericalFailure("non-finite amplitudes")
    return Trajectory(t, psi, system)


def transfer_fidelity(population, t=None, refine=None) -> float:
    """Maximum of a receiving population over the trajectory.

    ``refine`` may be a callable t -> population used to polish the maximum
    between grid points.
    """
    p = np.asarray(population, dtype=float)
    i = int(np.argmax(p))
    best = float(p[i])
    if refine is not None and t is not None and 0 < i < len(p) - 1:
        res = minimize_scalar(lambda s: -refine(s), bounds=(t[i - 1], t[i + 1]), method="bounded",
                              options=dict(xatol=1e-9 * max(1.0, t[i])))
        best = max(best, float(-res.fun))
    return float(min(max(best, 0.0), 1.0))


def exchange_fidelity(system: LambdaSystem, sender: int = 0, receiver: int = 1,
                      t_max: Optional[float] = None, n_t: int = 2001, dressed: bool = True,
                      propagator: Optional[EigenPropagator] = None) -> tuple[float, Trajectory]:
    """Start in |g2> of ``sender`` and return the best |g2> population of ``receiver``.

    With ``dressed`` the initial and read-out states are the light-shifted
    |g2> levels, i.e. Omega is assumed to be switched on and off adiabatically.
    """
    if t_max is None:
        raise InvalidArgument("t_max is required")
    prop = propagator or EigenPropagator(system.H)
    kind = "dressed_g2" if dressed else "g2"
    psi0 = system.basis_state(kind, sender)
    probe = system.basis_state(kind, receiver).conj()
    t = np.linspace(0.0, t_max, n_t)
    traj = evolve(system, psi0, t, propagator=prop)
    pop = np.abs(traj.psi @ probe) ** 2
    F = transfer_fidelity(pop, t, refine=lambda s: abs(prop(psi0, s)[0] @ probe) ** 2)
    return F, traj


def effective_trajectory(eff: RamanEffective, kappa: float, t_grid, n_targets: int = 1,
                         initial: int = 0) -> np.ndarray:
    """Populations of [cavity, g2_0, g2_1, ...] in the two-level effective model on resonance."""
    n = 1 + n_targets
    H = np.zeros((n, n), complex)
    H[0, 0] = -0.5j * kappa
    for j in range(n_targets):
        H[1 + j, 1 + j] = -0.5j * eff.gamma_eff
        H[0, 1 + j] = H[1 + j, 0] = eff.g_eff
    psi0 = np.zeros(n, complex)
    psi0[1 + initial] = 1.0
    w, V = np.linalg.eig(H)
    c = np.linalg.solve(V, psi0)
    t = np.asarray(t_grid, dtype=float)
    psi = (np.exp(-1j * np.outer(t, w)) * c) @ V.T
    return np.abs(psi) ** 2

