"""Atomic motion: Lamb-Dicke estimates, frozen-disorder averages and fast-motion rescaling."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ArrayCavityError, DomainError, InvalidArgument
from .geometry import K0, DipoleSet, sample_frozen_disorder
from .interaction import BlockHamiltonian, assemble_hamiltonian
from .modes import couple_strengths, eigenmodes, identify_cavity_mode, nearby_modes

log = logging.getLogger(__name__)

Extractor = Callable[[BlockHamiltonian], dict]


def lamb_dicke_sigma(V0_over_Er: float, a: float) -> float:
    """Ground-state position spread (a / (pi sqrt 2)) (Er / V0)^(1/4) in a lattice trap."""
    if not V0_over_Er > 0:
        raise DomainError("trap depth must be positive")
    if not a > 0:
        raise InvalidArgument("lattice constant must be positive")
    return float(a / (np.pi * np.sqrt(2.0)) * V0_over_Er ** -0.25)


def motion_cooperativity(w0: float, a: float, V0_over_Er: float, gamma_ratio: float = 1.0) -> float:
    """Cooperativity when motional scattering dominates the mirror loss."""
    for name, v in (("w0", w0), ("a", a), ("V0_over_Er", V0_over_Er), ("gamma_ratio", gamma_ratio)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive")
    return float(9.0 / (8.0 * np.pi ** 3) / w0 ** 2 / a ** 4 * np.sqrt(V0_over_Er) * gamma_ratio)


@dataclass
class MotionEstimate:
    sigma: float
    V0_over_Er: float
    a: float
    C_mot: Optional[float] = None
    eta: float = field(init=False)
    kappa_mot: float = field(init=False)

    def __post_init__(self):
        self.eta = K0 * self.sigma
        self.kappa_mot = self.eta ** 2


def motion_estimate(V0_over_Er: float, a: float, w0: Optional[float] = None,
                    gamma_ratio: float = 1.0) -> MotionEstimate:
    sigma = lamb_dicke_sigma(V0_over_Er, a)
    C = motion_cooperativity(w0, a, V0_over_Er, gamma_ratio) if w0 is not None else None
    return MotionEstimate(sigma, V0_over_Er, a, C)


# -- extractors -------------------------------------------------------------------

@dataclass
class ModeExtractor:
    """Cavity-mode (g, kappa, omega_c) of a Hamiltonian with one target atom.

    With ``shift`` set only the ``k`` modes nearest to it are computed
    (shift-invert), otherwise the block is fully diagonalised. ``gamma_3d`` adds
    the background decay rate and the cooperativity.
    """

    shift: Optional[complex] = None
    k: int = 8
    target: int = 0
    gamma_3d: bool = False

    def __call__(self, blocks: BlockHamiltonian) -> dict:
        if self.shift is None:
            modes = eigenmodes(blocks.H_AA)
        else:
            modes = nearby_modes(blocks.H_AA, self.shift, self.k)
        t = blocks.n_array + self.target
        g2 = couple_strengths(modes, blocks.H[t, : blocks.n_array], blocks.H[: blocks.n_array, t])
        i = identify_cavity_mode(modes, g2)
        out = dict(g=float(np.sqrt(max(g2[i].real, 0.0))), kappa=float(modes.kappa[i]),
                   omega_c=float(modes.omega[i]))
        if self.gamma_3d:
            from .spectral import gamma_3d

            g3, _ = gamma_3d(blocks, modes.values[i], g2[i], target=self.target)
            out["gamma_3d"] = g3
            out["C"] = 4 * out["g"] ** 2 / (out["kappa"] * g3)
        return out


# -- frozen motion ------------------------------------------------------------------

@dataclass
class FrozenAverage:
    mean: dict
    stderr: dict
    n_ok: int
    n_failed: int
    samples: dict


class _Welford:
    def __init__(self):
        self.n, self.mean, self.m2 = 0, 0.0, 0.0

    def add(self, x: float):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return float("nan")
        return float(np.sqrt(self.m2 / (self.n - 1) / self.n))


def realization_seed(seed: int, k: int) -> np.random.SeedSequence:
    """Independent stream for realization ``k`` of a run seeded with ``seed``."""
    return np.random.SeedSequence([int(seed), int(k)])


def frozen_average(ideal: DipoleSet, sigma, n_realizations: int, seed: int,
                   extractor: Extractor, include_targets: bool = False) -> FrozenAverage:
    """Mean and standard error of extracted parameters over static disorder realizations.

    A realization whose extraction raises is skipped and counted in ``n_failed``.
    """
    if n_realizations < 2:
        raise InvalidArgument("need at least two realizations")
    if ideal.a is not None and ideal.a < 0.4:
        warnings.warn("lattice constant below 0.4: frozen-motion results are regime-sensitive",
                      RuntimeWarning, stacklevel=2)
    stats: dict[str, _Welford] = {}
    samples: dict[str, list] = {}
    failed = 0
    for k in range(n_realizations):
        lay = sample_frozen_disorder(ideal, sigma, realization_seed(seed, k), include_targets)
        try:
            res = extractor(assemble_hamiltonian(lay))
        except (ArrayCavityError, np.linalg.LinAlgError) as exc:
            log.warning("realization %d failed: %s", k, exc)
            failed += 1
            continue
        for key, v in res.items():
            stats.setdefault(key, _Welford()).add(float(v))
            samples.setdefault(key, []).append(float(v))
    n_ok = n_realizations - failed
    return FrozenAverage({k: s.mean for k, s in stats.items()},
                         {k: s.stderr for k, s in stats.items()}, n_ok, failed,
                         {k: np.array(v) for k, v in samples.items()})


def fast_motion_params(ideal: DipoleSet, sigma: float, extractor: Extractor) -> dict:
    """Extractor applied to the motion-averaged Hamiltonian."""
    eta = K0 * sigma
    if eta >= 0.5:
        warnings.warn("outside the Lamb-Dicke regime (eta >= 0.5)", RuntimeWarning, stacklevel=2)
    return extractor(assemble_hamiltonian(ideal, motion_sigma=sigma))
