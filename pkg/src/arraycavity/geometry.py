"""Dipole layouts: flat and curved square arrays, Stark profiles, disorder, Gaussian beams.

Lengths are in units of the array wavelength, so the wavenumber is ``K0 = 2*pi``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import InvalidArgument, NumericalFailure

K0 = 2.0 * np.pi

X_POL = np.array([1.0, 0.0, 0.0], dtype=complex)


@dataclass(frozen=True)
class Dipole:
    position: np.ndarray
    orientation: np.ndarray
    detuning: float = 0.0
    linewidth: float = 1.0

    def __post_init__(self):
        e = np.asarray(self.orientation, dtype=complex)
        if abs(np.vdot(e, e).real - 1.0) > 1e-12:
            raise InvalidArgument("dipole orientation must have unit norm")
        if not self.linewidth > 0:
            raise InvalidArgument("dipole linewidth must be positive")


@dataclass
class DipoleSet:
    """All emitters of a setup; array atoms first, then target atoms.

    Array atoms are ordered mirror by mirror, each mirror row-major (rows along
    y, columns along x).
    """

    positions: np.ndarray
    orientations: np.ndarray
    detunings: np.ndarray
    linewidths: np.ndarray
    n_array: int
    a: Optional[float] = None
    N: Optional[int] = None
    L: Optional[float] = None
    w0: Optional[float] = None
    mirror_index: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        n = len(self.positions)
        self.orientations = np.asarray(self.orientations, dtype=complex).reshape(n, 3)
        self.detunings = np.asarray(self.detunings, dtype=float).reshape(n)
        self.linewidths = np.asarray(self.linewidths, dtype=float).reshape(n)
        if self.mirror_index is None:
            self.mirror_index = np.zeros(self.n_array, dtype=int)
        if not 0 <= self.n_array <= n:
            raise InvalidArgument("n_array out of range")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_target(self) -> int:
        return len(self) - self.n_array

    @property
    def array_slice(self) -> slice:
        return slice(0, self.n_array)

    @property
    def target_slice(self) -> slice:
        return slice(self.n_array, len(self))

    def dipole(self, i: int) -> Dipole:
        return Dipole(self.positions[i].copy(), self.orientations[i].copy(),
                      float(self.detunings[i]), float(self.linewidths[i]))

    @property
    def array_atoms(self) -> list[Dipole]:
        return [self.dipole(i) for i in range(self.n_array)]

    @property
    def target_atoms(self) -> list[Dipole]:
        return [self.dipole(i) for i in range(self.n_array, len(self))]

    def __iter__(self) -> Iterator[Dipole]:
        for i in range(len(self)):
            yield self.dipole(i)

    def copy(self, **changes) -> "DipoleSet":
        base = dict(
            positions=self.positions.copy(),
            orientations=self.orientations.copy(),
            detunings=self.detunings.copy(),
            linewidths=self.linewidths.copy(),
            mirror_index=self.mirror_index.copy(),
        )
        base.update(changes)
        return replace(self, **base)

    def mirror(self, m: int) -> "DipoleSet":
        """The array atoms of mirror ``m`` as a stand-alone layout (no targets)."""
        sel = np.flatnonzero(self.mirror_index == m)
        return DipoleSet(self.positions[sel], self.orientations[sel], self.detunings[sel],
                         self.linewidths[sel], n_array=len(sel), a=self.a, N=self.N,
                         L=self.L, w0=self.w0, mirror_index=np.zeros(len(sel), dtype=int))

    def without_targets(self) -> "DipoleSet":
        s = self.array_slice
        return self.copy(positions=self.positions[s].copy(),
                         orientations=self.orientations[s].copy(),
                         detunings=self.detunings[s].copy(),
                         linewidths=self.linewidths[s].copy())

    def min_separation(self) -> float:
        if len(self) < 2:
            return np.inf
        from scipy.spatial.distance import pdist
        return float(pdist(self.positions).min())

    def validate(self) -> None:
        norms = np.einsum("ij,ij->i", self.orientations.conj(), self.orientations).real
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidArgument("orientations must be unit vectors")
        if np.any(self.linewidths <= 0):
            raise InvalidArgument("linewidths must be positive")
        if self.min_separation() <= 1e-9:
            raise InvalidArgument("two atoms share a position")


def _unit(orientation) -> np.ndarray:
    e = np.asarray(orientation, dtype=complex).reshape(3)
    norm = np.sqrt(np.vdot(e, e).real)
    if norm == 0:
        raise InvalidArgument("orientation must be non-zero")
    return e / norm


def build_square_array(N: int, a: float, z_plane: float = 0.0,
                       orientation=X_POL) -> DipoleSet:
    """N x N square lattice centred on the z-axis in the plane ``z = z_plane``."""
    if int(N) != N or N < 1:
        raise InvalidArgument(f"N must be a positive integer, got {N!r}")
    if not a > 0:
        raise InvalidArgument(f"lattice constant must be positive, got {a!r}")
    N = int(N)
    coords = (np.arange(N) - (N - 1) / 2.0) * a
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    pos = np.column_stack([xx.ravel(), yy.ravel(), np.full(N * N, float(z_plane))])
    e = _unit(orientation)
    return DipoleSet(pos, np.tile(e, (N * N, 1)), np.zeros(N * N), np.ones(N * N),
                     n_array=N * N, a=float(a), N=N)


def empty_layout() -> DipoleSet:
    """A layout without any atoms, for free-space reference runs."""
    return DipoleSet(np.zeros((0, 3)), np.zeros((0, 3), complex), np.zeros(0), np.zeros(0),
                     n_array=0)


def concatenate(*parts: DipoleSet) -> DipoleSet:
    """Stack array-only fragments; each fragment becomes its own mirror index."""
    for p in parts:
        if p.n_target:
            raise InvalidArgument("concatenate expects array-only fragments")
    mirror = np.concatenate([np.full(len(p), k) for k, p in enumerate(parts)])
    first = parts[0]
    return DipoleSet(np.vstack([p.positions for p in parts]),
                     np.vstack([p.orientations for p in parts]),
                     np.concatenate([p.detunings for p in parts]),
                     np.concatenate([p.linewidths for p in parts]),
                     n_array=len(mirror), a=first.a, N=first.N, L=first.L, w0=first.w0,
                     mirror_index=mirror)


def add_targets(layout: DipoleSet, positions, linewidth: float = 1.0, detuning: float = 0.0,
                orientation=X_POL) -> DipoleSet:
    """Append target atoms after the existing atoms."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(pos)
    e = _unit(orientation)
    lw = np.broadcast_to(np.asarray(linewidth, dtype=float), (n,))
    dt = np.broadcast_to(np.asarray(detuning, dtype=float), (n,))
    return layout.copy(positions=np.vstack([layout.positions, pos]),
                       orientations=np.vstack([layout.orientations, np.tile(e, (n, 1))]),
                       detunings=np.concatenate([layout.detunings, dt]),
                       linewidths=np.concatenate([layout.linewidths, lw]))


# -- Gaussian beams ----------------------------------------------------------

@dataclass(frozen=True)
class GaussianBeam:
    """Fundamental paraxial mode focused at the origin, axis along z."""

    w0: float
    polarization: np.ndarray = field(default_factory=lambda: X_POL.copy())
    k0: float = K0

    def __post_init__(self):
        if not self.w0 > 0:
            raise InvalidArgument("beam waist must be positive")

    @property
    def rayleigh_range(self) -> float:
        return self.k0 * self.w0 ** 2 / 2.0

    def width(self, z):
        return self.w0 * np.sqrt(1.0 + (np.asarray(z) / self.rayleigh_range) ** 2)

    def gouy(self, z):
        return np.arctan(np.asarray(z) / self.rayleigh_range)

    def inverse_radius(self, z):
        """1/R(z) with R(z) = (z^2 + zR^2)/z; finite at the focus."""
        z = np.asarray(z, dtype=float)
        return z / (z ** 2 + self.rayleigh_range ** 2)

    def phase(self, r):
        r = np.asarray(r, dtype=float)
        x, y, z = r[..., 0], r[..., 1], r[..., 2]
        rho2 = x ** 2 + y ** 2
        return self.k0 * z + self.k0 * rho2 * self.inverse_radius(z) / 2.0 - self.gouy(z)

    def scalar(self, r):
        r = np.asarray(r, dtype=float)
        x, y, z = r[..., 0], r[..., 1], r[..., 2]
        w = self.width(z)
        amp = np.sqrt(2.0 / np.pi) / w * np.exp(-(x ** 2 + y ** 2) / w ** 2)
        return amp * np.exp(-1j * self.phase(r))


def gaussian_mode_field(beam: GaussianBeam, r) -> np.ndarray:
    """Vector field of the beam at point(s) ``r``; shape ``(..., 3)``.

    The transverse profile is normalised, int |E|^2 dx dy = 1 in every plane. The
    phase convention exp[-i(k0 z + k0 rho^2 / 2R - psi)] matches outgoing
    exp(+i k0 r) waves of the Green's function, so the beam travels towards -z.
    """
    pol = np.asarray(beam.polarization, dtype=complex)
    return beam.scalar(r)[..., None] * pol


def waist_from_mirror_width(w_mirror: float, L: float, k0: float = K0) -> float:
    """Invert w(L/2) = sqrt(w0^2 + (L / k0 w0)^2) for the larger root w0."""
    disc = w_mirror ** 4 - 4.0 * (L / k0) ** 2
    if disc < 0:
        raise InvalidArgument("mirror width too small for this cavity length")
    return float(np.sqrt((w_mirror ** 2 + np.sqrt(disc)) / 2.0))


# -- curved mirrors ----------------------------------------------------------

def phase_matching_residual(z, rho2, w0: float, L: float, k0: float = K0):
    """k0 z + k0 rho^2/(2R(z)) - psi(z) - k0 L/2 for z > 0."""
    zr = k0 * w0 ** 2 / 2.0
    z = np.asarray(z, dtype=float)
    return k0 * z + k0 * rho2 * z / (2.0 * (z ** 2 + zr ** 2)) - np.arctan(z / zr) - k0 * L / 2.0


def _phase_matching_slope(z, rho2, w0, k0=K0):
    zr = k0 * w0 ** 2 / 2.0
    s = z ** 2 + zr ** 2
    return k0 + k0 * rho2 * (zr ** 2 - z ** 2) / (2.0 * s ** 2) - zr / s


def solve_phase_matching(rho2, w0: float, L: float, k0: float = K0,
                         tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Damped Newton solve of the phase-matching condition for the +z mirror."""
    rho2 = np.atleast_1d(np.asarray(rho2, dtype=float))
    z = np.full_like(rho2, L / 2.0)
    f = phase_matching_residual(z, rho2, w0, L, k0)
    for _ in range(max_iter):
        if np.all(np.abs(f) < tol):
            return z
        step = f / _phase_matching_slope(z, rho2, w0, k0)
        lam = np.ones_like(z)
        z_new = z - step
        f_new = phase_matching_residual(z_new, rho2, w0, L, k0)
        for _ in range(30):
            bad = np.abs(f_new) > np.abs(f) * (1 - 1e-4 * lam)
            bad &= np.abs(f) >= tol
            if not bad.any():
                break
            lam = np.where(bad, lam / 2, lam)
            z_new = np.where(bad, z - lam * step, z_new)
            f_new = phase_matching_residual(z_new, rho2, w0, L, k0)
        z, f = z_new, f_new
    bad = np.flatnonzero(np.abs(f) >= tol)
    if bad.size:
        raise NumericalFailure(f"phase matching did not converge for atom {int(bad[0])}")
    return z


def curve_mirror(flat: DipoleSet, w0: float, L: float) -> DipoleSet:
    """Shift flat-mirror atoms along z onto the wavefront of a Gaussian beam of waist w0.

    Atoms in the z < 0 half space are placed on the mirror image of the +z
    solution. x and y are left untouched.
    """
    if not (w0 > 0 and L > 0):
        raise InvalidArgument("w0 and L must be positive")
    pos = flat.positions.copy()
    arr = flat.array_slice
    rho2 = pos[arr, 0] ** 2 + pos[arr, 1] ** 2
    z = solve_phase_matching(rho2, w0, L)
    sign = np.where(pos[arr, 2] < 0, -1.0, 1.0)
    pos[arr, 2] = sign * z
    return flat.copy(positions=pos, w0=float(w0), L=float(L))


def build_cavity(N: int, a: float, L: float, w0: Optional[float] = None,
                 orientation=X_POL) -> DipoleSet:
    """Two N x N mirrors at z = -L/2 (mirror 0) and z = +L/2 (mirror 1).

    With ``w0`` given the mirrors are curved to match a Gaussian beam of that waist.
    """
    if not L > 0:
        raise InvalidArgument("cavity length must be positive")
    m1 = build_square_array(N, a, -L / 2.0, orientation)
    m2 = build_square_array(N, a, +L / 2.0, orientation)
    layout = concatenate(m1, m2)
    layout.L = float(L)
    if w0 is not None:
        layout = curve_mirror(layout, w0, L)
    return layout


def stark_detuning_profile(flat: DipoleSet, alpha: float, w_stark: float) -> DipoleSet:
    """Add alpha*(1 - exp(-2 rho^2 / w_stark^2)) to each array atom's detuning."""
    if not w_stark > 0:
        raise InvalidArgument("w_stark must be positive")
    arr = flat.array_slice
    rho2 = flat.positions[arr, 0] ** 2 + flat.positions[arr, 1] ** 2
    det = flat.detunings.copy()
    det[arr] += alpha * -np.expm1(-2.0 * rho2 / w_stark ** 2)
    return flat.copy(detunings=det)


def sample_frozen_disorder(ideal: DipoleSet, sigma, seed: int,
                           include_targets: bool = False) -> DipoleSet:
    """One realisation of independent Gaussian displacements with per-axis std ``sigma``."""
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (3,))
    if np.any(sig < 0):
        raise InvalidArgument("sigma components must be non-negative")
    rng = np.random.default_rng(seed)
    n = len(ideal) if include_targets else ideal.n_array
    noise = rng.standard_normal((n, 3)) * sig
    pos = ideal.positions.copy()
    # zero-sigma axes stay bit-identical
    moving = sig > 0
    pos[:n, moving] += noise[:, moving]
    return ideal.copy(positions=pos)


# -- CSV ---------------------------------------------------------------------

LAYOUT_COLUMNS = ["index", "x", "y", "z", "ex_re", "ex_im", "ey_re", "ey_im", "ez_re",
                  "ez_im", "detuning", "linewidth", "kind"]


def write_layout_csv(layout: DipoleSet, path) -> None:
    def f(v):
        return format(float(v), ".17g")

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LAYOUT_COLUMNS)
        for i in range(len(layout)):
            e = layout.orientations[i]
            w.writerow([i, *(f(v) for v in layout.positions[i]),
                        f(e[0].real), f(e[0].imag), f(e[1].real), f(e[1].imag),
                        f(e[2].real), f(e[2].imag), f(layout.detunings[i]), f(layout.linewidths[i]),
                        "array" if i < layout.n_array else "target"])


def read_layout_csv(path) -> DipoleSet:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    kinds = [r["kind"] for r in rows]
    n_array = kinds.count("array")
    if kinds != ["array"] * n_array + ["target"] * (len(kinds) - n_array):
        raise InvalidArgument("array atoms must precede target atoms")
    pos = np.array([[float(r[c]) for c in ("x", "y", "z")] for r in rows])
    ori = np.array([[complex(float(r[f"e{c}_re"]), float(r[f"e{c}_im"])) for c in "xyz"]
                    for r in rows])
    # mirrors are not stored; two-sided arrays are split by the sign of z
    z = pos[:n_array, 2]
    mirror = (z > 0).astype(int) if (z.size and z.min() < 0 < z.max()) else np.zeros(n_array, int)
    return DipoleSet(pos, ori, [float(r["detuning"]) for r in rows],
                     [float(r["linewidth"]) for r in rows], n_array=n_array, mirror_index=mirror)

