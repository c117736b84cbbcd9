import numpy as np
import pytest

from arraycavity.errors import DomainError, InvalidArgument
from arraycavity.geometry import (DipoleSet, GaussianBeam, add_targets, build_cavity, build_square_array)
from arraycavity.interaction import assemble_hamiltonian
from arraycavity.modes import (EigenmodeSet, cavity_params, couple_strengths, eigenmodes,
                               fit_mode_waist, identify_by_gaussian_overlap, identify_cavity_mode,
                               mode_splitting, modes_table, rank_modes)
from arraycavity.spectral import self_energy


def inverse_iteration(H, shift, tol=1e-13, max_iter=200):
    """Shifted inverse power iteration with a Rayleigh-quotient update of the shift."""
    n = H.shape[0]
    v = np.ones(n, complex) / np.sqrt(n)
    lam = shift
    for _ in range(max_iter):
        w = np.linalg.solve(H - shift * np.eye(n), v)
        v = w / np.linalg.norm(w)
        new = (v.conj() @ H @ v) / (v.conj() @ v)
        if abs(new - lam) < tol:
            return new
        lam = new
    return lam


def mirror_flip_index(N, n_mirrors, axis):
    """Permutation mapping every array atom to its image under x -> -x (axis 0) or y -> -y."""
    idx = np.arange(N * N).reshape(N, N)  # [row (y), col (x)]
    flip = idx[:, ::-1] if axis == 0 else idx[::-1, :]
    return np.concatenate([flip.ravel() + m * N * N for m in range(n_mirrors)])


class TestEigenmodes:
    def test_scalar(self):
        m = eigenmodes(np.array([[-0.5j]]))
        assert m.values[0] == -0.5j and m.left @ m.right == pytest.approx(1.0)

    def test_dicke_pair(self):
        lay = DipoleSet([[0, 0, 0], [0.05, 0, 0]], [[1, 0, 0]] * 2, np.zeros(2), np.ones(2),
                        n_array=2)
        m = eigenmodes(assemble_hamiltonian(lay).H)
        assert m.values.imag.sum() == pytest.approx(-1.0, abs=1e-12)
        bright = np.argmax(m.kappa)
        v = m.right[:, bright]
        assert abs(v[0] - v[1]) < 1e-8 * abs(v[0])
        assert m.kappa.min() < 0.1 < 1.9 < m.kappa.max()

    def test_most_subradiant_against_inverse_iteration(self):
        H = assemble_hamiltonian(build_square_array(10, 0.47)).H
        m = eigenmodes(H)
        k = np.argmin(m.kappa)
        lam = inverse_iteration(H, np.round(m.values[k], 3) + 1e-4)
        assert abs(lam - m.values[k]) < 1e-8

    def test_decomposition_quality(self, cavity_15):
        _, blocks, m = cavity_15
        H = blocks.H_AA
        assert m.biorthogonality_error() < 1e-8
        res = np.linalg.norm(H @ m.right - m.right * m.values, axis=0)
        assert res.max() < 1e-8 * np.linalg.norm(H, 2)
        assert m.values.imag.max() <= 1e-10
        assert np.abs(m.reconstruct() - H).max() < 1e-6 * np.abs(H).max()

    def test_left_vectors_are_transposed_right(self, cavity_10):
        _, blocks, m = cavity_10
        np.testing.assert_allclose(m.left @ blocks.H_AA, m.values[:, None] * m.left,
                                   atol=1e-9)

    def test_rigid_translation_keeps_kappa(self):
        lay = add_targets(build_cavity(8, 0.47, 1.5, 1.5), [[0, 0, 0]])
        moved = lay.copy(positions=lay.positions + [1.3, -0.4, 2.2])
        a, b = (cavity_params(assemble_hamiltonian(x)) for x in (lay, moved))
        assert b.kappa == pytest.approx(a.kappa, rel=1e-9)
        assert b.g == pytest.approx(a.g, rel=1e-9)


class TestCouplings:
    def test_odd_modes_do_not_couple(self, cavity_15):
        _, blocks, m = cavity_15
        g2 = couple_strengths(m, blocks.H_TA[0], blocks.H_AT[:, 0])
        perm = mirror_flip_index(15, 2, axis=0)
        v = m.right
        odd = np.linalg.norm(v[perm] + v, axis=0) < 1e-6 * np.linalg.norm(v, axis=0)
        assert odd.sum() > 10
        assert np.abs(g2[odd]).max() < 1e-10 * np.abs(g2).max()

    def test_axial_node_minimises_coupling(self, cavity_15):
        lay, blocks, m = cavity_15
        k = identify_cavity_mode(m, couple_strengths(m, blocks.H_TA[0], blocks.H_AT[:, 0]))
        zs = np.linspace(-0.4, 0.4, 33)
        g = []
        for z in zs:
            b = assemble_hamiltonian(add_targets(lay.without_targets(), [[0, 0, z]]))
            g.append(abs(couple_strengths(m, b.H_TA[0], b.H_AT[:, 0])[k]))
        g = np.array(g)
        nodes = zs[np.argsort(g)[:2]]
        np.testing.assert_allclose(np.sort(np.abs(nodes)), [0.25, 0.25], atol=0.026)
        assert g[16] == g.max()

    def test_dimension_mismatch(self, cavity_10):
        _, _, m = cavity_10
        with pytest.raises(InvalidArgument):
            couple_strengths(m, np.ones(3), np.ones(3))

    @pytest.mark.slow
    def test_imaginary_part_small_for_large_cavity(self):
        lay = add_targets(build_cavity(30, 0.47, 1.5, 3.0), [[0, 0, 0]])
        b = assemble_hamiltonian(lay)
        m = eigenmodes(b.H_AA)
        g2 = couple_strengths(m, b.H_TA[0], b.H_AT[:, 0])
        k = identify_cavity_mode(m, g2)
        assert abs(g2[k].imag) < 0.05 * g2[k].real


class TestIdentification:
    def test_single_atom(self):
        lay = add_targets(build_square_array(1, 0.5, 1.0), [[0, 0, 0]])
        b = assemble_hamiltonian(lay)
        m = eigenmodes(b.H_AA)
        assert identify_cavity_mode(m, couple_strengths(m, b.H_TA[0], b.H_AT[:, 0])) == 0

    def test_tie_breaks_to_smaller_kappa(self):
        m = EigenmodeSet(np.array([-0.5j, -0.25j, -0.5j]), np.eye(3, dtype=complex),
                         np.eye(3, dtype=complex))
        g2 = np.array([1.0, 0.5, 0.2])
        assert identify_cavity_mode(m, g2) == 1
        np.testing.assert_array_equal(rank_modes(m, g2), [1, 0, 2])

    def test_selected_mode_is_sharpest_resonance(self, cavity_15):
        _, blocks, m = cavity_15
        cp = cavity_params(blocks, modes=m)
        grid = np.linspace(0.2, 0.8, 601)
        grid = np.unique(np.concatenate([grid, cp.omega_c + np.linspace(-5, 5, 101) * cp.kappa]))
        A = self_energy(blocks, grid).A
        assert abs(grid[np.argmax(A)] - cp.omega_c) < cp.kappa

    def test_selected_mode_is_even(self, cavity_15):
        _, blocks, m = cavity_15
        k = cavity_params(blocks, modes=m).mode_index
        v = np.abs(m.right[:, k])
        for axis in (0, 1):
            np.testing.assert_allclose(v[mirror_flip_index(15, 2, axis)], v, rtol=1e-6,
                                       atol=1e-9 * v.max())

    def test_gaussian_overlap_agrees_with_target_probe(self, cavity_15):
        lay, blocks, m = cavity_15
        k = cavity_params(blocks, modes=m).mode_index
        assert identify_by_gaussian_overlap(m, lay.without_targets(), 2.0) == k

    def test_flat_mirrors_split_fundamental_and_second_order(self):
        lay = add_targets(build_cavity(15, 0.47, 1.5), [[0, 0, 0]])
        b = assemble_hamiltonian(lay)
        m = eigenmodes(b.H_AA)
        g2 = couple_strengths(m, b.H_TA[0], b.H_AT[:, 0])
        top = rank_modes(m, g2)[:2]
        split = abs(m.omega[top[0]] - m.omega[top[1]])
        # degenerate in the closed form, clearly split in the finite array
        assert split > 0.01


class TestSplittingFormula:
    def test_zero_order(self):
        assert mode_splitting(1.081, 1.5, 211.3, 0) == 0

    def test_second_order(self):
        assert mode_splitting(1.081, 1.5, 211.3, 2) == pytest.approx(0.131, abs=5e-4)

    def test_planar_limit(self):
        vals = [mode_splitting(1.081, L, 211.3, 2) for L in (1e-2, 1e-4, 1e-6, 1e-10)]
        assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-5

    def test_domain(self):
        with pytest.raises(DomainError):
            mode_splitting(1.0, 3.0, 1.0, 2)


class TestParams:
    def test_cooperativity_definition(self, cavity_15):
        _, blocks, m = cavity_15
        cp = cavity_params(blocks, modes=m)
        assert cp.cooperativity == pytest.approx(4 * cp.g ** 2 / (cp.kappa * cp.gamma_3d), rel=1e-12)
        assert cp.g > 0 and cp.kappa > 0 and cp.gamma_3d > 0

    def test_needs_target(self):
        b = assemble_hamiltonian(build_cavity(2, 0.5, 1.5))
        with pytest.raises(InvalidArgument):
            cavity_params(b)

    def test_table_sorted(self, cavity_10):
        _, blocks, m = cavity_10
        rows = modes_table(m, couple_strengths(m, blocks.H_TA[0], blocks.H_AT[:, 0]))
        r = [row["g2_over_kappa"] for row in rows]
        assert r == sorted(r, reverse=True) and len(rows) == 200

    def test_waist_fit_of_gaussian_profile(self):
        lay = build_cavity(21, 0.47, 1.5)
        v = GaussianBeam(2.3).scalar(lay.positions * [1, 1, 0])
        assert fit_mode_waist(v, lay, mirror=1) == pytest.approx(2.3, rel=1e-6)
