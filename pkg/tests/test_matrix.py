import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammainc

from focklab import fock as F
from focklab import matrix as M
from focklab import weights as W
from focklab.numerics import ConfigurationError, GridSpec, build_grid

P = F.FockParams()


@pytest.fixture(scope="module")
def chi():
    return M.toeplitz_matrix(P, F.indicator_ball(1.0), 60)


class TestOperatorMatrix:
    def test_algebra(self):
        I = M.identity_matrix(5)
        Z = M.zero_matrix(5)
        np.testing.assert_array_equal((I + Z).entries, np.eye(6))
        np.testing.assert_array_equal((I @ I - I).entries, np.zeros((6, 6)))
        np.testing.assert_array_equal((-I).scale(2).entries, -2 * np.eye(6))

    def test_dimension_mismatch(self):
        with pytest.raises(M.DimensionMismatchError):
            M.identity_matrix(3) @ M.identity_matrix(4)

    def test_entries_immutable(self):
        with pytest.raises(ValueError):
            M.identity_matrix(2).entries[0, 0] = 5

    @settings(max_examples=20)
    @given(st.integers(0, 6), st.integers(0, 2**32 - 1))
    def test_json_round_trip(self, N, seed):
        rng = np.random.default_rng(seed)
        A = M.OperatorMatrix(rng.standard_normal((N + 1, N + 1)) + 1j * rng.standard_normal((N + 1, N + 1)), N, P)
        B = M.OperatorMatrix.from_json(A.to_json())
        np.testing.assert_array_equal(A.entries, B.entries)

    def test_degree_cap(self):
        with pytest.raises(ConfigurationError):
            M.toeplitz_matrix(P, F.constant_symbol(), M.MAX_DEGREE + 1)


class TestToeplitzMatrix:
    def test_indicator_diagonal(self, chi):
        m = np.arange(61)
        np.testing.assert_allclose(np.diag(chi.entries).real, gammainc(m + 1, 1.0), atol=1e-15)
        off = chi.entries - np.diag(np.diag(chi.entries))
        assert np.max(np.abs(off)) < 1e-15

    def test_indicator_norm(self, chi):
        assert M.norm2_power_iteration(chi) == pytest.approx(1 - math.exp(-1), abs=1e-10)

    def test_constant_symbol_is_identity(self):
        A = M.toeplitz_matrix(P, F.constant_symbol(1.0), 40)
        np.testing.assert_allclose(A.entries, np.eye(41), atol=1e-12)

    def test_plane_wave_vacuum(self):
        A = M.toeplitz_matrix(P, F.plane_wave([1.0, 0.0]), 20)
        assert abs(A.entries[0, 0]) == pytest.approx(math.exp(-0.25), rel=1e-12)

    def test_not_a_projection(self, chi):
        # T_chi^2 != T_chi: the Toeplitz algebra is not closed under symbol products
        assert M.norm2_power_iteration(chi @ chi - chi) == pytest.approx(0.2325, abs=1e-4)

    def test_algebra_compose(self, chi):
        I = M.identity_matrix(60)
        A = M.algebra_compose([[chi, chi], [I]])
        np.testing.assert_allclose(A.entries, (chi @ chi + I).entries)


class TestKernelsInBasis:
    def test_pairing_of_identity(self):
        I = M.identity_matrix(120)
        z, u = 1 + 1j, -0.5 + 0.5j
        val = M.matrix_pairing(I, z, u)
        assert abs(val) == pytest.approx(math.exp(-abs(z - u) ** 2 / 2), rel=1e-10)

    def test_truncation_mass_small(self):
        # captured mass of k_z in span{e_0..e_60}
        assert 1 - M.kernel_truncation_mass(P, 3.0, 60) < 1e-12

    def test_berezin_matches_quadrature(self, chi, fine_grid):
        z = np.array([0.0, 1.0, 2.0 + 1.0j])
        quad = F.berezin_symbol(P, F.indicator_ball(1.0), z, fine_grid)
        np.testing.assert_allclose(M.berezin_of_matrix(chi, z), quad, atol=1e-12)

    def test_rank_one_projector(self):
        Pu = M.rank_one_projector(P, 1.0 + 0.5j, 80)
        assert M.norm2_power_iteration(Pu) == pytest.approx(1.0, rel=1e-10)
        np.testing.assert_allclose((Pu @ Pu).entries, Pu.entries, atol=1e-12)


class TestPowerIteration:
    def test_diagonal(self):
        A = M.OperatorMatrix(np.diag([1.0, 3.0, 2.0]), 2, P)
        assert M.norm2_power_iteration(A) == pytest.approx(3.0, rel=1e-8)

    def test_non_convergence(self):
        A = M.OperatorMatrix(np.diag(np.linspace(1.0, 2.0, 50)), 49, P)
        with pytest.raises(M.NonConvergenceError) as err:
            M.norm2_power_iteration(A, max_iter=3)
        assert err.value.result.iterations == 3
        assert not err.value.result.converged

    def test_seed_determinism(self):
        rng = np.random.default_rng(0)
        A = M.OperatorMatrix(rng.standard_normal((30, 30)), 29, P)
        assert M.norm2_power_iteration(A, seed=1) == pytest.approx(np.linalg.norm(A.entries, 2), rel=1e-6)
        assert M.norm2_power_iteration(A, seed=7) == M.norm2_power_iteration(A, seed=7)


class TestGridOperator:
    def test_control_pair(self):
        grid = build_grid(GridSpec(1, 4.0, 0.25))
        c = W.constant(1 / math.pi)
        op = M.grid_operator_build(P, c, c, 2, grid)
        assert M.norm2_power_iteration(op) == pytest.approx(1.0, abs=2e-3)

    def test_apply_matches_projection(self, params):
        grid = build_grid(GridSpec(1, 6.0, 0.25))
        op = M.grid_operator_build(P, W.constant(1.0), W.constant(1.0), 2, grid)
        f = np.exp(grid.complex_nodes[:, 0] * 0.5)
        near = np.flatnonzero(np.abs(grid.complex_nodes[:, 0]) < 1)
        out = op.apply(f)[near]
        ref = F.projection_apply(P, F.GridFunction(grid, f), grid.complex_nodes[near, 0])
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_sigma_must_be_positive(self):
        grid = build_grid(GridSpec(1, 2.0, 0.5))
        with pytest.raises(ValueError):
            M.grid_operator_build(P, W.radial_step(1.0, 0.0, 1.0), W.constant(1.0), 2, grid)

    def test_capacity(self, monkeypatch):
        monkeypatch.setenv("FWL_NODE_CAP", "1000")
        grid = build_grid(GridSpec(1, 2.0, 0.5))
        with pytest.raises(Exception) as err:
            M.grid_operator_build(P, W.constant(1.0), W.constant(1.0), 2, grid)
        assert "node cap" in str(err.value)


class TestBrackets:
    def test_lattice_sum_bounds(self):
        exact = math.fsum(math.exp(-0.5 * (a * a + b * b)) for a in range(-40, 41) for b in range(-40, 41))
        head, tail = M.lattice_gaussian_sum(1.0, 1, 0.5)
        assert head == pytest.approx(exact, rel=1e-15)
        assert 0 <= tail < 1e-6
        head2, tail2 = M.lattice_gaussian_sum(1.0, 1, 0.5, growth=3.0)
        assert head2 > head and tail2 >= 0

    def test_power_pair_bracket(self):
        b = M.norm_bracket(P, M.ProjectionProblem(W.power(2.0), W.power(2.0), 2), 1.0,
                           grid=M.default_operator_grid(6.0, 0.4))
        # frozen reference values (scan radius 6, cube spacing 0.05, operator grid R=6 h=0.4)
        assert b.lower == pytest.approx(0.096635032092833, rel=1e-9)
        assert b.point_estimate == pytest.approx(1.1195836410640, rel=1e-8)
        assert b.upper == pytest.approx(27.724922122477, rel=1e-9)
        assert b.is_sound()
        assert len(b.csv_row()) == len(b.CSV_COLUMNS)

    def test_non_doubling_upper_infinite(self):
        b = M.norm_bracket(P, M.ProjectionProblem(W.gaussian(-1.0), W.gaussian(-4.0), 2), 1.0)
        assert math.isinf(b.upper)
        assert "doubling" in b.upper_reason
        assert b.point_estimate is None

    def test_p1_upper(self):
        b = M.norm_bracket(P, M.ProjectionProblem(W.constant(1.0), W.constant(1.0), 1), 1.0)
        assert math.isfinite(b.upper) and b.lower <= b.upper

    def test_sliding_window_agrees(self):
        w = W.power(2.0)
        phi = F.indicator_ball(1.0)
        ref = W.joint_characteristic(w, w, 2, 1.0, phi=phi, refine=False)
        val, center = M.sliding_window_characteristic(w, w, 2, 1.0, phi=phi)
        assert val == pytest.approx(ref.value, rel=1e-9)
        # symmetric ties: the centre need not match, its value must
        local = M.joint_characteristic_at(w, w, 2, 1.0, np.atleast_2d(center), phi=phi)
        assert local[0] == pytest.approx(ref.value, rel=1e-9)

    def test_is_sound_logic(self):
        assert M.NormBracket(1.0, 2.0, 3.0, "m").is_sound()
        assert not M.NormBracket(3.0, 2.0, 1.0, "m").is_sound()
        assert M.NormBracket(1.0, None, math.inf, "m").is_sound()
