import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from focklab import weights as W
from focklab.numerics import GridSpec, build_grid

SMALL_SCAN = W.ScanSpec(radius=3.0)


class TestFamilies:
    def test_values(self):
        z = np.array([3.0, 4.0])
        assert W.constant(2.0)(z) == 2.0
        assert W.gaussian(-1.0)(z) == pytest.approx(math.exp(-25))
        assert W.power(2.0)(z) == pytest.approx(36.0)
        assert W.radial_step(1.0, 2.0, 5.0)(np.zeros(2)) == 2.0
        assert W.anisotropic_power([1.0, 2.0])(z) == pytest.approx(4 * 25)

    def test_product_and_scaled(self):
        w = W.scaled(W.power(1.0), 3.0)
        assert w(np.array([1.0, 0.0])) == pytest.approx(6.0)

    def test_json_round_trip(self):
        for w in (W.constant(1.5), W.gaussian(-4.0), W.power(2.0), W.radial_step(1.0, 1.0, 2.0),
                  W.anisotropic_power([0.5, 1.0]), W.product([W.power(1.0), W.gaussian(-1.0)])):
            back = W.weight_from_json(w.to_json())
            pts = np.array([[0.3, -1.2], [2.0, 0.5]])
            np.testing.assert_allclose(back(pts), w(pts), rtol=1e-15)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            W.weight_from_json({"family": "nope"})

    def test_tabulated_reads_cells(self):
        g = build_grid(GridSpec(1, 1.0, 0.5))
        vals = np.arange(g.size, dtype=float) + 1
        w = W.tabulated(g, vals)
        np.testing.assert_array_equal(w(g.nodes), vals)
        assert w(np.array([5.0, 0.0])) == 0.0

    def test_dual_weight(self):
        d = W.dual_weight(W.power(2.0), 3)
        # p'/p = 1/2 for p = 3
        assert d(np.array([1.0, 0.0])) == pytest.approx(0.5)
        with pytest.raises(W.DivisionDomainError):
            W.dual_weight(W.radial_step(1.0, 0.0, 1.0), 2)
        with pytest.raises(W.UnsupportedExponentError):
            W.dual_weight(W.power(2.0), 1)


class TestCubes:
    def test_hat_of_power_weight(self):
        # int_{[-1/2,1/2]^2} (1 + |x|)^2 dx
        exact, _ = sp_integrate.dblquad(lambda y, x: (1 + math.hypot(x, y)) ** 2, -0.5, 0.5, -0.5, 0.5,
                                        epsabs=1e-12)
        assert W.hat_weight(W.power(2.0), 0.01)(np.zeros(2)) == pytest.approx(exact, rel=1e-4)
        assert exact == pytest.approx(1.93186, abs=1e-5)

    def test_cube_mass_and_truncation(self, coarse_grid):
        Q = W.CubeSpec(np.array([1.0, 1.0]), 2.0)
        assert W.cube_mass(W.constant(1.0), Q, coarse_grid) == pytest.approx(4.0)
        with pytest.raises(W.TruncationError) as err:
            W.cube_mass(W.constant(1.0), W.CubeSpec(np.array([7.5, 0.0]), 2.0), coarse_grid)
        assert err.value.required_R == pytest.approx(8.5)

    def test_cube_sums_max(self):
        vals = W.cube_sums(lambda x: x[..., 0], np.zeros((1, 2)), 1.0, 0.25, reduce="max")
        assert vals[0] == pytest.approx(0.375)


class TestCharacteristics:
    def test_constant_weight_is_one(self):
        rep = W.a_p_characteristic(W.constant(3.0), 2, 1.0, scan=SMALL_SCAN)
        assert rep.value == pytest.approx(1.0, abs=1e-12)
        assert rep.refinement_gap < 1e-12

    def test_doubling_constant_of_constant(self):
        assert W.doubling_constant(W.constant(1.0), 1.0, SMALL_SCAN).value == pytest.approx(4.0, abs=1e-12)

    def test_power_weight_characteristic(self):
        # frozen at scan radius 6, step r/4, cube spacing 0.05
        rep = W.a_p_characteristic(W.power(2.0), 2, 1.0)
        assert rep.value == pytest.approx(1.1228070751342, rel=1e-9)
        assert rep.finite

    def test_gaussian_pair_finite(self):
        rep = W.joint_characteristic(W.gaussian(-4.0), W.gaussian(-1.0), 2, 1.0)
        assert rep.finite
        assert rep.value == pytest.approx(0.66284612915357, rel=1e-9)
        assert rep.refinement_gap < 0.05

    def test_p1_uses_node_max(self):
        rep = W.joint_characteristic(W.constant(2.0), W.constant(1.0), 1, 1.0, scan=SMALL_SCAN)
        assert rep.value == pytest.approx(2.0)

    def test_symbol_zero_gives_zero(self):
        rep = W.joint_characteristic(W.power(2.0), W.power(2.0), 2, 1.0, phi=lambda x: np.zeros(x.shape[:-1]),
                                     scan=SMALL_SCAN)
        assert rep.value == 0.0

    def test_csv_row(self):
        rep = W.a_p_characteristic(W.constant(1.0), 2, 1.0, scan=SMALL_SCAN)
        assert len(rep.csv_row()) == len(rep.CSV_COLUMNS)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-1.5, 3.0), st.sampled_from([1.5, 2.0, 3.0]), st.floats(0.1, 10.0))
    def test_holder_lower_bound_and_scaling(self, beta, p, c):
        w = W.power(beta)
        scan = W.ScanSpec(radius=2.0)
        a = W.a_p_characteristic(w, p, 1.0, scan=scan, h=0.1, refine=False).value
        b = W.a_p_characteristic(W.scaled(w, c), p, 1.0, scan=scan, h=0.1, refine=False).value
        assert a >= 1 - 1e-12
        assert b == pytest.approx(a, rel=1e-10)


class TestDoubling:
    def test_gaussian_not_doubling(self):
        v = W.doubling_verdict(W.gaussian(-1.0), 1.0)
        assert not v.doubling
        assert "doubling-suspect" in v.reason

    def test_power_is_doubling(self):
        v = W.doubling_verdict(W.power(2.0), 1.0)
        assert v.doubling

    def test_zero_mass_non_doubling(self):
        rep = W.doubling_constant(W.radial_step(5.0, 0.0, 1.0), 1.0, SMALL_SCAN, refine=False)
        assert math.isinf(rep.value)

    def test_lattice_constant(self):
        assert W.lattice_doubling_constant(W.constant(1.0), 1.0, 4.0)[0] == 1.0
        C, (a, b) = W.lattice_doubling_constant(W.power(2.0), 1.0, 6.0)
        assert C == pytest.approx(2.2433807956109, rel=1e-9)
        assert np.linalg.norm(a) != np.linalg.norm(b)
