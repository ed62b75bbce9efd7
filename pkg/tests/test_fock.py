import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focklab import fock as F
from focklab import weights as W
from focklab.numerics import TruncationWarning

coord = st.floats(-3.0, 3.0, allow_nan=False)


class TestParamsAndSymbols:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            F.FockParams(alpha=0.0)
        with pytest.raises(ValueError):
            F.FockParams(n=0)
        assert F.FockParams(2.0, 1).density_constant == pytest.approx(2 / math.pi)

    def test_symbol_json(self):
        for s in (F.constant_symbol(2.0), F.indicator_ball(1.5), F.plane_wave([1.0, 0.0])):
            back = F.symbol_from_json(s.to_json())
            pts = np.array([[0.5, 0.2], [2.0, 0.0]])
            np.testing.assert_allclose(back(pts), s(pts))
        with pytest.raises(ValueError):
            F.symbol_from_json({"symbol": "nope"})

    def test_product_symbol_breakpoints(self):
        s = F.symbol_product(F.indicator_ball(1.0), F.indicator_ball(2.0))
        assert s.breakpoints == (1.0, 2.0)
        assert s.radial


class TestKernels:
    def test_kernel_value(self, params):
        assert F.kernel_eval(params, 1 + 1j, 2.0) == pytest.approx(np.exp(2 - 2j))
        assert abs(F.kernel_eval(params, 2.0, 2.0, normalized=True)) == pytest.approx(math.exp(2))

    def test_overflow_guard(self, params):
        with pytest.raises(OverflowError):
            F.kernel_eval(params, 30.0, 30.0)

    @settings(max_examples=25)
    @given(coord, coord, coord, coord)
    def test_hermitian_symmetry(self, a, b, c, d):
        p = F.FockParams()
        z, u = complex(a, b), complex(c, d)
        assert F.kernel_eval(p, z, u) == pytest.approx(np.conj(F.kernel_eval(p, u, z)), rel=1e-12)

    def test_normalized_pairing(self, params, fine_grid):
        z, u = 1.0 + 0.5j, -0.5 + 1.0j
        kz = F.sample_kernel(params, fine_grid, z, normalized=True)
        ku = F.sample_kernel(params, fine_grid, u, normalized=True)
        assert abs(F.pairing(params, kz, ku)) == pytest.approx(math.exp(-abs(z - u) ** 2 / 2), rel=1e-10)
        # lp_norm integrates against Lebesgue measure, so ||k_z||^2 = pi
        assert F.lp_norm(params, kz, 2) ** 2 == pytest.approx(math.pi, rel=1e-10)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_kernel_norm_closed_form(self, params, fine_grid, p):
        # w = 1: ||K_z||_p = e^{|z|^2/2} (2 pi / p)^{1/p}
        kn = F.kernel_norm(params, 1 + 1j, p, W.constant(1.0), fine_grid)
        assert kn.log_value == pytest.approx(1 + math.log(2 * math.pi / p) / p, rel=1e-12)

    def test_kernel_norm_field_matches_pointwise(self, params, coarse_grid):
        w = W.power(2.0)
        field = F.kernel_norm_field(params, 2, w, coarse_grid)
        i = int(np.argmin(np.sum((coarse_grid.nodes - [0.5, 0.3]) ** 2, axis=1)))
        kn = F.kernel_norm(params, coarse_grid.nodes[i], 2, w, coarse_grid)
        direct = kn.value * math.exp(-np.sum(coarse_grid.nodes[i] ** 2) / 2)
        assert field[i] == pytest.approx(direct, rel=1e-8)

    def test_truncation_warning(self, params, coarse_grid):
        with pytest.warns(TruncationWarning):
            F.kernel_norm(params, 7.0, 2, W.constant(1.0), coarse_grid)


class TestOperators:
    def test_projection_reproduces_kernels(self, params, fine_grid):
        f = F.sample_kernel(params, fine_grid, 1.0) * 2.0 + F.sample_kernel(params, fine_grid, -1j) * (1 - 1j)
        z = np.array([0.0, 1.5 + 0.5j, -2.0 + 2.0j])
        exact = 2 * np.exp(z * 1.0) + (1 - 1j) * np.exp(z * 1j)
        np.testing.assert_allclose(F.projection_apply(params, f, z), exact, rtol=1e-9)

    def test_projection_kills_antiholomorphic(self, params, fine_grid):
        f = F.GridFunction.sample(fine_grid, lambda x: x[:, 0] - 1j * x[:, 1])
        assert abs(F.projection_apply(params, f, 0.5)) < 1e-10

    def test_toeplitz_with_constant_symbol(self, params, fine_grid):
        f = F.sample_kernel(params, fine_grid, 0.5j)
        a = F.toeplitz_apply(params, F.constant_symbol(3.0), f, 1.0)
        assert a == pytest.approx(3 * np.exp(-0.5j), rel=1e-9)

    def test_berezin_closed_forms(self, params, fine_grid):
        assert F.berezin_symbol(params, F.constant_symbol(1.0), 2.0, fine_grid) == pytest.approx(1.0, abs=1e-12)
        assert F.berezin_symbol(params, F.indicator_ball(1.0), 0.0, fine_grid) == pytest.approx(
            1 - math.exp(-1), abs=1e-13)
        # plane wave: e^{i k.z} e^{-|k|^2/4}
        val = F.berezin_symbol(params, F.plane_wave([1.0, 0.0]), 1 + 1j, fine_grid)
        assert val == pytest.approx(np.exp(1j) * math.exp(-0.25), rel=1e-10)

    def test_grid_mismatch(self, params, fine_grid, coarse_grid):
        with pytest.raises(F.GridMismatchError):
            F.sample_kernel(params, fine_grid, 0) + F.sample_kernel(params, coarse_grid, 0)


class TestTestFunctions:
    def test_projection_variant_norm_bound(self, params, fine_grid):
        sigma = W.power(2.0)
        tf = F.test_function_build(params, "projection", 2, sigma, 1.0, 1.0, fine_grid)
        assert F.lp_norm(params, tf.function, 2, sigma) <= tf.norm_bound * (1 + 1e-12)

    def test_symbol_variant_needs_symbol(self, params, coarse_grid):
        with pytest.raises(ValueError):
            F.test_function_build(params, "symbol", 2, W.constant(1.0), 0.0, 1.0, coarse_grid)

    def test_degenerate_support(self, params, coarse_grid):
        phi = F.indicator_ball(0.1, center=[5.0, 5.0])
        with pytest.raises(F.DegenerateTestError):
            F.test_function_build(params, "symbol", 2, W.constant(1.0), 0.0, 1.0, coarse_grid, phi=phi)

    def test_localized_operator_is_rank_one(self, params, coarse_grid):
        f = F.sample_kernel(params, coarse_grid, 0.3)
        g = F.localized_operator_apply(params, "projection", 0.0, 1.0, f)
        ku = F.sample_kernel(params, coarse_grid, 0.0, normalized=True).values
        mask = F.cube_mask(coarse_grid, 0.0, 1.0)
        assert np.all(g.values[~mask] == 0)
        ratio = g.values[mask] / ku[mask]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
