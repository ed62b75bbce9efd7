import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focklab.numerics import (
    CapacityError,
    EvaluationError,
    GridSpec,
    NODE_CAP_ENV,
    as_points,
    build_grid,
    build_polar_grid,
    compensated_sum,
    convergence_check,
    cube_offsets,
    integrate,
    sq_norm,
    to_complex,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestPoints:
    def test_complex_scalar_interleaves(self):
        np.testing.assert_array_equal(as_points(1 + 2j), [1.0, 2.0])

    def test_complex_batch_for_n1(self):
        pts = as_points(np.array([0j, 4 + 0j]), 1)
        assert pts.shape == (2, 2)
        np.testing.assert_array_equal(pts[1], [4.0, 0.0])

    def test_vector_in_c2(self):
        np.testing.assert_array_equal(as_points([1 + 1j, 2 - 3j], 2), [1, 1, 2, -3])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            as_points([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            as_points([1.0, 2.0], n=2)

    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=6))
    def test_round_trip(self, pairs):
        z = np.array([complex(a, b) for a, b in pairs])
        np.testing.assert_array_equal(to_complex(as_points(z, len(z))), z)


class TestGridSpec:
    def test_node_count(self):
        assert GridSpec(1, 8.0, 0.05).node_count == 320 ** 2

    def test_rejects_bad_values(self):
        for kw in ({"n": 0}, {"R": -1.0}, {"h": 0.0}, {"R": 1.0, "h": 2.0}):
            with pytest.raises(ValueError):
                GridSpec(**kw)

    def test_spacing_shrinks_to_tile(self):
        g = build_grid(GridSpec(1, 1.0, 0.3))
        assert g.spacing == pytest.approx(0.25)
        assert g.axis[0] == pytest.approx(-0.875)

    def test_node_cap(self, monkeypatch):
        monkeypatch.setenv(NODE_CAP_ENV, "100")
        with pytest.raises(CapacityError) as err:
            build_grid(GridSpec(1, 1.0, 0.1))
        assert err.value.count == 400


class TestIntegrate:
    def test_gaussian_mass(self, fine_grid):
        val = integrate(fine_grid, lambda x: np.exp(-sq_norm(x)))
        assert val == pytest.approx(math.pi, rel=1e-12)

    def test_polynomial_moment(self):
        g = build_grid(GridSpec(1, 1.0, 0.01))
        # midpoint rule on [-1,1]^2: int x^2 = 4/3 - error h^2/12 * area
        val = integrate(g, lambda x: x[:, 0] ** 2)
        assert val == pytest.approx(4 / 3 - 0.01 ** 2 / 12 * 4, rel=1e-12)

    def test_nonfinite_reports_node(self):
        g = build_grid(GridSpec(1, 1.0, 0.5))
        with pytest.raises(EvaluationError) as err, np.errstate(divide="ignore"):
            integrate(g, lambda x: 1.0 / (x[:, 0] - 0.25))
        assert err.value.node[0] == pytest.approx(0.25)

    def test_convergence_check(self):
        rep = convergence_check(GridSpec(1, 6.0, 0.2), lambda x: np.exp(-sq_norm(x)))
        assert rep.relative_gap < 1e-12

    @settings(max_examples=30)
    @given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=2, max_size=40), st.randoms())
    def test_compensated_sum_order_free(self, xs, rnd):
        ys = list(xs)
        rnd.shuffle(ys)
        assert compensated_sum(np.array(xs)) == compensated_sum(np.array(ys))

    def test_compensated_sum_cancellation(self):
        assert compensated_sum(np.array([1e16, 1.0, -1e16])) == 1.0


class TestCubesAndPolar:
    def test_cube_offsets(self):
        off, vol = cube_offsets(1.0, 0.3, 1)
        assert off.shape == (16, 2)
        assert vol == pytest.approx(1 / 16)
        np.testing.assert_allclose(off.mean(axis=0), 0, atol=1e-15)

    def test_polar_area(self):
        g = build_polar_grid(2.0, breakpoints=(1.0,))
        assert g.weights.sum() == pytest.approx(4 * math.pi, rel=1e-13)

    def test_polar_jump_exact(self):
        g = build_polar_grid(3.0, breakpoints=(1.0,))
        val = np.sum(g.weights * (np.abs(g.nodes) < 1) * np.exp(-np.abs(g.nodes) ** 2)) / math.pi
        assert val == pytest.approx(1 - math.exp(-1), rel=1e-13)

    def test_graded_panels(self):
        g = build_polar_grid(0.999, graded=True)
        # (1 - r^2)^{-1/2} steepens toward the edge
        f = 1 / (1 - np.abs(g.nodes) ** 2) ** 0.5
        exact = 2 * math.pi * (1 - math.sqrt(1 - 0.999 ** 2))
        assert np.sum(g.weights * f) == pytest.approx(exact, rel=1e-8)
