import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srbresponse.bv import HybridBVFunction, heaviside_sum, merge_jumps, uniform_grid
from srbresponse.errors import UnsupportedInput
from srbresponse.observables import PiecewisePolynomial

GRID = uniform_grid(0.0, 1.0, 256)
locs = st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6, unique=True)


class TestHeaviside:
    def test_convention(self):
        F = HybridBVFunction.heaviside(0.5, GRID)
        assert F(0.25) == -1.0 and F(0.75) == 0.0
        # midpoint representative at the jump
        assert F(0.5) == -0.5
        assert F.left_limit(0.5) == -1.0 and F.right_limit(0.5) == 0.0

    def test_indicator(self):
        F = HybridBVFunction.indicator(0.25, 0.5, GRID, value=2.0)
        assert F([0.1, 0.3, 0.7]).tolist() == [0.0, 2.0, 0.0]
        assert F.integral() == pytest.approx(0.5)

    def test_merge(self):
        loc, amp = merge_jumps([0.5, 0.2, 0.5 + 1e-14, 0.7], [1.0, 2.0, 0.5, 1e-15])
        assert loc.tolist() == [0.2, 0.5] and amp.tolist() == [2.0, 1.5]

    @given(locs)
    def test_sides(self, points):
        loc = np.sort(points)
        amp = np.arange(1, loc.size + 1, dtype=float)
        left = heaviside_sum(loc, amp, loc, side=-1)
        right = heaviside_sum(loc, amp, loc, side=1)
        assert np.allclose(right - left, amp)


class TestArithmetic:
    @given(locs, st.floats(-3, 3))
    @settings(max_examples=30)
    def test_linear(self, points, k):
        F = HybridBVFunction.from_function(np.sin, GRID, jumps=[(u, 1.0) for u in points])
        G = F * k - F
        x = np.linspace(0.003, 0.997, 101)
        assert np.allclose(G(x), (k - 1) * F(x), atol=1e-12)

    def test_grid_union(self):
        F = HybridBVFunction.from_function(lambda x: x, uniform_grid(0, 1, 4))
        G = HybridBVFunction.from_function(lambda x: x, uniform_grid(0, 1, 6))
        assert (F + G).grid.size == 9

    def test_multiply_keeps_jump_location(self):
        F = HybridBVFunction.heaviside(0.5, GRID)
        G = F.multiply(lambda x: 1 + x)
        assert G.jumps == [(0.5, 1.5)]
        x = np.array([0.2, 0.8])
        assert np.allclose(G(x), (1 + x) * F(x), atol=1e-12)

    def test_bad_grid(self):
        with pytest.raises(UnsupportedInput):
            HybridBVFunction(np.empty(0), np.empty(0), np.array([0.0, 0.0]), np.zeros(2), (0, 1))


class TestFunctionals:
    def test_variation(self):
        F = HybridBVFunction.from_function(lambda x: x, GRID, jumps=[(0.3, -2.0)])
        assert F.variation() == pytest.approx(3.0)

    def test_integrals_against_polynomials(self):
        F = HybridBVFunction.from_function(lambda x: x * x, GRID, jumps=[(0.4, 1.0)])
        phi = PiecewisePolynomial.polynomial([1.0, 2.0])
        # int x^2 (1 + 2x) - int_0^0.4 (1 + 2x)
        exact = (1 / 3 + 1 / 2) - (0.4 + 0.16)
        # the regular part is linear between grid points: O(h^2) error
        assert F.integrate_against(phi) == pytest.approx(exact, abs=2e-5)
        # int F phi' = 2 int F
        assert F.integrate_against_derivative(phi) == pytest.approx(2 * F.integral(), abs=1e-12)

    def test_l1_norm(self):
        F = HybridBVFunction.indicator(0.2, 0.6, GRID, value=-3.0)
        assert F.l1_norm() == pytest.approx(1.2, abs=1e-3)


class TestCSV:
    @given(locs)
    @settings(max_examples=20)
    def test_round_trip(self, points):
        F = HybridBVFunction.from_function(np.cos, GRID, jumps=[(u, u - 0.5) for u in points])
        back = HybridBVFunction.from_csv(F.to_csv(header=["a=1"]))
        assert np.array_equal(back.grid, F.grid) and np.array_equal(back.values, F.values)
        assert back.jumps == F.jumps and back.domain == F.domain
