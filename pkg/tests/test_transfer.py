import math

import numpy as np
import pytest

from srbresponse.bv import HybridBVFunction, uniform_grid
from srbresponse.errors import NoConvergence, NotMarkov, UnsupportedInput
from srbresponse.observables import PiecewisePolynomial, Perturbation
from srbresponse.transfer import (
    PiecewiseConstantDensity,
    UlamDensity,
    apply_L0,
    apply_L0_pointwise,
    apply_L1,
    apply_L1_pointwise,
    conjugacy_defect,
    invariant_density_exact_tent,
    invariant_density_hybrid,
    invariant_density_ulam,
    lasota_yorke_diagnostic,
    nu_functional,
    tent_density_jump_series,
    ulam_matrix,
    variation,
)
from srbresponse.unimodal import PerturbedMap, TentMap, critical_orbit, lambda_k_family

SQRT2 = math.sqrt(2.0)
U = 1.0 / (6.0 - 4.0 * SQRT2)
GRID = uniform_grid(0.0, 1.0, 2 ** 10)


def perturbed():
    return PerturbedMap(TentMap(1.8), Perturbation.polynomial([0, 1, -1]), 0.1)


class TestL1:
    def test_constant_is_fixed_for_g2(self, g2):
        one = HybridBVFunction.indicator(0.0, 1.0, GRID)
        out = apply_L1(g2, one)
        x = np.linspace(0.01, 0.99, 50)
        assert np.allclose(out(x), 1.0, atol=1e-14)

    def test_sqrt2_density_is_fixed(self, gsqrt2, gamma_sqrt2):
        F = gamma_sqrt2.to_hybrid(GRID)
        G = apply_L1(gsqrt2, F)
        assert (G - F).variation() <= 1e-12

    def test_integral_preserved(self, rng):
        for f in (TentMap(1.7), perturbed()):
            grid = uniform_grid(f.a0, f.b, 2 ** 11)
            loc = np.sort(rng.uniform(f.a0, f.b, 3))
            F = HybridBVFunction(loc, rng.normal(size=3), grid, np.cos(3 * grid), (f.a0, f.b))
            assert apply_L1(f, F).integral() == pytest.approx(F.integral(), abs=1e-6)

    def test_jump_transport(self, g19):
        F = HybridBVFunction.heaviside(0.3, GRID)
        G = apply_L1(g19, F)
        # jump at g(0.3) with amplitude 1/1.9; the drop at c_1 is the support boundary
        amp = {round(u, 12): a for u, a in G.jumps}
        assert list(amp) == [0.57] and amp[0.57] == pytest.approx(1 / 1.9)

    def test_rejects_outside_support(self, g2):
        F = HybridBVFunction.heaviside(1.5, uniform_grid(0, 2, 16))
        with pytest.raises(UnsupportedInput):
            apply_L1(g2, F)

    def test_duality(self, rng):
        f = TentMap(1.83)
        grid = uniform_grid(0, 1, 2 ** 12)
        psi = PiecewisePolynomial.polynomial(rng.normal(size=4))
        F = HybridBVFunction.from_function(lambda x: np.exp(x), grid, jumps=[(0.2, 0.7), (0.8, -0.4)])
        lhs = apply_L1(f, F).integrate_against(psi)
        x = np.linspace(0, 1, 200_001)
        mid = 0.5 * (x[1:] + x[:-1])
        rhs = np.sum(F(mid) * psi(f(mid))) * (x[1] - x[0])
        assert lhs == pytest.approx(rhs, abs=1e-6)


class TestL0:
    def test_R0_fixed_for_g2(self, g2):
        R0 = lambda x: -1.0 + x
        x = np.linspace(0, 0.999, 101)
        assert np.allclose(apply_L0_pointwise(g2, R0, x), R0(x), atol=1e-15)

    def test_heaviside_moves_along_orbit(self):
        g = TentMap(lambda_k_family(3))
        info = critical_orbit(g)
        for j in range(1, info.N):
            out = apply_L0(g, HybridBVFunction.heaviside(info.point(j), GRID))
            assert out.jumps == [(pytest.approx(info.point(j + 1)), pytest.approx(1.0))]
            assert np.max(np.abs(out.values)) <= 1e-14

    def test_no_jump_created_for_continuous_input(self, g19):
        F = HybridBVFunction.from_function(lambda x: np.sin(3 * x), GRID)
        assert apply_L0(g19, F).locations.size == 0

    def test_conjugacy_exact_for_g2(self, g2):
        phi = PiecewisePolynomial.polynomial([0, 0, 1])
        assert conjugacy_defect(g2, phi, 2 ** 10)[0] <= 1e-14

    @pytest.mark.parametrize("f", [TentMap(1.7), perturbed()], ids=["tent1.7", "perturbed"])
    def test_conjugacy_first_order(self, f, rng):
        phi = PiecewisePolynomial.polynomial(rng.normal(size=5))
        d1, h1 = conjugacy_defect(f, phi, 2 ** 10)
        d2, h2 = conjugacy_defect(f, phi, 2 ** 12)
        assert d2 < d1 and d1 / h1 == pytest.approx(d2 / h2, rel=0.05)

    def test_nu_fixed(self, rng):
        for f in (TentMap(1.6), perturbed()):
            for _ in range(5):
                c = rng.normal(size=4)
                phi = lambda x, c=c: np.polynomial.polynomial.polyval(x, c) * (x - f.a0)
                L0phi = lambda x: apply_L0_pointwise(f, phi, x)
                assert nu_functional(f, L0phi) == pytest.approx(nu_functional(f, phi), abs=1e-12)

    def test_pointwise_l1_matches_hybrid(self, g19):
        F = HybridBVFunction.from_function(lambda x: 1 + x * x, GRID)
        x = np.linspace(0.013, 0.93, 37)
        assert np.allclose(apply_L1(g19, F)(x), apply_L1_pointwise(g19, F, x), atol=1e-13)


class TestUlam:
    def test_flat_g2(self, g2):
        rho = invariant_density_ulam(g2, 2 ** 14)
        assert np.max(np.abs(rho.values[1:-1] - 1)) <= 1e-3
        assert rho.integral() == pytest.approx(1.0, abs=1e-14)

    def test_sqrt2_plateaus(self, gsqrt2):
        rho = invariant_density_ulam(gsqrt2, 2 ** 14)
        c1, c2, c3 = SQRT2 / 2, SQRT2 - 1, 2 - SQRT2
        x = rho.centers
        h = rho.width
        left = (x > c2 + 4 * h) & (x < c3 - 4 * h)
        right = (x > c3 + 4 * h) & (x < c1 - 4 * h)
        assert np.max(np.abs(rho.values[left] - U)) <= 5e-3
        assert np.max(np.abs(rho.values[right] - SQRT2 * U)) <= 5e-3
        assert rho.ratio is not None and rho.ratio < 1

    def test_generic_map(self):
        rho = invariant_density_ulam(perturbed(), 2 ** 12)
        assert np.all(rho.values >= 0) and rho.integral() == pytest.approx(1.0)
        assert rho.residual <= 1e-10

    def test_quadrature_method_close(self):
        f = perturbed()
        a = invariant_density_ulam(f, 2 ** 10)
        b = invariant_density_ulam(f, 2 ** 10, method="quadrature")
        assert a.l1_distance(b) <= 0.05

    def test_row_stochastic(self, g19):
        P, edges = ulam_matrix(g19, 256)
        assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)

    def test_no_convergence(self, g19):
        with pytest.raises(NoConvergence):
            invariant_density_ulam(g19, 256, max_iters=2)

    def test_dict_round_trip(self, g2):
        rho = invariant_density_ulam(g2, 128)
        back = UlamDensity.from_dict(rho.to_dict())
        assert np.array_equal(back.values, rho.values) and back.iterations == rho.iterations


class TestExactTent:
    def test_g2(self, g2):
        d = invariant_density_exact_tent(g2)
        assert d.plateaus.tolist() == [pytest.approx(1.0, abs=1e-15)]
        assert d.support == (0.0, 1.0)

    def test_sqrt2(self, gamma_sqrt2):
        assert gamma_sqrt2.plateaus == pytest.approx([U, SQRT2 * U], abs=1e-12)
        assert gamma_sqrt2.integral() == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("k", [2, 4, 7])
    def test_lambda_k(self, k):
        lam = lambda_k_family(k)
        v = invariant_density_exact_tent(TentMap(lam)).plateaus
        assert v.size == k + 1
        assert np.all(np.diff(v) > 0)
        assert v[k] == pytest.approx(lam * v[0], rel=1e-12)
        assert 2 * v[k - 1] == pytest.approx(lam * v[k], rel=1e-12)

    def test_not_markov(self, g19):
        with pytest.raises(NotMarkov):
            invariant_density_exact_tent(g19)

    def test_matches_ulam(self, gsqrt2, gamma_sqrt2):
        rho = invariant_density_ulam(gsqrt2, 2 ** 14)
        bp = gamma_sqrt2.breakpoints
        for lo, hi, v in zip(bp[:-1], bp[1:], gamma_sqrt2.plateaus):
            inside = (rho.centers > lo + 4 * rho.width) & (rho.centers < hi - 4 * rho.width)
            assert rho.values[inside].mean() == pytest.approx(v, abs=5e-3)

    def test_jump_series_matches_plateaus(self, gsqrt2, gamma_sqrt2):
        loc, amp = tent_density_jump_series(gsqrt2)
        F = HybridBVFunction(loc, amp, GRID, np.zeros_like(GRID), (0, 1))
        x = np.linspace(0.01, 0.99, 99)
        assert np.allclose(F(x), gamma_sqrt2(x), atol=1e-12)

    def test_dict_round_trip(self, gamma_sqrt2):
        back = PiecewiseConstantDensity.from_dict(gamma_sqrt2.to_dict())
        assert np.array_equal(back.plateaus, gamma_sqrt2.plateaus)


class TestHybridDensity:
    def test_matches_ulam(self):
        f = perturbed()
        F, iters, diff = invariant_density_hybrid(f, 2 ** 11)
        rho = invariant_density_ulam(f, 2 ** 14)
        assert F.integral() == pytest.approx(1.0, abs=1e-10)
        x = rho.centers
        assert np.mean(np.abs(F(x) - rho.values)) <= 5e-3
        assert diff <= 1e-10


class TestVariation:
    def test_examples(self, gamma_sqrt2):
        assert variation(HybridBVFunction.indicator(0, 1, GRID)) == 2.0
        assert variation(HybridBVFunction.heaviside(0.3, GRID)) == 1.0
        assert variation(gamma_sqrt2.to_hybrid(GRID)) == pytest.approx(2 * SQRT2 * U, abs=1e-12)
        assert 2 * SQRT2 * U == pytest.approx(8.2426, abs=1e-4)


class TestLasotaYorke:
    def test_bounded_constant(self, rng):
        f = TentMap(1.9)
        grid = uniform_grid(0, 1, 2 ** 12)
        inputs = [HybridBVFunction(np.sort(rng.uniform(0, 1, 4)), rng.normal(size=4), grid,
                                   0.5 * np.sin(rng.normal() * 5 * grid), (0, 1)) for _ in range(10)]
        rep = lasota_yorke_diagnostic(f, inputs)
        assert rep.contraction == pytest.approx(1 / 1.9)
        assert np.isfinite(rep.D_prime)
        # the fitted constants saturate instead of growing with m
        assert rep.constants[-1] <= 1.05 * rep.constants[-2]


class TestCSV:
    def test_round_trip(self):
        F = HybridBVFunction.from_function(np.sin, GRID, jumps=[(0.25, 1.5), (0.5, -0.125)])
        back = HybridBVFunction.from_csv(F.to_csv(header=["demo"]))
        assert np.array_equal(back.values, F.values) and back.jumps == F.jumps
