import math

import numpy as np
import pytest

from srbresponse.errors import ResidueNonzero, UnsupportedInput
from srbresponse.observables import Perturbation, named_observable
from srbresponse.response import (
    CounterexampleTable,
    FDReport,
    ResponseScan,
    counterexample_one,
    counterexample_two,
    default_t_schedule,
    density_l1_distance,
    fd_experiment,
    fit_exponent,
    invariant_density,
    lambda_k_plateaus,
    reference_decomposition,
    response_scan,
    response_value,
)
from srbresponse.transfer import PiecewiseConstantDensity, UlamDensity, invariant_density_exact_tent
from srbresponse.unimodal import PerturbedMap, TentMap, lambda_k_family, tent_orbit

SQRT2 = math.sqrt(2.0)
U = 1.0 / (6.0 - 4.0 * SQRT2)
IDENTITY = Perturbation.identity()
BUMP6 = named_observable("bump6")


@pytest.fixture(scope="module")
def ce1():
    return counterexample_one(range(1, 17))


@pytest.fixture(scope="module")
def ce2():
    return counterexample_two(range(6, 21, 2))


class TestDensities:
    def test_dispatch(self, g2, g19):
        assert isinstance(invariant_density(g2, 256), PiecewiseConstantDensity)
        assert isinstance(invariant_density(g19, 256), UlamDensity)

    def test_reference_methods(self, g19):
        assert reference_decomposition(TentMap(2.0)).method == "exact"
        assert reference_decomposition(g19).depth == 64
        f = PerturbedMap(TentMap(1.8), Perturbation.polynomial([0, 1, -1]), 0.1)
        assert reference_decomposition(f).method == "hybrid"

    def test_l1_distance(self, g2, gsqrt2):
        a = invariant_density(g2)
        b = invariant_density(gsqrt2)
        assert density_l1_distance(a, a) == 0.0
        # rho_2 = 1 against the two plateaus of the slope-sqrt(2) density
        c1, c2, c3 = SQRT2 / 2, SQRT2 - 1, 2 - SQRT2
        exact = c2 + (1 - c1) + (c3 - c2) * abs(U - 1) + (c1 - c3) * abs(SQRT2 * U - 1)
        assert density_l1_distance(a, b) == pytest.approx(exact, abs=1e-4)


class TestResponse:
    def test_value_at_zero(self, g2):
        assert response_value(g2, IDENTITY, 0.0, BUMP6) == pytest.approx(1.0, abs=1e-12)

    def test_scan_onto_lambda_k(self, g2):
        ks = [6, 8, 10]
        t = [(lambda_k_family(k) - 2.0) / 2.0 for k in ks]
        phi = named_observable("bump_ce1")
        scan = response_scan(g2, IDENTITY, phi, t, bins=2 ** 12)
        for k, R in zip(ks, scan.R):
            v, _, _ = lambda_k_plateaus(lambda_k_family(k), k)
            assert R == pytest.approx(v[-1], rel=1e-10)
        assert np.all(np.isfinite(scan.modulus_ratio)) and np.all(scan.modulus_ratio < 10)

    def test_scan_parallel_rows_identical(self, g19):
        X = Perturbation.polynomial([0, 1, -1])
        a = response_scan(g19, X, BUMP6, [0.01, 0.02], bins=2 ** 10, jobs=1)
        b = response_scan(g19, X, BUMP6, [0.01, 0.02], bins=2 ** 10, jobs=2)
        assert a.to_csv() == b.to_csv()

    def test_scan_round_trip(self, g19):
        scan = response_scan(g19, Perturbation.polynomial([0, 1, -1]), BUMP6, [0.01], bins=2 ** 10)
        back = ResponseScan.from_dict(scan.to_dict())
        assert np.array_equal(back.R, scan.R) and back.R0 == scan.R0
        assert scan.to_csv().splitlines()[0] == "t,R,l1,modulus_ratio"

    def test_fit_exponent(self):
        t = 2.0 ** -np.arange(3, 10)
        assert fit_exponent(t, 3 * t ** 1.5) == pytest.approx(1.5)
        assert fit_exponent([0.1], [1.0]) is None


class TestCounterexampleOne:
    def test_gap_positive_and_monotone(self, ce1):
        for row in ce1.rows:
            assert row.gap > 0 and row.monotone
            assert row.recursion_residual <= 1e-10 and row.normalization_residual <= 1e-12

    def test_plateau_recursion_matches_generic_solver(self, ce1):
        for row in ce1.rows:
            assert row.extra["generic_solver_defect"] <= 1e-9
            assert row.extra["spacing_defect"] <= 1e-12

    def test_fitted_constant(self, ce1):
        fit = CounterexampleTable(ce1.kind, ce1.rows, 4)
        assert fit.fitted_constant > 0 and fit.spread <= 0.5

    def test_response_is_last_plateau(self, ce1):
        # the bump sits in the last cell (c_{k+2}, c_1) for k >= 2
        for row in ce1.rows[1:]:
            assert row.response == pytest.approx(row.plateaus[-1], rel=1e-12)

    def test_ulam_cross_check(self):
        table = counterexample_one(range(3, 6), bins=2 ** 15)
        for row in table.rows:
            assert row.extra["ulam_response"] == pytest.approx(row.response, abs=1e-3)

    def test_small_k_exact(self):
        lam = lambda_k_family(1)
        v, bp, _ = lambda_k_plateaus(lam, 1)
        assert lam == pytest.approx(SQRT2)
        assert v == pytest.approx([U, SQRT2 * U], abs=1e-12)

    def test_range_check(self):
        with pytest.raises(UnsupportedInput):
            counterexample_one(range(0, 3))

    def test_csv_and_round_trip(self, ce1):
        lines = ce1.to_csv().splitlines()
        assert lines[0] == "k,lambda_k,gap,bound,ratio" and len(lines) == 17
        back = CounterexampleTable.from_dict(ce1.to_dict())
        assert [r.gap for r in back.rows] == [r.gap for r in ce1.rows]


class TestCounterexampleTwo:
    def test_recursions(self, ce2):
        for row in ce2.rows:
            assert row.recursion_residual <= 1e-10
            assert row.normalization_residual <= 1e-12

    def test_shape(self, ce2):
        for row in ce2.rows:
            assert row.monotone and row.extra["jump_signs_ok"]
            assert row.extra["side_of_sqrt2"] == "above" and SQRT2 < row.parameter < 2
            assert row.extra["c_ell_minus_1"] < 0.42

    def test_gap_and_constant(self, ce2):
        assert all(r.gap > 0 for r in ce2.rows)
        assert ce2.fitted_constant > 0 and np.all(ce2.ratios > 0)

    def test_response_equals_u2(self, ce2):
        for row in ce2.rows:
            assert row.response == pytest.approx(row.extra["u2"], rel=1e-12)

    def test_convergence_toward_sqrt2(self, ce2):
        nus = [r.parameter for r in ce2.rows]
        u2 = [r.extra["u2"] for r in ce2.rows]
        assert np.all(np.diff(nus) < 0) and np.all(np.diff(u2) > 0)
        assert u2[-1] < U

    def test_range_check(self):
        with pytest.raises(UnsupportedInput):
            counterexample_two([7])

    def test_csv_header(self, ce2):
        assert ce2.to_csv().splitlines()[0] == "ell,nu_ell,gap,bound,ratio"


class TestFDExperiment:
    def test_vanishing_residue(self, g2):
        X = Perturbation.polynomial([0, 1, -1])
        rep = fd_experiment(g2, X, BUMP6, [2.0 ** -m for m in (6, 8, 10)], bins=2 ** 12, N=64)
        assert rep.residue_at_1 == 0.0 and rep.psi_partial_sum == 0.0
        # difference quotients shrink with t; their agreement with Psi is reported only
        assert abs(rep.difference_quotients[-1]) < abs(rep.difference_quotients[0])
        back = FDReport.from_dict(rep.to_dict())
        assert np.array_equal(back.difference_quotients, rep.difference_quotients)

    def test_refuses_pole(self, g2):
        with pytest.raises(ResidueNonzero):
            fd_experiment(g2, IDENTITY, BUMP6, [0.01], bins=256)

    def test_zero_perturbation(self, g2):
        rep = fd_experiment(g2, Perturbation.constant(0.0), BUMP6, [0.01, -0.01], bins=256, N=8)
        assert np.all(rep.difference_quotients == 0) and rep.agreement == 0.0

    def test_schedule(self):
        t = default_t_schedule(range(6, 9))
        assert t == [2.0 ** -6, 2.0 ** -7, 2.0 ** -8, -(2.0 ** -6), -(2.0 ** -7), -(2.0 ** -8)]
