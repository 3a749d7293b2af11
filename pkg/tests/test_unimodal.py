import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from srbresponse.errors import CodeNotRealizable, DomainEscape, NearCriticalOrbit, UnsupportedInput
from srbresponse.observables import Perturbation
from srbresponse.unimodal import (
    CriticalOrbitInfo,
    PerturbedMap,
    TentMap,
    critical_orbit,
    eval_perturbed,
    format_code,
    kneading_code,
    lambda_k_closure,
    lambda_k_family,
    nu_ell_code,
    parse_code,
    perturbed_map,
    solve_code_parameter,
    tent_itinerary,
)

SQRT2 = math.sqrt(2.0)


def direct_code(slope, n):
    x, out = 0.5, []
    for _ in range(n):
        x = slope * x if x <= 0.5 else slope * (1 - x)
        out.append("R" if x > 0.5 else "L")
    return "".join(out)


class TestTentMap:
    def test_branches(self):
        g = TentMap(1.7)
        assert g(0.25) == pytest.approx(0.425)
        assert g(0.75) == pytest.approx(1.7 * 0.25)
        assert g.c == 0.5 and g.a == 0.0 and g.b == 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1.0001, 1.9999))
    def test_fixed_point_identities(self, lam):
        g = TentMap(lam)
        assert abs(g.fixed_point - lam / (1 + lam)) <= 1e-14
        assert abs(g(g.fixed_point) - g.fixed_point) <= 1e-14
        assert g.fixed_point_preimage == pytest.approx(1 / (1 + lam), abs=1e-15)
        assert g.second_preimage == pytest.approx(1 / (lam * (1 + lam)), abs=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1.01, 2.0))
    def test_inverse_branches(self, lam):
        g = TentMap(lam)
        xp = np.linspace(0, 0.5, 101)
        xm = np.linspace(0.5, 1, 101)
        assert np.max(np.abs(g.psi_plus(g(xp)) - xp)) <= 1e-12
        assert np.max(np.abs(g.psi_minus(g(xm)) - xm)) <= 1e-12

    def test_a0_b0(self):
        g = TentMap(1.5)
        assert g.a0 == 0.0 and g.b0 == 1.0

    @pytest.mark.parametrize("slope", [1.0, 0.5, 2.5])
    def test_rejects_bad_slope(self, slope):
        with pytest.raises(UnsupportedInput):
            TentMap(slope)


class TestPerturbation:
    def test_eval_examples(self, g2):
        X = Perturbation.identity()
        assert eval_perturbed(g2, X, 0.0, 0.25) == 0.5
        assert eval_perturbed(g2, X, -0.25, 0.5) == pytest.approx(0.75)
        assert eval_perturbed(g2, Perturbation.polynomial([0, 1, -1]), 0.1, 0.5) == pytest.approx(1.0)

    def test_domain_escape(self, g2):
        with pytest.raises(DomainEscape):
            eval_perturbed(g2, Perturbation.identity(), 0.1, 0.3)

    def test_identity_perturbation_is_tent(self, g2):
        f = perturbed_map(g2, Perturbation.identity(), -0.25)
        assert isinstance(f, TentMap) and f.slope == pytest.approx(1.5)

    def test_generic_perturbed_map(self):
        f = PerturbedMap(TentMap(1.8), Perturbation.polynomial([0, 1, -1]), 0.1)
        x = np.linspace(0, 1, 257)
        assert np.allclose(f(x), 1.8 * np.minimum(x, 1 - x) * (1 + 0.1 * (1 - 1.8 * np.minimum(x, 1 - x))))
        xp = x[x <= 0.5]
        xm = x[x >= 0.5]
        assert np.max(np.abs(f.psi_plus(f(xp)) - xp)) <= 1e-9
        assert np.max(np.abs(f.psi_minus(f(xm)) - xm)) <= 1e-9
        assert f.min_expansion() > 1

    def test_sup_normalisation(self):
        with pytest.raises(UnsupportedInput):
            Perturbation.polynomial([0, 2])


class TestCriticalOrbit:
    def test_g2(self, g2):
        info = critical_orbit(g2)
        assert info.orbit[:3] == (1.0, 0.0, 0.0)
        assert info.preperiodic == (2, 1) and info.N == 2

    def test_sqrt2(self, gsqrt2):
        info = critical_orbit(gsqrt2)
        assert np.allclose(info.orbit[:4], [SQRT2 / 2, SQRT2 - 1, 2 - SQRT2, 2 - SQRT2], atol=1e-14)
        assert info.preperiodic == (3, 1)

    @pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
    def test_lambda_k(self, k):
        info = critical_orbit(TentMap(lambda_k_family(k)))
        assert info.preperiodic == (k + 2, 1)

    def test_period_two(self):
        info = critical_orbit(TentMap(solve_code_parameter("RLL(RL)*")))
        assert info.preperiodic == (3, 2)
        assert info.point(7) == info.point(5)

    def test_non_preperiodic(self, g19):
        info = critical_orbit(g19, n_max=64)
        assert info.preperiodic is None and len(info.orbit) == 64
        assert info.N == 64

    def test_near_critical(self):
        # c_3 = 1/2 when s^2 - s^3/2 = 1/2
        s = brentq(lambda s: s * s - s ** 3 / 2 - 0.5, 1.3, 1.9)
        with pytest.raises(NearCriticalOrbit):
            critical_orbit(TentMap(s))

    def test_consistency(self, g19):
        info = critical_orbit(g19, n_max=40)
        pts = np.asarray(info.orbit)
        assert np.max(np.abs(g19(pts[:-1]) - pts[1:])) <= 1e-15
        assert info.code == "".join("R" if p > 0.5 else "L" for p in pts)

    def test_dict_round_trip(self, gsqrt2):
        info = critical_orbit(gsqrt2)
        assert CriticalOrbitInfo.from_dict(info.to_dict()) == info


class TestKneading:
    def test_examples(self, g2, gsqrt2, g19):
        assert kneading_code(g2, 5) == "RLLLL"
        assert kneading_code(gsqrt2, 5) == "RLRRR"
        assert kneading_code(g19, 8) == direct_code(1.9, 8)


class TestCodes:
    @pytest.mark.parametrize("text, expected", [
        ("RL^2R*", ("RLL", "R")),
        ("R L L (R L)^∞", ("RL", "LR")),
        ("R (L R)^∞", ("", "RL")),
        ("RL^inf", ("R", "L")),
        ("RLRRR*", ("RL", "R")),
    ])
    def test_parse(self, text, expected):
        assert parse_code(text) == expected

    @pytest.mark.parametrize("text", ["RLX*", "RL", "R(L*", "^2R*"])
    def test_parse_errors(self, text):
        with pytest.raises(UnsupportedInput):
            parse_code(text)

    def test_format(self):
        assert format_code("RL", "R") == "RLR^inf"
        assert parse_code(format_code("RL", "LR")) == ("RL", "LR")

    def test_solve_examples(self):
        assert solve_code_parameter("RL*") == 2.0
        assert solve_code_parameter("RLR*") == pytest.approx(1.4142135624, abs=1e-10)
        oracle = brentq(lambda s: s * s * (2 - s) * (1 + s) - 2, 1.5, 1.99, xtol=1e-15)
        assert solve_code_parameter("RLLR*") == pytest.approx(oracle, abs=1e-12)
        assert oracle == pytest.approx(1.7692, abs=1e-4)

    def test_not_realizable(self):
        with pytest.raises(CodeNotRealizable):
            solve_code_parameter("L*")
        with pytest.raises(CodeNotRealizable):
            solve_code_parameter("R(RL)*")

    def test_orbit_through_turning_point(self):
        # the golden slope has c_3 = 1/2, so its code is only a limit of realised codes
        with pytest.raises(CodeNotRealizable):
            solve_code_parameter("RL(RRL)*")

    @pytest.mark.parametrize("code", ["RLR*", "RLLR*", "RL^5R*", "RLL(RL)*"] + [nu_ell_code(e) for e in (6, 10, 14)])
    def test_round_trip(self, code):
        s = solve_code_parameter(code)
        prefix, period = parse_code(code)
        depth = 24
        target = (prefix + period * depth)[:depth]
        assert kneading_code(TentMap(s), depth) == target


class TestLambdaK:
    def test_k1_is_sqrt2(self):
        assert lambda_k_family(1) == pytest.approx(SQRT2, abs=1e-15)

    def test_k2(self):
        assert lambda_k_family(2) == pytest.approx(solve_code_parameter("RLLR*"), abs=1e-14)

    def test_sequence(self):
        lams = [lambda_k_family(k) for k in range(1, 17)]
        assert all(a < b for a, b in zip(lams, lams[1:])) and lams[-1] < 2
        for k, lam in enumerate(lams, start=1):
            assert abs(lambda_k_closure(lam, k)) <= 1e-12
            assert tent_itinerary(lam, k + 3) == "R" + "L" * k + "RR"
            assert (2 - lam) == pytest.approx(2 / (1 + lam) * lam ** -k, rel=1e-10)

    def test_invalid(self):
        with pytest.raises(UnsupportedInput):
            lambda_k_family(0)


class TestNuEll:
    def test_code(self):
        assert nu_ell_code(6) == "RLRRLR*"
        with pytest.raises(UnsupportedInput):
            nu_ell_code(7)

    def test_side_of_sqrt2(self):
        nus = [solve_code_parameter(nu_ell_code(e)) for e in range(6, 22, 2)]
        assert all(n > SQRT2 for n in nus)
        assert all(a > b for a, b in zip(nus, nus[1:]))
