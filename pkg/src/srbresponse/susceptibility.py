"""Susceptibility coefficients, Markov poles and residues, and the values Psi_1 and regularised Psi."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .bv import HybridBVFunction, merge_jumps
from .errors import FitUnstable, NonzeroJump, NonZeroMean, NoConvergence, NotMarkov
from .observables import Perturbation, as_observable
from .saltus import SaltusDecomposition, fit_geometric, jump_sums_markov
from .transfer import apply_L0, apply_L1
from .unimodal import UnimodalMap, critical_orbit

RICHARDSON_LEVELS = tuple(range(4, 11))


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True, eq=False)
class SusceptibilitySeries:
    """a_n = orbit_terms[n] + bv_terms[n] for n = 0..N."""

    coefficients: np.ndarray
    orbit_terms: np.ndarray
    bv_terms: np.ndarray
    period: int = 1
    tail_estimate: float = 0.0
    stationary_from: int | None = None

    @property
    def N(self):
        return self.coefficients.size - 1

    def partial_sums(self):
        return np.cumsum(self.coefficients)

    def to_dict(self):
        return {"coefficients": self.coefficients.tolist(), "orbit_terms": self.orbit_terms.tolist(),
                "bv_terms": self.bv_terms.tolist(), "period": self.period, "tail_estimate": self.tail_estimate,
                "stationary_from": self.stationary_from}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["coefficients"], dtype=float), np.asarray(d["orbit_terms"], dtype=float),
                   np.asarray(d["bv_terms"], dtype=float), int(d.get("period", 1)),
                   float(d.get("tail_estimate", 0.0)), d.get("stationary_from"))

    @classmethod
    def from_coefficients(cls, coeffs, period=1):
        a = np.asarray(coeffs, dtype=float)
        return cls(a, a.copy(), np.zeros_like(a), period)


def response_source(dec: SaltusDecomposition, X: Perturbation, grid=None) -> HybridBVFunction:
    """g = X' rho_s + (X rho_r)' as a jump-plus-grid function; its integral is -J(f, X)."""
    rho_s = dec.rho_s(grid)
    g = rho_s.multiply(X.deriv)
    reg = dec.regular
    r = reg.values
    if np.any(r != 0.0):
        dr = np.gradient(r, reg.grid)
        smooth = X.deriv(reg.grid) * r + X(reg.grid) * dr
        g = g + HybridBVFunction(np.empty(0), np.empty(0), reg.grid, smooth, reg.domain)
    return g


def _orbit_points(f, dec, count):
    orb = dec.orbit
    if orb.preperiodic is None and len(orb.orbit) < count:
        orb = critical_orbit(f, n_max=count)
    return np.array([orb.point(k) for k in range(1, count + 1)])


def coefficients_split(f: UnimodalMap, dec: SaltusDecomposition, X: Perturbation, phi, N: int,
                       grid=None, stationary_tol=1e-15) -> SusceptibilitySeries:
    """a_n = -sum_k s_k X(c_k) phi(c_{k+n}) - int L1^n(g) phi with g = X' rho_s + (X rho_r)'.

    The L1 iteration stops once the iterate no longer changes (variation of
    the update below ``stationary_tol`` times its size) and is then reused.
    Every iterate is shifted along rho so that its integral is exactly
    -J(f, X); otherwise the quadrature error of g would survive as a
    spurious constant tail of a_n.
    """
    phi = as_observable(phi)
    K = dec.depth
    w = dec.amplitudes * X(dec.locations)
    pts = _orbit_points(f, dec, K + N)
    phi_orbit = phi(pts)
    orbit_terms = np.array([-np.dot(w, phi_orbit[n:n + K]) for n in range(N + 1)])

    g = response_source(dec, X, grid)
    rho = dec.rho_s(g.grid) + dec.regular
    mass = -float(np.sum(w))

    def fix_mean(F):
        return F + rho * ((mass - F.integral()) / rho.integral())

    bv = np.zeros(N + 1)
    stationary_from = None
    F = fix_mean(g)
    for n in range(N + 1):
        bv[n] = -F.integrate_against(phi)
        if n == N:
            break
        G = fix_mean(apply_L1(f, F))
        scale = max(G.variation(), 1e-300)
        if (G - F).variation() <= stationary_tol * scale or G.variation() <= 1e-300:
            bv[n + 1:] = -G.integrate_against(phi)
            stationary_from = n + 1
            break
        F = G
    period = dec.orbit.n1 if dec.orbit.preperiodic else 1
    tail = dec.tail_bound(K) * float(np.max(np.abs(phi_orbit))) if dec.orbit.preperiodic is None else 0.0
    return SusceptibilitySeries(orbit_terms + bv, orbit_terms, bv, period, tail, stationary_from)


def naive_coefficients(f: UnimodalMap, dec: SaltusDecomposition, X: Perturbation, phi, N: int, grid=None):
    """a_n = int L0^n(rho X) phi' by direct iteration (cross-check for small n only)."""
    phi = as_observable(phi)
    F = dec.rho().multiply(X) if grid is None else (dec.rho_s(grid) + dec.regular).multiply(X)
    out = np.zeros(N + 1)
    for n in range(N + 1):
        out[n] = F.integrate_against_derivative(phi)
        if n < N:
            F = apply_L0(f, F)
    return out


def psi_partial(series, z):
    """sum_{n <= N} a_n z^n (complex z allowed)."""
    a = series.coefficients if isinstance(series, SusceptibilitySeries) else np.asarray(series, dtype=float)
    val = np.polynomial.polynomial.polyval(z, a)
    return complex(val) if np.iscomplexobj(val) else float(val)


def _psi_with_tail(a, z, period):
    """Partial sum plus the tail obtained by continuing the last ``period`` coefficients periodically."""
    N = a.size - 1
    head = np.polynomial.polynomial.polyval(z, a)
    last = a[N - period + 1:]
    tail = sum(last[r] * z ** (N + 1 + r) for r in range(period)) / (1.0 - z ** period)
    return head + tail


def richardson(values, ratio=2.0):
    """Richardson table for values at step sizes h, h/ratio, h/ratio^2, ... (error ~ sum c_j h^j)."""
    T = [np.asarray(values, dtype=complex)]
    p = 1
    while T[-1].size > 1:
        prev = T[-1]
        fac = ratio ** p
        T.append((fac * prev[1:] - prev[:-1]) / (fac - 1.0))
        p += 1
    return T


def residue_fit(series, omega=1.0, period=None, levels=RICHARDSON_LEVELS, rel_tol=0.05, abs_floor=None):
    """lim_{r -> 1} (1 - r) Psi(r omega), from z_m = (1 - 2^-m) omega and Richardson extrapolation.

    The returned value uses the same convention as the closed-form residues
    (lim (1 - z/omega) Psi(z)). Raises FitUnstable when the two most refined
    extrapolants disagree by more than ``rel_tol`` (relative, with an
    absolute floor for residues that vanish).
    """
    if isinstance(series, SusceptibilitySeries):
        a, per = series.coefficients, series.period
    else:
        a, per = np.asarray(series, dtype=float), 1
    per = period or per
    if a.size == 0 or not np.any(a):
        return 0.0
    if abs_floor is None:
        abs_floor = 1e-6 * max(1.0, float(np.max(np.abs(a))))
    A = []
    for m in levels:
        h = 2.0 ** -m
        z = (1.0 - h) * omega
        A.append(h * _psi_with_tail(a, z, per))
    T = richardson(A)
    # the deepest levels with at least two entries
    row = T[-2]
    est, prev = row[-1], row[-2]
    if abs(est - prev) > rel_tol * abs(est) + abs_floor:
        raise FitUnstable(f"Richardson extrapolants {prev:.6g} and {est:.6g} disagree")
    value = T[-1][0]
    return float(value.real) if abs(value.imag) <= 1e-12 * max(1.0, abs(value)) and omega == 1.0 else complex(value)


def cauchy_defects(series, Ns):
    """|S_N - S_{2N}| for the given N values."""
    S = series.partial_sums()
    return np.array([abs(S[2 * n] - S[n]) for n in Ns])


# ---------------------------------------------------------------------------
# Markov case


@dataclass(frozen=True, eq=False)
class MarkovJumpSystem:
    n0: int
    n1: int
    matrix: np.ndarray
    jump_sums: np.ndarray
    J: float
    residue_at_1: float
    poles: tuple  # roots of unity omega
    residues: tuple  # lim (1 - z/omega) Psi(z), same order as poles
    holomorphic_at_1: bool
    fully_holomorphic: bool

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {
            "n0": self.n0, "n1": self.n1, "matrix": self.matrix.astype(int).tolist(),
            "jump_sums": self.jump_sums.tolist(), "J": self.J, "residue_at_1": self.residue_at_1,
            "poles": [{"z_re": p.real, "z_im": p.imag, "residue_re": r.real, "residue_im": r.imag}
                      for p, r in zip(self.poles, self.residues)],
            "flags": {"holomorphic_at_1": self.holomorphic_at_1, "fully_holomorphic": self.fully_holomorphic},
        }

    @classmethod
    def from_dict(cls, d):
        poles = tuple(complex(p["z_re"], p["z_im"]) for p in d["poles"])
        res = tuple(complex(p["residue_re"], p["residue_im"]) for p in d["poles"])
        return cls(d["n0"], d["n1"], np.asarray(d["matrix"], dtype=float), np.asarray(d["jump_sums"], dtype=float),
                   d["J"], d["residue_at_1"], poles, res, d["flags"]["holomorphic_at_1"],
                   d["flags"]["fully_holomorphic"])


def jump_matrix(n0, n1):
    """Action of L0 on H_{c_1}, ..., H_{c_N}: column j -> j+1, the last column -> n0."""
    N = n0 + n1 - 1
    L = np.zeros((N, N))
    for j in range(N - 1):
        L[j + 1, j] = 1.0
    L[n0 - 1, N - 1] = 1.0
    return L


def matrix_structure_ok(L, n0, n1):
    """L^{n1}: identity on the cycle block, nilpotent (strictly lower triangular) leading block."""
    P = np.linalg.matrix_power(L.astype(int), n1)
    k = n0 - 1
    lead = P[:k, :k]
    return bool(np.array_equal(P[k:, k:], np.eye(n1, dtype=int))
                and np.array_equal(lead, np.tril(lead, -1))
                and not np.any(P[:k, k:]))


def markov_extension(f: UnimodalMap, dec: SaltusDecomposition, X: Perturbation, phi, tol=1e-10,
                     rho_integral=None) -> MarkovJumpSystem:
    """Poles on the unit circle and their residues in the preperiodic case.

    At omega = 1 the residue is J (int phi rho - (1/n1) sum_{cycle} phi(c_j));
    at omega != 1 only the eventually periodic orbit term contributes,
    (1/n1) sum_r p(M + r) omega^(M + r) with p(n) = -sum_k s_k X(c_k) phi(c_{k+n}).
    """
    orb = dec.orbit
    if orb.preperiodic is None:
        raise NotMarkov("critical orbit is not preperiodic")
    phi = as_observable(phi)
    n0, n1 = orb.n0, orb.n1
    N = n0 + n1 - 1
    J = dec.weighted_jump(X)
    sums = jump_sums_markov(dec, X)
    int_phi_rho = dec.rho().integrate_against(phi) if rho_integral is None else rho_integral
    cycle = [orb.point(j) for j in range(n0, n0 + n1)]
    res1 = J * (int_phi_rho - float(np.mean(phi(np.asarray(cycle)))))

    w = dec.amplitudes * X(dec.locations)

    def p(n):
        return -sum(w[k - 1] * phi(orb.point(k + n)) for k in range(1, N + 1))

    M = N  # from n >= n0 - 1 every c_{k+n} lies on the cycle
    poles, residues = [], []
    for r in range(n1):
        omega = cmath.exp(2j * math.pi * r / n1)
        val = sum(p(M + q) * omega ** (M + q) for q in range(n1)) / n1
        if r == 0:
            val += J * int_phi_rho
            omega = 1.0 + 0j
        poles.append(omega)
        residues.append(complex(val))
    return MarkovJumpSystem(
        n0=n0, n1=n1, matrix=jump_matrix(n0, n1), jump_sums=sums, J=J, residue_at_1=float(res1),
        poles=tuple(poles), residues=tuple(residues),
        holomorphic_at_1=abs(J) <= tol, fully_holomorphic=bool(np.all(np.abs(sums) <= tol)),
    )


# ---------------------------------------------------------------------------
# non-Markov case


@dataclass(frozen=True)
class Psi1Result:
    value: float
    orbit_part: float
    resolvent_part: float
    outer_terms: int
    neumann_terms: int
    truncation: float

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["value"]), float(d["orbit_part"]), float(d["resolvent_part"]), int(d["outer_terms"]),
                   int(d["neumann_terms"]), float(d["truncation"]))


def _partial_jump_sums(dec, X):
    return np.cumsum(dec.amplitudes * X(dec.locations))


def neumann_resolvent(f: UnimodalMap, g: HybridBVFunction, phi, rho: HybridBVFunction, tol, max_terms=10_000):
    """int (id - L1)^{-1} g phi dx for mean-zero g, by summing int L1^m g phi.

    Each iterate is projected onto mean zero along rho to keep round-off
    from feeding the eigenvalue 1. Stops after three consecutive increments
    below ``tol``.
    """
    total = 0.0
    quiet = 0
    F = g
    for m in range(max_terms):
        inc = F.integrate_against(phi)
        total += inc
        quiet = quiet + 1 if abs(inc) < tol else 0
        if quiet >= 3:
            return total, m + 1
        F = apply_L1(f, F)
        F = F - rho * F.integral()
    raise NoConvergence("Neumann series did not settle")


def psi1_nonmarkov(f: UnimodalMap, dec: SaltusDecomposition, X: Perturbation, phi, tol=1e-6) -> Psi1Result:
    """Psi_1 = -sum_j phi(c_j) sum_{k<=j} s_k X(c_k) - int (id - L1)^{-1}(X' rho_s + (X rho_r)') phi."""
    phi = as_observable(phi)
    J = dec.weighted_jump(X)
    if abs(J) > tol:
        raise NonzeroJump(f"J(f, X) = {J:.3g} is not zero")
    S = _partial_jump_sums(dec, X)
    phis = phi(dec.locations)
    sup_phi = float(np.max(np.abs(phis))) if phis.size else 0.0
    C, xi = fit_geometric(np.abs(S))
    # stop the outer series once sup|phi| sum_{j>J} C xi^j < tol/10
    terms = S.size
    for j in range(S.size):
        bound = sup_phi * C * xi ** (j + 1) / max(1.0 - xi, 1e-12)
        if bound < tol / 10:
            terms = j + 1
            break
    truncation = sup_phi * C * xi ** (terms + 1) / max(1.0 - xi, 1e-12)
    orbit_part = -float(np.dot(phis[:terms], S[:terms]))
    g = response_source(dec, X)
    mean = g.integral()
    if abs(mean) > tol:
        raise NonZeroMean(f"resolvent argument has integral {mean:.3g}")
    if g.variation() == 0.0:
        res, used = 0.0, 0
    else:
        res, used = neumann_resolvent(f, g, phi, dec.rho(), tol / 10)
    return Psi1Result(orbit_part - res, orbit_part, res, terms, used, truncation)


# ---------------------------------------------------------------------------
# regularised susceptibility for X = 1


def regularized_psi(f: UnimodalMap, dec: SaltusDecomposition, phi, z, N=None, tol=1e-12):
    """Psi~(z) = sum_j z^j S_j int H_{c_j} phi' + sum_n z^n int L0^n(rho_r) phi', S_j = sum_{k<=j} s_k.

    Integrals run over [a0, b], so int H_u phi' = -(phi(u) - phi(a0)).
    """
    phi = as_observable(phi)
    a0 = dec.regular.domain[0]
    S = np.cumsum(dec.amplitudes)
    J = S.size if N is None else min(N, S.size)
    hint = -(phi(dec.locations[:J]) - phi(a0))
    zj = np.asarray(z, dtype=complex) ** np.arange(1, J + 1)
    jump_part = complex(np.sum(zj * S[:J] * hint))
    reg_part = 0.0 + 0j
    r = dec.regular
    if np.any(r.values != 0.0):
        F = r
        zn = 1.0 + 0j
        for _ in range(10_000):
            inc = zn * F.integrate_against_derivative(phi)
            reg_part += inc
            if abs(inc) < tol:
                break
            F = apply_L0(f, F)
            zn *= z
    out = jump_part + reg_part
    return out.real if isinstance(z, float) and abs(out.imag) == 0.0 else out


def regularized_psi_direct(f: UnimodalMap, dec: SaltusDecomposition, phi, z, n_terms):
    """sum_{n < n_terms} z^n int L0^n(rho(z)) phi' with rho(z) = sum z^k s_k H_{c_k} + rho_r, by iteration."""
    phi = as_observable(phi)
    zk = float(z) ** np.arange(1, dec.depth + 1)
    F = HybridBVFunction(dec.locations, zk * dec.amplitudes, dec.regular.grid, dec.regular.values,
                         dec.regular.domain)
    total = 0.0
    zn = 1.0
    for _ in range(n_terms):
        total += zn * F.integrate_against_derivative(phi)
        F = apply_L0(f, F)
        zn *= z
    return total


def abel_diagnostic(f: UnimodalMap, phi, levels=RICHARDSON_LEVELS, rel_tol=0.05):
    """Abel means sum_j z^j phi(c_j) at z = 1 - 2^-m; reports whether they settle (never asserted)."""
    phi = as_observable(phi)
    depth = int(40 * 2 ** max(levels))
    x = f.c
    vals = np.empty(depth)
    for j in range(depth):
        x = float(f(x))
        vals[j] = x
    ph = phi(vals)
    sums = []
    for m in levels:
        z = 1.0 - 2.0 ** -m
        sums.append(float(np.sum(ph * z ** np.arange(1, depth + 1))))
    T = richardson(sums)
    row = T[-2]
    settled = bool(abs(row[-1] - row[-2]) <= rel_tol * abs(row[-1]) + 1e-9)
    return {"z": [1.0 - 2.0 ** -m for m in levels], "abel_sums": sums,
            "extrapolated": float(T[-1][0].real), "settled": settled}


@dataclass(frozen=True)
class RegularizedReport:
    z: complex
    value: complex
    J_of_1: float
    psi1: float | None
    difference: float | None
    abel: dict | None

    def to_dict(self):
        return {"z_re": self.z.real, "z_im": self.z.imag, "value_re": self.value.real, "value_im": self.value.imag,
                "J_of_1": self.J_of_1, "psi1": self.psi1, "difference": self.difference, "abel": self.abel}

    @classmethod
    def from_dict(cls, d):
        return cls(complex(d["z_re"], d["z_im"]), complex(d["value_re"], d["value_im"]), float(d["J_of_1"]),
                   d["psi1"], d["difference"], d["abel"])


def regularized_report(f: UnimodalMap, dec: SaltusDecomposition, phi, z=1.0, tol=1e-8, abel=True):
    """Psi~(z) with X = 1, compared to Psi_1 when J(f) = 0; otherwise the Abel diagnostic is attached."""
    phi = as_observable(phi)
    z = complex(z)
    value = complex(regularized_psi(f, dec, phi, z))
    J1 = dec.J_of_1
    psi1 = diff = None
    if abs(J1) <= tol:
        psi1 = psi1_nonmarkov(f, dec, Perturbation.constant(1.0), phi, tol=tol).value
        if z == 1.0:
            diff = abs(value - psi1)
    diag = abel_diagnostic(f, phi) if abel and abs(J1) > tol else None
    return RegularizedReport(z, value, J1, psi1, diff, diag)


# ---------------------------------------------------------------------------
# candidate solutions


@dataclass(frozen=True)
class CandidateReport:
    depth: int
    grid_residual: float
    tail_bound: float
    point_mass_residual: float
    point_mass_tail: float
    coefficient_c1: tuple  # (lhs, rhs) coefficient of the point mass at c_1

    @property
    def ok(self):
        return self.grid_residual <= self.tail_bound + 1e-10 and self.point_mass_residual <= self.point_mass_tail + 1e-12

    def to_dict(self):
        d = dict(self.__dict__)
        d["coefficient_c1"] = list(self.coefficient_c1)
        d["ok"] = self.ok
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["depth"]), float(d["grid_residual"]), float(d["tail_bound"]),
                   float(d["point_mass_residual"]), float(d["point_mass_tail"]), tuple(d["coefficient_c1"]))


def candidate_check(f: UnimodalMap, dec: SaltusDecomposition, depth=None, X: Perturbation | None = None,
                    tol=1e-8, locations=None) -> CandidateReport:
    """Check (id - L0) rho~_s = rho_s and (id - f_*) mu_s = X rho_s' up to truncation.

    rho~_s = sum_j S_j H_{c_j} with S_j = sum_{k<=j} s_k, and
    mu_s = sum_j T_j delta_{c_j} with T_j = sum_{k<=j} s_k X(c_k).
    ``locations`` overrides the orbit (synthetic inputs); c_{D+1} is then
    taken as f(c_D).
    """
    X = X or Perturbation.constant(1.0)
    D = depth or dec.depth
    locs = np.asarray(locations if locations is not None else dec.locations)[:D]
    s = dec.amplitudes[:D]
    J1 = float(np.sum(s))
    if abs(J1) > tol and dec.orbit.preperiodic is None and locations is None:
        raise NonzeroJump(f"J(f) = {J1:.3g} is not zero")
    S = np.cumsum(s)
    grid = dec.regular.grid
    dom = dec.regular.domain
    tilde = HybridBVFunction(locs, S, grid, np.zeros_like(grid), dom)
    lhs = tilde - apply_L0(f, tilde)
    c_next = float(f(locs[-1]))
    rhs = HybridBVFunction(np.append(locs, c_next), np.append(s, -S[-1]), grid, np.zeros_like(grid), dom)
    probe = np.union1d(grid, np.concatenate((locs - 1e-9, locs + 1e-9)))
    grid_res = float(np.max(np.abs(lhs(probe) - rhs(probe))))
    tail = abs(S[-1]) if dec.orbit.preperiodic is None else 0.0

    T = np.cumsum(s * X(locs))
    images = f(locs)
    # (id - f_*) mu_s as merged point masses
    pm_loc, pm_w = merge_jumps(np.concatenate((locs, images)), np.concatenate((T, -T)), tol=1e-10, prune=0.0)
    ref_loc, ref_w = merge_jumps(np.append(locs, c_next), np.append(s * X(locs), -T[-1]), tol=1e-10, prune=0.0)
    diff_loc, diff_w = merge_jumps(np.concatenate((pm_loc, ref_loc)), np.concatenate((pm_w, -ref_w)),
                                   tol=1e-10, prune=0.0)
    pm_res = float(np.max(np.abs(diff_w))) if diff_w.size else 0.0
    i1 = int(np.argmin(np.abs(pm_loc - locs[0])))
    c1_lhs = float(pm_w[i1])
    c1_rhs = float(s[0] * X(locs[0]))
    return CandidateReport(D, grid_res, tail, pm_res, 1e-12 * max(1.0, float(np.max(np.abs(T)))), (c1_lhs, c1_rhs))


__all__ = [
    "CandidateReport", "MarkovJumpSystem", "Psi1Result", "RegularizedReport", "SusceptibilitySeries", "abel_diagnostic",
    "candidate_check", "cauchy_defects", "coefficients_split", "jump_matrix", "markov_extension",
    "matrix_structure_ok", "naive_coefficients", "neumann_resolvent", "psi1_nonmarkov", "psi_partial",
    "regularized_psi", "regularized_psi_direct", "regularized_report", "residue_fit", "response_source", "richardson",
]
