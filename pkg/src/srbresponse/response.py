"""Response of averages to parameter changes, and the two non-Lipschitz tent families."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bv import HybridBVFunction, uniform_grid
from .errors import ResidueNonzero, SingularSystem, UnsupportedInput
from .observables import Perturbation, as_observable, named_observable
from .saltus import SaltusDecomposition, saltus_decompose
from .susceptibility import cauchy_defects, coefficients_split, markov_extension
from .transfer import (
    PiecewiseConstantDensity,
    UlamDensity,
    invariant_density_exact_tent,
    invariant_density_hybrid,
    invariant_density_ulam,
    tent_density_jump_series,
    tent_plateaus,
)
from .unimodal import (
    PREPERIODIC_TOL,
    TentMap,
    UnimodalMap,
    critical_orbit,
    lambda_k_family,
    nu_ell_code,
    perturbed_map,
    solve_code_parameter,
    tent_orbit,
)

DEFAULT_BINS = 2 ** 14
SQRT2 = math.sqrt(2.0)
# plateau of the slope sqrt(2) density on (c_2, c_3)
U_SQRT2 = 1.0 / (6.0 - 4.0 * SQRT2)


def _map_rows(func, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items))
    return [func(i) for i in items]


# ---------------------------------------------------------------------------
# densities and decompositions by the most exact available route


def invariant_density(f: UnimodalMap, bins=DEFAULT_BINS, orbit_tol=PREPERIODIC_TOL):
    """Exact plateaus for preperiodic tent maps, the Ulam density otherwise."""
    if isinstance(f, TentMap):
        info = critical_orbit(f, tol=orbit_tol)
        if info.preperiodic is not None:
            return invariant_density_exact_tent(f, info)
    return invariant_density_ulam(f, bins)


def reference_decomposition(f: UnimodalMap, cells=2 ** 12, depth=64,
                            orbit_tol=PREPERIODIC_TOL) -> SaltusDecomposition:
    """Saltus decomposition without Ulam smearing.

    Preperiodic tent maps use exact plateaus, other tent maps the orbit
    series of jumps truncated at ``depth``, and generic maps the jump-plus-grid
    power iteration of the transfer operator.
    """
    info = critical_orbit(f, n_max=depth, tol=orbit_tol)
    if isinstance(f, TentMap):
        if info.preperiodic is not None:
            return saltus_decompose(invariant_density_exact_tent(f, info), info)
        loc, amp = tent_density_jump_series(f, depth=depth)
        grid = uniform_grid(f.a0, f.b, cells)
        rho = HybridBVFunction(loc, amp, grid, np.zeros_like(grid), (f.a0, f.b))
        return saltus_decompose(rho, info)
    rho, _, _ = invariant_density_hybrid(f, cells)
    return saltus_decompose(rho, info, depth=min(depth, info.N))


def density_l1_distance(d1, d2, samples=2 ** 16):
    """|d1 - d2|_1 on [0, 1]; exact for two plateau densities or two Ulam densities on equal bins."""
    if isinstance(d1, PiecewiseConstantDensity) and isinstance(d2, PiecewiseConstantDensity):
        bp = np.union1d(d1.breakpoints, d2.breakpoints)
        mid = 0.5 * (bp[1:] + bp[:-1])
        v1 = np.array([d1.plateau_at(x) for x in mid])
        v2 = np.array([d2.plateau_at(x) for x in mid])
        return float(np.sum(np.abs(v1 - v2) * np.diff(bp)))
    if isinstance(d1, UlamDensity) and isinstance(d2, UlamDensity) and np.array_equal(d1.edges, d2.edges):
        return d1.l1_distance(d2)
    edges = np.linspace(0.0, 1.0, samples + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return float(np.mean(np.abs(np.asarray(d1(mid)) - np.asarray(d2(mid)))))


# ---------------------------------------------------------------------------
# response function


def response_density(f: UnimodalMap, X: Perturbation, t, bins=DEFAULT_BINS, orbit_tol=PREPERIODIC_TOL):
    return invariant_density(perturbed_map(f, X, t), bins, orbit_tol)


def response_value(f: UnimodalMap, X: Perturbation, t, phi, bins=DEFAULT_BINS) -> float:
    """R(t) = int phi rho_t for the invariant density of f_t = f + t X(f)."""
    phi = as_observable(phi)
    return response_density(f, X, t, bins).integrate(phi)


@dataclass(frozen=True, eq=False)
class ResponseScan:
    t: np.ndarray
    R: np.ndarray
    R0: float
    l1: np.ndarray
    exponent: float | None
    modulus_ratio: np.ndarray = field(default=None)

    def to_dict(self):
        return {"t": self.t.tolist(), "R": self.R.tolist(), "R0": self.R0, "l1": self.l1.tolist(),
                "exponent": self.exponent, "modulus_ratio": self.modulus_ratio.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["t"], dtype=float), np.asarray(d["R"], dtype=float), float(d["R0"]),
                   np.asarray(d["l1"], dtype=float), d["exponent"], np.asarray(d["modulus_ratio"], dtype=float))

    def to_csv(self):
        lines = ["t,R,l1,modulus_ratio"]
        lines += [f"{t:.17g},{r:.17g},{d:.17g},{m:.17g}"
                  for t, r, d, m in zip(self.t, self.R, self.l1, self.modulus_ratio)]
        return "\n".join(lines) + "\n"


def fit_exponent(t, values):
    """Least-squares slope of log|values| against log|t| (None if fewer than two usable points)."""
    t, v = np.abs(np.asarray(t, dtype=float)), np.abs(np.asarray(values, dtype=float))
    ok = (t > 0) & (v > 0)
    if np.count_nonzero(ok) < 2:
        return None
    return float(np.polyfit(np.log(t[ok]), np.log(v[ok]), 1)[0])


def response_scan(f: UnimodalMap, X: Perturbation, phi, t_values, bins=DEFAULT_BINS, jobs=1) -> ResponseScan:
    """R(t) and |rho_t - rho_0|_1 over a list of t, with the fitted exponent of |R(t) - R(0)|.

    ``modulus_ratio`` is |rho_t - rho_0|_1 / (|t| ln(1/|t|)), the quantity
    that stays bounded under the expected |t| ln|t| modulus of continuity.
    """
    phi = as_observable(phi)
    t = np.asarray(t_values, dtype=float)
    rho0 = response_density(f, X, 0.0, bins)
    R0 = rho0.integrate(phi)
    dens = _map_rows(lambda s: response_density(f, X, s, bins), list(t), jobs)
    R = np.array([d.integrate(phi) for d in dens])
    l1 = np.array([density_l1_distance(d, rho0) for d in dens])
    with np.errstate(divide="ignore", invalid="ignore"):
        at = np.abs(t)
        modulus = np.where((at > 0) & (at < 1), l1 / (at * np.log(1.0 / at)), np.nan)
    return ResponseScan(t, R, R0, l1, fit_exponent(t, R - R0), modulus)


# ---------------------------------------------------------------------------
# counterexample tables


@dataclass(frozen=True, eq=False)
class CounterexampleRow:
    index: int
    parameter: float
    plateaus: np.ndarray
    response: float
    gap: float
    bound: float
    recursion_residual: float
    normalization_residual: float
    monotone: bool
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return self.gap / self.bound

    def to_dict(self):
        return {"index": self.index, "parameter": self.parameter, "plateaus": self.plateaus.tolist(),
                "response": self.response, "gap": self.gap, "bound": self.bound, "ratio": self.ratio,
                "recursion_residual": self.recursion_residual,
                "normalization_residual": self.normalization_residual, "monotone": self.monotone,
                "extra": self.extra}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["index"]), float(d["parameter"]), np.asarray(d["plateaus"], dtype=float),
                   float(d["response"]), float(d["gap"]), float(d["bound"]), float(d["recursion_residual"]),
                   float(d["normalization_residual"]), bool(d["monotone"]), dict(d.get("extra", {})))


@dataclass(frozen=True, eq=False)
class CounterexampleTable:
    """Rows of gap versus index-weighted parameter distance, with the fitted lower constant."""

    kind: str
    rows: tuple
    fit_from: int

    @property
    def columns(self):
        return ("k", "lambda_k") if self.kind == "lambda_k" else ("ell", "nu_ell")

    def fit_rows(self):
        return [r for r in self.rows if r.index >= self.fit_from]

    @property
    def ratios(self):
        return np.array([r.ratio for r in self.fit_rows()])

    @property
    def fitted_constant(self):
        """exp of the mean of log(gap/bound): least squares for log gap = log C + log bound."""
        r = self.ratios
        if r.size == 0 or np.any(r <= 0):
            return None
        return float(np.exp(np.mean(np.log(r))))

    @property
    def spread(self):
        """(max - min) / min of the fitted ratios."""
        r = self.ratios
        if r.size == 0 or np.min(r) <= 0:
            return None
        return float((r.max() - r.min()) / r.min())

    def to_csv(self):
        lines = [",".join(self.columns + ("gap", "bound", "ratio"))]
        lines += [f"{r.index},{r.parameter:.17g},{r.gap:.17g},{r.bound:.17g},{r.ratio:.17g}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"kind": self.kind, "fit_from": self.fit_from, "fitted_constant": self.fitted_constant,
                "spread": self.spread, "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(CounterexampleRow.from_dict(r) for r in d["rows"]), int(d["fit_from"]))


def lambda_k_plateaus(lam, k):
    """Plateaus v_1..v_{k+1} of the slope-lambda_k density on the cells of c_2 < c_3 < ... < c_{k+2} < c_1.

    Solves v_{k+1} = lam v_1, v_j + v_{k+1} = lam v_{j+1} (1 <= j <= k-1),
    2 v_k = lam v_{k+1} together with the normalisation. Returns the
    plateaus, the sorted breakpoints and the largest residual of the
    recursions.
    """
    c = tent_orbit(lam, k + 2)  # c_1..c_{k+2}
    bp = np.concatenate((c[1:], c[:1]))
    if np.any(np.diff(bp) <= 0):
        raise SingularSystem(f"orbit of slope {lam!r} is not ordered c_2 < ... < c_{k + 2} < c_1")
    n = k + 1
    A = np.zeros((n + 1, n))
    A[0, n - 1], A[0, 0] = 1.0, -lam
    for j in range(1, k):
        A[j, j - 1] += 1.0
        A[j, n - 1] += 1.0
        A[j, j] -= lam
    A[k, k - 1] += 2.0
    A[k, k] -= lam
    A[n] = np.diff(bp)
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    v, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    residual = float(np.max(np.abs(A[:n] @ v)))
    return v, bp, residual


def _ce1_row(k, phi, bins):
    lam = lambda_k_family(k)
    v, bp, rec = lambda_k_plateaus(lam, k)
    dens = PiecewiseConstantDensity(bp, v)
    R = dens.integrate(phi)
    g = TentMap(lam)
    # the generic plateau solver on the same partition must agree with the explicit recursion
    generic = tent_plateaus(g, bp).plateaus
    c = tent_orbit(lam, k + 2)
    spacing = [abs((c[j + 1] - c[j]) - lam ** (j - 1) * (c[2] - c[1])) for j in range(1, k + 1)]
    extra = {"generic_solver_defect": float(np.max(np.abs(generic - v))),
             "spacing_defect": float(max(spacing)), "v_last": float(v[-1])}
    if bins:
        extra["ulam_response"] = invariant_density_ulam(g, bins).integrate(phi)
    return CounterexampleRow(k, lam, v, R, R - 1.0, k * (2.0 - lam), rec, abs(dens.integral() - 1.0),
                             bool(np.all(np.diff(v) > 0)), extra)


def counterexample_one(k_range=range(1, 17), bins=None, jobs=1, fit_from=4) -> CounterexampleTable:
    """Rows for the lambda_k family: gap int phi rho_k - int phi rho_2 against k (2 - lambda_k).

    phi is the unit-mass bump supported in (2/3, 3/4); rho_2 = 1 so the
    reference response is 1. With ``bins`` the Ulam response is added to
    each row's extras as a cross-check.
    """
    ks = list(k_range)
    if any(k < 1 or k > 20 for k in ks):
        raise UnsupportedInput("k must lie in [1, 20]")
    phi = named_observable("bump_ce1")
    rows = _map_rows(lambda k: _ce1_row(k, phi, bins), ks, jobs)
    return CounterexampleTable("lambda_k", tuple(rows), fit_from)


def _ce2_row(ell, phi, bins):
    nu = solve_code_parameter(nu_ell_code(ell))
    g = TentMap(nu)
    c = tent_orbit(nu, ell)  # c_1..c_ell, c_ell fixed
    if not c[ell - 2] < 0.42:
        raise UnsupportedInput(f"ell={ell}: c_(ell-1) = {c[ell - 2]:.6g} does not lie left of the bump support")
    dens = tent_plateaus(g, np.sort(c))
    u = dens.plateaus
    R = dens.integrate(phi)
    rec = max(abs(u[ell - 2] - nu * u[0]), abs(u[ell - 3] - nu * u[1]), abs(2 * u[1] - nu * u[ell - 2]))
    half = ell // 2
    monotone = bool(np.all(np.diff(u[:half]) > 0) and np.all(np.diff(u[half:]) < 0))
    # jump signs at the orbit points: s_{ell-1} > 0, s_{2j} < 0 (4 <= 2j <= ell-2), s_{2j+1} > 0 (3 <= 2j+1 <= ell-3)
    loc, amp = dens.jumps()
    s = {k: float(amp[np.argmin(np.abs(loc - c[k - 1]))]) for k in range(1, ell + 1)}
    signs = s[ell - 1] > 0 and all(s[m] < 0 for m in range(4, ell - 1, 2)) and all(s[m] > 0 for m in range(3, ell - 2, 2))
    extra = {"u2": float(u[1]), "side_of_sqrt2": "above" if nu > SQRT2 else "below",
             "jump_signs_ok": bool(signs), "c_ell_minus_1": float(c[ell - 2])}
    if bins:
        extra["ulam_response"] = invariant_density_ulam(g, bins).integrate(phi)
    return CounterexampleRow(ell, nu, u, R, U_SQRT2 - R, ell * abs(nu - SQRT2), float(rec),
                             abs(dens.integral() - 1.0), monotone, extra)


def counterexample_two(ell_range=range(6, 21, 2), bins=None, jobs=1, fit_from=6) -> CounterexampleTable:
    """Rows for the nu_ell family: gap u - int phi rho_ell against ell |nu_ell - sqrt 2|.

    phi is the unit-mass bump supported in (0.42, 0.49), which lies in the
    cell (c_(ell-1), 1/2) for every tested ell, so the response equals u_2.
    """
    ells = list(ell_range)
    if any(e % 2 or e < 6 or e > 24 for e in ells):
        raise UnsupportedInput("ell must be even with 6 <= ell <= 24")
    phi = named_observable("bump_ce2")
    rows = _map_rows(lambda e: _ce2_row(e, phi, bins), ells, jobs)
    return CounterexampleTable("nu_ell", tuple(rows), fit_from)


# ---------------------------------------------------------------------------
# finite differences against the susceptibility


@dataclass(frozen=True, eq=False)
class FDReport:
    t: np.ndarray
    difference_quotients: np.ndarray
    psi_partial_sum: float
    psi_cauchy_defect: float
    residue_at_1: float
    N: int
    bins: int

    @property
    def agreement(self):
        """Largest |(R(t) - R(0))/t - Psi| over the schedule; reported, not asserted."""
        return float(np.max(np.abs(self.difference_quotients - self.psi_partial_sum)))

    def to_dict(self):
        return {"t": self.t.tolist(), "difference_quotients": self.difference_quotients.tolist(),
                "psi_partial_sum": self.psi_partial_sum, "psi_cauchy_defect": self.psi_cauchy_defect,
                "residue_at_1": self.residue_at_1, "N": self.N, "bins": self.bins, "agreement": self.agreement}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["t"], dtype=float), np.asarray(d["difference_quotients"], dtype=float),
                   float(d["psi_partial_sum"]), float(d["psi_cauchy_defect"]), float(d["residue_at_1"]),
                   int(d["N"]), int(d["bins"]))


def default_t_schedule(m_range=range(6, 15), two_sided=True):
    t = [2.0 ** -m for m in m_range]
    return t + [-s for s in t] if two_sided else t


def fd_experiment(f: UnimodalMap, X: Perturbation, phi, t_schedule=None, bins=DEFAULT_BINS, N=256,
                  tol=1e-10, jobs=1) -> FDReport:
    """Difference quotients (R(t) - R(0))/t next to the partial sum of Psi at z = 1.

    Refuses (ResidueNonzero) when Psi has a pole at 1. Both columns use the
    same discretisation of the densities, so R(0) is recomputed on the same
    bins rather than taken from an exact solve.
    """
    phi = as_observable(phi)
    dec = reference_decomposition(f)
    ext = markov_extension(f, dec, X, phi)
    if abs(ext.residue_at_1) > tol or not ext.holomorphic_at_1:
        raise ResidueNonzero(f"Psi has residue {ext.residue_at_1:.6g} at z = 1")
    t = np.asarray(default_t_schedule() if t_schedule is None else t_schedule, dtype=float)
    if X.is_zero:
        dq = np.zeros_like(t)
    else:
        R0 = invariant_density_ulam(f, bins).integrate(phi)
        R = np.array(_map_rows(lambda s: invariant_density_ulam(perturbed_map(f, X, s), bins).integrate(phi),
                               list(t), jobs))
        dq = (R - R0) / t
    series = coefficients_split(f, dec, X, phi, N)
    S = float(series.partial_sums()[-1]) + 0.0
    defect = float(cauchy_defects(series, [N // 2])[0])
    return FDReport(t, dq, S, defect, ext.residue_at_1, N, bins)
