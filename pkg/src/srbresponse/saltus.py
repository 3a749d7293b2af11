"""Jump (saltus) decomposition of invariant densities along the critical orbit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bv import HybridBVFunction, heaviside_sum, uniform_grid
from .errors import JumpBelowNoise, NotMarkov, UnsupportedInput
from .observables import Perturbation
from .transfer import PiecewiseConstantDensity, UlamDensity
from .unimodal import CriticalOrbitInfo, UnimodalMap, critical_orbit

# offsets (in bins) of the sample points used for one-sided limits of Ulam densities
_WINDOW = np.array([1.5, 2.5, 3.5, 4.5])


@dataclass(frozen=True, eq=False)
class SaltusDecomposition:
    """rho = sum_k s_k H_{c_k} + rho_r with the jumps indexed by orbit position."""

    orbit: CriticalOrbitInfo
    amplitudes: np.ndarray
    regular: HybridBVFunction
    method: str = "exact"
    noise_floor: float = 0.0
    below_noise: tuple = ()
    tail: tuple | None = None  # (C, xi) with sum_{k>j}|s_k| <= C xi^j
    unresolved: tuple = ()  # orbit positions whose Ulam smear could not be skipped
    density: object = field(default=None, repr=False)

    @property
    def depth(self):
        return self.amplitudes.size

    @property
    def locations(self):
        return np.asarray(self.orbit.orbit[: self.depth])

    def s(self, k):
        """Amplitude at c_k (Markov orbits fold k > N onto the cycle)."""
        return float(self.amplitudes[self.orbit.index(k) - 1])

    def rho_s(self, grid=None):
        grid = self.regular.grid if grid is None else grid
        return HybridBVFunction(self.locations, self.amplitudes, grid, np.zeros(len(grid)), self.regular.domain)

    def rho(self):
        return self.rho_s() + self.regular

    def weighted_jump(self, X):
        return float(np.sum(self.amplitudes * X(self.locations)))

    @property
    def J_of_1(self):
        return float(np.sum(self.amplitudes))

    def tail_bound(self, j):
        if self.tail is None:
            return 0.0
        C, xi = self.tail
        return C * xi ** j

    def to_dict(self, X=None):
        d = {
            "orbit": self.orbit.to_dict(),
            "jumps": [{"k": k + 1, "location": float(u), "amplitude": float(s)}
                      for k, (u, s) in enumerate(zip(self.locations, self.amplitudes))],
            "J_of_1": self.J_of_1,
            "method": self.method,
            "noise_floor": self.noise_floor,
            "below_noise": list(self.below_noise),
            "unresolved": list(self.unresolved),
            "tail": list(self.tail) if self.tail else None,
            "regular": {"grid": self.regular.grid.tolist(), "values": self.regular.values.tolist(),
                        "domain": list(self.regular.domain)},
        }
        if X is not None:
            d["J_of_X"] = self.weighted_jump(X)
        return d

    @classmethod
    def from_dict(cls, d):
        reg = d["regular"]
        grid = np.asarray(reg["grid"], dtype=float)
        regular = HybridBVFunction(np.empty(0), np.empty(0), grid, np.asarray(reg["values"], dtype=float),
                                   tuple(reg["domain"]))
        return cls(
            orbit=CriticalOrbitInfo.from_dict(d["orbit"]),
            amplitudes=np.asarray([j["amplitude"] for j in d["jumps"]], dtype=float),
            regular=regular,
            method=d.get("method", "exact"),
            noise_floor=d.get("noise_floor", 0.0),
            below_noise=tuple(d.get("below_noise", ())),
            unresolved=tuple(d.get("unresolved", ())),
            tail=tuple(d["tail"]) if d.get("tail") else None,
        )


def fit_tail(amplitudes):
    """(C, xi) with sum_{k>j} |s_k| <= C xi^j on the computed range."""
    a = np.abs(np.asarray(amplitudes, dtype=float))
    tails = np.cumsum(a[::-1])[::-1]  # tails[j] = sum_{k>j} |s_k| (0-based k)
    j = np.arange(a.size)
    ok = tails > 1e-300
    if ok.sum() < 3:
        return 1.0, 0.0
    slope, _ = np.polyfit(j[ok], np.log(tails[ok]), 1)
    xi = float(min(math.exp(slope), 1.0 - 1e-12))
    C = float(np.max(tails[ok] / xi ** j[ok]))
    return C, xi


def fit_geometric(values):
    """(C, xi) with |v_j| <= C xi^j (j = 1, 2, ...) from a log-linear fit; (0, 0) for a zero sequence."""
    v = np.abs(np.asarray(values, dtype=float))
    j = np.arange(1, v.size + 1)
    ok = v > 1e-300
    if not ok.any():
        return 0.0, 0.0
    if ok.sum() < 3:
        return float(np.max(v)), 0.5
    slope, _ = np.polyfit(j[ok], np.log(v[ok]), 1)
    xi = float(min(math.exp(slope), 1.0 - 1e-12))
    C = float(np.max(v[ok] / xi ** j[ok]))
    return C, xi


def _orbit_depth(orbit: CriticalOrbitInfo):
    return orbit.N if orbit.preperiodic else len(orbit.orbit)


def saltus_decompose(rho, orbit: CriticalOrbitInfo, grid=None, strict=False, depth=None,
                     f: UnimodalMap | None = None) -> SaltusDecomposition:
    """Split a density into its jumps along the critical orbit and a continuous remainder.

    ``rho`` may be a PiecewiseConstantDensity (plateau gaps), a
    HybridBVFunction (one-sided limits) or an UlamDensity (means over offset
    windows that skip the smeared bins next to each orbit point; pass the map
    ``f`` so the skipped width can follow the smear growth along the orbit).
    Jumps of a HybridBVFunction at orbit positions beyond ``depth`` are an
    error, since they cannot be part of a continuous remainder.
    """
    K = depth or _orbit_depth(orbit)
    if len(orbit.orbit) < K:
        raise UnsupportedInput(f"orbit depth {len(orbit.orbit)} < requested {K}")
    pts = np.asarray(orbit.orbit[:K])

    if isinstance(rho, UlamDensity):
        return _decompose_ulam(rho, orbit, pts, strict, f)

    if isinstance(rho, PiecewiseConstantDensity):
        grid = uniform_grid(min(0.0, rho.breakpoints[0]), max(1.0, rho.breakpoints[-1]), 1024) if grid is None else grid
        F = rho.to_hybrid(grid)
        method = "exact"
    elif isinstance(rho, HybridBVFunction):
        F = rho
        method = "hybrid"
    else:
        raise UnsupportedInput(f"cannot decompose {type(rho).__name__}")
    s = F.right_limit(pts) - F.left_limit(pts)
    rho_s = HybridBVFunction(pts, s, F.grid, np.zeros_like(F.grid), F.domain)
    regular = F - rho_s
    if regular.locations.size:
        # jumps off the orbit cannot be absorbed into a continuous part
        raise UnsupportedInput(f"density has jumps off the critical orbit at {regular.locations[:5]}")
    tail = None if orbit.preperiodic else fit_tail(s)
    return SaltusDecomposition(orbit, s, regular, method=method, tail=tail, density=rho)


def _decompose_ulam(rho: UlamDensity, orbit, pts, strict, f=None):
    h = rho.width
    # Ulam smears the jump at c_k over roughly w_k bins, w_1 = 1, w_{k+1} = |f'(c_k)| w_k + 1;
    # the 4-bin windows start beyond that smear unless a neighbouring orbit point is in the way
    if f is not None:
        der = np.abs(f.deriv(pts))
    else:
        der = np.full(pts.size, 1.0)
    s = np.zeros(pts.size)
    unresolved = []
    w = 1.0
    for k, c in enumerate(pts):
        others = np.delete(pts, k)
        room = (np.min(np.abs(others - c)) / h - 5.0) if others.size else np.inf
        skip = 0.5 + math.ceil(w)
        if skip > room:
            unresolved.append(k + 1)
            skip = max(1.5, math.floor(room) + 0.5)
        off = skip + _WINDOW - _WINDOW[0]
        s[k] = np.mean(rho(c + h * off)) - np.mean(rho(c - h * off))
        w = min(der[k] * w + 1.0, 1e12)
    noise = float(4.0 * np.median(np.abs(np.diff(rho.values))) + 1e-12)
    below = tuple(int(k) + 1 for k in np.nonzero(np.abs(s) < noise)[0])
    if strict and below:
        raise JumpBelowNoise(f"jumps at orbit positions {below} are below the noise floor {noise:.3g}")
    # bin averages of the step part: avg over [e_i, e_{i+1}] of H_u is -(clip(u) - e_i)/h
    e = rho.edges
    lo, hi = e[:-1], e[1:]
    avg = np.zeros(rho.bins)
    for u, amp in zip(pts, s):
        avg -= amp * (np.clip(u, lo, hi) - lo) / h
    centers = rho.centers
    regular = HybridBVFunction(np.empty(0), np.empty(0), centers, rho.values - avg, (e[0], e[-1]))
    tail = None if orbit.preperiodic else fit_tail(s)
    return SaltusDecomposition(orbit, s, regular, method="ulam", noise_floor=noise, below_noise=below,
                               tail=tail, density=rho, unresolved=tuple(unresolved))


def weighted_jump(dec: SaltusDecomposition, X: Perturbation):
    """J(f, X) = sum_k s_k X(c_k) and the tail bound of the truncation."""
    return dec.weighted_jump(X), dec.tail_bound(dec.depth)


def jump_sums_markov(dec: SaltusDecomposition, X, n0=None, n1=None):
    """Sums of s_k X(c_k) over k with k + n0 - 1 - l n1 = m (l >= 0), m = n0..n0+n1-1."""
    if dec.orbit.preperiodic is None:
        raise NotMarkov("jump sums need a preperiodic critical orbit")
    n0 = n0 or dec.orbit.n0
    n1 = n1 or dec.orbit.n1
    N = n0 + n1 - 1
    w = dec.amplitudes[:N] * X(dec.locations[:N])
    out = np.zeros(n1)
    for k in range(1, N + 1):
        r = k + n0 - 1
        for m in range(n0, n0 + n1):
            if r >= m and (r - m) % n1 == 0:
                out[m - n0] += w[k - 1]
                break
    return out


def propagation_defects(dec: SaltusDecomposition, f: UnimodalMap):
    """Relative defects of s_{k+1} = s_k / f'(c_k) off merge points, and of the merge law.

    Returns (dict k -> defect for simple points, merge defect or None).
    """
    orb = dec.orbit
    N = dec.depth
    d = f.deriv(dec.locations)
    simple = {}
    merge = None
    entry = orb.n0 if orb.preperiodic else None
    for k in range(2, N + 1):
        if k == entry:
            pred = dec.amplitudes[k - 2] / d[k - 2] + dec.amplitudes[N - 1] / d[N - 1]
            merge = abs(pred - dec.amplitudes[k - 1]) / abs(dec.amplitudes[k - 1])
            continue
        pred = dec.amplitudes[k - 2] / d[k - 2]
        ref = dec.amplitudes[k - 1]
        simple[k] = abs(pred - ref) / max(abs(ref), 1e-300)
    return simple, merge


def twisted_alpha(orbit: CriticalOrbitInfo, f: UnimodalMap, X, depth, term_tol=1e-14):
    """alpha(c_k) = -sum_j X(c_{k+1+j}) / (f^{j+1})'(c_k) for k = 1..depth."""
    lam = f.min_expansion()
    sup_x = float(np.max(np.abs(X(np.linspace(f.a, f.b, 2049))))) or 1.0
    J = max(1, int(math.ceil(math.log(sup_x / term_tol) / math.log(lam))))
    need = depth + J + 2
    if orbit.preperiodic is None and len(orbit.orbit) < need:
        orbit = critical_orbit(f, n_max=need)
        if orbit.preperiodic is None and len(orbit.orbit) < need:
            raise UnsupportedInput("orbit too short for the requested alpha depth")
    K = depth + J + 1
    pts = np.array([orbit.point(k) for k in range(1, K + 1)])
    xs = X(pts)
    ds = f.deriv(pts)
    alpha = np.zeros(depth)
    for k in range(1, depth + 1):
        prod = 1.0
        acc = 0.0
        for j in range(J):
            prod *= ds[k - 1 + j]
            acc += xs[k + j] / prod
        alpha[k - 1] = -acc
    return alpha


def alpha_identity_defect(orbit, f, X, alpha):
    """max_k |X(c_{k+1}) - alpha(c_{k+1}) + f'(c_k) alpha(c_k)|."""
    n = alpha.size
    pts = np.array([orbit.point(k) for k in range(1, n + 1)])
    lhs = X(pts[1:])
    rhs = alpha[1:] - f.deriv(pts[:-1]) * alpha[:-1]
    return float(np.max(np.abs(lhs - rhs))) if n > 1 else 0.0


__all__ = [
    "SaltusDecomposition", "alpha_identity_defect", "fit_geometric", "fit_tail", "jump_sums_markov", "propagation_defects",
    "saltus_decompose", "twisted_alpha", "weighted_jump",
]
