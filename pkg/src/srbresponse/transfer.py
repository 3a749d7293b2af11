"""Transfer operators L1 and L0, Ulam densities and exact tent-map densities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bv import LOCATION_TOL, HybridBVFunction, heaviside_sum, merge_jumps, uniform_grid
from .errors import NoConvergence, NotMarkov, SingularSystem, UnsupportedInput
from .unimodal import TentMap, UnimodalMap, critical_orbit

DEFAULT_BINS = 2 ** 14
DEFAULT_MAX_ITERS = 10_000
DEFAULT_TOL = 1e-10


# ---------------------------------------------------------------------------
# pointwise operators


@dataclass(frozen=True)
class _Preimages:
    chi: np.ndarray
    y_plus: np.ndarray
    y_minus: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray


def _preimages(f: UnimodalMap, x):
    x = np.asarray(x, dtype=float)
    c1 = f.critical_value
    chi = np.where(x < c1 - LOCATION_TOL, 1.0, np.where(x <= c1 + LOCATION_TOL, 0.5, 0.0))
    # inverse branches are only needed where chi > 0
    xx = np.minimum(x, c1)
    return _Preimages(chi, f.psi_plus(xx), f.psi_minus(xx),
                      np.abs(f.dpsi_plus(xx)), np.abs(f.dpsi_minus(xx)))


def _cached_preimages(f: UnimodalMap, grid):
    cache = f.__dict__.setdefault("_preimage_cache", {})
    key = (grid.size, hash(grid.tobytes()))
    pre = cache.get(key)
    if pre is None:
        if len(cache) > 8:
            cache.clear()
        pre = cache[key] = _preimages(f, grid)
    return pre


def apply_L1_pointwise(f: UnimodalMap, func, x):
    """(L1 phi)(x) = chi(x) (psi_+' phi(psi_+ x) + |psi_-'| phi(psi_- x)) for a callable phi."""
    p = _preimages(f, x)
    return p.chi * (p.w_plus * func(p.y_plus) + p.w_minus * func(p.y_minus))


def apply_L0_pointwise(f: UnimodalMap, func, x):
    """(L0 phi)(x) = chi(x) (phi(psi_+ x) - phi(psi_- x)) for a callable phi."""
    p = _preimages(f, x)
    return p.chi * (func(p.y_plus) - func(p.y_minus))


def _check_support(f: UnimodalMap, F: HybridBVFunction):
    if F.locations.size and (F.locations[0] < f.a0 - LOCATION_TOL or F.locations[-1] > f.b + LOCATION_TOL):
        raise UnsupportedInput(f"jumps outside [a0, b] = [{f.a0}, {f.b}]")


def _apply(f: UnimodalMap, F: HybridBVFunction, weighted: bool):
    _check_support(f, F)
    c, c1 = f.c, f.critical_value
    loc, amp = F.locations, F.amplitudes
    off = np.abs(loc - c) > LOCATION_TOL
    u, s = loc[off], amp[off]
    new_loc = f(u) if u.size else np.empty(0)
    new_amp = s / f.deriv(u) if weighted else s.copy()
    Fl, Fr = F.left_limit(c), F.right_limit(c)
    if weighted:
        wp = float(np.abs(f.dpsi_plus(c1)))
        wm = float(np.abs(f.dpsi_minus(c1)))
        left = wp * Fl + wm * Fr
    else:
        left = Fl - Fr
    new_loc = np.append(new_loc, c1)
    new_amp = np.append(new_amp, -left)
    new_loc, new_amp = merge_jumps(new_loc, new_amp)

    p = _cached_preimages(f, F.grid)
    if weighted:
        pointwise = p.chi * (p.w_plus * F(p.y_plus) + p.w_minus * F(p.y_minus))
    else:
        pointwise = p.chi * (F(p.y_plus) - F(p.y_minus))
    values = pointwise - heaviside_sum(new_loc, new_amp, F.grid)
    return HybridBVFunction(new_loc, new_amp, F.grid, values, F.domain)


def apply_L1(f: UnimodalMap, F: HybridBVFunction) -> HybridBVFunction:
    """Transfer operator on densities; jumps move to their images with amplitude s/f'(u)."""
    return _apply(f, F, weighted=True)


def apply_L0(f: UnimodalMap, F: HybridBVFunction) -> HybridBVFunction:
    """Pullback-on-primitives operator; jumps move to their images with unchanged amplitude."""
    return _apply(f, F, weighted=False)


def iterate(op, f, F, n):
    out = [F]
    for _ in range(n):
        out.append(op(f, out[-1]))
    return out


def variation(F: HybridBVFunction) -> float:
    return F.variation()


def nu_functional(f: UnimodalMap, func):
    """nu(phi) = phi(b0) - phi(a0), the functional fixed by L0."""
    return float(func(f.b0) - func(f.a0))


def conjugacy_defect(f: UnimodalMap, phi, cells, exclude=2.0):
    """sup |(L0 phi)' - L1(phi')| with a forward difference on a uniform grid.

    Points within ``exclude`` grid spacings of f(c) are skipped (L0 phi has
    a corner there unless phi' vanishes at c).
    """
    dphi = phi.deriv()
    x = np.linspace(f.a0, f.b, cells + 1)
    h = x[1] - x[0]
    g0 = apply_L0_pointwise(f, phi, x)
    fd = np.diff(g0) / h
    ref = apply_L1_pointwise(f, dphi, x[:-1])
    c1 = f.critical_value
    mask = (np.abs(x[:-1] - c1) > exclude * h) & (np.abs(x[1:] - c1) > exclude * h)
    return float(np.max(np.abs(fd - ref)[mask])), h


# ---------------------------------------------------------------------------
# Ulam discretisation


@dataclass(frozen=True, eq=False)
class UlamDensity:
    edges: np.ndarray
    values: np.ndarray
    iterations: int
    residual: float
    residual_history: tuple = field(default=(), repr=False)
    ratio: float | None = None

    @property
    def bins(self):
        return self.values.size

    @property
    def width(self):
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.bins - 1)
        inside = (x >= self.edges[0]) & (x <= self.edges[-1])
        out = np.where(inside, self.values[i], 0.0)
        return out if out.ndim else float(out)

    def integral(self):
        return float(np.sum(self.values * np.diff(self.edges)))

    def integrate(self, phi):
        """int phi rho dx, exact bin by bin through a primitive of phi."""
        P = phi.primitive(self.edges)
        return float(np.sum(self.values * np.diff(P)))

    def l1_distance(self, other):
        if not np.array_equal(self.edges, other.edges):
            raise UnsupportedInput("Ulam densities on different bins")
        return float(np.sum(np.abs(self.values - other.values) * np.diff(self.edges)))

    def to_dict(self):
        return {"edges": self.edges.tolist(), "values": self.values.tolist(), "iterations": self.iterations,
                "residual": self.residual, "ratio": self.ratio}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["edges"], dtype=float), np.asarray(d["values"], dtype=float),
                   int(d["iterations"]), float(d["residual"]), ratio=d.get("ratio"))

    def to_csv(self, header=()):
        lines = [f"# {h}" for h in header] + ["x,value"]
        lines += [f"{x:.17g},{v:.17g}" for x, v in zip(self.centers, self.values)]
        return "\n".join(lines) + "\n"


def _preimage_transitions(f: UnimodalMap, edges):
    """Exact fraction of bin i's mass landing in bin j, from the inverse branches.

    The preimage of a target bin under either branch is shorter than a bin
    (|psi'| < 1), so it meets at most two source bins.
    """
    n = edges.size - 1
    h = edges[1] - edges[0]
    c1 = f.critical_value
    valid = edges[:-1] < c1
    j = np.nonzero(valid)[0]
    lo_t, hi_t = edges[:-1][valid], np.minimum(edges[1:][valid], c1)
    R, C, D = [], [], []
    for psi in (f.psi_plus, f.psi_minus):
        p, q = psi(lo_t), psi(hi_t)
        a = np.clip(np.minimum(p, q), edges[0], edges[-1])
        b = np.clip(np.maximum(p, q), edges[0], edges[-1])
        i0 = np.clip(np.floor((a - edges[0]) / h).astype(int), 0, n - 1)
        for k in range(3):
            i = i0 + k
            ok = i < n
            ii = np.where(ok, i, 0)
            overlap = np.minimum(b, edges[ii + 1]) - np.maximum(a, edges[ii])
            w = np.where(ok & (overlap > 0), overlap / h, 0.0)
            nz = w > 0
            R.append(ii[nz])
            C.append(j[nz])
            D.append(w[nz])
    return np.concatenate(R), np.concatenate(C), np.concatenate(D)


def _quadrature_transitions(f: UnimodalMap, edges, points=64):
    n = edges.size - 1
    h = edges[1] - edges[0]
    offs = (np.arange(points) + 0.5) / points
    x = edges[:-1, None] + h * offs[None, :]
    y = f(x.ravel())
    cols = np.clip(np.floor((y - edges[0]) / h).astype(int), 0, n - 1)
    rows = np.repeat(np.arange(n), points)
    return rows, cols, np.full(rows.size, 1.0 / points)


def ulam_matrix(f: UnimodalMap, bins, domain=None, method="preimage"):
    """Row-stochastic bin-to-bin transition matrix (CSR) and bin edges.

    ``method="preimage"`` intersects bins with exact preimages of bins;
    ``method="quadrature"`` pushes 64 sample points per bin forward.
    """
    if bins < 64:
        raise UnsupportedInput("need at least 64 bins")
    a0, b = domain or (f.a0, f.b)
    edges = np.linspace(a0, b, bins + 1)
    if method == "preimage":
        rows, cols, data = _preimage_transitions(f, edges)
    elif method == "quadrature":
        rows, cols, data = _quadrature_transitions(f, edges)
    else:
        raise UnsupportedInput(f"unknown Ulam method {method!r}")
    P = sp.coo_matrix((data, (rows, cols)), shape=(bins, bins)).tocsr()
    return P, edges


def invariant_density_ulam(f: UnimodalMap, bins=DEFAULT_BINS, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL,
                           lazy=True, method="preimage") -> UlamDensity:
    """Power iteration for the Ulam fixed density, started from the uniform density.

    With ``lazy`` the update is m <- (m + P^T m)/2, which has the same fixed
    vector but damps an eigenvalue -1 (present for renormalizable maps such
    as the slope sqrt(2) tent map).
    """
    P, edges = ulam_matrix(f, bins, method=method)
    PT = P.T.tocsr()
    m = np.full(bins, 1.0 / bins)
    history = []
    res = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        pm = PT @ m
        res = float(np.sum(np.abs(pm - m)))
        history.append(res)
        if res <= tol:
            m = pm
            break
        m = 0.5 * (m + pm) if lazy else pm
        m /= m.sum()
    else:
        raise NoConvergence(f"Ulam power iteration residual {res:.3g} > {tol} after {max_iters} iterations")
    m /= m.sum()
    values = m / np.diff(edges)
    return UlamDensity(edges, values, it, res, tuple(history), _geometric_ratio(history))


def _geometric_ratio(history):
    h = np.asarray([r for r in history if r > 0])
    if h.size < 4:
        return None
    tail = h[h.size // 2:]
    ratios = tail[1:] / tail[:-1]
    return float(np.exp(np.mean(np.log(ratios))))


def invariant_density_hybrid(f: UnimodalMap, cells=DEFAULT_BINS, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS,
                             lazy=True):
    """Fixed density of L1 iterated on jump-plus-grid functions.

    Jumps are transported exactly to the critical orbit, so the result
    carries sharp discontinuities at c_1, c_2, ... and a continuous regular
    part on a uniform grid over [a0, b]. Convergence is measured by the
    variation of successive differences.
    """
    grid = uniform_grid(f.a0, f.b, cells)
    # continuous start: every jump of the iterates is then created at c_1
    w = f.b - f.a0
    F = HybridBVFunction.from_function(lambda x: 6.0 * (x - f.a0) * (f.b - x) / w ** 3, grid, domain=(f.a0, f.b))
    diff = np.inf
    for it in range(1, max_iters + 1):
        G = apply_L1(f, F)
        if lazy:
            G = 0.5 * (F + G)
        G = G * (1.0 / G.integral())
        diff = (G - F).variation()
        F = G
        if diff <= tol:
            return F, it, diff
    raise NoConvergence(f"hybrid power iteration: variation of update {diff:.3g} > {tol}")


# ---------------------------------------------------------------------------
# exact densities of preperiodic tent maps


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDensity:
    breakpoints: np.ndarray
    plateaus: np.ndarray
    residual: float = 0.0

    @property
    def support(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def cell_lengths(self):
        return np.diff(self.breakpoints)

    def __call__(self, x):
        return self.to_hybrid(np.array([0.0, 1.0]))(x)

    def plateau_at(self, x):
        i = np.searchsorted(self.breakpoints, x, side="right") - 1
        if not 0 <= i < self.plateaus.size:
            return 0.0
        return float(self.plateaus[i])

    def integral(self):
        return float(np.sum(self.plateaus * self.cell_lengths))

    def integrate(self, phi):
        P = phi.primitive(self.breakpoints)
        return float(np.sum(self.plateaus * np.diff(P)))

    def jumps(self):
        """(locations, right-minus-left amplitudes) at every breakpoint."""
        padded = np.concatenate(([0.0], self.plateaus, [0.0]))
        return self.breakpoints.copy(), np.diff(padded)

    def to_hybrid(self, grid, domain=None):
        loc, amp = self.jumps()
        grid = np.asarray(grid, dtype=float)
        return HybridBVFunction(loc, amp, grid, np.zeros_like(grid), domain or (grid[0], grid[-1]))

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "plateaus": self.plateaus.tolist(),
                "residual": self.residual}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["breakpoints"], dtype=float), np.asarray(d["plateaus"], dtype=float),
                   float(d.get("residual", 0.0)))


def orbit_partition(info, tol=1e-10):
    """Sorted distinct orbit points c_1..c_N."""
    pts = np.sort(info.points(info.N))
    keep = np.concatenate(([True], np.diff(pts) > tol))
    return pts[keep]


def invariant_density_exact_tent(g: TentMap, info=None) -> PiecewiseConstantDensity:
    """Plateau values on the partition of [c_2, c_1] cut by the critical orbit.

    Each plateau equals the sum over its two inverse-branch preimages of the
    preimage plateau divided by the slope; the normalisation row makes the
    system uniquely solvable.
    """
    info = info or critical_orbit(g)
    if info.preperiodic is None:
        raise NotMarkov("critical orbit not detected to be preperiodic")
    # a slope given to finitely many digits closes its orbit only approximately;
    # the fixed-point residual then scales with the revisit defect
    n0, n1 = info.preperiodic
    defect = abs(info.orbit[n0 + n1 - 1] - info.orbit[n0 - 1]) if len(info.orbit) >= n0 + n1 else 0.0
    return tent_plateaus(g, orbit_partition(info), residual_tol=max(1e-12, 10.0 * defect))


def tent_plateaus(g: TentMap, breakpoints, residual_tol=1e-12) -> PiecewiseConstantDensity:
    """Solve the plateau fixed-point system on a given forward-invariant partition.

    ``breakpoints`` must be the sorted critical orbit points c_1..c_N of a
    preperiodic orbit, so that every cell maps onto a union of cells.
    """
    bp = np.asarray(breakpoints, dtype=float)
    n = bp.size - 1
    mid = 0.5 * (bp[1:] + bp[:-1])
    M = np.zeros((n, n))
    for psi in (g.psi_plus, g.psi_minus):
        pre = psi(mid)
        inside = (pre > bp[0]) & (pre < bp[-1])
        i = np.searchsorted(bp, pre, side="right") - 1
        for j in np.nonzero(inside)[0]:
            M[j, i[j]] += 1.0 / g.slope
    A = np.vstack((M - np.eye(n), np.diff(bp)[None, :]))
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    if np.linalg.matrix_rank(A) < n:
        raise SingularSystem("plateau system is rank deficient")
    gamma, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    residual = float(np.max(np.abs(M @ gamma - gamma)))
    scale = max(1.0, float(np.max(np.abs(gamma))))
    if residual > residual_tol * scale or abs(gamma @ np.diff(bp) - 1.0) > residual_tol:
        raise SingularSystem(f"plateau residual {residual:.3g} too large")
    if np.any(gamma < -1e-12):
        raise SingularSystem("negative plateau")
    return PiecewiseConstantDensity(bp, gamma, residual)


def tent_density_jump_series(g: TentMap, depth=None, tol=1e-17):
    """Jump amplitudes of the tent density from the orbit series.

    s_{k+1} = s_k / g'(c_k), normalised so that -sum s_k (c_k - a0) = 1.
    Coincident orbit points are merged. Valid with or without preperiodicity.
    """
    x = g.c
    locs, sig = [], []
    sigma = 1.0
    cap = depth or 20_000
    for k in range(cap):
        x = float(g(x))
        locs.append(x)
        sig.append(sigma)
        sigma /= float(g.deriv(x))
        if depth is None and abs(sigma) < tol:
            break
    locs, sig = np.asarray(locs), np.asarray(sig)
    s1 = -1.0 / np.sum(sig * (locs - g.a0))
    return merge_jumps(locs, s1 * sig, tol=1e-10, prune=0.0)


# ---------------------------------------------------------------------------
# Lasota-Yorke diagnostic


@dataclass(frozen=True)
class LasotaYorkeReport:
    contraction: float
    m_values: tuple
    constants: tuple  # fitted D'_m over the inputs, per m
    worst_ratio: tuple  # max var(L1^m phi)/var(phi) per m

    @property
    def D_prime(self):
        return max(self.constants)

    def to_dict(self):
        return {"contraction": self.contraction, "m": list(self.m_values), "D_prime": list(self.constants),
                "worst_ratio": list(self.worst_ratio)}


def lasota_yorke_diagnostic(f: UnimodalMap, inputs, m_max=10):
    """Smallest D'_m with var(L1^m phi) <= lam^m var(phi) + D'_m |phi|_1 over the inputs."""
    lam = 1.0 / f.min_expansion()
    consts = np.zeros(m_max)
    worst = np.zeros(m_max)
    for phi in inputs:
        v0, n0 = phi.variation(), phi.l1_norm()
        F = phi
        for m in range(1, m_max + 1):
            F = apply_L1(f, F)
            vm = F.variation()
            consts[m - 1] = max(consts[m - 1], max(vm - lam ** m * v0, 0.0) / n0)
            worst[m - 1] = max(worst[m - 1], vm / v0)
    return LasotaYorkeReport(lam, tuple(range(1, m_max + 1)), tuple(consts.tolist()), tuple(worst.tolist()))


__all__ = [
    "apply_L0", "apply_L1", "apply_L0_pointwise", "apply_L1_pointwise", "conjugacy_defect", "iterate",
    "invariant_density_exact_tent", "invariant_density_hybrid", "invariant_density_ulam", "lasota_yorke_diagnostic", "LasotaYorkeReport",
    "nu_functional", "orbit_partition", "PiecewiseConstantDensity", "tent_density_jump_series", "tent_plateaus",
    "ulam_matrix",
    "UlamDensity", "uniform_grid", "variation",
]
