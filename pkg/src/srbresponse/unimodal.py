"""Unimodal piecewise expanding maps, critical orbits and kneading codes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import CodeNotRealizable, DomainEscape, NearCriticalOrbit, NoConvergence, UnsupportedInput
from .observables import Perturbation

PREPERIODIC_TOL = 1e-10
CRITICAL_TOL = 1e-9
SQRT2 = math.sqrt(2.0)


def _newton_inverse(func, dfunc, y, x0, iters=60, tol=1e-15):
    """Vectorised Newton solve of func(x) = y for a monotone func."""
    x = np.array(x0, dtype=float, copy=True)
    y = np.asarray(y, dtype=float)
    for _ in range(iters):
        step = (func(x) - y) / dfunc(x)
        x = x - step
        if np.all(np.abs(step) <= tol * (1.0 + np.abs(x))):
            break
    else:
        if np.max(np.abs(func(x) - y)) > 1e-12:
            raise NoConvergence("inverse branch Newton iteration did not converge")
    return x


class UnimodalMap:
    """A continuous unimodal map of [a, b], increasing on [a, c], decreasing on [c, b].

    Branch callables must accept numpy arrays and may be evaluated outside
    their natural interval (they act as the smooth extensions used for the
    inverse branches psi_+ : (-inf, f(c)] -> (-inf, c] and
    psi_- : (-inf, f(c)] -> [c, inf)).
    """

    piecewise_linear = False

    def __init__(self, a, b, c, branch_plus, branch_minus, deriv_plus, deriv_minus,
                 inv_plus, inv_minus, deriv2_plus=None, deriv2_minus=None, name=None, check=True):
        if not a < c < b:
            raise UnsupportedInput(f"need a < c < b, got {a}, {c}, {b}")
        self.a, self.b, self.c = float(a), float(b), float(c)
        self.branch_plus, self.branch_minus = branch_plus, branch_minus
        self.deriv_plus, self.deriv_minus = deriv_plus, deriv_minus
        self.deriv2_plus = deriv2_plus or (lambda x: np.zeros_like(np.asarray(x, dtype=float)))
        self.deriv2_minus = deriv2_minus or (lambda x: np.zeros_like(np.asarray(x, dtype=float)))
        self.inv_plus, self.inv_minus = inv_plus, inv_minus
        self.name = name or type(self).__name__
        self.a0 = self._find_a0()
        self.b0 = float(self.psi_minus(self.a0))
        if check:
            self.validate()

    # -- pointwise -----------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.c, self.branch_plus(x), self.branch_minus(x))
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.c, self.deriv_plus(x), self.deriv_minus(x))
        return out if out.ndim else float(out)

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.c, self.deriv2_plus(x), self.deriv2_minus(x))
        return out if out.ndim else float(out)

    def psi_plus(self, y):
        return self.inv_plus(np.asarray(y, dtype=float))

    def psi_minus(self, y):
        return self.inv_minus(np.asarray(y, dtype=float))

    def dpsi_plus(self, y):
        return 1.0 / self.deriv_plus(self.psi_plus(y))

    def dpsi_minus(self, y):
        return 1.0 / self.deriv_minus(self.psi_minus(y))

    @property
    def critical_value(self):
        return float(self.branch_plus(np.float64(self.c)))

    def _find_a0(self):
        g = lambda y: float(self.psi_plus(y)) - y
        hi = self.a
        if abs(g(hi)) <= 1e-15:
            return hi
        if g(hi) > 0:
            raise UnsupportedInput("psi_+ has no fixed point to the left of a")
        span = self.b - self.a
        lo = hi - span
        while g(lo) < 0:
            lo -= span
            if hi - lo > 1e3 * span:
                raise UnsupportedInput("could not bracket the fixed point of psi_+")
        return float(brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))

    # -- checks --------------------------------------------------------
    def min_expansion(self, samples=4097):
        xp = np.linspace(self.a, self.c, samples)
        xm = np.linspace(self.c, self.b, samples)
        return float(min(np.min(np.abs(self.deriv_plus(xp))), np.min(np.abs(self.deriv_minus(xm)))))

    def validate(self, samples=2049):
        xp = np.linspace(self.a, self.c, samples)
        xm = np.linspace(self.c, self.b, samples)
        fp, fm = self.branch_plus(xp), self.branch_minus(xm)
        if np.any(np.diff(fp) <= 0) or np.any(np.diff(fm) >= 0):
            raise UnsupportedInput(f"{self.name}: branches are not strictly monotone")
        if self.min_expansion() <= 1.0:
            raise UnsupportedInput(f"{self.name}: inf |f'| <= 1")
        if self.critical_value > self.b + 1e-15 or min(fp[0], fm[-1]) < self.a - 1e-15:
            raise DomainEscape(f"{self.name}: f does not map [a, b] into itself")
        err = max(np.max(np.abs(self.psi_plus(fp) - xp)), np.max(np.abs(self.psi_minus(fm) - xm)))
        if err > 1e-9:
            raise UnsupportedInput(f"{self.name}: inverse branches inaccurate ({err:.3g})")
        if abs(float(self.psi_plus(self.a0)) - self.a0) > 1e-12 or self.b0 < self.b - 1e-12:
            raise UnsupportedInput(f"{self.name}: bad a0/b0")

    def spec(self):
        return {"family": "generic", "name": self.name}

    def __repr__(self):
        return f"<{self.name}>"


class TentMap(UnimodalMap):
    """g(x) = s x on [0, 1/2], s - s x on [1/2, 1] with slope s in (1, 2]."""

    piecewise_linear = True

    def __init__(self, slope, check=True):
        s = float(slope)
        if not 1.0 < s <= 2.0:
            raise UnsupportedInput(f"tent slope must lie in (1, 2], got {s}")
        self.slope = s
        super().__init__(
            0.0, 1.0, 0.5,
            branch_plus=lambda x: s * x,
            branch_minus=lambda x: s - s * x,
            deriv_plus=lambda x: np.full_like(np.asarray(x, dtype=float), s),
            deriv_minus=lambda x: np.full_like(np.asarray(x, dtype=float), -s),
            inv_plus=lambda y: y / s,
            inv_minus=lambda y: 1.0 - y / s,
            name=f"tent({s!r})",
            check=check,
        )

    @property
    def fixed_point(self):
        return self.slope / (1.0 + self.slope)

    @property
    def fixed_point_preimage(self):
        """y = 1/(1+s), the preimage of the fixed point in [0, 1/2]."""
        return 1.0 / (1.0 + self.slope)

    @property
    def second_preimage(self):
        return self.fixed_point_preimage / self.slope

    def spec(self):
        return {"family": "tent", "slope": self.slope}


class PerturbedMap(UnimodalMap):
    """f_t = f + t X(f) for a base unimodal map f."""

    def __init__(self, base: UnimodalMap, X: Perturbation, t, check=True):
        self.base, self.X, self.t = base, X, float(t)
        t = self.t
        Xf, dX = X.func, X.deriv_function()
        d2X = dX.deriv()
        F = lambda y: y + t * Xf(y)
        dF = lambda y: 1.0 + t * dX(y)
        d2F = lambda y: t * d2X(y)
        Finv = lambda y: _newton_inverse(F, dF, y, y)
        self._F, self._dF = F, dF
        _check_admissible(base, X, t)
        fp, fm = base.branch_plus, base.branch_minus
        dp, dm = base.deriv_plus, base.deriv_minus
        super().__init__(
            base.a, base.b, base.c,
            branch_plus=lambda x: F(fp(x)),
            branch_minus=lambda x: F(fm(x)),
            deriv_plus=lambda x: dF(fp(x)) * dp(x),
            deriv_minus=lambda x: dF(fm(x)) * dm(x),
            deriv2_plus=lambda x: d2F(fp(x)) * dp(x) ** 2 + dF(fp(x)) * base.deriv2_plus(x),
            deriv2_minus=lambda x: d2F(fm(x)) * dm(x) ** 2 + dF(fm(x)) * base.deriv2_minus(x),
            inv_plus=lambda y: base.psi_plus(Finv(y)),
            inv_minus=lambda y: base.psi_minus(Finv(y)),
            name=f"{base.name}+{t!r}*{X.func.label}",
            check=check,
        )

    def as_tent(self):
        """The same map as a TentMap when the base is a tent map and X is the identity."""
        if isinstance(self.base, TentMap) and self.X.is_identity:
            return TentMap(self.base.slope * (1.0 + self.t))
        return None

    def spec(self):
        d = {"family": "perturbed", "base": self.base.spec(), "t": self.t}
        if self.X.func.is_global_polynomial:
            d["X_poly"] = self.X.func.coefficients()
        return d


def _check_admissible(f: UnimodalMap, X: Perturbation, t):
    ft = lambda x: f(x) + t * X(f(x))
    if ft(f.c) > f.b + 1e-15 or min(ft(f.a), ft(f.b)) < f.a - 1e-15:
        raise DomainEscape(f"t={t} pushes f_t outside [{f.a}, {f.b}]")
    y = np.linspace(f.a, f.b, 4097)
    if np.any(1.0 + t * X.deriv(y) <= 0.0):
        raise DomainEscape(f"t={t}: y + tX(y) is not increasing, f_t loses unimodality")


def eval_perturbed(f: UnimodalMap, X: Perturbation, t, x):
    """f_t(x) = f(x) + t X(f(x)), after checking that f_t maps [a, b] into itself."""
    _check_admissible(f, X, t)
    y = f(x)
    return y + t * X(y)


def perturbed_map(f: UnimodalMap, X: Perturbation, t) -> UnimodalMap:
    if t == 0.0 or X.is_zero:
        return f
    pm = PerturbedMap(f, X, t)
    tent = pm.as_tent()
    return tent if tent is not None else pm


# ---------------------------------------------------------------------------
# critical orbit


@dataclass(frozen=True)
class CriticalOrbitInfo:
    orbit: tuple
    code: str
    c: float
    preperiodic: tuple | None = None
    tol: float = PREPERIODIC_TOL
    derivs: tuple = field(default=(), compare=False)

    @property
    def n0(self):
        return self.preperiodic[0] if self.preperiodic else None

    @property
    def n1(self):
        return self.preperiodic[1] if self.preperiodic else None

    @property
    def N(self):
        if self.preperiodic:
            return self.preperiodic[0] + self.preperiodic[1] - 1
        return len(self.orbit)

    def index(self, k):
        """Canonical index in 1..N of c_k (periodic folding in the Markov case)."""
        if k < 1:
            raise IndexError(k)
        if self.preperiodic is None or k <= self.N:
            return k
        n0, n1 = self.preperiodic
        return n0 + (k - n0) % n1

    def point(self, k):
        k = self.index(k)
        if k > len(self.orbit):
            raise IndexError(f"orbit only computed to depth {len(self.orbit)}")
        return self.orbit[k - 1]

    def deriv_at(self, k):
        return self.derivs[self.index(k) - 1]

    def points(self, k_max=None):
        k_max = self.N if k_max is None else k_max
        return np.array([self.point(k) for k in range(1, k_max + 1)])

    def code_to(self, depth):
        return "".join(self.code[self.index(k) - 1] for k in range(1, depth + 1))

    def to_dict(self):
        return {"orbit": list(self.orbit), "code": self.code, "c": self.c,
                "preperiodic": list(self.preperiodic) if self.preperiodic else None,
                "N": self.N, "tol": self.tol, "derivs": list(self.derivs)}

    @classmethod
    def from_dict(cls, d):
        pre = d.get("preperiodic")
        return cls(orbit=tuple(d["orbit"]), code=d["code"], c=d["c"],
                   preperiodic=tuple(pre) if pre else None, tol=d.get("tol", PREPERIODIC_TOL),
                   derivs=tuple(d.get("derivs", ())))


def critical_orbit(f: UnimodalMap, n_max=64, tol=PREPERIODIC_TOL, critical_tol=CRITICAL_TOL):
    """Iterate the critical point, detecting preperiodicity within ``tol``.

    The first revisit |c_j - c_i| <= tol (scanning every earlier i) fixes
    n0 = i and n1 = j - i; the orbit is then extended to depth n0 + 2 n1 - 1.
    """
    if n_max < 2 or tol <= 0:
        raise UnsupportedInput("need n_max >= 2 and tol > 0")
    pts = []
    x = f.c
    pre = None
    stop = n_max
    j = 0
    while j < stop:
        j += 1
        x = float(f(x))
        if abs(x - f.c) < critical_tol:
            raise NearCriticalOrbit(f"|c_{j} - c| = {abs(x - f.c):.3g} < {critical_tol}")
        pts.append(x)
        if pre is None:
            prev = np.asarray(pts[:-1])
            hits = np.nonzero(np.abs(prev - x) <= tol)[0]
            if hits.size:
                i = int(hits[-1]) + 1
                pre = (i, j - i)
                stop = min(n_max, i + 2 * (j - i) - 1)
                stop = max(stop, j)
    pts = tuple(pts)
    code = "".join("L" if p < f.c else "R" for p in pts)
    derivs = tuple(float(v) for v in f.deriv(np.asarray(pts)))
    return CriticalOrbitInfo(orbit=pts, code=code, c=f.c, preperiodic=pre, tol=tol, derivs=derivs)


def kneading_code(f: UnimodalMap, n):
    """First n symbols of the itinerary of c_1 (R when c_j > c, L when c_j < c)."""
    info = critical_orbit(f, n_max=max(n, 2))
    if info.preperiodic is None and len(info.orbit) < n:
        raise NearCriticalOrbit("orbit too short")
    return info.code_to(n)


# ---------------------------------------------------------------------------
# codes and tent parameters

_TOKEN = re.compile(r"\s*(?:(?P<sym>[LR])|(?P<open>\()|(?P<close>\))|(?P<pow>\^\s*(?P<exp>\d+|∞|inf))|(?P<star>\*))")


def parse_code(text):
    """Parse an eventually periodic code such as ``RL^2R*`` or ``R L (R L)^∞``.

    Returns (prefix, period) as strings; ``*``, ``^∞`` and ``^inf`` mark the
    infinitely repeated final block.
    """
    text = text.strip()
    pos = 0
    stack = [[]]
    period = None
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise UnsupportedInput(f"cannot parse code {text!r} at position {pos}")
        pos = m.end()
        if period is not None:
            raise UnsupportedInput(f"symbols after the infinite block in {text!r}")
        if m.group("sym"):
            stack[-1].append(m.group("sym"))
        elif m.group("open"):
            stack.append([])
        elif m.group("close"):
            if len(stack) < 2:
                raise UnsupportedInput(f"unbalanced ')' in {text!r}")
            grp = "".join(stack.pop())
            stack[-1].append(grp)
        else:
            if not stack[-1]:
                raise UnsupportedInput(f"dangling exponent in {text!r}")
            last = stack[-1].pop()
            exp = m.group("exp")
            if m.group("star") or exp in ("∞", "inf"):
                if len(stack) != 1:
                    raise UnsupportedInput("infinite repetition inside a group")
                period = last
            else:
                stack[-1].append(last * int(exp))
    if len(stack) != 1:
        raise UnsupportedInput(f"unbalanced '(' in {text!r}")
    if period is None:
        raise UnsupportedInput(f"code {text!r} has no periodic tail")
    return normalize_code("".join(stack[0]), period)


def normalize_code(prefix, period):
    """Minimal (prefix, period) representation of prefix + period^inf."""
    if not period or set(prefix + period) - {"L", "R"}:
        raise UnsupportedInput("codes use the symbols L and R with a nonempty period")
    n = len(period)
    for d in range(1, n + 1):
        if n % d == 0 and period[:d] * (n // d) == period:
            period = period[:d]
            break
    while prefix and prefix[-1] == period[-1]:
        prefix, period = prefix[:-1], period[-1] + period[:-1]
    return prefix, period


def format_code(prefix, period):
    return f"{prefix}({period})^inf" if len(period) > 1 else f"{prefix}{period}^inf"


def expand_code(prefix, period, depth):
    out = prefix
    while len(out) < depth:
        out += period
    return out[:depth]


def kneading_compare(s1, s2):
    """Compare itineraries in the unimodal (parity-twisted) order.

    Symbols are ordered L < C < R; each R before the first difference flips
    the comparison. Returns -1, 0 or 1; kneading sequences of tent maps
    increase with the slope in this order.
    """
    rank = {"L": 0, "C": 1, "R": 2}
    flips = 0
    for a, b in zip(s1, s2):
        if a != b:
            sign = 1 if rank[a] > rank[b] else -1
            return -sign if flips % 2 else sign
        if a == "R":
            flips += 1
    return 0


def tent_itinerary(slope, depth):
    x = 0.5
    out = []
    for _ in range(depth):
        x = slope * x if x <= 0.5 else slope * (1.0 - x)
        out.append("L" if x < 0.5 else ("R" if x > 0.5 else "C"))
    return "".join(out)


def tent_orbit(slope, depth):
    x = 0.5
    out = np.empty(depth)
    for j in range(depth):
        x = slope * x if x <= 0.5 else slope * (1.0 - x)
        out[j] = x
    return out


def code_closure_residual(slope, prefix, period):
    """c_{n0+n1} - c_{n0} along the true orbit, n0 = len(prefix) + 1, n1 = len(period)."""
    n0, n1 = len(prefix) + 1, len(period)
    orb = tent_orbit(slope, n0 + n1)
    return float(orb[n0 + n1 - 1] - orb[n0 - 1])


def _best_float(candidates, residual, admissible=lambda s: True):
    best = None
    for s in candidates:
        if not admissible(s):
            continue
        r = abs(residual(s))
        if best is None or r < best[0]:
            best = (r, s)
    return best


def _float_neighbours(x, lo, hi, spread=8):
    out = {x}
    y = x
    for _ in range(spread):
        y = np.nextafter(y, -np.inf)
        out.add(float(y))
    y = x
    for _ in range(spread):
        y = np.nextafter(y, np.inf)
        out.add(float(y))
    return sorted(s for s in out if lo <= s <= hi)


def solve_code_parameter(code, max_iter=200, width=1e-14):
    """Tent slope in (1, 2] whose kneading sequence is the given eventually periodic code.

    Bisection on the kneading order brackets the slope; the bracket is then
    scanned float by float for the smallest closure residual
    |c_{n0+n1} - c_{n0}| among slopes whose itinerary matches the code.
    """
    prefix, period = parse_code(code) if isinstance(code, str) else normalize_code(*code)
    if (prefix + period)[0] != "R":
        raise CodeNotRealizable("kneading codes of tent maps start with R")
    depth = len(prefix) + 4 * len(period) + 200
    target = expand_code(prefix, period, depth)
    n_check = len(prefix) + 2 * len(period) + 1
    check = expand_code(prefix, period, n_check)

    def cmp(s):
        return kneading_compare(tent_itinerary(s, depth), target)

    lo, hi = 1.0 + 1e-9, 2.0
    if cmp(hi) < 0 or cmp(lo) > 0:
        raise CodeNotRealizable(f"code {format_code(prefix, period)} lies outside the tent family")
    if tent_itinerary(hi, n_check) == check and abs(code_closure_residual(hi, prefix, period)) <= 1e-12:
        return hi
    for _ in range(max_iter):
        if hi - lo <= width:
            break
        mid = 0.5 * (lo + hi)
        c = cmp(mid)
        if c < 0:
            lo = mid
        elif c > 0:
            hi = mid
        else:
            lo = hi = mid
            break
    else:
        raise NoConvergence("kneading bisection exhausted its iteration cap")
    mid = 0.5 * (lo + hi)
    G = lambda s: code_closure_residual(s, prefix, period)
    # the itinerary only pins the slope down to where orbit errors saturate;
    # the closure residual has a simple zero at the true slope
    w = 1e-14
    while w < 1e-4:
        a, b = max(1.0, mid - w), min(2.0, mid + w)
        if G(a) * G(b) < 0:
            mid = brentq(G, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps)
            break
        w *= 2.0
    candidates = set(_float_neighbours(mid, 1.0, 2.0, spread=64))
    best = _best_float(
        sorted(candidates),
        lambda s: code_closure_residual(s, prefix, period),
        admissible=lambda s: tent_itinerary(s, n_check) == check,
    )
    if best is None:
        raise CodeNotRealizable(f"no slope realizes {format_code(prefix, period)}")
    if best[0] > PREPERIODIC_TOL:
        raise CodeNotRealizable(
            f"closure residual {best[0]:.3g} for {format_code(prefix, period)}; code not realized"
        )
    # an orbit through the turning point only reaches the code as a limit of neighbouring codes
    if np.min(np.abs(tent_orbit(best[1], n_check) - 0.5)) < CRITICAL_TOL:
        raise CodeNotRealizable(f"{format_code(prefix, period)} needs a critical orbit through the turning point")
    return float(best[1])


def lambda_k_closure(slope, k):
    """c_{k+1}(s) - y_s along the true orbit."""
    return float(tent_orbit(slope, k + 1)[k] - 1.0 / (1.0 + slope))


def lambda_k_family(k, max_iter=200):
    """Slope lambda_k with code R L^k R^inf, i.e. c_{k+1} = 1/(1 + lambda_k).

    Solves s^k (2 - s)(1 + s) = 2 by fixed-point steps s <- 2 - 2/((1+s) s^k)
    safeguarded by bisection, then picks the float with the smallest closure
    residual.
    """
    if k < 1:
        raise UnsupportedInput("k must be >= 1")
    q = lambda s: s ** k * (2.0 - s) * (1.0 + s) - 2.0
    lo, hi = (1.2, 2.0) if k == 1 else (SQRT2, 2.0)
    s, qs = hi, abs(q(hi))
    for _ in range(max_iter):
        trial = 2.0 - 2.0 / ((1.0 + s) * s ** k)
        if not lo < trial < hi or abs(q(trial)) > 0.9 * qs:
            trial = 0.5 * (lo + hi)
        if q(trial) > 0:
            lo = trial
        else:
            hi = trial
        done = abs(trial - s) <= 1e-16 or hi - lo <= 1e-15
        s, qs = trial, abs(q(trial))
        if done or qs == 0.0:
            break
    else:
        raise NoConvergence(f"lambda_k solve for k={k} did not converge")
    best = _best_float(_float_neighbours(s, 1.0, 2.0, spread=16), lambda v: lambda_k_closure(v, k))
    s = float(best[1])
    rhs = 2.0 / (1.0 + s) * s ** (-k)
    if abs((2.0 - s) - rhs) > 1e-10 * rhs:
        raise NoConvergence(f"lambda_{k}: 2 - s != 2/(1+s) s^-k")
    return s


def nu_ell_code(ell):
    """Code R L R^(ell-4) L R^inf whose slope nu_ell makes c_ell the fixed point."""
    if ell < 6 or ell % 2:
        raise UnsupportedInput("ell must be even and >= 6")
    return "RL" + "R" * (ell - 4) + "L" + "R*"
