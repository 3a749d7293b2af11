"""Bounded-variation functions stored as a finite jump list plus a gridded regular part.

A function is F = sum_u s_u H_u + r, where H_u(x) = -1 for x < u, 0 for x > u
and -1/2 at x = u (the midpoint of the one-sided limits), and r is continuous,
stored by its values on a sorted grid and interpolated linearly (constantly
outside the grid).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedInput

LOCATION_TOL = 1e-12
PRUNE_TOL = 1e-13

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def uniform_grid(a0, b, cells=2 ** 14):
    return np.linspace(a0, b, cells + 1)


def merge_jumps(locations, amplitudes, tol=LOCATION_TOL, prune=PRUNE_TOL):
    """Sort, merge locations closer than ``tol`` and prune tiny amplitudes."""
    loc = np.asarray(locations, dtype=float).ravel()
    amp = np.asarray(amplitudes, dtype=float).ravel()
    if loc.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(loc, kind="stable")
    loc, amp = loc[order], amp[order]
    # start a new group wherever the gap to the previous point exceeds tol
    starts = np.concatenate(([True], np.diff(loc) > tol))
    group = np.cumsum(starts) - 1
    merged_amp = np.bincount(group, weights=amp)
    merged_loc = loc[starts]
    keep = np.abs(merged_amp) > prune
    return merged_loc[keep], merged_amp[keep]


def heaviside_sum(locations, amplitudes, x, tol=LOCATION_TOL, side=0):
    """sum_u s_u H_u(x); side = -1 / +1 gives left / right limits at jump points."""
    x = np.asarray(x, dtype=float)
    if len(locations) == 0:
        return np.zeros_like(x)
    csum = np.concatenate(([0.0], np.cumsum(amplitudes)))
    total = csum[-1]
    lo = np.searchsorted(locations, x - tol, side="left")
    hi = np.searchsorted(locations, x + tol, side="right")
    strictly_right = total - csum[hi]
    near = csum[hi] - csum[lo]
    if side < 0:
        return -(strictly_right + near)
    if side > 0:
        return -strictly_right
    return -(strictly_right + 0.5 * near)


@dataclass(frozen=True, eq=False)
class HybridBVFunction:
    """Jumps (sorted locations, amplitudes) plus a regular part on ``grid``.

    ``domain`` is the interval [a0, b] over which integrals and variations
    are taken.
    """

    locations: np.ndarray
    amplitudes: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    domain: tuple

    def __post_init__(self):
        loc, amp = merge_jumps(self.locations, self.amplitudes)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "amplitudes", amp)
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise UnsupportedInput("grid and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise UnsupportedInput("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    # -- construction --------------------------------------------------
    @classmethod
    def from_parts(cls, jumps, grid, values=None, domain=None):
        jumps = list(jumps)
        grid = np.asarray(grid, dtype=float)
        values = np.zeros_like(grid) if values is None else values
        loc = [u for u, _ in jumps]
        amp = [s for _, s in jumps]
        return cls(np.asarray(loc, dtype=float), np.asarray(amp, dtype=float), grid, values,
                   domain or (grid[0], grid[-1]))

    @classmethod
    def from_function(cls, func, grid, domain=None, jumps=()):
        """Regular part sampled from ``func`` (plus optional explicit jumps)."""
        grid = np.asarray(grid, dtype=float)
        return cls.from_parts(jumps, grid, np.asarray(func(grid), dtype=float), domain)

    @classmethod
    def heaviside(cls, u, grid, amplitude=1.0, domain=None):
        return cls.from_parts([(u, amplitude)], grid, domain=domain)

    @classmethod
    def indicator(cls, lo, hi, grid, value=1.0, domain=None):
        """value on (lo, hi), zero outside."""
        return cls.from_parts([(lo, value), (hi, -value)], grid, domain=domain)

    def with_parts(self, locations=None, amplitudes=None, values=None):
        return HybridBVFunction(
            self.locations if locations is None else locations,
            self.amplitudes if amplitudes is None else amplitudes,
            self.grid,
            self.values if values is None else values,
            self.domain,
        )

    # -- evaluation ----------------------------------------------------
    @property
    def jumps(self):
        return list(zip(self.locations.tolist(), self.amplitudes.tolist()))

    def singular(self, x, side=0):
        return heaviside_sum(self.locations, self.amplitudes, x, side=side)

    def regular(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values)

    def __call__(self, x):
        out = self.singular(x) + self.regular(x)
        return out if np.ndim(out) else float(out)

    def left_limit(self, x):
        out = self.singular(x, side=-1) + self.regular(x)
        return out if np.ndim(out) else float(out)

    def right_limit(self, x):
        out = self.singular(x, side=1) + self.regular(x)
        return out if np.ndim(out) else float(out)

    # -- arithmetic ----------------------------------------------------
    def _aligned(self, other):
        if self.grid.shape == other.grid.shape and np.array_equal(self.grid, other.grid):
            return self.grid, self.values, other.values
        grid = np.union1d(self.grid, other.grid)
        return grid, self.regular(grid), other.regular(grid)

    def __add__(self, other):
        if not isinstance(other, HybridBVFunction):
            return NotImplemented
        grid, v1, v2 = self._aligned(other)
        return HybridBVFunction(
            np.concatenate((self.locations, other.locations)),
            np.concatenate((self.amplitudes, other.amplitudes)),
            grid, v1 + v2, self.domain,
        )

    def __mul__(self, k):
        k = float(k)
        return self.with_parts(amplitudes=k * self.amplitudes, values=k * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def multiply(self, func):
        """Pointwise product with a continuous function."""
        w = np.asarray(func(self.locations), dtype=float) if self.locations.size else np.empty(0)
        new_amp = self.amplitudes * w
        g = np.asarray(func(self.grid), dtype=float)
        values = g * self(self.grid) - heaviside_sum(self.locations, new_amp, self.grid)
        return self.with_parts(amplitudes=new_amp, values=values)

    def regular_only(self):
        return self.with_parts(locations=np.empty(0), amplitudes=np.empty(0))

    def singular_only(self):
        return self.with_parts(values=np.zeros_like(self.values))

    # -- functionals ---------------------------------------------------
    def variation(self):
        """Sum of |jump amplitudes| plus the sampled variation of the regular part."""
        return float(np.sum(np.abs(self.amplitudes)) + np.sum(np.abs(np.diff(self.values))))

    def _cells(self):
        a0, b = self.domain
        inner = self.grid[(self.grid > a0) & (self.grid < b)]
        return np.concatenate(([a0], inner, [b]))

    def _regular_quadrature(self, weight):
        nodes = self._cells()
        lo, hi = nodes[:-1], nodes[1:]
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = self.regular(x) * weight(x)
        return float(np.sum(half * (vals @ _GL_WEIGHTS)))

    def integral(self):
        """Integral over the domain [a0, b]."""
        return self.integrate_against(lambda x: np.ones_like(x), primitive=lambda x: np.asarray(x, dtype=float))

    def integrate_against(self, phi, primitive=None):
        """int_{a0}^{b} F phi dx; jumps use an exact primitive of phi."""
        a0, b = self.domain
        if primitive is None:
            primitive = phi.primitive
        u = np.clip(self.locations, a0, b)
        sing = -float(np.sum(self.amplitudes * (primitive(u) - primitive(a0)))) if u.size else 0.0
        return sing + self._regular_quadrature(phi)

    def integrate_against_derivative(self, phi):
        """int_{a0}^{b} F phi' dx, with exact jump contributions -(phi(u) - phi(a0))."""
        a0, b = self.domain
        u = np.clip(self.locations, a0, b)
        sing = -float(np.sum(self.amplitudes * (phi(u) - phi(a0)))) if u.size else 0.0
        return sing + self._regular_quadrature(phi.deriv())

    def l1_norm(self, samples=None):
        """Approximate L1 norm on the domain from a fine midpoint rule."""
        a0, b = self.domain
        n = samples or max(4 * self.grid.size, 4096)
        edges = np.linspace(a0, b, n + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        return float(np.sum(np.abs(self(mid))) * (b - a0) / n)

    # -- serialisation -------------------------------------------------
    def to_csv(self, header=()):
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        buf.write(f"# domain,{self.domain[0]:.17g},{self.domain[1]:.17g}\n")
        buf.write("x,value\n")
        for x, v in zip(self.grid, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        buf.write("location,amplitude\n")
        for u, s in zip(self.locations, self.amplitudes):
            buf.write(f"{u:.17g},{s:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        grid, values, loc, amp = [], [], [], []
        domain = None
        section = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("domain,"):
                    _, lo, hi = body.split(",")
                    domain = (float(lo), float(hi))
                continue
            if line in ("x,value", "location,amplitude"):
                section = line
                continue
            p, q = (float(t) for t in line.split(","))
            if section == "x,value":
                grid.append(p)
                values.append(q)
            elif section == "location,amplitude":
                loc.append(p)
                amp.append(q)
            else:
                raise UnsupportedInput("CSV row before a section header")
        grid = np.asarray(grid)
        return cls(np.asarray(loc), np.asarray(amp), grid, np.asarray(values), domain or (grid[0], grid[-1]))

    def __repr__(self):
        return f"HybridBVFunction({self.locations.size} jumps, {self.grid.size} grid points)"
