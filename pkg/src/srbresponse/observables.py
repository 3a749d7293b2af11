"""Piecewise-polynomial functions used as observables and perturbations.

Everything the library integrates against (observables phi) or composes with
the map (perturbations X) is a finite sum of polynomial pieces, each living
on a closed interval and vanishing outside it. This keeps values,
derivatives and primitives exact, which the jump-based quadrature relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ObservableNotC1, UnsupportedInput

# quintic smoothstep 6t^5 - 15t^4 + 10t^3
_SMOOTHSTEP = Polynomial([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    poly: Polynomial


class PiecewisePolynomial:
    """Finite sum of polynomials restricted to closed intervals.

    A piece with ``lo=-inf`` and ``hi=inf`` is an ordinary polynomial on the
    whole line.
    """

    def __init__(self, pieces, label=None):
        self.pieces = tuple(pieces)
        self.label = label

    # -- constructors --------------------------------------------------
    @classmethod
    def polynomial(cls, coeffs, label=None):
        """Global polynomial, coefficients constant term first."""
        coeffs = [float(c) for c in coeffs] or [0.0]
        return cls([Piece(-math.inf, math.inf, Polynomial(coeffs))], label=label)

    @classmethod
    def bump(cls, lo, hi, integral=1.0, label=None):
        """Compactly supported C^2 bump S(t) S(1-t) on [lo, hi], S the quintic smoothstep.

        The bump is scaled so that its Lebesgue integral equals ``integral``.
        """
        if not hi > lo:
            raise UnsupportedInput(f"empty bump support [{lo}, {hi}]")
        shape = _SMOOTHSTEP * _SMOOTHSTEP(Polynomial([1.0, -1.0]))
        # keep the local variable t in [0, 1]; expanding in x loses digits for narrow supports
        p = Polynomial(shape.coef, domain=[float(lo), float(hi)], window=[0.0, 1.0])
        q = p.integ()
        p = p * (integral / (q(hi) - q(lo)))
        return cls([Piece(float(lo), float(hi), p)], label=label)

    @classmethod
    def zero(cls):
        return cls.polynomial([0.0], label="zero")

    # -- evaluation ----------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for pc in self.pieces:
            inside = (x >= pc.lo) & (x <= pc.hi)
            if np.any(inside):
                out = out + np.where(inside, pc.poly(np.where(inside, x, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def deriv(self, m=1):
        return PiecewisePolynomial(
            [Piece(pc.lo, pc.hi, pc.poly.deriv(m)) for pc in self.pieces],
            label=None if self.label is None else f"{self.label}'",
        )

    def primitive(self, x):
        """An antiderivative, continuous on the line (bounded pieces start at 0)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for pc in self.pieces:
            q = pc.poly.integ()
            if math.isinf(pc.lo) and math.isinf(pc.hi):
                out = out + q(x)
                continue
            xc = np.clip(x, pc.lo, pc.hi)
            out = out + (q(xc) - q(pc.lo))
        return out if out.ndim else float(out)

    def integral(self, lo, hi):
        return float(self.primitive(hi) - self.primitive(lo))

    def __add__(self, other):
        if isinstance(other, PiecewisePolynomial):
            return PiecewisePolynomial(self.pieces + other.pieces)
        return NotImplemented

    def __mul__(self, k):
        k = float(k)
        return PiecewisePolynomial([Piece(pc.lo, pc.hi, pc.poly * k) for pc in self.pieces], self.label)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @property
    def is_global_polynomial(self):
        return len(self.pieces) == 1 and math.isinf(self.pieces[0].lo) and math.isinf(self.pieces[0].hi)

    def coefficients(self):
        if not self.is_global_polynomial:
            raise UnsupportedInput("not a global polynomial")
        return [float(c) for c in self.pieces[0].poly.coef]

    def to_dict(self):
        return {
            "label": self.label,
            "pieces": [
                {"lo": pc.lo, "hi": pc.hi, "coef": [float(c) for c in pc.poly.coef],
                 "domain": [float(v) for v in pc.poly.domain], "window": [float(v) for v in pc.poly.window]}
                for pc in self.pieces
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [Piece(float(p["lo"]), float(p["hi"]),
                   Polynomial(p["coef"], domain=p.get("domain", [-1, 1]), window=p.get("window", [-1, 1])))
             for p in d["pieces"]],
            label=d.get("label"),
        )

    def __repr__(self):
        return f"PiecewisePolynomial({self.label or len(self.pieces)})"


def sup_on(func, a, b, samples=4097):
    x = np.linspace(a, b, samples)
    return float(np.max(np.abs(func(x))))


class Perturbation:
    """Perturbation direction X for the family f_t = f + t X(f).

    The normalisation sup|X| <= 1 on [a, b] is checked at construction when
    an interval is supplied.
    """

    def __init__(self, func: PiecewisePolynomial, interval=(0.0, 1.0), check=True):
        self.func = func
        self._deriv = func.deriv()
        self.interval = (float(interval[0]), float(interval[1]))
        if check:
            sup = sup_on(func, *self.interval)
            if sup > 1.0 + 1e-12:
                raise UnsupportedInput(f"sup|X| = {sup:.6g} exceeds 1 on {self.interval}")

    @classmethod
    def polynomial(cls, coeffs, interval=(0.0, 1.0)):
        return cls(PiecewisePolynomial.polynomial(coeffs, label=f"poly{list(coeffs)}"), interval)

    @classmethod
    def identity(cls, interval=(0.0, 1.0)):
        return cls.polynomial([0.0, 1.0], interval)

    @classmethod
    def constant(cls, value=1.0, interval=(0.0, 1.0)):
        return cls.polynomial([value], interval)

    @classmethod
    def bumps(cls, supports, amplitudes, interval=(0.0, 1.0)):
        """Sum of bumps with the given supports and peak heights."""
        total = None
        for (lo, hi), amp in zip(supports, amplitudes):
            b = PiecewisePolynomial.bump(lo, hi)
            b = b * (amp / b(0.5 * (lo + hi)))
            total = b if total is None else total + b
        total.label = "bumps"
        return cls(total, interval)

    def __call__(self, x):
        return self.func(x)

    def deriv(self, x):
        return self._deriv(x)

    def deriv_function(self):
        return self._deriv

    @property
    def is_identity(self):
        if not self.func.is_global_polynomial:
            return False
        c = np.trim_zeros(np.asarray(self.func.coefficients()), "b")
        return len(c) == 2 and c[0] == 0.0 and c[1] == 1.0

    @property
    def is_zero(self):
        return all(np.all(pc.poly.coef == 0.0) for pc in self.func.pieces)

    def sampled_variation_of_derivative(self, samples=8193):
        x = np.linspace(*self.interval, samples)
        return float(np.sum(np.abs(np.diff(self._deriv(x)))))

    def __repr__(self):
        return f"Perturbation({self.func.label})"


def as_observable(phi):
    """Validate that phi carries a derivative (phi must be C^1)."""
    if isinstance(phi, PiecewisePolynomial):
        return phi
    if hasattr(phi, "deriv") and hasattr(phi, "primitive"):
        return phi
    raise ObservableNotC1(f"observable {phi!r} has no derivative evaluator")


NAMED_OBSERVABLES = {
    # 6x(1-x): unit mass on [0, 1], vanishes at both ends
    "bump6": lambda: PiecewisePolynomial.polynomial([0.0, 6.0, -6.0], label="bump6"),
    # counterexample-one bump, supported in (2/3, 3/4)
    "bump_ce1": lambda: PiecewisePolynomial.bump(2.0 / 3.0, 0.75, label="bump_ce1"),
    # counterexample-two bump, supported in (0.42, 0.49)
    "bump_ce2": lambda: PiecewisePolynomial.bump(0.42, 0.49, label="bump_ce2"),
    "identity": lambda: PiecewisePolynomial.polynomial([0.0, 1.0], label="identity"),
}


def named_observable(name):
    try:
        return NAMED_OBSERVABLES[name]()
    except KeyError:
        raise UnsupportedInput(f"unknown observable {name!r}; known: {sorted(NAMED_OBSERVABLES)}") from None
