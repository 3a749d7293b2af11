"""Job configuration: strict key=value parsing, map/observable construction, and text output helpers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UnsupportedInput
from .observables import NAMED_OBSERVABLES, PiecewisePolynomial, Perturbation, named_observable
from .unimodal import TentMap, lambda_k_family, parse_code, perturbed_map, solve_code_parameter, nu_ell_code

FAMILIES = ("tent", "tent_code", "lambda_k", "nu_ell", "perturbed")


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _positive(v):
    return v > 0


# name -> (parser, default, validator or None, description)
SCHEMA = {
    "family": (str, "tent", lambda v: v in FAMILIES, "map family: " + ", ".join(FAMILIES)),
    "slope": (float, None, lambda v: 1.0 < v <= 2.0, "tent slope in (1, 2]"),
    "code": (str, None, None, "kneading code, e.g. RL^2R*"),
    "k": (int, None, lambda v: 1 <= v <= 20, "index of the lambda_k family"),
    "ell": (int, None, lambda v: v >= 6 and v % 2 == 0, "even index of the nu_ell family"),
    "base_slope": (float, None, lambda v: 1.0 < v <= 2.0, "slope of the tent map being perturbed"),
    "t": (float, 0.0, None, "perturbation size for family=perturbed"),
    "X_poly": (_floats, [0.0, 1.0], None, "perturbation X, polynomial coefficients constant first"),
    "phi": (str, "bump6", lambda v: v in NAMED_OBSERVABLES, "named observable"),
    "phi_poly": (_floats, None, None, "observable as polynomial coefficients (overrides phi)"),
    "bins": (int, 2 ** 14, lambda v: v >= 64, "Ulam bins"),
    "cells": (int, 2 ** 12, lambda v: v >= 16, "grid cells for regular parts"),
    "depth": (int, 64, lambda v: v >= 2, "critical orbit depth"),
    "orbit_tol": (float, 1e-7, _positive, "orbit revisit tolerance for preperiodicity"),
    "N": (int, 2 ** 12, lambda v: v >= 1, "number of susceptibility coefficients"),
    "tol": (float, 1e-10, _positive, "tolerance for vanishing jump sums and residues"),
    "psi1_tol": (float, 1e-6, _positive, "tolerance of the Psi_1 computation"),
    "z": (float, 1.0, lambda v: 0.0 <= v <= 1.0, "evaluation point of the regularized series"),
    "k_min": (int, 4, lambda v: 1 <= v <= 20, "first k of counterexample one"),
    "k_max": (int, 16, lambda v: 1 <= v <= 20, "last k of counterexample one"),
    "ell_min": (int, 6, lambda v: v >= 6 and v % 2 == 0, "first ell of counterexample two"),
    "ell_max": (int, 20, lambda v: 6 <= v <= 24 and v % 2 == 0, "last ell of counterexample two"),
    "ulam_bins": (int, 0, lambda v: v == 0 or v >= 64, "Ulam cross-check bins for the tables (0 = off)"),
    "t_values": (_floats, None, None, "t values of a response scan or finite-difference schedule"),
    "m_min": (int, 6, lambda v: v >= 1, "first exponent of the dyadic t schedule"),
    "m_max": (int, 14, lambda v: v >= 1, "last exponent of the dyadic t schedule"),
}


def _format_value(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, list):
        return ",".join(_format_value(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class JobConfig:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict, compare=False)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    @classmethod
    def parse(cls, text):
        """Parse key=value lines; '#' starts a comment. Unknown or repeated keys are errors."""
        values, seen = {}, {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}", lineno)
            if key in seen:
                raise ConfigError(f"key {key!r} repeated (first on line {seen[key]})", lineno)
            seen[key] = lineno
            parser, _, check, _ = SCHEMA[key]
            try:
                v = parser(val)
            except ValueError:
                raise ConfigError(f"invalid value {val!r} for {key}", lineno) from None
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"non-finite value for {key}", lineno)
            if check is not None and not check(v):
                raise ConfigError(f"value {val!r} out of range for {key} ({SCHEMA[key][3]})", lineno)
            values[key] = v
        cfg = cls(values, seen)
        cfg._check_ranges(seen)
        return cfg

    def _check_ranges(self, lines):
        if self["k_min"] > self["k_max"]:
            raise ConfigError("k_min exceeds k_max", lines.get("k_min"))
        if self["ell_min"] > self["ell_max"]:
            raise ConfigError("ell_min exceeds ell_max", lines.get("ell_min"))
        if self["m_min"] > self["m_max"]:
            raise ConfigError("m_min exceeds m_max", lines.get("m_min"))
        if "code" in self.values:
            try:
                parse_code(self["code"])
            except UnsupportedInput as exc:
                raise ConfigError(str(exc), lines.get("code")) from None

    def header_lines(self):
        """Every key with its effective value (defaults included), in schema order."""
        return [f"{k}={_format_value(self[k])}" for k in SCHEMA if self[k] is not None]

    # -- builders ------------------------------------------------------
    def build_map(self):
        fam = self["family"]
        need = {"tent": "slope", "tent_code": "code", "lambda_k": "k", "nu_ell": "ell", "perturbed": "base_slope"}[fam]
        if need not in self.values:
            raise ConfigError(f"family={fam} requires {need}", self.lines.get("family"))
        if fam == "tent":
            return TentMap(self["slope"])
        if fam == "tent_code":
            return TentMap(solve_code_parameter(self["code"]))
        if fam == "lambda_k":
            return TentMap(lambda_k_family(self["k"]))
        if fam == "nu_ell":
            return TentMap(solve_code_parameter(nu_ell_code(self["ell"])))
        return perturbed_map(TentMap(self["base_slope"]), self.build_perturbation(), self["t"])

    def build_perturbation(self):
        return Perturbation.polynomial(self["X_poly"])

    def build_observable(self):
        if self["phi_poly"] is not None:
            return PiecewisePolynomial.polynomial(self["phi_poly"], label="phi_poly")
        return named_observable(self["phi"])

    def t_schedule(self):
        if self["t_values"] is not None:
            return list(self["t_values"])
        t = [2.0 ** -m for m in range(self["m_min"], self["m_max"] + 1)]
        return t + [-s for s in t]


# ---------------------------------------------------------------------------
# output


def _plain(obj):
    """Convert numpy scalars/arrays, tuples and complex numbers to JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return f"{obj:.17g}" if obj != int(obj) or abs(obj) >= 1e17 else f"{obj:.1f}"
    return json.dumps(obj)


def dumps(obj, indent=1):
    """JSON text with every float printed to 17 significant digits; NaN and inf become null."""
    return _encode(_plain(obj), indent, 0) + "\n"
