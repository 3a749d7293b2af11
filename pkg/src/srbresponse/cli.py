"""Command-line front end: one subcommand per pipeline, files written to --out, one summary line on stdout."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import JobConfig, dumps
from .errors import ConfigError, NumericalError, PreconditionError
from .observables import Perturbation
from .response import (
    counterexample_one,
    counterexample_two,
    fd_experiment,
    invariant_density,
    reference_decomposition,
    response_scan,
)
from .susceptibility import (
    coefficients_split,
    markov_extension,
    psi1_nonmarkov,
    regularized_report,
    residue_fit,
)
from .transfer import PiecewiseConstantDensity
from .unimodal import critical_orbit

EXIT_OK, EXIT_NUMERICAL, EXIT_PRECONDITION = 0, 1, 2


class Job:
    def __init__(self, config: JobConfig, out: Path, jobs: int, seed: int | None):
        self.config, self.out, self.jobs, self.seed = config, out, jobs, seed

    @property
    def header(self):
        lines = self.config.header_lines()
        if self.seed is not None:
            lines.append(f"seed={self.seed}")
        return lines

    def write_json(self, name, record):
        body = {"config": self.header}
        body.update(record)
        (self.out / name).write_text(dumps(body))

    def write_csv(self, name, text):
        head = "".join(f"# {line}\n" for line in self.header)
        (self.out / name).write_text(head + text)

    # shared inputs
    def map(self):
        return self.config.build_map()

    def decomposition(self, f):
        c = self.config
        return reference_decomposition(f, cells=c["cells"], depth=c["depth"], orbit_tol=c["orbit_tol"])


def _fmt(x):
    return f"{x:.17g}"


def cmd_orbit(job: Job):
    c = job.config
    info = critical_orbit(job.map(), n_max=c["depth"], tol=c["orbit_tol"])
    job.write_json("orbit.json", info.to_dict())
    pre = f"n0={info.n0} n1={info.n1}" if info.preperiodic else "not preperiodic"
    return f"orbit: code={info.code_to(min(16, len(info.orbit)))} {pre}"


def cmd_density(job: Job):
    c = job.config
    f = job.map()
    rho = invariant_density(f, c["bins"], orbit_tol=c["orbit_tol"])
    edges = np.linspace(f.a0, f.b, c["bins"] + 1)
    x = 0.5 * (edges[1:] + edges[:-1])
    if isinstance(rho, PiecewiseConstantDensity):
        values = np.asarray(rho(x))
        job.write_json("density.json", rho.to_dict())
        method = "exact"
    else:
        values = rho(x)
        method = f"ulam iterations={rho.iterations} residual={rho.residual:.3g}"
    rows = "x,value\n" + "".join(f"{_fmt(a)},{_fmt(v)}\n" for a, v in zip(x, values))
    job.write_csv("density.csv", rows)
    return f"density: {method} min={_fmt(values.min())} max={_fmt(values.max())}"


def cmd_decompose(job: Job):
    f = job.map()
    X = job.config.build_perturbation()
    dec = job.decomposition(f)
    job.write_json("decompose.json", dec.to_dict(X))
    job.write_csv("regular.csv", dec.regular.to_csv())
    return f"decompose: jumps={dec.depth} J_of_1={_fmt(dec.J_of_1)} J_of_X={_fmt(dec.weighted_jump(X))}"


def cmd_susceptibility(job: Job):
    c = job.config
    f = job.map()
    X, phi = c.build_perturbation(), c.build_observable()
    dec = job.decomposition(f)
    series = coefficients_split(f, dec, X, phi, c["N"])
    record = series.to_dict()
    psi1 = None
    if dec.orbit.preperiodic is not None:
        ext = markov_extension(f, dec, X, phi, tol=c["tol"])
        record["poles"] = ext.to_dict()["poles"]
        flags = ext.to_dict()["flags"]
    else:
        J = dec.weighted_jump(X)
        record["poles"] = []
        flags = {"holomorphic_at_1": abs(J) <= c["psi1_tol"], "fully_holomorphic": None}
        if flags["holomorphic_at_1"]:
            psi1 = psi1_nonmarkov(f, dec, X, phi, tol=c["psi1_tol"]).value
    record["psi1"] = psi1
    record["flags"] = flags
    job.write_json("susceptibility.json", record)
    return f"susceptibility: N={series.N} a_0={_fmt(series.coefficients[0])} S_N={_fmt(series.partial_sums()[-1])}"


def cmd_residues(job: Job):
    c = job.config
    f = job.map()
    X, phi = c.build_perturbation(), c.build_observable()
    dec = job.decomposition(f)
    ext = markov_extension(f, dec, X, phi, tol=c["tol"])
    series = coefficients_split(f, dec, X, phi, c["N"])
    fits = []
    for omega in ext.poles:
        r = residue_fit(series, omega=omega)
        fits.append({"residue_re": complex(r).real, "residue_im": complex(r).imag})
    record = ext.to_dict()
    record["residue_fit"] = fits
    job.write_json("residues.json", record)
    return f"residues: residue_at_1={_fmt(ext.residue_at_1)} fit={_fmt(fits[0]['residue_re'])}"


def cmd_psi1(job: Job):
    c = job.config
    f = job.map()
    X, phi = c.build_perturbation(), c.build_observable()
    dec = job.decomposition(f)
    res = psi1_nonmarkov(f, dec, X, phi, tol=c["psi1_tol"])
    job.write_json("psi1.json", res.to_dict())
    return f"psi1: value={_fmt(res.value)} truncation={res.truncation:.3g}"


def cmd_regularized(job: Job):
    c = job.config
    f = job.map()
    dec = job.decomposition(f)
    rep = regularized_report(f, dec, c.build_observable(), z=c["z"], tol=c["psi1_tol"])
    job.write_json("regularized.json", rep.to_dict())
    extra = f" psi1={_fmt(rep.psi1)}" if rep.psi1 is not None else ""
    return f"regularized: z={_fmt(c['z'])} value={_fmt(rep.value.real)}{extra}"


def _table(job: Job, name, table):
    job.write_csv(f"{name}.csv", table.to_csv())
    job.write_json(f"{name}.json", table.to_dict())
    C, spread = table.fitted_constant, table.spread
    return f"{name}: rows={len(table.rows)} fitted_constant={_fmt(C) if C else None} spread={spread:.3g}"


def cmd_counterexample1(job: Job):
    c = job.config
    table = counterexample_one(range(c["k_min"], c["k_max"] + 1), bins=c["ulam_bins"], jobs=job.jobs,
                               fit_from=c["k_min"])
    return _table(job, "counterexample1", table)


def cmd_counterexample2(job: Job):
    c = job.config
    table = counterexample_two(range(c["ell_min"], c["ell_max"] + 1, 2), bins=c["ulam_bins"], jobs=job.jobs,
                               fit_from=c["ell_min"])
    return _table(job, "counterexample2", table)


def cmd_response_scan(job: Job):
    c = job.config
    scan = response_scan(job.map(), c.build_perturbation(), c.build_observable(), c.t_schedule(), c["bins"],
                         jobs=job.jobs)
    job.write_csv("response_scan.csv", scan.to_csv())
    job.write_json("response_scan.json", scan.to_dict())
    return f"response-scan: points={scan.t.size} R0={_fmt(scan.R0)} exponent={scan.exponent}"


def cmd_fd_experiment(job: Job):
    c = job.config
    rep = fd_experiment(job.map(), c.build_perturbation(), c.build_observable(), c.t_schedule(), c["bins"],
                        N=c["N"], tol=c["tol"], jobs=job.jobs)
    job.write_json("fd_experiment.json", rep.to_dict())
    return f"fd-experiment: psi={_fmt(rep.psi_partial_sum)} max_difference={_fmt(rep.agreement)}"


COMMANDS = {
    "orbit": (cmd_orbit, "critical orbit, kneading code and preperiodicity"),
    "density": (cmd_density, "invariant density (exact plateaus or Ulam)"),
    "decompose": (cmd_decompose, "saltus decomposition and weighted jumps"),
    "susceptibility": (cmd_susceptibility, "susceptibility coefficients, poles and Psi_1"),
    "residues": (cmd_residues, "closed-form and fitted residues on the unit circle"),
    "psi1": (cmd_psi1, "Psi_1 for vanishing weighted jump"),
    "regularized": (cmd_regularized, "regularized series with X = 1"),
    "counterexample1": (cmd_counterexample1, "lambda_k table"),
    "counterexample2": (cmd_counterexample2, "nu_ell table"),
    "response-scan": (cmd_response_scan, "R(t) and L1 distances over t"),
    "fd-experiment": (cmd_fd_experiment, "difference quotients next to Psi at 1"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="srbresponse", description="Linear response of SRB measures for tent-like maps.")
    p.add_argument("command", choices=list(COMMANDS), help="pipeline to run")
    p.add_argument("--config", type=Path, help="key=value job file (defaults apply when omitted)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent rows")
    p.add_argument("--seed", type=int, default=None, help="recorded in headers; used by randomized helpers")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        text = args.config.read_text() if args.config else ""
        config = JobConfig.parse(text)
        args.out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command][0](Job(config, args.out, args.jobs, args.seed))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except PreconditionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
