"""Command-line experiment runner.

Subcommands ``solve``, ``certify``, ``stability`` and ``bv`` run an
experiment from ``--config`` or ``--preset`` and write CSV/JSON output into
``--out``; ``validate`` checks a configuration statically and
``list-potentials`` prints the catalogs.

Exit codes: 0 pass, 2 config error, 3 inadmissible data, 4 integration
failure, 5 certificate failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bv import bv_solve, check_mollification
from .certificates import certify_energy
from .config import assemble, list_presets, load_config, load_preset, validate
from .errors import (
    ArgumentError, ConfigError, InadmissibleDataError, IntegrationFailure, NonConvergenceError,
)
from .flow import FlowProblem, integrate
from .potentials import PHI_CATALOG, PSI_CATALOG
from .stability import PerturbationPair, run_stability_experiment

__all__ = ["RunReport", "run", "main", "EXIT_OK", "EXIT_CONFIG", "EXIT_INADMISSIBLE",
           "EXIT_INTEGRATION", "EXIT_CERTIFICATE"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INADMISSIBLE = 3
EXIT_INTEGRATION = 4
EXIT_CERTIFICATE = 5

RESIDUAL_TOL = 1e-6


@dataclass
class RunReport:
    mode: str
    wall_time: float = 0.0
    stats: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    exit_status: int = EXIT_OK
    message: str = ""
    outputs: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.exit_status == EXIT_OK

    def failed_checks(self):
        return [c["id"] for c in self.checks if not c["passed"]]

    def as_dict(self):
        return _jsonable(asdict(self))

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _residual_check(traj, cid="eq1a.residual"):
    scaled = traj.residual / (1.0 + np.linalg.norm(traj.x, axis=1))
    m = float(scaled.max())
    return {"id": cid, "passed": bool(m <= RESIDUAL_TOL), "measured": m, "bound": RESIDUAL_TOL}


def _cert_checks(report, suffix=""):
    return [{"id": c.id + suffix, "passed": c.passed, "measured": c.measured,
             "bound": c.bound + report.tol, "description": c.description}
            for c in report.checks]


def _run_solve(exp, rep, certify):
    prob = FlowProblem(exp.pair, exp.lam, exp.x0, exp.v0, exp.T)
    traj = integrate(prob, exp.integrator)
    rep.stats = traj.stats.as_dict()
    files = {"trajectory.csv": _csv_text(*traj.csv_rows())}
    rep.checks.append(_residual_check(traj))
    if certify:
        cert = certify_energy(traj, prob, exp.rel_tol)
        rep.checks.extend(_cert_checks(cert))
        rep.details["certificate"] = {"tol": cert.tol, "c0": cert.c0, "energy_gap": cert.energy_gap}
    rep.details["final_x"] = traj.x[-1]
    rep.details["final_objective"] = float(traj.objective[-1])
    return files


def _run_stability(exp, rep):
    pp = PerturbationPair(exp.pair, exp.lam, exp.eta, exp.x0, exp.v0, exp.y0, exp.w0, exp.T)
    res = run_stability_experiment(pp, exp.integrator)
    rep.details["stability"] = res.as_dict()
    rep.checks.append({"id": "thm3.1", "passed": res.holds, "measured": res.measured_sup_theta,
                       "bound": res.theoretical_bound + res.budget})
    a, b = pp.problems()
    ta, tb = integrate(a, exp.integrator), integrate(b, exp.integrator)
    rep.stats = {"lambda": ta.stats.as_dict(), "eta": tb.stats.as_dict()}
    rep.checks.append(_residual_check(ta, "eq1a.residual.lambda"))
    rep.checks.append(_residual_check(tb, "eq1a.residual.eta"))
    th = res.theta
    rows = [[f"{t:.17g}", f"{v:.17g}", f"{res.theoretical_bound:.17g}"]
            for t, v in zip(th.t, th.values)]
    return {"trajectory.csv": _csv_text(*ta.csv_rows()),
            "trajectory_eta.csv": _csv_text(*tb.csv_rows()),
            "theta.csv": _csv_text(["t", "theta", "bound"], rows)}


def _run_bv(exp, rep):
    lem = check_mollification(exp.bv, exp.seq)
    for c in lem:
        rep.checks.append({"id": c["id"], "passed": c["passed"]})
    rep.details["mollification"] = lem
    res = bv_solve(exp.pair, exp.bv, exp.x0, exp.v0, exp.integrator, exp.seq, keep=False)
    header, rows = res.diagnostics_rows()
    rep.details["levels"] = res.diagnostics
    budget = 1e-4
    worst = max((d["sup_gap_to_prev"] - d["cauchy_bound"] for d in res.diagnostics[1:]),
                default=-math.inf)
    rep.checks.append({"id": "thm4.3", "passed": bool(worst <= budget),
                       "measured": worst, "bound": budget,
                       "description": "sup gap - Cauchy bound for adjacent levels"})
    rep.checks.append(_residual_check(res.trajectory))
    rep.stats = res.trajectory.stats.as_dict()
    fmt = [[f"{v:.17g}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    return {"trajectory.csv": _csv_text(*res.trajectory.csv_rows()),
            "diagnostics.csv": _csv_text(header, fmt)}


def run(cfg, write=True):
    """Execute the configured experiment and return a :class:`RunReport`.

    Output files are written into the configured directory unless
    ``write`` is false.  Errors are mapped onto exit codes in the report.
    """
    t0 = time.perf_counter()
    rep = RunReport(mode=cfg.mode)
    if cfg.mode == "list-potentials":
        rep.details = {"phi": sorted(PHI_CATALOG), "psi": sorted(PSI_CATALOG),
                       "presets": list_presets()}
        return rep
    exp, diags = assemble(cfg, check_data=False)
    if diags:
        rep.exit_status = EXIT_CONFIG
        rep.message = "; ".join(str(d) for d in diags)
        rep.details["diagnostics"] = [str(d) for d in diags]
        return rep
    try:
        if exp.mode in ("solve", "certify"):
            files = _run_solve(exp, rep, certify=exp.mode == "certify")
        elif exp.mode == "stability":
            files = _run_stability(exp, rep)
        else:
            files = _run_bv(exp, rep)
    except InadmissibleDataError as exc:
        rep.exit_status, rep.message = EXIT_INADMISSIBLE, str(exc)
        rep.details["residual"] = exc.residual
        files = {}
    except NonConvergenceError as exc:
        rep.exit_status, rep.message = EXIT_INTEGRATION, str(exc)
        rep.details["levels"] = exc.diagnostics
        files = {}
    except IntegrationFailure as exc:
        rep.exit_status, rep.message = EXIT_INTEGRATION, str(exc)
        files = {}
        if exc.partial is not None and hasattr(exc.partial, "csv_rows"):
            files["partial_trajectory.csv"] = _csv_text(*exc.partial.csv_rows())
    except ArgumentError as exc:
        rep.exit_status, rep.message = EXIT_CONFIG, str(exc)
        files = {}
    if rep.exit_status == EXIT_OK and rep.failed_checks():
        rep.exit_status = EXIT_CERTIFICATE
        rep.message = "failed checks: " + ", ".join(rep.failed_checks())
    rep.wall_time = time.perf_counter() - t0
    if write:
        for name, text in files.items():
            path = exp.out_dir / name
            _atomic_write(path, text)
            rep.outputs.append(str(path))
        rep.outputs.append(str(exp.out_dir / "report.json"))
        _atomic_write(exp.out_dir / "report.json", rep.to_json() + "\n")
    return rep


def _load(args):
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of --config or --preset")
    return load_config(args.config) if args.config else load_preset(args.preset)


def _list_potentials(out):
    out.write("phi potentials:\n")
    for name, (desc, _) in PHI_CATALOG.items():
        out.write(f"  {name:<12} {desc}\n")
    out.write("psi potentials:\n")
    for name, (desc, _) in PSI_CATALOG.items():
        out.write(f"  {name:<12} {desc}\n")
    out.write("schedules ([lambda] kind):\n")
    out.write("  constant           c\n  exponential-decay  a, b, c   lambda = b exp(-a t) + c\n"
              "  rational           c         lambda = 1/(1+t) + c\n"
              "  piecewise-linear   knots = [[t, value], ...]\n")
    out.write("presets:\n")
    for name in list_presets():
        out.write(f"  {name}\n")


def build_parser():
    p = argparse.ArgumentParser(prog="newtonflow",
                                description="Regularized Newton flows with certified estimates.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "integrate the flow"),
                        ("certify", "integrate and check the a-priori estimates"),
                        ("stability", "compare two flows against the stability bound"),
                        ("bv", "solve with a bounded-variation schedule by mollification"),
                        ("validate", "check a configuration without running")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--preset")
        if name != "validate":
            sp.add_argument("--out", type=Path)
            sp.add_argument("--rtol", type=float)
            sp.add_argument("--atol", type=float)
    sub.add_parser("list-potentials", help="print the potential, schedule and preset catalogs")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list-potentials":
        _list_potentials(sys.stdout)
        return EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        diags = validate(cfg)
        for d in diags:
            print(f"{cfg.source}: {d}")
        if not diags:
            print(f"{cfg.source}: ok")
        return EXIT_CONFIG if diags else EXIT_OK
    cfg = cfg.with_overrides(mode=args.command, rtol=args.rtol, atol=args.atol, out=args.out)
    rep = run(cfg)
    for c in rep.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['id']}")
    for path in rep.outputs:
        print(f"wrote {path}")
    if rep.exit_status != EXIT_OK:
        print(f"error ({rep.exit_status}): {rep.message}", file=sys.stderr)
    return rep.exit_status


if __name__ == "__main__":
    sys.exit(main())
