"""Experiment configuration files.

A configuration is a TOML document::

    mode = "certify"            # solve | certify | stability | bv
    T = 5.0
    x0 = [1.0]
    v0 = [1.0]
    phi = "l1:w=1"
    psi = "quadratic:alpha=1,center=2"
    inf_lower_bound = 0.0       # optional; defaults to inf(phi) + inf(psi)

    [lambda]                    # schedule of the main flow (not used by bv)
    kind = "rational"
    c = 0.1

    [eta]                       # stability only; defaults to [lambda]
    kind = "constant"
    c = 2.0

    [perturbed]                 # stability only; defaults to x0, v0
    y0 = [1.0]
    w0 = [1.0]

    [integrator]                # any IntegratorConfig field
    rtol = 1e-9
    atol = 1e-9

    [certify]
    rel_tol = 1e-4

    [bv]                        # bv only
    tol = 1e-5
    levels = 12
    pieces = [
      {from = 0.0, to = 1.0, left_value = 2.0, right_value = 2.0, shape = "constant"},
      {from = 1.0, to = 2.0, left_value = 1.0, right_value = 1.0, shape = "constant"},
    ]

    [output]
    dir = "out"

Relative matrix paths inside descriptors resolve against the file's folder.
"""

from __future__ import annotations

import copy
import difflib
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .bv import BVSchedule, MollifiedSequenceConfig
from .errors import ConfigError, FlowError
from .integrator import IntegratorConfig
from .potentials import (
    PotentialPair, default_residual_tol, inclusion_residual, parse_phi, parse_psi,
)
from .schedules import schedule_from_dict

__all__ = [
    "Diagnostic", "ExperimentConfig", "Experiment", "MODES", "load_config", "load_preset",
    "list_presets", "validate", "assemble",
]

MODES = ("solve", "certify", "stability", "bv")
TOP_KEYS = {"mode", "T", "x0", "v0", "phi", "psi", "inf_lower_bound", "lambda", "eta",
            "perturbed", "integrator", "certify", "bv", "output", "description"}
INTEGRATOR_KEYS = {f.name for f in fields(IntegratorConfig)}


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed but not yet validated configuration."""

    data: dict
    base_dir: Path | None = None
    source: str = "<string>"

    @classmethod
    def from_toml(cls, text, base_dir=None, source="<string>"):
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        return cls(data, Path(base_dir) if base_dir is not None else None, source)

    @property
    def mode(self):
        return self.data.get("mode", "solve")

    def with_overrides(self, mode=None, rtol=None, atol=None, out=None):
        data = copy.deepcopy(self.data)
        if mode is not None:
            data["mode"] = mode
        integ = data.setdefault("integrator", {})
        if rtol is not None:
            integ["rtol"] = rtol
        if atol is not None:
            integ["atol"] = atol
        if out is not None:
            data.setdefault("output", {})["dir"] = str(out)
        return replace(self, data=data)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return ExperimentConfig.from_toml(text, path.parent, str(path))


def list_presets():
    root = resources.files("newtonflow") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset(name):
    names = list_presets()
    if name not in names:
        near = difflib.get_close_matches(name, names, n=1)
        hint = f"; did you mean {near[0]!r}?" if near else ""
        raise ConfigError(f"unknown preset {name!r}{hint}")
    res = resources.files("newtonflow") / "presets" / f"{name}.toml"
    return ExperimentConfig.from_toml(res.read_text(), None, f"preset:{name}")


@dataclass
class Experiment:
    """Everything a run needs, built from a valid configuration."""

    mode: str
    T: float
    pair: PotentialPair
    x0: np.ndarray
    v0: np.ndarray
    integrator: IntegratorConfig
    rel_tol: float = 1e-4
    lam: object = None
    eta: object = None
    y0: np.ndarray | None = None
    w0: np.ndarray | None = None
    bv: BVSchedule | None = None
    seq: MollifiedSequenceConfig | None = None
    out_dir: Path = field(default_factory=lambda: Path("out"))


def _vector(data, key, diags):
    raw = data.get(key)
    if raw is None:
        diags.append(Diagnostic(key, "missing"))
        return None
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raw = [raw]
    try:
        vec = np.array([float(v) for v in raw])
    except (TypeError, ValueError):
        diags.append(Diagnostic(key, f"expected a list of numbers, got {raw!r}"))
        return None
    if vec.size == 0 or not np.all(np.isfinite(vec)):
        diags.append(Diagnostic(key, "must be a non-empty list of finite numbers"))
        return None
    return vec


def _schedule(data, key, diags):
    table = data.get(key)
    if not isinstance(table, dict):
        diags.append(Diagnostic(key, "missing schedule table"))
        return None
    try:
        return schedule_from_dict(table)
    except FlowError as exc:
        diags.append(Diagnostic(f"{key}.kind", str(exc)))
        return None


def assemble(cfg, check_data=True):
    """Build an :class:`Experiment`; return ``(experiment or None, diagnostics)``.

    With ``check_data`` the inclusion residual of every initial pair is
    included in the diagnostics.
    """
    d = cfg.data
    diags = []
    for key in sorted(set(d) - TOP_KEYS):
        near = difflib.get_close_matches(key, sorted(TOP_KEYS), n=1)
        hint = f"; did you mean {near[0]!r}?" if near else ""
        diags.append(Diagnostic(key, f"unknown key{hint}"))

    mode = d.get("mode", "solve")
    if mode not in MODES:
        near = difflib.get_close_matches(str(mode), MODES, n=1)
        hint = f"; did you mean {near[0]!r}?" if near else ""
        diags.append(Diagnostic("mode", f"unknown mode {mode!r}{hint}"))

    T = d.get("T")
    if isinstance(T, bool) or not isinstance(T, (int, float)) or not math.isfinite(T) or T <= 0:
        diags.append(Diagnostic("T", f"horizon must be a positive number, got {T!r}"))
        T = None
    else:
        T = float(T)

    x0 = _vector(d, "x0", diags)
    v0 = _vector(d, "v0", diags)
    dim = None
    if x0 is not None and v0 is not None:
        if x0.size != v0.size:
            diags.append(Diagnostic("v0", f"dimension {v0.size} differs from x0 dimension {x0.size}"))
        else:
            dim = x0.size

    phi = psi = pair = None
    for key, parser in (("phi", parse_phi), ("psi", parse_psi)):
        desc = d.get(key)
        if not isinstance(desc, str):
            diags.append(Diagnostic(key, "missing potential descriptor"))
            continue
        try:
            pot = parser(desc, dim if dim is not None else 1, cfg.base_dir)
        except FlowError as exc:
            diags.append(Diagnostic(key, str(exc)))
            continue
        if key == "phi":
            phi = pot
        else:
            psi = pot
    if phi is not None and psi is not None and dim is not None:
        try:
            pair = PotentialPair(phi, psi, d.get("inf_lower_bound"))
        except (FlowError, TypeError) as exc:
            diags.append(Diagnostic("inf_lower_bound", str(exc)))

    try:
        integ = d.get("integrator", {})
        unknown = set(integ) - INTEGRATOR_KEYS
        if unknown:
            diags.append(Diagnostic("integrator", f"unknown keys {sorted(unknown)}"))
            integ = {k: v for k, v in integ.items() if k in INTEGRATOR_KEYS}
        icfg = IntegratorConfig(**integ)
    except (FlowError, TypeError) as exc:
        diags.append(Diagnostic("integrator", str(exc)))
        icfg = None

    rel_tol = d.get("certify", {}).get("rel_tol", 1e-4)
    if not isinstance(rel_tol, (int, float)) or not rel_tol > 0:
        diags.append(Diagnostic("certify.rel_tol", "must be positive"))

    exp = Experiment(mode=mode, T=T, pair=pair, x0=x0, v0=v0, integrator=icfg,
                     rel_tol=float(rel_tol) if isinstance(rel_tol, (int, float)) else 1e-4,
                     out_dir=Path(d.get("output", {}).get("dir", "out")))
    starts = [("x0", "v0", x0, v0)]

    if mode in ("solve", "certify", "stability"):
        exp.lam = _schedule(d, "lambda", diags)
        if exp.lam is not None and T is not None:
            c0 = exp.lam.lower_bound(T)
            if not c0 > 0:
                diags.append(Diagnostic("lambda", f"lower bound on [0, T] is {c0!r}, must be positive"))
    if mode == "stability":
        exp.eta = _schedule(d, "eta", diags) if "eta" in d else exp.lam
        if exp.eta is not None and T is not None and not exp.eta.lower_bound(T) > 0:
            diags.append(Diagnostic("eta", "lower bound on [0, T] must be positive"))
        pert = d.get("perturbed", {})
        exp.y0 = _vector(pert, "y0", diags) if "y0" in pert else x0
        exp.w0 = _vector(pert, "w0", diags) if "w0" in pert else v0
        for name, vec in (("perturbed.y0", exp.y0), ("perturbed.w0", exp.w0)):
            if vec is not None and dim is not None and vec.size != dim:
                diags.append(Diagnostic(name, f"dimension {vec.size}, expected {dim}"))
        starts.append(("perturbed.y0", "perturbed.w0", exp.y0, exp.w0))
    if mode == "bv":
        b = d.get("bv")
        if not isinstance(b, dict) or "pieces" not in b:
            diags.append(Diagnostic("bv.pieces", "missing piece list"))
        else:
            try:
                exp.bv = BVSchedule(b["pieces"])
            except (FlowError, KeyError, TypeError, ValueError) as exc:
                diags.append(Diagnostic("bv.pieces", f"invalid pieces: {exc}"))
            if exp.bv is not None and T is not None and exp.bv.T != T:
                diags.append(Diagnostic("T", f"must equal the end of the last bv piece ({exp.bv.T})"))
            try:
                exp.seq = MollifiedSequenceConfig(
                    base_width=b.get("base_width"), ratio=b.get("ratio", 0.5),
                    max_level=b.get("levels", 12), tol=b.get("tol", 1e-5))
            except (FlowError, TypeError) as exc:
                diags.append(Diagnostic("bv", str(exc)))

    if check_data and phi is not None and dim is not None:
        for xn, vn, xs, vs in starts:
            if xs is None or vs is None or xs.size != dim or vs.size != dim:
                continue
            res = inclusion_residual(phi, 1.0, xs, vs)
            if res > default_residual_tol(xs):
                diags.append(Diagnostic(vn, f"not a subgradient of phi at {xn} (residual={res:.3e})"))

    return (exp if not diags else None), diags


def validate(cfg):
    """Static validation without running; the list is empty iff ``cfg`` is runnable."""
    return assemble(cfg)[1]
