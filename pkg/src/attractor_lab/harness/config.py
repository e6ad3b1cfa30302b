"""Run configuration files.

A config is a TOML document whose tables mirror the module layout::

    seed = 7

    [domain]
    dimension = 1
    lengths = [1.0]
    quad_points_per_axis = 64

    [basis]
    n_per_axis = 32

    [model.damping]
    family = "power"
    m = 3.0

    [model.nonlinearity]
    family = "power"
    p = 3.0

    [model.forcing]
    kind = "zero"            # or "coefficients" / "random"

    [solver]
    dt = 1e-3

    [experiment]
    T = 10.0

Every omitted key is filled from :data:`DEFAULTS`, and the filled-in document
is what gets hashed and written to the manifest.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

from ..errors import ConfigurationError, ModelError
from ..functionals import FunctionalParams
from ..model import DampingSpec, ModelSpec, NonlinearitySpec, exponents_compatible, region_classify
from ..solver import SolverConfig
from ..spectral import DomainSpec, Field, SpectralBasis, build_basis

__all__ = ["RunConfig", "ConfigParseError", "ConfigValidationError", "load_config", "parse_config", "DEFAULTS"]

DEFAULTS = {
    "seed": 0,
    "output": None,
    "domain": {"dimension": 1, "lengths": [1.0], "quad_points_per_axis": None},
    "basis": {"n_per_axis": 16},
    "model": {
        "damping": {"family": "power", "m": 3.0, "gamma": 0.0, "coefficient": 1.0},
        "nonlinearity": {"family": "power", "p": 3.0, "lin": 0.0, "coefficient": 1.0, "lambda": None,
                         "omega": 1e-2, "K_omega": None},
        "forcing": {"kind": "zero", "coefficients": [], "seed": 0, "amplitude": 0.0, "decay": 1.0},
    },
    "solver": {"dt": 1e-3, "scheme": "implicit_midpoint", "newton_tol": 1e-12, "newton_max_iters": 30,
               "record_every": 1, "state_every": 10},
    "functionals": {"alpha": 0.1, "omega": "auto", "K_omega": None},
    "experiment": {
        "T": 10.0,
        "initial": "standard",
        "amplitude": 0.4,
        "count": 4,
        "R0": 5.0,
        "decay": 0.5,
        "burn_in": None,
        "stride": 1.0,
        "horizon_factor": 1,
        "guesses": [0.0, 0.5, -0.5, 1.0, -1.0],
        "equilibrium_tol": 1e-10,
        "equilibrium_max_iters": 60,
        "deltas": [0.5, 0.05],
        "theta": 0.1,
        "trials": 200,
        "gronwall_profiles": ["constant", "zero", "oscillatory"],
        "gronwall_alphas": [0.1, 1.0],
        "gronwall_a": 1.0,
        "gronwall_b": 1.0,
        "gronwall_T": 30.0,
        "allow_uncovered": False,
    },
}

_ALLOWED_TOP = set(DEFAULTS)


class ConfigParseError(ConfigurationError):
    def __init__(self, message, line=None, column=None, path=None):
        where = f"{path}:" if path else ""
        if line is not None:
            where += f"{line}:{column}: "
        super().__init__(where + message)
        self.line = line
        self.column = column
        self.path = path


class ConfigValidationError(ConfigurationError):
    def __init__(self, problems, path=None):
        self.problems = list(problems)
        self.path = path
        head = f"{len(self.problems)} configuration problem(s)"
        if path:
            head += f" in {path}"
        super().__init__(head + ":\n" + "\n".join(f"  - {p}" for p in self.problems))


def _merge(defaults, given, prefix, problems):
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        name = f"{prefix}{key}"
        if key not in defaults:
            problems.append(f"unknown key '{name}'")
            continue
        if isinstance(defaults[key], dict):
            if name == "model.forcing" and isinstance(val, str):
                out[key] = val  # "zero" or "random(seed, amp, decay)", expanded by _validate
                continue
            if not isinstance(val, dict):
                problems.append(f"'{name}' must be a table")
                continue
            out[key] = _merge(defaults[key], val, name + ".", problems)
        else:
            out[key] = val
    return out


def _forcing_from_string(text: str):
    t = text.strip()
    if t == "zero":
        return {"kind": "zero"}
    m = re.fullmatch(r"random\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)", t)
    if m:
        return {"kind": "random", "seed": int(m.group(1)), "amplitude": float(m.group(2)), "decay": float(m.group(3))}
    raise ValueError(f"cannot parse forcing description {text!r}")


@dataclass
class RunConfig:
    data: dict
    path: str = None

    # -- derived objects --------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def experiment(self) -> dict:
        return self.data["experiment"]

    def domain(self) -> DomainSpec:
        d = self.data["domain"]
        return DomainSpec(int(d["dimension"]), tuple(d["lengths"]), int(d["quad_points_per_axis"]))

    def basis(self) -> SpectralBasis:
        return build_basis(self.domain(), int(self.data["basis"]["n_per_axis"]))

    def forcing(self, basis: SpectralBasis):
        f = self.data["model"]["forcing"]
        kind = f["kind"]
        if kind == "zero":
            return None
        if kind == "coefficients":
            c = np.zeros(basis.count)
            vals = [float(x) for x in f["coefficients"]]
            c[: len(vals)] = vals
            return Field(basis, c)
        rng = np.random.default_rng(np.random.SeedSequence(int(f["seed"])))
        c = float(f["amplitude"]) * basis.eigenvalues ** (-float(f["decay"])) * rng.standard_normal(basis.count)
        return Field(basis, c)

    def model(self, basis: SpectralBasis = None) -> ModelSpec:
        basis = basis or self.basis()
        dm = self.data["model"]["damping"]
        nl = self.data["model"]["nonlinearity"]
        damping = DampingSpec(dm["family"], float(dm["m"]), gamma=float(dm["gamma"]), coefficient=float(dm["coefficient"]))
        nonlin = NonlinearitySpec(nl["family"], float(nl["p"]), lin=float(nl["lin"]), coefficient=float(nl["coefficient"]),
                                  lam=None if nl["lambda"] is None else float(nl["lambda"]),
                                  omega=float(nl["omega"]),
                                  K_omega=None if nl["K_omega"] is None else float(nl["K_omega"]))
        return ModelSpec(damping, nonlin, self.forcing(basis))

    def solver_config(self) -> SolverConfig:
        s = self.data["solver"]
        return SolverConfig(float(s["dt"]), s["scheme"], float(s["newton_tol"]), int(s["newton_max_iters"]),
                            int(s["record_every"]), int(s["state_every"]))

    def functional_params(self, state=None, model=None):
        """Fixed params, or the per-run ``omega`` choice when ``omega = "auto"``."""
        from ..functionals import choose_omega

        f = self.data["functionals"]
        if f["omega"] == "auto":
            if state is None:
                return None
            return choose_omega(state, model, alpha=float(f["alpha"]))
        return FunctionalParams(alpha=float(f["alpha"]), omega=float(f["omega"]),
                                K_omega=0.0 if f["K_omega"] is None else float(f["K_omega"]))

    # -- persistence --------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        d = self.to_dict()
        d["seed"] = int(seed)
        return RunConfig(d, self.path)


def _validate(d: dict) -> list:
    problems = []
    dom = d["domain"]
    dim = dom["dimension"]
    if dim not in (1, 2, 3):
        problems.append(f"domain.dimension must be 1, 2 or 3 (got {dim!r})")
    lengths = dom["lengths"]
    if not isinstance(lengths, list) or any(not isinstance(x, (int, float)) or not x > 0 for x in lengths):
        problems.append("domain.lengths must be a list of positive numbers")
    elif dim in (1, 2, 3) and len(lengths) != dim:
        problems.append(f"domain.lengths has {len(lengths)} entries for dimension {dim}")
    n = d["basis"]["n_per_axis"]
    if not isinstance(n, int) or n < 1:
        problems.append("basis.n_per_axis must be a positive integer")
    q = dom["quad_points_per_axis"]
    if isinstance(n, int) and n >= 1:
        if q is None:
            dom["quad_points_per_axis"] = q = 2 * n
        if not isinstance(q, int) or q < 2:
            problems.append("domain.quad_points_per_axis must be an integer >= 2")
        elif q < 2 * n:
            problems.append(f"anti-aliasing floor: quad_points_per_axis = {q} must be >= 2 * n_per_axis = {2 * n}")

    dm = d["model"]["damping"]
    nl = d["model"]["nonlinearity"]
    m, p = dm["m"], nl["p"]
    m_ok = isinstance(m, (int, float)) and 1 < m <= 5
    p_ok = isinstance(p, (int, float)) and 2 <= p <= 5
    if not m_ok:
        problems.append(f"model.damping.m = {m!r} must lie in (1, 5]")
    if not p_ok:
        problems.append(f"model.nonlinearity.p = {p!r} must lie in [2, 5]")
    if m_ok and p_ok and not exponents_compatible(m, p) and not d["experiment"].get("allow_uncovered"):
        problems.append(f"exponent compatibility p <= 3m fails: p = {p}, 3m = {3 * m:g} "
                        f"(region {region_classify(m, p)})")
    try:
        DampingSpec(dm["family"], float(m) if m_ok else 3.0, gamma=float(dm["gamma"]), coefficient=float(dm["coefficient"]))
    except (ModelError, TypeError, ValueError) as exc:
        problems.append(f"model.damping: {exc}")
    try:
        NonlinearitySpec(nl["family"], float(p) if p_ok else 3.0, lin=float(nl["lin"]), coefficient=float(nl["coefficient"]),
                         omega=float(nl["omega"]))
    except (ModelError, TypeError, ValueError) as exc:
        problems.append(f"model.nonlinearity: {exc}")

    # lambda < lambda_1 couples the model to the domain
    if not problems or all("domain" not in pr for pr in problems):
        try:
            L = np.asarray(lengths, dtype=float)
            lam1 = float(np.pi**2 * np.sum(1.0 / L**2))
            lam = nl["lambda"]
            if lam is not None and not 0 < float(lam) < lam1:
                problems.append(f"model.nonlinearity.lambda = {lam} must lie in (0, lambda_1 = {lam1:.6g})")
        except (TypeError, ValueError):
            pass

    fo = d["model"]["forcing"]
    if isinstance(fo, str):
        try:
            d["model"]["forcing"] = {**DEFAULTS["model"]["forcing"], **_forcing_from_string(fo)}
        except ValueError as exc:
            problems.append(f"model.forcing: {exc}")
    elif fo.get("kind") not in ("zero", "coefficients", "random"):
        problems.append(f"model.forcing.kind must be zero, coefficients or random (got {fo.get('kind')!r})")

    s = d["solver"]
    try:
        SolverConfig(float(s["dt"]), s["scheme"], float(s["newton_tol"]), int(s["newton_max_iters"]),
                     int(s["record_every"]), int(s["state_every"]))
    except (ConfigurationError, TypeError, ValueError) as exc:
        problems.append(f"solver: {exc}")

    f = d["functionals"]
    if not isinstance(f["alpha"], (int, float)) or not 0 <= f["alpha"] < 1:
        problems.append("functionals.alpha must lie in [0, 1)")
    if f["omega"] != "auto" and (not isinstance(f["omega"], (int, float)) or f["omega"] <= 0):
        problems.append("functionals.omega must be positive or \"auto\"")

    e = d["experiment"]
    if not isinstance(e["T"], (int, float)) or not e["T"] > 0:
        problems.append("experiment.T must be positive")
    else:
        dt = s["dt"]
        if isinstance(dt, (int, float)) and dt > 0 and abs(round(e["T"] / dt) * dt - e["T"]) > 1e-9 * e["T"]:
            problems.append(f"experiment.T = {e['T']} is not a whole number of steps dt = {dt}")
    if e["initial"] not in ("standard", "random", "zero"):
        problems.append("experiment.initial must be standard, random or zero")
    if not isinstance(e["count"], int) or e["count"] < 1:
        problems.append("experiment.count must be a positive integer")
    if not isinstance(e["R0"], (int, float)) or e["R0"] < 0:
        problems.append("experiment.R0 must be non-negative")
    if isinstance(e["T"], (int, float)) and e["burn_in"] is None:
        e["burn_in"] = 0.5 * e["T"]
    if isinstance(e["T"], (int, float)) and not (isinstance(e["burn_in"], (int, float)) and 0 < e["burn_in"] < e["T"]):
        problems.append("experiment.burn_in must lie in (0, T)")
    if not isinstance(e["stride"], (int, float)) or e["stride"] <= 0:
        problems.append("experiment.stride must be positive")
    if not isinstance(e["horizon_factor"], int) or e["horizon_factor"] < 1:
        problems.append("experiment.horizon_factor must be a positive integer")
    if not isinstance(e["equilibrium_tol"], (int, float)) or not e["equilibrium_tol"] > 0:
        problems.append("experiment.equilibrium_tol must be positive")
    if not isinstance(e["equilibrium_max_iters"], int) or e["equilibrium_max_iters"] < 0:
        problems.append("experiment.equilibrium_max_iters must be a non-negative integer")
    if any(not 0 < x < 1 for x in e["deltas"]):
        problems.append("experiment.deltas must lie in (0, 1)")
    if not isinstance(d["seed"], int) or d["seed"] < 0:
        problems.append("seed must be a non-negative integer")
    return problems


def parse_config(text: str, path: str = None) -> RunConfig:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = str(exc)
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", msg)
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        raise ConfigParseError(getattr(exc, "msg", msg), line, col, path) from exc
    problems = []
    data = _merge(DEFAULTS, raw, "", problems)
    problems += _validate(data)
    if problems:
        raise ConfigValidationError(problems, path)
    return RunConfig(data, path)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def canonical_float(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(x)
