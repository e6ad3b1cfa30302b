"""Experiment orchestration behind the CLI subcommands.

``run`` executes one subcommand for a validated config and returns the
finalised :class:`RunManifest`; ``report`` turns a run directory into a
plain-text and a JSON summary.  Outputs depend only on (config, seed).
"""
from __future__ import annotations

import gzip
import logging
import os
from pathlib import Path
from typing import Optional

import numpy as np

from ..analysis.experiments import (
    EnsembleSpec,
    absorbing_experiment,
    attractor_experiment,
    lyapunov_slack,
    run_ensemble,
    space_time_ratios,
    trajectory_rng,
)
from ..analysis.inequalities import check_gronwall, check_interpolation, find_g_delta_constant
from ..errors import (
    AttractorLabError,
    ConfigurationError,
    DivergenceError,
    EquilibriumError,
    ExperimentError,
    ModelError,
    ReportError,
    SimulationError,
)
from ..functionals import energy_identity_residual, witness_J_constants
from ..model import exponent_k, region_classify, validate_assumptions
from ..presets import sample_state, standard_initial_state
from ..solver import solve_equilibrium, simulate
from ..spectral import field_to_json
from .config import RunConfig
from .persistence import (
    RunManifest,
    read_json,
    read_monitors_csv,
    write_json,
    write_monitors_csv,
    write_series_csv,
    write_snapshots,
)

__all__ = ["run", "report", "default_out_dir", "SUBCOMMANDS", "EXIT_OK", "EXIT_VALIDATION", "EXIT_EXPERIMENT",
           "EXIT_DIVERGENCE", "THRESHOLDS"]

log = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "ensemble", "equilibria", "verify", "attractor", "report")
EXIT_OK, EXIT_VALIDATION, EXIT_EXPERIMENT, EXIT_DIVERGENCE = 0, 2, 3, 4
ENV_OUT = "ATTRACTOR_LAB_OUT"

THRESHOLDS = {
    "identity_residual": 1e-6,
    "lyapunov_slack": 1e-6,
    "radius_change": 0.01,
    "equilibrium_distance": 1e-2,
}


def default_out_dir(subcommand: str, config: RunConfig) -> Path:
    if config.data.get("output"):
        return Path(config.data["output"])
    root = Path(os.environ.get(ENV_OUT, "runs"))
    return root / f"{subcommand}-{config.hash}-s{config.seed}"


def _initial_state(cfg: RunConfig, basis):
    e = cfg.experiment
    if e["initial"] == "standard":
        return standard_initial_state(basis, float(e["amplitude"]))
    if e["initial"] == "zero":
        return standard_initial_state(basis, 0.0)
    return sample_state(basis, trajectory_rng(cfg.seed, 0), float(e["R0"]), float(e["decay"]))


def _j_series(record, model, basis):
    const = witness_J_constants(model, basis)
    lam1 = basis.lambda_1
    coef = (lam1 - const.lam) / (3.0 * lam1)
    phi = model.forcing_coefficients(basis)
    h = record.monitor_array("h_norm")
    return coef * h * h - (const.C2 + 3.0 * const.delta + const.C3 * float(phi @ phi))


def _write_record(out: Path, rel_dir: str, record, model, basis, manifest: RunManifest, snapshots=True):
    d = out / rel_dir if rel_dir else out
    extra = {"identity_residual": energy_identity_residual(record), "J": _j_series(record, model, basis)}
    write_monitors_csv(d / "monitors.csv", record, extra)
    manifest.add_artifact(str(Path(rel_dir) / "monitors.csv") if rel_dir else "monitors.csv")
    if snapshots:
        write_snapshots(d / "states.jsonl.gz", record.states)
        manifest.add_artifact(str(Path(rel_dir) / "states.jsonl.gz") if rel_dir else "states.jsonl.gz")


def _record_summary(record):
    return {
        "max_identity_residual": float(np.max(energy_identity_residual(record))),
        "lyapunov_slack": lyapunov_slack(record),
        "E0": float(record.monitors["E"][0]),
        "E_final": float(record.monitors["E"][-1]),
        "t_final": float(record.monitors["t"][-1]),
        "samples": int(len(record.monitors["t"])),
        "params": record.params.to_dict(),
        "k": record.k,
    }


# -- subcommands -------------------------------------------------------------------

def _simulate(cfg, out, manifest, workers):
    basis = cfg.basis()
    model = cfg.model(basis)
    state = _initial_state(cfg, basis)
    params = cfg.functional_params(state, model)
    manifest.data["seeds"] = [{"index": 0, "spawn_key": [0]}]
    validation = validate_assumptions(model, basis.lambda_1)
    write_json(out / "validation.json", validation.to_dict())
    manifest.add_artifact("validation.json")
    try:
        record = simulate(state, float(cfg.experiment["T"]), cfg.solver_config(), model, basis, params=params,
                          metadata={"seed": cfg.seed})
    except DivergenceError as exc:
        if exc.record is not None:
            _write_record(out, "", exc.record, model, basis, manifest, snapshots=True)
        m, p = model.damping.m, model.nonlinearity.growth_p
        return "diverged", EXIT_DIVERGENCE, {"divergence_time": exc.t, "region": region_classify(m, p),
                                             "uncovered_region": region_classify(m, p) == "uncovered", "message": str(exc)}
    _write_record(out, "", record, model, basis, manifest)
    summary = _record_summary(record)
    write_json(out / "result.json", summary)
    manifest.add_artifact("result.json")
    return "completed", EXIT_OK, {"max_identity_residual": summary["max_identity_residual"],
                                  "functional_params": record.params.to_dict()}


def _ensemble_spec(cfg, T=None):
    basis = cfg.basis()
    model = cfg.model(basis)
    e = cfg.experiment
    return EnsembleSpec(int(e["count"]), cfg.seed, float(e["R0"]), model, basis, cfg.solver_config(),
                        float(e["T"]) if T is None else T, decay=float(e["decay"]),
                        params=cfg.functional_params())


def _ensemble(cfg, out, manifest, workers):
    e = cfg.experiment
    factor = int(e["horizon_factor"])
    spec = _ensemble_spec(cfg)
    res = run_ensemble(spec, workers, T=spec.T * factor)
    manifest.data["seeds"] = [{"index": i, "spawn_key": [i]} for i in range(spec.count)]
    runs = []
    for i, rec in enumerate(res.records):
        if rec is None:
            continue
        _write_record(out, f"runs/run_{i:03d}", rec, spec.model, spec.basis, manifest, snapshots=False)
        runs.append({"index": i, "outcome": rec.metadata.get("outcome"),
                     "initial_radius": rec.metadata.get("initial_radius"),
                     "max_identity_residual": float(np.max(energy_identity_residual(rec))),
                     "lyapunov_slack": lyapunov_slack(rec)})
    result = {"spec": spec.to_dict(), "runs": runs, "failures": res.failures, "horizon_factor": factor}
    diag = {}
    completed = res.completed
    if completed:
        ratios = space_time_ratios(completed)
        result["space_time_ratio_max"] = float(np.max(ratios))
        result["space_time_ratios"] = ratios.tolist()
        result["lyapunov_slack_max"] = max(lyapunov_slack(r) for r in completed)
    outcome, code = "completed", EXIT_OK
    if not res.failures:
        try:
            base = absorbing_experiment(spec, completed, horizon=spec.T)
            result["absorbing"] = base.to_dict()
            if factor > 1:
                ext = absorbing_experiment(spec, completed, horizon=spec.T * factor)
                result["absorbing_extended"] = ext.to_dict()
                result["radius_change"] = abs(ext.radius - base.radius) / max(base.radius, 1e-300)
            diag["absorbing_radius"] = base.radius
        except ExperimentError as exc:
            result["absorbing_error"] = str(exc)
            outcome, code = "failed", EXIT_EXPERIMENT
    else:
        bad = [f for f in res.failures if f["outcome"] == "diverged"]
        outcome, code = ("diverged", EXIT_DIVERGENCE) if bad else ("failed", EXIT_EXPERIMENT)
        m, p = spec.model.damping.m, spec.model.nonlinearity.growth_p
        diag.update(region=region_classify(m, p), uncovered_region=region_classify(m, p) == "uncovered",
                    divergence_times=[f["time"] for f in bad])
    write_json(out / "ensemble.json", result)
    manifest.add_artifact("ensemble.json")
    return outcome, code, diag


def _equilibria(cfg, out, manifest, workers):
    basis = cfg.basis()
    model = cfg.model(basis)
    e = cfg.experiment
    tol = float(e["equilibrium_tol"])
    found, attempts = [], []
    w = np.sqrt(basis.eigenvalues)
    for c in e["guesses"]:
        guess = basis.unit(0) * float(c)
        try:
            res = solve_equilibrium(guess, model, basis, tol=tol, max_iters=int(e["equilibrium_max_iters"]))
        except EquilibriumError as exc:
            attempts.append({"guess": float(c), "converged": False, "residual": exc.residual, "message": str(exc)})
            continue
        attempts.append({"guess": float(c), "converged": True, "residual": res.residual, "iterations": res.iterations})
        if all(np.linalg.norm(w * (res.field.coefficients - f["field"].coefficients)) > 1e-6 for f in found):
            from ..functionals import energy_E
            from ..solver import State

            E = energy_E(State(res.field, basis.zero()), model)
            found.append({"field": res.field, "residual": res.residual, "energy": E})
    result = {
        "tol": tol,
        "attempts": attempts,
        "equilibria": [{"residual": f["residual"], "energy": f["energy"], "u": field_to_json(f["field"])} for f in found],
    }
    write_json(out / "equilibria.json", result)
    manifest.add_artifact("equilibria.json")
    if not found:
        return "failed", EXIT_EXPERIMENT, {"message": "Newton did not converge from any guess"}
    return "completed", EXIT_OK, {"count": len(found)}


def _verify(cfg, out, manifest, workers):
    basis = cfg.basis()
    model = cfg.model(basis)
    e = cfg.experiment
    certs = []
    for d in e["deltas"]:
        certs.append(find_g_delta_constant(model.damping, float(d)))
    m = model.damping.m
    k = exponent_k(m)
    for i, (lam_e, mu_e) in enumerate(((k, m), (k - 1.0, 2.0))):
        certs.append(check_interpolation(lam_e, mu_e, k, 1.0, m, theta=float(e["theta"]), trials=int(e["trials"]),
                                         seed=cfg.seed + i))
    for prof in e["gronwall_profiles"]:
        for alpha in e["gronwall_alphas"]:
            certs.append(check_gronwall(prof, alpha=float(alpha), a=float(e["gronwall_a"]),
                                        b=0.0 if prof == "zero" else float(e["gronwall_b"]), T=float(e["gronwall_T"])))
    data = [c.to_dict() for c in certs]
    write_json(out / "certificates.json", {"certificates": data})
    manifest.add_artifact("certificates.json")
    failed = [c.tag for c in certs if not c.passed]
    if failed:
        return "failed", EXIT_EXPERIMENT, {"failed_certificates": failed}
    return "completed", EXIT_OK, {"certificates": len(certs)}


def _attractor(cfg, out, manifest, workers):
    e = cfg.experiment
    spec = _ensemble_spec(cfg)
    manifest.data["seeds"] = [{"index": i, "spawn_key": [i]} for i in range(spec.count)]
    rep = attractor_experiment(spec, float(e["burn_in"]), float(e["stride"]), equilibria="auto", workers=workers)
    data = rep.to_dict()
    pcs = data.pop("principal_components")
    data["equilibria"] = [field_to_json(f) for f in rep.equilibria]
    write_json(out / "attractor.json", data)
    write_json(out / "cloud_pca.json", pcs)
    write_series_csv(out / "semidistance.csv", {"t": rep.times, "semidistance": rep.semidistance})
    for name in ("attractor.json", "cloud_pca.json", "semidistance.csv"):
        manifest.add_artifact(name)
    return "completed", EXIT_OK, {"trend_non_increasing": rep.trend_ok, "equilibrium_distance": rep.equilibrium_distance}


_HANDLERS = {
    "simulate": _simulate,
    "ensemble": _ensemble,
    "equilibria": _equilibria,
    "verify": _verify,
    "attractor": _attractor,
}


def run(config: RunConfig, subcommand: str, out_dir=None, workers: int = 1) -> RunManifest:
    """Execute ``subcommand`` and return its finalised manifest.

    Module errors end up in the manifest outcome; ``manifest.data["exit_code"]``
    carries the CLI exit status.
    """
    if subcommand not in _HANDLERS:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    out = Path(out_dir) if out_dir is not None else default_out_dir(subcommand, config)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out, subcommand, config, config.seed)
    manifest.write()
    try:
        outcome, code, diag = _HANDLERS[subcommand](config, out, manifest, int(workers))
    except (ConfigurationError, ModelError) as exc:
        outcome, code, diag = "failed", EXIT_VALIDATION, {"error": type(exc).__name__, "message": str(exc)}
    except DivergenceError as exc:
        outcome, code, diag = "diverged", EXIT_DIVERGENCE, {"message": str(exc), "divergence_time": exc.t}
    except (SimulationError, ExperimentError, EquilibriumError) as exc:
        outcome, code, diag = "failed", EXIT_EXPERIMENT, {"error": type(exc).__name__, "message": str(exc)}
    except AttractorLabError as exc:
        outcome, code, diag = "failed", EXIT_EXPERIMENT, {"error": type(exc).__name__, "message": str(exc)}
    manifest.finalize(outcome, code, **diag)
    log.info("%s finished: %s (exit %d)", subcommand, outcome, code)
    return manifest


# -- report -------------------------------------------------------------------------

def _check(name, value, threshold, passed):
    return {"name": name, "value": value, "threshold": threshold, "passed": bool(passed)}


def _load(run_dir: Path, rel: str, problems: list, loader):
    p = run_dir / rel
    if not p.exists():
        problems.append(f"missing artifact {rel}")
        return None
    try:
        return loader(p)
    except Exception as exc:  # corrupt or truncated file
        problems.append(f"corrupt artifact {rel}: {exc}")
        return None


def _loader(rel: str):
    if rel.endswith("monitors.csv"):
        return read_monitors_csv
    if rel.endswith(".json"):
        return read_json
    if rel.endswith(".gz"):
        return lambda p: gzip.decompress(p.read_bytes())
    return lambda p: p.read_bytes()


def report(run_dir) -> dict:
    """Write ``summary.txt`` and ``summary.json`` for a finished run directory."""
    run_dir = Path(run_dir)
    problems = []
    mpath = run_dir / RunManifest.FILENAME
    if not mpath.exists():
        raise ReportError(f"no manifest in {run_dir}", [f"missing {RunManifest.FILENAME}"])
    try:
        man = read_json(mpath)
    except ValueError as exc:
        raise ReportError(f"manifest in {run_dir} is corrupt", [str(exc)]) from exc
    sub = man.get("subcommand")
    checks = []
    info = {"subcommand": sub, "outcome": man.get("outcome"), "config_hash": man.get("config_hash"),
            "master_seed": man.get("master_seed")}
    loaded = {rel: _load(run_dir, rel, problems, _loader(rel)) for rel in man.get("artifacts", [])}
    if problems:
        raise ReportError(f"run {run_dir} has missing or corrupt artifacts", problems)
    diag = man.get("diagnostics", {})
    if man.get("outcome") == "diverged":
        info["divergence_time"] = diag.get("divergence_time", diag.get("divergence_times"))
        info["uncovered_region"] = diag.get("uncovered_region", False)
        info["region"] = diag.get("region")
    if sub == "simulate" and "result.json" in loaded:
        r = loaded["result.json"]
        checks.append(_check("max_identity_residual", r["max_identity_residual"], THRESHOLDS["identity_residual"],
                             r["max_identity_residual"] <= THRESHOLDS["identity_residual"]))
        checks.append(_check("lyapunov_slack", r["lyapunov_slack"], THRESHOLDS["lyapunov_slack"],
                             r["lyapunov_slack"] <= THRESHOLDS["lyapunov_slack"]))
    elif sub == "ensemble" and "ensemble.json" in loaded:
        r = loaded["ensemble.json"]
        if "absorbing" in r:
            checks.append(_check("absorbing_radius", r["absorbing"]["radius"], None, True))
        else:
            checks.append(_check("absorbing_radius", None, None, False))
        if "radius_change" in r:
            checks.append(_check("radius_change", r["radius_change"], THRESHOLDS["radius_change"],
                                 r["radius_change"] <= THRESHOLDS["radius_change"]))
        if "lyapunov_slack_max" in r:
            checks.append(_check("lyapunov_slack", r["lyapunov_slack_max"], THRESHOLDS["lyapunov_slack"],
                                 r["lyapunov_slack_max"] <= THRESHOLDS["lyapunov_slack"]))
        if "space_time_ratio_max" in r:
            checks.append(_check("space_time_ratio_max", r["space_time_ratio_max"], None,
                                 np.isfinite(r["space_time_ratio_max"])))
        checks.append(_check("divergent_runs", len(r["failures"]), 0, len(r["failures"]) == 0))
    elif sub == "equilibria" and "equilibria.json" in loaded:
        r = loaded["equilibria.json"]
        worst = max((q["residual"] for q in r["equilibria"]), default=None)
        checks.append(_check("equilibrium_residual", worst, r["tol"], worst is not None and worst <= r["tol"]))
    elif sub == "verify" and "certificates.json" in loaded:
        for c in loaded["certificates.json"]["certificates"]:
            label = c["tag"] + ":" + ",".join(f"{k}={c['constants'][k]}" for k in ("delta", "profile", "alpha", "lambda", "mu")
                                              if k in c["constants"])
            checks.append(_check(label, c["max_violation"], 0.0, c["passed"]))
    elif sub == "attractor" and "attractor.json" in loaded:
        r = loaded["attractor.json"]
        s = r["semidistance"]
        info["semidistance_endpoints"] = [s[0], s[-1]] if s else []
        checks.append(_check("semidistance_trend", r["trend_non_increasing"], "non-increasing", r["trend_non_increasing"]))
        checks.append(_check("semidistance_drop", r["endpoint_drop"], "end < mid", r["endpoint_drop"]))
        d = r["equilibrium_distance"]
        checks.append(_check("equilibrium_distance", d, THRESHOLDS["equilibrium_distance"],
                             d is not None and d <= THRESHOLDS["equilibrium_distance"]))
    summary = {**info, "checks": checks, "all_passed": bool(checks) and all(c["passed"] for c in checks),
               "data_files": sorted(rel for rel in man.get("artifacts", []) if rel.endswith((".csv", ".json")))}
    write_json(run_dir / "summary.json", summary)
    lines = [f"run: {run_dir.name}", f"subcommand: {sub}", f"outcome: {man.get('outcome')}"]
    if "divergence_time" in info:
        lines.append(f"divergence time: {info['divergence_time']}")
        lines.append(f"uncovered region: {info['uncovered_region']} (region {info.get('region')})")
    if "semidistance_endpoints" in info:
        lines.append(f"semidistance endpoints: {info['semidistance_endpoints']}")
    for c in checks:
        verdict = "PASS" if c["passed"] else "FAIL"
        lines.append(f"[{verdict}] {c['name']}: value={c['value']} threshold={c['threshold']}")
    (run_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


def run_report(out_dir) -> int:
    try:
        s = report(out_dir)
    except ReportError as exc:
        log.error("%s: %s", exc, "; ".join(exc.problems))
        return EXIT_EXPERIMENT
    return EXIT_OK if s["outcome"] == "completed" else EXIT_EXPERIMENT
