"""Ensemble experiments on the discrete semiflow.

Ensembles are embarrassingly parallel: each trajectory is seeded from the
master seed by its index alone, runs independently, and results are gathered
in index order so the worker count never changes an aggregate.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import (
    ArgumentError,
    ConfigurationError,
    DivergenceError,
    EquilibriumError,
    ExperimentError,
    PreconditionError,
    SimulationError,
    UndefinedRatioError,
)
from ..functionals import FunctionalParams, big_R, space_time_norm, witness_J_constants
from ..model import ModelSpec, validate_assumptions
from ..presets import sample_state
from ..solver import SolverConfig, State, TrajectoryRecord, simulate, solve_equilibrium
from ..spectral import DomainSpec, Field, SpectralBasis, build_basis

__all__ = [
    "EnsembleSpec",
    "EnsembleResult",
    "run_ensemble",
    "trajectory_rng",
    "absorbing_experiment",
    "AbsorbingReport",
    "continuous_dependence_ratio",
    "DependenceSeries",
    "space_time_ratios",
    "AttractorCloud",
    "AttractorReport",
    "attractor_experiment",
    "semidistance",
    "h_embed",
    "find_equilibria",
    "moving_average",
    "trend_non_increasing",
    "regularity_check",
    "RegularityReport",
    "resolution_study",
    "lyapunov_slack",
]


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream: adding trajectories never perturbs existing ones."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


@dataclass
class EnsembleSpec:
    count: int
    seed: int
    R0: float
    model: ModelSpec
    basis: SpectralBasis
    config: SolverConfig
    T: float
    decay: float = 0.5
    params: Optional[FunctionalParams] = None
    min_fraction: float = 0.1

    def __post_init__(self):
        if int(self.count) < 1:
            raise ConfigurationError("ensemble count must be at least 1")
        if not self.R0 >= 0:
            raise ConfigurationError("R0 must be non-negative")
        if not self.T > 0:
            raise ConfigurationError("ensemble horizon must be positive")

    def radius(self, index: int) -> float:
        return float(self.initial_state(index)[1])

    def initial_state(self, index: int):
        rng = trajectory_rng(self.seed, index)
        # radius uniform on (min_fraction, 1] * R0
        r = self.R0 * (self.min_fraction + (1.0 - self.min_fraction) * (1.0 - rng.random()))
        return sample_state(self.basis, rng, r, self.decay), r

    def initial_states(self):
        return [self.initial_state(i)[0] for i in range(self.count)]

    def to_dict(self):
        return {
            "count": int(self.count),
            "seed": int(self.seed),
            "R0": self.R0,
            "decay": self.decay,
            "min_fraction": self.min_fraction,
            "T": self.T,
            "model": self.model.to_dict(),
            "config": self.config.to_dict(),
            "basis": {"dimension": self.basis.dimension, "lengths": list(self.basis.domain.lengths),
                      "n_per_axis": self.basis.n_per_axis,
                      "quad_points_per_axis": self.basis.domain.quad_points_per_axis},
        }


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    records: list
    failures: list = dc_field(default_factory=list)

    @property
    def completed(self):
        return [r for r in self.records if r is not None and r.metadata.get("outcome") == "completed"]


def _run_one(spec: EnsembleSpec, index: int, T: float):
    state, r = spec.initial_state(index)
    meta = {"seed": int(spec.seed), "index": int(index), "initial_radius": r}
    try:
        rec = simulate(state, T, spec.config, spec.model, spec.basis, params=spec.params, metadata=meta)
        return rec, None
    except (DivergenceError, SimulationError) as exc:
        status = "diverged" if isinstance(exc, DivergenceError) else "failed"
        return exc.record, {"index": int(index), "outcome": status, "time": exc.t, "message": str(exc)}


def _job(args):
    return _run_one(*args)


def run_ensemble(spec: EnsembleSpec, workers: int = 1, T: Optional[float] = None) -> EnsembleResult:
    T = spec.T if T is None else T
    jobs = [(spec, i, T) for i in range(spec.count)]
    if workers <= 1 or spec.count == 1:
        out = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            out = list(pool.map(_job, jobs))
    records = [o[0] for o in out]
    failures = [o[1] for o in out if o[1] is not None]
    return EnsembleResult(spec, records, failures)


# -- absorbing set ---------------------------------------------------------------

@dataclass
class AbsorbingReport:
    radius: float
    horizon: float
    j_radius: float
    entry_times: list
    j_times: list
    initial_norms: list
    max_excursion: float
    divergent: list
    constants: dict

    def to_dict(self):
        return {
            "radius": self.radius,
            "horizon": self.horizon,
            "j_radius": self.j_radius,
            "entry_times": list(self.entry_times),
            "j_times": list(self.j_times),
            "initial_norms": list(self.initial_norms),
            "max_excursion": self.max_excursion,
            "divergent": list(self.divergent),
            "constants": dict(self.constants),
        }


def absorbing_experiment(ensemble: EnsembleSpec, records: Optional[Sequence[TrajectoryRecord]] = None,
                         horizon: Optional[float] = None, workers: int = 1) -> AbsorbingReport:
    """Fit the absorbing radius of an ensemble.

    Each trajectory is anchored at its first time ``t_J`` with ``J(t_J) <= 1``.
    The radius is the least ``rho`` such that every trajectory stays in the
    H-ball of radius ``rho`` on ``[t_J, horizon]``; a trajectory's entry time is
    the first time after which it never leaves that common ball.
    """
    failures = []
    if records is None:
        res = run_ensemble(ensemble, workers)
        failures = res.failures
        records = [r for r in res.records if r is not None and r.metadata.get("outcome") == "completed"]
    horizon = ensemble.T if horizon is None else float(horizon)
    basis = ensemble.basis
    const = witness_J_constants(ensemble.model, basis)
    lam1 = basis.lambda_1
    coef = (lam1 - const.lam) / (3.0 * lam1)
    phi = ensemble.model.forcing_coefficients(basis)
    offset = const.C2 + 3.0 * const.delta + const.C3 * float(phi @ phi)
    j_radius = math.sqrt((1.0 + offset) / coef)

    series = []
    j_times = []
    for rec in records:
        t = rec.monitor_array("t")
        sel = t <= horizon + 1e-9
        t, h = t[sel], rec.monitor_array("h_norm")[sel]
        J = coef * h * h - offset
        hit = np.nonzero(J <= 1.0)[0]
        if len(hit) == 0:
            raise ExperimentError(
                f"trajectory {rec.metadata.get('index')} never reaches J <= 1 before t = {horizon}",
                {"record": rec, "index": rec.metadata.get("index")},
            )
        i0 = int(hit[0])
        j_times.append(float(t[i0]))
        series.append((t, h, i0))
    radius = max((float(np.max(h[i0:])) for t, h, i0 in series), default=0.0)
    entry = []
    for t, h, i0 in series:
        out = np.nonzero(h > radius)[0]
        entry.append(float(t[out[-1] + 1]) if len(out) else float(t[0]))
    excursion = max((float(np.max(h[i0:])) - j_radius for t, h, i0 in series), default=0.0)
    return AbsorbingReport(
        radius=radius,
        horizon=horizon,
        j_radius=j_radius,
        entry_times=entry,
        j_times=j_times,
        initial_norms=[float(h[0]) for _, h, _ in series],
        max_excursion=excursion,
        divergent=failures,
        constants=const.to_dict(),
    )


# -- continuous dependence -------------------------------------------------------

@dataclass
class DependenceSeries:
    times: np.ndarray
    ratio: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(self.ratio))

    @property
    def final(self) -> float:
        return float(self.ratio[-1])

    def to_dict(self):
        return {"times": self.times.tolist(), "ratio": self.ratio.tolist(), "sup": self.sup}


def _same_setup(a: TrajectoryRecord, b: TrajectoryRecord):
    return (a.basis.basis_id == b.basis.basis_id and a.model.hash == b.model.hash
            and a.config.hash == b.config.hash)


def continuous_dependence_ratio(run_u: TrajectoryRecord, run_v: TrajectoryRecord) -> DependenceSeries:
    """``||(w, w_t)(t)||_H / ||(w, w_t)(0)||_H`` for the difference ``w = u - v``."""
    if not _same_setup(run_u, run_v):
        raise ArgumentError("runs must share basis, model and solver config")
    n = min(len(run_u.states), len(run_v.states))
    d0 = run_u.states[0].h_distance(run_v.states[0])
    if d0 == 0.0:
        raise UndefinedRatioError("identical initial data: the ratio is undefined")
    times, ratio = [], []
    for su, sv in zip(run_u.states[:n], run_v.states[:n]):
        if abs(su.t - sv.t) > 1e-9:
            raise ArgumentError("records are sampled at different times")
        times.append(su.t)
        ratio.append(su.h_distance(sv) / d0)
    return DependenceSeries(np.array(times), np.array(ratio))


def space_time_ratios(records: Sequence[TrajectoryRecord], k: Optional[float] = None):
    """Per-run ``int ||u||_{3k+3}^{k+1} dt / (R^6 + R^5 T)``."""
    out = []
    for rec in records:
        kk = rec.k if k is None else k
        T = float(rec.times[-1] - rec.times[0])
        R = big_R(rec)
        out.append(space_time_norm(rec, kk) / (R**6 + R**5 * T))
    return np.array(out)


def lyapunov_slack(record: TrajectoryRecord) -> float:
    """Largest increase of ``L`` between consecutive samples, divided by the step."""
    L = record.monitor_array("L")
    t = record.monitor_array("t")
    if len(L) < 2:
        return 0.0
    return float(np.max(np.diff(L) / np.diff(t)))


# -- attractor ---------------------------------------------------------------------

def h_embed(states, basis: Optional[SpectralBasis] = None) -> np.ndarray:
    """Rows ``[sqrt(lambda) a, b]`` so Euclidean distance is the H-distance."""
    states = list(states)
    if not states:
        return np.zeros((0, 0))
    basis = basis or states[0].basis
    w = np.sqrt(basis.eigenvalues)
    return np.array([np.concatenate([w * s.u.coefficients, s.v.coefficients]) for s in states])


def semidistance(A, B, chunk: int = 2048) -> float:
    """``sup_{x in A} inf_{y in B} |x - y|`` by brute force on embedded points."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0:
        return 0.0
    if B.size == 0:
        raise ConfigurationError("semidistance to an empty set")
    best = 0.0
    for i in range(0, A.shape[0], chunk):
        best = max(best, float(np.max(np.min(cdist(A[i:i + chunk], B), axis=1))))
    return best


@dataclass
class AttractorCloud:
    states: list
    burn_in: float
    stride: float

    def __post_init__(self):
        if not self.states:
            raise ConfigurationError("attractor cloud is empty")
        if not self.burn_in > 0:
            raise ConfigurationError("burn-in must be positive")
        ids = {s.basis.basis_id for s in self.states}
        if len(ids) != 1:
            raise ConfigurationError("cloud states span several bases")

    @property
    def basis(self):
        return self.states[0].basis

    def points(self) -> np.ndarray:
        return h_embed(self.states)

    def __len__(self):
        return len(self.states)


def moving_average(x, window: int = 5) -> np.ndarray:
    """Centred moving average over full windows only."""
    x = np.asarray(x, dtype=float)
    if len(x) < window:
        return x.copy()
    return np.convolve(x, np.ones(window) / window, mode="valid")


def trend_non_increasing(x, window: int = 5, rtol: float = 1e-9) -> bool:
    s = moving_average(x, window)
    scale = max(float(np.max(np.abs(s), initial=0.0)), 1e-300)
    return bool(np.all(np.diff(s) <= rtol * scale))


@dataclass
class AttractorReport:
    cloud: AttractorCloud
    times: np.ndarray
    semidistance: np.ndarray
    trend_ok: bool
    equilibria: list
    equilibrium_distance: Optional[float]
    principal: dict

    @property
    def endpoint_drop(self) -> bool:
        """Semidistance at the end of the series is below its midpoint value."""
        s = self.semidistance
        return bool(len(s) > 1 and s[-1] < s[len(s) // 2])

    def to_dict(self):
        return {
            "burn_in": self.cloud.burn_in,
            "stride": self.cloud.stride,
            "cloud_size": len(self.cloud),
            "times": self.times.tolist(),
            "semidistance": self.semidistance.tolist(),
            "smoothed": moving_average(self.semidistance).tolist(),
            "trend_non_increasing": self.trend_ok,
            "endpoint_drop": self.endpoint_drop,
            "equilibrium_count": len(self.equilibria),
            "equilibrium_distance": self.equilibrium_distance,
            "principal_components": self.principal,
        }


def find_equilibria(model: ModelSpec, basis: SpectralBasis, guesses, tol: float = 1e-10, merge: float = 1e-6):
    """Newton from every guess; distinct converged roots in H-norm."""
    roots = []
    w = np.sqrt(basis.eigenvalues)
    for g in guesses:
        guess = g if isinstance(g, Field) else Field(basis, g)
        try:
            res = solve_equilibrium(guess, model, basis, tol=tol)
        except EquilibriumError:
            continue
        c = res.field.coefficients
        if all(np.linalg.norm(w * (c - r.coefficients)) > merge for r in roots):
            roots.append(res.field)
    return roots


def _principal(points: np.ndarray):
    # projection onto the two leading principal directions, for plotting
    if points.shape[0] < 2:
        return {"mean": points.mean(axis=0).tolist() if len(points) else [], "coords": [[0.0, 0.0]] * len(points)}
    mean = points.mean(axis=0)
    X = points - mean
    _, svals, vt = np.linalg.svd(X, full_matrices=False)
    V = vt[:2]
    # deterministic sign: largest component positive
    for i in range(V.shape[0]):
        j = int(np.argmax(np.abs(V[i])))
        if V[i, j] < 0:
            V[i] = -V[i]
    coords = X @ V.T
    if coords.shape[1] < 2:
        coords = np.hstack([coords, np.zeros((coords.shape[0], 2 - coords.shape[1]))])
    return {"singular_values": svals[:2].tolist(), "coords": coords.tolist()}


def attractor_experiment(ensemble: EnsembleSpec, burn_in: float, stride: float,
                         records: Optional[Sequence[TrajectoryRecord]] = None, equilibria=None,
                         workers: int = 1, window: int = 5) -> AttractorReport:
    """Reference cloud from post-burn-in samples and the semidistance series.

    The series is ``dist(S(t)B, cloud)`` at ``t = 0, stride, ...`` before
    burn-in, where ``S(t)B`` is the ensemble's snapshot at time ``t``.
    ``equilibria="auto"`` seeds Newton from zero and from every final state.
    """
    T = ensemble.T
    if not 0 < burn_in < T:
        raise ConfigurationError(f"burn-in {burn_in} must lie in (0, T = {T})")
    if not stride > 0:
        raise ConfigurationError("stride must be positive")
    if records is None:
        res = run_ensemble(ensemble, workers)
        if res.failures:
            raise ExperimentError("ensemble runs failed", {"failures": res.failures})
        records = res.records
    nb = int(round(burn_in / stride))
    nT = int(math.floor(T / stride + 1e-9))
    ref_times = [j * stride for j in range(nb, nT + 1)]
    cloud = AttractorCloud([rec.state_at(t) for rec in records for t in ref_times], burn_in, stride)
    ref = cloud.points()
    times = np.array([j * stride for j in range(0, nb)])
    series = np.array([semidistance(h_embed([rec.state_at(t) for rec in records]), ref) for t in times])
    eq_list = []
    eq_dist = None
    if equilibria is not None:
        if isinstance(equilibria, str) and equilibria == "auto":
            guesses = [ensemble.basis.zero()] + [rec.final.u for rec in records]
            eq_list = find_equilibria(ensemble.model, ensemble.basis, guesses)
        else:
            eq_list = list(equilibria)
        if eq_list:
            eq_pts = h_embed([State(e, ensemble.basis.zero()) for e in eq_list])
            eq_dist = semidistance(ref, eq_pts)
    return AttractorReport(cloud, times, series, trend_non_increasing(series, window), eq_list, eq_dist,
                           _principal(ref))


# -- regularity ---------------------------------------------------------------------

@dataclass
class RegularityReport:
    sup_v_norm: float
    t_sup: float
    burn_in: float
    n_modes: int

    def to_dict(self):
        return {"sup_v_norm": self.sup_v_norm, "t_sup": self.t_sup, "burn_in": self.burn_in, "n_modes": self.n_modes}


def _require_g2(model: ModelSpec, basis: SpectralBasis):
    rep = validate_assumptions(model, basis.lambda_1)
    if not rep.passed("G2"):
        raise PreconditionError("damping fails (G2); the regularity check requires it")


def regularity_check(record: TrajectoryRecord, model: Optional[ModelSpec] = None, burn_in: float = 0.0) -> RegularityReport:
    """Sup of ``||grad u_t|| + ||Lap u||`` over samples with ``t >= burn_in``."""
    model = model or record.model
    _require_g2(model, record.basis)
    t = record.monitor_array("t")
    v = record.monitor_array("v_norm")
    sel = t >= burn_in - 1e-9
    if not np.any(sel):
        raise ConfigurationError("no samples after burn-in")
    i = int(np.argmax(np.where(sel, v, -np.inf)))
    return RegularityReport(float(v[i]), float(t[i]), float(burn_in), int(record.metadata.get("n_modes", record.basis.count)))


def resolution_study(model: ModelSpec, Ns=(16, 32, 64), length: float = 1.0, R0: float = 5.0, decay: float = 1.0,
                     seed: int = 0, T: float = 40.0, burn_in: float = 20.0, dt: float = 0.01, index: int = 0):
    """Regularity surrogate across resolutions from one physical initial datum.

    The datum is drawn on the finest basis; coarser runs start from its
    truncation ``P_n z0``.
    """
    Ns = sorted(int(n) for n in Ns)
    fine = build_basis(DomainSpec(1, (length,), 2 * Ns[-1]), Ns[-1])
    _require_g2(model, fine)
    rng = trajectory_rng(seed, index)
    r = R0 * (0.1 + 0.9 * (1.0 - rng.random()))
    z0 = sample_state(fine, rng, r, decay)
    out = {"N": [], "sup_v_norm": [], "t_sup": []}
    config = SolverConfig(dt=dt, state_every=max(1, int(round(1.0 / dt))))
    for n in Ns:
        b = build_basis(DomainSpec(1, (length,), 2 * n), n)
        s0 = State.from_arrays(b, z0.u.coefficients[:n], z0.v.coefficients[:n])
        rec = simulate(s0, T, config, model, b, metadata={"seed": seed, "index": index})
        rep = regularity_check(rec, model, burn_in)
        out["N"].append(n)
        out["sup_v_norm"].append(rep.sup_v_norm)
        out["t_sup"].append(rep.t_sup)
    s = out["sup_v_norm"]
    out["relative_change"] = [abs(s[i + 1] - s[i]) / abs(s[i]) for i in range(len(s) - 1)]
    return out
