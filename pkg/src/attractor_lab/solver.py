r"""Time integration of the Faedo-Galerkin system and steady-state solves.

The semi-discrete system on the first ``n`` modes is

.. math::

    \dot a = b, \qquad
    \dot b = -\Lambda a - P_n g(E b) - P_n f(E a) + P_n \phi ,

where ``E`` synthesises grid values and ``P_n`` is the quadrature projection.
Because ``P_n`` uses the same trapezoid rule as the energy's ``int F(u)``, the
semi-discrete energy identity holds exactly; time discretisation is the only
source of residual.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    ArgumentError,
    ConfigurationError,
    DivergenceError,
    EquilibriumError,
    RangeError,
    SimulationError,
    StepError,
)
from .functionals import FunctionalParams, choose_omega
from .model import ModelSpec
from .spectral import Field, SpectralBasis

__all__ = [
    "State",
    "SolverConfig",
    "TrajectoryRecord",
    "GalerkinSystem",
    "rhs",
    "step",
    "simulate",
    "solve_equilibrium",
    "EquilibriumResult",
    "difference_quotient",
    "MONITOR_COLUMNS",
]

ENERGY_ABORT = 1e12

# first ten are the documented CSV columns, the rest are extra diagnostics
MONITOR_COLUMNS = (
    "t", "E", "E_alpha", "E_V_omega", "L", "ut_l2", "grad_u_l2",
    "diss_cum", "ut_m1_cum", "st_norm_cum",
    "u_l6", "diss_rate", "h_norm", "v_norm",
)


@dataclass(frozen=True)
class State:
    u: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        if self.u.basis.count != self.v.basis.count or (
            self.u.basis is not self.v.basis and self.u.basis.basis_id != self.v.basis.basis_id
        ):
            raise ArgumentError("u and v must share a basis")
        if not np.isfinite(self.t):
            raise ArgumentError("state time must be finite")

    @property
    def basis(self) -> SpectralBasis:
        return self.u.basis

    @classmethod
    def from_arrays(cls, basis, a, b, t=0.0):
        return cls(Field(basis, a), Field(basis, b), float(t))

    def h_distance(self, other: "State") -> float:
        lam = self.basis.eigenvalues
        da = self.u.coefficients - other.u.coefficients
        db = self.v.coefficients - other.v.coefficients
        return float(np.sqrt(np.sum(lam * da * da) + db @ db))


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    scheme: str = "implicit_midpoint"
    newton_tol: float = 1e-12
    newton_max_iters: int = 30
    record_every: int = 1
    state_every: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.scheme not in ("implicit_midpoint", "rk4_explicit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.newton_tol < 1e-14:
            raise ConfigurationError("newton_tol must be at least 1e-14")
        if self.newton_max_iters < 1:
            raise ConfigurationError("newton_max_iters must be at least 1")
        if self.record_every < 1 or self.state_every < 1:
            raise ConfigurationError("record_every and state_every must be positive")

    def to_dict(self):
        return {
            "dt": self.dt,
            "scheme": self.scheme,
            "newton_tol": self.newton_tol,
            "newton_max_iters": self.newton_max_iters,
            "record_every": self.record_every,
            "state_every": self.state_every,
        }

    @property
    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrajectoryRecord:
    basis: SpectralBasis
    model: ModelSpec
    config: SolverConfig
    params: FunctionalParams
    k: Optional[float]
    states: list = dc_field(default_factory=list)
    monitors: dict = dc_field(default_factory=dict)
    metadata: dict = dc_field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.monitors["t"])

    @property
    def state_times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> State:
        return self.states[-1]

    def monitor_array(self, name) -> np.ndarray:
        return np.asarray(self.monitors[name])

    def state_at(self, t: float, tol: float = 1e-9) -> State:
        """Stored state at ``t``; cubic Hermite in ``u`` between neighbours otherwise."""
        ts = self.state_times
        if len(ts) == 0 or t < ts[0] - tol or t > ts[-1] + tol:
            raise RangeError(f"t = {t} outside record [{ts[0] if len(ts) else None}, {ts[-1] if len(ts) else None}]")
        j = int(np.argmin(np.abs(ts - t)))
        if abs(ts[j] - t) <= tol * max(1.0, abs(t)):
            return self.states[j]
        i = int(np.searchsorted(ts, t)) - 1
        i = min(max(i, 0), len(ts) - 2)
        s0, s1 = self.states[i], self.states[i + 1]
        h = s1.t - s0.t
        if h > self.config.dt * self.config.state_every * (1 + 1e-9) + tol:
            raise RangeError("neighbouring samples too far apart to interpolate")
        x = (t - s0.t) / h
        h00 = 2 * x**3 - 3 * x**2 + 1
        h10 = x**3 - 2 * x**2 + x
        h01 = -2 * x**3 + 3 * x**2
        h11 = x**3 - x**2
        a = (h00 * s0.u.coefficients + h10 * h * s0.v.coefficients
             + h01 * s1.u.coefficients + h11 * h * s1.v.coefficients)
        b = (1 - x) * s0.v.coefficients + x * s1.v.coefficients
        return State.from_arrays(self.basis, a, b, t)


class GalerkinSystem:
    """Right-hand side and Jacobians of the ``n``-mode Galerkin ODE."""

    def __init__(self, model: ModelSpec, basis: SpectralBasis, n: Optional[int] = None):
        n = basis.count if n is None else int(n)
        if not 1 <= n <= basis.count:
            raise ArgumentError(f"mode count {n} outside [1, {basis.count}]")
        self.model = model
        self.basis = basis
        self.n = n
        self.E = np.ascontiguousarray(basis.synthesis[:, :n])
        self.A = np.ascontiguousarray(basis.analysis[:n, :])
        self.lam = np.array(basis.eigenvalues[:n])
        self.phi = np.array(model.forcing_coefficients(basis)[:n])
        self.g = model.damping.g
        self.dg = model.damping.dg
        self.f = model.nonlinearity.f
        self.df = model.nonlinearity.df

    def accel(self, a, b):
        ug = self.E @ a
        vg = self.E @ b
        return -self.lam * a - self.A @ (self.g(vg) + self.f(ug)) + self.phi

    def jac_u(self, a):
        ug = self.E @ a
        return (self.A * self.df(ug)) @ self.E

    def jac_v(self, b):
        vg = self.E @ b
        return (self.A * self.dg(vg)) @ self.E

    def pad(self, x):
        out = np.zeros(self.basis.count)
        out[: self.n] = x
        return out


def rhs(state: State, model: ModelSpec, basis: SpectralBasis, n: Optional[int] = None):
    """``(du, dv)`` of the Galerkin system; coefficients beyond ``n`` are ignored."""
    sys_ = GalerkinSystem(model, basis, n)
    a = state.u.coefficients[: sys_.n]
    b = state.v.coefficients[: sys_.n]
    return Field(basis, sys_.pad(b)), Field(basis, sys_.pad(sys_.accel(a, b)))


def _midpoint(sys_: GalerkinSystem, a0, b0, dt, tol, max_iters, t):
    # Eliminating u1 = u0 + dt*bm leaves n equations in the midpoint velocity bm;
    # the u-half of the 2n-unknown residual then vanishes identically.
    h = 0.5 * dt
    bm = b0 + h * sys_.accel(a0, b0)
    I = np.eye(sys_.n)
    res = np.inf
    for _ in range(max_iters):
        am = a0 + h * bm
        R = bm - b0 - h * sys_.accel(am, bm)
        res = float(np.max(np.abs(R)))
        if not np.isfinite(res):
            break
        if res <= tol:
            return a0 + dt * bm, 2.0 * bm - b0, res
        Ju = np.diag(sys_.lam) + sys_.jac_u(am)
        J = I + h * (h * Ju + sys_.jac_v(bm))
        bm = bm - np.linalg.solve(J, R)
    raise StepError(f"Newton did not converge at t = {t:.6g} (residual {res:.3e})", residual=res, t=t)


def _rk4(sys_: GalerkinSystem, a0, b0, dt):
    k1a, k1b = b0, sys_.accel(a0, b0)
    k2a, k2b = b0 + 0.5 * dt * k1b, sys_.accel(a0 + 0.5 * dt * k1a, b0 + 0.5 * dt * k1b)
    k3a, k3b = b0 + 0.5 * dt * k2b, sys_.accel(a0 + 0.5 * dt * k2a, b0 + 0.5 * dt * k2b)
    k4a, k4b = b0 + dt * k3b, sys_.accel(a0 + dt * k3a, b0 + dt * k3b)
    a1 = a0 + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    b1 = b0 + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
    return a1, b1


def _advance(sys_, a, b, config: SolverConfig, t, dt=None):
    dt = config.dt if dt is None else dt
    if config.scheme == "implicit_midpoint":
        a1, b1, _ = _midpoint(sys_, a, b, dt, config.newton_tol, config.newton_max_iters, t)
    else:
        a1, b1 = _rk4(sys_, a, b, dt)
    return a1, b1


def step(state: State, config: SolverConfig, model: ModelSpec, basis: SpectralBasis,
         n: Optional[int] = None, dt: Optional[float] = None) -> State:
    """Advance one step of size ``dt`` (default ``config.dt``; may be negative)."""
    sys_ = GalerkinSystem(model, basis, n)
    a = state.u.coefficients[: sys_.n]
    b = state.v.coefficients[: sys_.n]
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DivergenceError("non-finite state", t=state.t)
    h = config.dt if dt is None else float(dt)
    a1, b1 = _advance(sys_, a, b, config, state.t, h)
    if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(b1))):
        raise DivergenceError("non-finite state after step", t=state.t + h)
    return State.from_arrays(basis, sys_.pad(a1), sys_.pad(b1), state.t + h)


class _Monitor:
    """Evaluates every monitored functional from coefficient arrays."""

    def __init__(self, sys_: GalerkinSystem, params: FunctionalParams, k: float):
        b = sys_.basis
        self.sys = sys_
        self.params = params
        self.k = k
        self.w = b.domain.cell_weight
        self.G = [np.ascontiguousarray(D[:, : sys_.n]) for D in b.gradient_synthesis]
        self.m = sys_.model.damping.m
        self.F = sys_.model.nonlinearity.F
        self.phi_sq = float(sys_.phi @ sys_.phi)

    def _lq_pow(self, grid, q):
        # ||w||_q^q on the grid
        return self.w * float(np.sum(np.abs(grid) ** q))

    def values(self, a, b):
        s = self.sys
        lam = s.lam
        ug = s.E @ a
        vg = s.E @ b
        grad2 = float(np.sum(lam * a * a))
        ut2 = float(b @ b)
        E = 0.5 * ut2 + 0.5 * grad2 + self.w * float(np.sum(self.F(ug))) - float(s.phi @ a)
        E_alpha = E + self.params.alpha * float(a @ b)
        gsq = np.zeros_like(ug)
        for D in self.G:
            gd = D @ a
            gsq += gd * gd
        lap2 = float(np.sum(lam * lam * a * a))
        gut2 = float(np.sum(lam * b * b))
        EV = (0.5 * gut2 + 0.5 * lap2 - float(np.sum(lam * s.phi * a))
              + 0.5 * self.w * float(np.sum(s.df(ug) * gsq))
              + self.params.K_omega * grad2 + 2.0 * self.phi_sq)
        q = 3.0 * self.k + 3.0
        st = self._lq_pow(ug, q) ** ((self.k + 1.0) / q)
        return {
            "E": E,
            "E_alpha": E_alpha,
            "E_V_omega": EV,
            "L": E,
            "ut_l2": np.sqrt(ut2),
            "grad_u_l2": np.sqrt(grad2),
            "u_l6": self._lq_pow(ug, 6.0) ** (1.0 / 6.0),
            "diss_rate": self.w * float(np.sum(s.g(vg) * vg)),
            "ut_m1_rate": self._lq_pow(vg, self.m + 1.0),
            "st_rate": st,
            "h_norm": np.sqrt(grad2 + ut2),
            "v_norm": np.sqrt(gut2) + np.sqrt(lap2),
        }


def _append(mon, t, vals, prev):
    mon["t"].append(t)
    for key in ("E", "E_alpha", "E_V_omega", "L", "ut_l2", "grad_u_l2", "u_l6", "diss_rate", "h_norm", "v_norm"):
        mon[key].append(float(vals[key]))
    if prev is None:
        for key in ("diss_cum", "ut_m1_cum", "st_norm_cum"):
            mon[key].append(0.0)
    else:
        t0, v0 = prev
        dt = t - t0
        mon["diss_cum"].append(mon["diss_cum"][-1] + 0.5 * dt * (vals["diss_rate"] + v0["diss_rate"]))
        mon["ut_m1_cum"].append(mon["ut_m1_cum"][-1] + 0.5 * dt * (vals["ut_m1_rate"] + v0["ut_m1_rate"]))
        mon["st_norm_cum"].append(mon["st_norm_cum"][-1] + 0.5 * dt * (vals["st_rate"] + v0["st_rate"]))


def simulate(initial: State, T: float, config: SolverConfig, model: ModelSpec, basis: SpectralBasis,
             params: Optional[FunctionalParams] = None, n: Optional[int] = None,
             k: Optional[float] = None, metadata: Optional[dict] = None) -> TrajectoryRecord:
    """Integrate from ``initial`` over ``[t0, t0 + T]`` recording monitors and states.

    ``params`` defaults to ``choose_omega`` on the initial state.  Raises
    :class:`DivergenceError` or :class:`SimulationError` carrying the partial
    record and the failure time.
    """
    if not T > 0:
        raise ArgumentError("horizon T must be positive")
    if params is None:
        params = choose_omega(initial, model)
    if k is None:
        k = params.exponent(model)
    sys_ = GalerkinSystem(model, basis, n)
    mon_eval = _Monitor(sys_, params, k)
    mon = {key: [] for key in MONITOR_COLUMNS}
    record = TrajectoryRecord(basis=basis, model=model, config=config, params=params, k=float(k),
                              monitors=mon, metadata=dict(metadata or {}))
    record.metadata.setdefault("model_hash", model.hash)
    record.metadata.setdefault("config_hash", config.hash)
    record.metadata["n_modes"] = sys_.n

    a = np.array(initial.u.coefficients[: sys_.n])
    b = np.array(initial.v.coefficients[: sys_.n])
    t0 = float(initial.t)
    nsteps = int(round(T / config.dt))
    if abs(nsteps * config.dt - T) > 1e-9 * max(1.0, T):
        raise ArgumentError(f"T = {T} is not a whole number of steps of dt = {config.dt}")

    def emit_state(t):
        record.states.append(State.from_arrays(basis, sys_.pad(a), sys_.pad(b), t))

    vals = mon_eval.values(a, b)
    _append(mon, t0, vals, None)
    prev = (t0, vals)
    emit_state(t0)
    for i in range(1, nsteps + 1):
        t_old = t0 + (i - 1) * config.dt
        t = t0 + i * config.dt
        try:
            a, b = _advance(sys_, a, b, config, t_old)
        except StepError as exc:
            record.metadata.update(outcome="failed", failure_time=t_old, residual=exc.residual)
            _finalise(record)
            raise SimulationError(str(exc), t=t_old, record=record, cause=exc) from exc
        finite = np.all(np.isfinite(a)) and np.all(np.isfinite(b))
        if finite:
            vals_now = mon_eval.values(a, b)
        if not finite or not np.isfinite(vals_now["E"]) or abs(vals_now["E"]) > ENERGY_ABORT:
            record.metadata.update(outcome="diverged", failure_time=t)
            _finalise(record)
            raise DivergenceError(f"trajectory diverged at t = {t:.6g}", t=t, record=record)
        if i % config.record_every == 0 or i == nsteps:
            _append(mon, t, vals_now, prev)
            prev = (t, vals_now)
        if i % config.state_every == 0 or i == nsteps:
            emit_state(t)
    record.metadata.setdefault("outcome", "completed")
    _finalise(record)
    return record


def _finalise(record):
    for key in list(record.monitors):
        record.monitors[key] = np.asarray(record.monitors[key], dtype=float)


@dataclass
class EquilibriumResult:
    field: Field
    iterations: int
    residual: float


def equilibrium_residual(u: Field, model: ModelSpec, basis: SpectralBasis) -> np.ndarray:
    sys_ = GalerkinSystem(model, basis)
    a = u.coefficients
    return sys_.lam * a + sys_.A @ model.nonlinearity.f(sys_.E @ a) - sys_.phi


def solve_equilibrium(guess: Field, model: ModelSpec, basis: SpectralBasis, tol: float = 1e-10,
                      max_iters: int = 60) -> EquilibriumResult:
    """Newton for ``-Lap u + P f(u) = P phi`` with a backtracking line search."""
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    sys_ = GalerkinSystem(model, basis)
    a = np.array(guess.coefficients, dtype=float)

    def resid(x):
        return sys_.lam * x + sys_.A @ sys_.f(sys_.E @ x) - sys_.phi

    R = resid(a)
    r = float(np.linalg.norm(R))
    for it in range(max_iters + 1):
        if r <= tol:
            return EquilibriumResult(Field(basis, a), it, r)
        if it == max_iters:
            break
        J = np.diag(sys_.lam) + sys_.jac_u(a)
        try:
            lu = sla.lu_factor(J, check_finite=True)
            if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
                raise np.linalg.LinAlgError("singular")
            d = sla.lu_solve(lu, -R)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EquilibriumError(f"singular Jacobian at Newton step {it}", residual=r, iterations=it) from exc
        s = 1.0
        while True:
            trial = a + s * d
            Rt = resid(trial)
            rt = float(np.linalg.norm(Rt))
            if rt < (1 - 1e-4 * s) * r or s < 1e-8:
                break
            s *= 0.5
        a, R, r = trial, Rt, rt
    raise EquilibriumError(f"Newton did not converge (residual {r:.3e})", residual=r, iterations=max_iters)


def difference_quotient(record: TrajectoryRecord, t: float, h: float):
    """``(D_h u, D_h u_t)`` with ``D_h w(t) = (w(t+h) - w(t)) / h``."""
    if not h > 0:
        raise ArgumentError("h must be positive")
    ts = record.state_times
    if t + h > ts[-1] + 1e-9 or t < ts[0] - 1e-9:
        raise RangeError(f"[t, t+h] = [{t}, {t + h}] not covered by the record")
    s0 = record.state_at(t)
    s1 = record.state_at(t + h)
    Du = (s1.u.coefficients - s0.u.coefficients) / h
    Dv = (s1.v.coefficients - s0.v.coefficients) / h
    return Field(record.basis, Du), Field(record.basis, Dv)


def with_config(config: SolverConfig, **changes) -> SolverConfig:
    return replace(config, **changes)
