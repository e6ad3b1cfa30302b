"""Energy-type functionals on states and trajectory records.

Gradient and Laplacian norms are spectral (exact at truncation); integrals of
``F(u)``, ``f'(u)|grad u|^2`` and L^q norms use the trapezoid grid of the basis.
A "state" here is anything with ``u`` and ``v`` Fields on a common basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ModelSpec, exponent_k, validate_assumptions
from .spectral import grid_lq_norm

__all__ = [
    "FunctionalParams",
    "EnergyReport",
    "JConstants",
    "energy_E",
    "energy_E_alpha",
    "strong_energy",
    "lyapunov",
    "strong_energy_coercive",
    "choose_omega",
    "space_time_norm",
    "big_R",
    "energy_identity_residual",
    "functional_J",
    "witness_J_constants",
    "h_norm",
    "v_norm_surrogate",
    "energy_report",
]


@dataclass(frozen=True)
class FunctionalParams:
    alpha: float = 0.1
    omega: float = 1e-2
    K_omega: float = 0.0
    k: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.omega <= 0 or self.K_omega < 0:
            raise ValueError("omega must be positive and K_omega non-negative")

    def exponent(self, model: ModelSpec) -> float:
        return exponent_k(model.damping.m) if self.k is None else float(self.k)

    def to_dict(self):
        return {"alpha": self.alpha, "omega": self.omega, "K_omega": self.K_omega, "k": self.k}


@dataclass(frozen=True)
class JConstants:
    """Constants of the absorbing-set functional ``J``."""

    C2: float
    C3: float
    delta: float
    lam: float

    def to_dict(self):
        return {"C2": self.C2, "C3": self.C3, "delta": self.delta, "lambda": self.lam}


@dataclass
class EnergyReport:
    E: float
    E_alpha: float
    E_V_omega: float
    L: float
    J: float
    dissipation_cum: float
    identity_residual: float


def _grid(field):
    return field.basis.synthesis @ field.coefficients


def _phi(model, basis):
    return model.forcing_coefficients(basis)


def energy_E(state, model: ModelSpec) -> float:
    u, v = state.u, state.v
    b = u.basis
    a = u.coefficients
    w = b.domain.cell_weight
    potential = w * float(np.sum(model.nonlinearity.F(_grid(u))))
    return float(
        0.5 * v.coefficients @ v.coefficients
        + 0.5 * np.sum(b.eigenvalues * a * a)
        + potential
        - _phi(model, b) @ a
    )


def lyapunov(state, model: ModelSpec) -> float:
    """Same formula as :func:`energy_E`; the energy is the Lyapunov functional."""
    return energy_E(state, model)


def energy_E_alpha(state, model: ModelSpec, params: FunctionalParams) -> float:
    return energy_E(state, model) + params.alpha * float(state.u.coefficients @ state.v.coefficients)


def _grad_sq_grid(field):
    b = field.basis
    out = np.zeros(b.synthesis.shape[0])
    for D in b.gradient_synthesis:
        g = D @ field.coefficients
        out += g * g
    return out


def strong_energy(state, model: ModelSpec, params: FunctionalParams) -> float:
    u, v = state.u, state.v
    b = u.basis
    lam = b.eigenvalues
    a, c = u.coefficients, v.coefficients
    phi = _phi(model, b)
    w = b.domain.cell_weight
    fprime = model.nonlinearity.df(_grid(u))
    curv = 0.5 * w * float(np.sum(fprime * _grad_sq_grid(u)))
    return float(
        0.5 * np.sum(lam * c * c)
        + 0.5 * np.sum(lam * lam * a * a)
        - np.sum(lam * phi * a)
        + curv
        + params.K_omega * np.sum(lam * a * a)
        + 2.0 * phi @ phi
    )


def v_norm_surrogate(state) -> float:
    """``||grad u_t|| + ||Lap u||``."""
    lam = state.u.basis.eigenvalues
    return float(np.sqrt(np.sum(lam * state.v.coefficients**2)) + np.sqrt(np.sum(lam**2 * state.u.coefficients**2)))


def h_norm(state) -> float:
    lam = state.u.basis.eigenvalues
    return float(np.sqrt(np.sum(lam * state.u.coefficients**2) + np.sum(state.v.coefficients**2)))


def strong_energy_coercive(state, model: ModelSpec, params: FunctionalParams) -> bool:
    lam = state.u.basis.eigenvalues
    lower = 0.25 * (np.sum(lam * state.v.coefficients**2) + np.sum(lam**2 * state.u.coefficients**2))
    return bool(strong_energy(state, model, params) >= lower - 1e-12 * (1.0 + lower))


def choose_omega(state, model: ModelSpec, alpha: float = 0.1, k=None, candidates=None) -> FunctionalParams:
    """Largest ``omega`` in ``1e-1, 1e-2, ...`` for which coercivity holds on ``state``.

    ``K_omega`` is taken from the (F3) witness at that ``omega``.
    """
    lambda_1 = state.u.basis.lambda_1
    candidates = candidates or [10.0**-j for j in range(1, 9)]
    last = None
    for w in candidates:
        spec = model.nonlinearity
        probe = ModelSpec(model.damping, _with_omega(spec, w), model.forcing)
        rep = validate_assumptions(probe, lambda_1)
        K = float(rep.constant("F3", "K_omega"))
        params = FunctionalParams(alpha=alpha, omega=w, K_omega=K, k=k)
        last = params
        if strong_energy_coercive(state, model, params):
            return params
    return last


def _with_omega(spec, omega):
    from dataclasses import replace

    return replace(spec, omega=omega)


# -- record-level quantities ---------------------------------------------------

def energy_identity_residual(record) -> np.ndarray:
    E = np.asarray(record.monitors["E"])
    D = np.asarray(record.monitors["diss_cum"])
    return np.abs(E + D - E[0])


def _trapezoid(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def space_time_norm(record, k: float) -> float:
    """Trapezoid-in-time of ``||u||_{3k+3}^{k+1}`` over the record.

    Uses the monitored cumulative column when ``k`` matches the exponent the
    record was monitored with, otherwise recomputes from stored states.
    """
    if record.k is not None and abs(float(k) - record.k) < 1e-14 and "st_norm_cum" in record.monitors:
        return float(record.monitors["st_norm_cum"][-1])
    return direct_space_time_norm(record, k)


def direct_space_time_norm(record, k: float) -> float:
    q = 3.0 * k + 3.0
    ts = [s.t for s in record.states]
    vals = [grid_lq_norm(_grid(s.u), s.u.basis, q) ** (k + 1.0) for s in record.states]
    return _trapezoid(vals, ts)


def big_R(record, T: Optional[float] = None) -> float:
    """``sup(||u||_6 + ||u_t||) + int ||u_t||_{m+1}^{m+1} + ||phi|| + 1`` on ``[0, T]``."""
    t = np.asarray(record.monitors["t"])
    T = t[-1] if T is None else T
    sel = t <= T + 1e-12
    sup = float(np.max(np.asarray(record.monitors["u_l6"])[sel] + np.asarray(record.monitors["ut_l2"])[sel]))
    ut_int = float(np.asarray(record.monitors["ut_m1_cum"])[sel][-1])
    phi = record.model.forcing_coefficients(record.basis)
    return sup + ut_int + float(np.sqrt(phi @ phi)) + 1.0


def witness_J_constants(model: ModelSpec, basis, C1: float = 1.0, delta: float = 0.05) -> JConstants:
    """Concrete constants for ``J`` from the (F2) margins of the validator.

    ``delta`` is capped by ``(lambda_1 - lambda) / (6 lambda_1 C1)``.
    """
    lambda_1 = basis.lambda_1
    rep = validate_assumptions(model, lambda_1)
    lam = rep.lam
    C = float(rep.constant("potential_bounds", "C"))
    C2 = C * basis.domain.volume
    C3 = 3.0 / (4.0 * (lambda_1 - lam))
    delta = min(delta, (lambda_1 - lam) / (6.0 * lambda_1 * C1))
    return JConstants(C2=C2, C3=C3, delta=delta, lam=lam)


def functional_J(state, model: ModelSpec, params: FunctionalParams, lambda_1: float,
                 constants: Optional[JConstants] = None) -> float:
    b = state.u.basis
    if constants is None:
        constants = witness_J_constants(model, b)
    lam = constants.lam
    coef = (lambda_1 - lam) / (3.0 * lambda_1)
    grad2 = float(np.sum(b.eigenvalues * state.u.coefficients**2))
    ut2 = float(state.v.coefficients @ state.v.coefficients)
    phi = _phi(model, b)
    return coef * (ut2 + grad2) - (constants.C2 + 3.0 * constants.delta + constants.C3 * float(phi @ phi))


def energy_report(state, record, index: int, model, params, constants=None) -> EnergyReport:
    mon = record.monitors
    E0 = mon["E"][0]
    return EnergyReport(
        E=float(mon["E"][index]),
        E_alpha=float(mon["E_alpha"][index]),
        E_V_omega=float(mon["E_V_omega"][index]),
        L=float(mon["L"][index]),
        J=functional_J(state, model, params, state.u.basis.lambda_1, constants),
        dissipation_cum=float(mon["diss_cum"][index]),
        identity_residual=float(abs(mon["E"][index] + mon["diss_cum"][index] - E0)),
    )
