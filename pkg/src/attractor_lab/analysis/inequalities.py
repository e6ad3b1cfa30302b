"""Numeric certificates for the three auxiliary inequalities.

Each certifier searches for a witnessing constant on a search set (a sample
grid or a batch of random trials) and then re-checks it on an independent set
ten times larger.  A certificate passes only if both checks pass.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from ..errors import ArgumentError
from ..model import DampingSpec, sample_grid
from ..spectral import DomainSpec, Field, SpectralBasis, build_basis, grid_lq_norm, to_grid

__all__ = [
    "InequalityCertificate",
    "find_g_delta_constant",
    "check_interpolation",
    "interpolation_conditions",
    "interpolation_sides",
    "GronwallProfile",
    "gronwall_profile",
    "check_gronwall",
    "round_up_sig",
]

C_MAX = 1e9


@dataclass
class InequalityCertificate:
    tag: str
    passed: bool
    constants: dict
    grid: dict
    max_violation: float
    edge_margin: Optional[float] = None
    verification: dict = dc_field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {
            "tag": self.tag,
            "passed": bool(self.passed),
            "constants": _clean(self.constants),
            "grid": _clean(self.grid),
            "max_violation": _num(self.max_violation),
            "edge_margin": _num(self.edge_margin),
            "verification": _clean(self.verification),
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def round_up_sig(x: float, digits: int = 3) -> float:
    """Smallest number with ``digits`` significant figures that is >= ``x``."""
    if x <= 0:
        return 0.0
    q = 10.0 ** (math.floor(math.log10(x)) - digits + 1)
    r = float(f"{math.ceil(x / q) * q:.{digits}g}")
    while r < x:
        r = float(f"{r + q:.{digits}g}")
    return r


# -- g_delta inequalities ------------------------------------------------------

def _gdelta_violation(damping: DampingSpec, delta: float, c: float, s):
    g = damping.g(s)
    gs = g * s
    m = damping.m
    v1 = s * s + np.abs(s) ** (m + 1.0) - c * gs - delta
    v2 = np.abs(g) ** ((m + 1.0) / m) - c * gs - delta
    return np.maximum(v1, v2)


def _refined_max(fun, s):
    """Grid max of ``fun`` refined by a bounded search around the worst points."""
    vals = fun(s)
    best = float(np.max(vals))
    order = np.argsort(vals)[::-1][:3]
    for i in order:
        lo = s[max(i - 1, 0)]
        hi = s[min(i + 1, len(s) - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(lambda x: -float(fun(np.array([x]))[0]), bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-12 * max(1.0, abs(hi))})
        best = max(best, -float(res.fun))
    return best


def _dense_grid(n: int, lo: float, hi: float, factor: int = 10) -> np.ndarray:
    # log-offset by half a search cell so no verification point repeats a search point
    k = factor * n
    step = (math.log10(hi) - math.log10(lo)) / (k - 1)
    mags = 10.0 ** (math.log10(lo) + step * (np.arange(k) + 0.5))
    mags = mags[mags <= hi]
    return np.concatenate([-mags[::-1], [0.0], mags])


def find_g_delta_constant(damping: DampingSpec, delta: float, n: int = 400, lo: float = 1e-6, hi: float = 1e3,
                          digits: int = 3) -> InequalityCertificate:
    """Least ``c(delta)`` (rounded up to ``digits`` significant figures) for both
    ``s^2 + |s|^(m+1) <= c g(s)s + delta`` and ``|g|^((m+1)/m) <= c g(s)s + delta``.
    """
    if not 0 < delta < 1:
        raise ArgumentError("delta must lie in (0, 1)")
    s = sample_grid(n, lo, hi)
    grid = {"kind": "sign_symmetric_log", "n": n, "lo": lo, "hi": hi, "includes_zero": True}

    def worst(c, pts=s):
        return _refined_max(lambda x: _gdelta_violation(damping, delta, c, x), pts)

    lo_c, hi_c = 0.0, 1.0
    while worst(hi_c) > 0:
        lo_c, hi_c = hi_c, 2.0 * hi_c
        if hi_c > C_MAX:
            return InequalityCertificate(
                "g_delta", False, {"delta": delta, "c": None}, grid, float(worst(C_MAX)),
                message=f"no constant below {C_MAX:g} satisfies both inequalities",
            )
    while hi_c - lo_c > 1e-6 * hi_c:
        mid = 0.5 * (lo_c + hi_c)
        if worst(mid) <= 0:
            hi_c = mid
        else:
            lo_c = mid
    c = round_up_sig(hi_c, digits)
    viol = float(np.max(_gdelta_violation(damping, delta, c, s)))
    edge = s[-1]
    gs = float(damping.g(np.array([edge]))[0] * edge)
    edge_margin = -float(_gdelta_violation(damping, delta, c, np.array([edge]))[0]) / (c * gs + delta)

    dense = _dense_grid(n, lo, hi)
    dviol = float(np.max(_gdelta_violation(damping, delta, c, dense)))
    verification = {"grid": {"kind": "sign_symmetric_log_offset", "n": int((len(dense) - 1) // 2), "lo": lo, "hi": hi},
                    "max_violation": dviol, "passed": bool(dviol <= 0)}
    passed = viol <= 0 and dviol <= 0
    return InequalityCertificate(
        "g_delta", passed, {"delta": delta, "c": c, "c_unrounded": hi_c, "m": damping.m}, grid, viol,
        edge_margin, verification,
        message="" if passed else "constant fails on the verification grid",
    )


# -- interpolation inequality ----------------------------------------------------

def interpolation_conditions(lambda_e, mu_e, k, q, m):
    """List of violated exponent conditions, empty when all of (i)-(iii) hold."""
    bad = []
    if not (lambda_e > 0 and mu_e > 0 and k >= 1 and 1 <= q <= 3):
        bad.append("(i)")
    if lambda_e / (3 * k + 3) + mu_e / (m + 1) > 1 + 1e-12:
        bad.append("(ii)")
    if (lambda_e - (q - 1) * (k - 1)) / (k + 5) + mu_e / (m + 1) > 1 + 1e-12:
        bad.append("(iii)")
    return bad


def _interp_basis():
    return build_basis(DomainSpec(1, (1.0,), 64), 16)


AMP_LOG10 = (-2.0, 2.0)


def interpolation_sides(phi: Field, psi: Field, C, lambda_e, mu_e, k, q, m, theta=0.1):
    """Both sides of the interpolation inequality for one field pair, evaluated directly."""
    b = phi.basis
    pg, sg = to_grid(phi).reshape(-1), to_grid(psi).reshape(-1)
    w = b.domain.cell_weight
    lhs = (w * np.sum(np.abs(pg) ** lambda_e * np.abs(sg) ** mu_e)) ** (1.0 / q)
    rhs = (theta + theta * grid_lq_norm(pg, b, 3 * k + 3) ** (k + 1)
           + C * (1.0 + grid_lq_norm(pg, b, 6) ** (lambda_e * (m + 1) / mu_e)) * grid_lq_norm(sg, b, m + 1) ** (m + 1))
    return float(lhs), float(rhs)


def _interp_shapes(basis: SpectralBasis, rng, trials, lambda_e, mu_e, k, q, m):
    """Unit-L^2 field pairs and their amplitude-free norm factors.

    Every term of the inequality is a power of the two amplitudes times one of
    these factors, so the constant required by a pair at any amplitudes is
    available in closed form.
    """
    n = basis.count
    lam = basis.eigenvalues
    E = basis.synthesis
    w = basis.domain.cell_weight
    out = np.empty((trials, 6))
    for j in range(trials):
        dec_phi, dec_psi = rng.choice([0.0, 0.5, 1.0], size=2)
        amp_phi, amp_psi = 10.0 ** rng.uniform(*AMP_LOG10, size=2)
        phi = E @ (lam ** (-dec_phi) * rng.standard_normal(n))
        psi = E @ (lam ** (-dec_psi) * rng.standard_normal(n))
        phi /= max(grid_lq_norm(phi, basis, 2), 1e-300)
        psi /= max(grid_lq_norm(psi, basis, 2), 1e-300)
        P = (w * np.sum(np.abs(phi) ** lambda_e * np.abs(psi) ** mu_e)) ** (1.0 / q)
        A = grid_lq_norm(phi, basis, 3 * k + 3) ** (k + 1)
        B = grid_lq_norm(phi, basis, 6) ** (lambda_e * (m + 1) / mu_e)
        D = grid_lq_norm(psi, basis, m + 1) ** (m + 1)
        out[j] = P, A, B, D, amp_phi, amp_psi
    return out


def _interp_parts(shapes, s, t, lambda_e, mu_e, k, q, m, theta):
    P, A, B, D = (shapes[:, i, None] for i in range(4))
    lhs = s ** (lambda_e / q) * t ** (mu_e / q) * P
    free = theta + theta * s ** (k + 1) * A
    weight = (1.0 + s ** (lambda_e * (m + 1) / mu_e) * B) * t ** (m + 1) * D
    return lhs, free, weight


def _worst_amplitudes(shapes, exps, theta, grid_n=41):
    """Per shape, the amplitude pair in the box demanding the largest constant."""
    g = np.logspace(*AMP_LOG10, grid_n)
    S, T_ = np.meshgrid(g, g, indexing="ij")
    s, t = S.ravel()[None, :], T_.ravel()[None, :]
    lhs, free, weight = _interp_parts(shapes, s, t, *exps, theta)
    need = (lhs - free) / weight
    best = np.argmax(need, axis=1)
    pts = np.stack([s[0, best], t[0, best]], axis=1)
    from scipy.optimize import minimize

    lo, hi = AMP_LOG10
    for j in np.argsort(need[np.arange(len(best)), best])[::-1][:20]:
        one = shapes[j:j + 1]

        def neg(x):
            l_, f_, w_ = _interp_parts(one, 10.0 ** x[0], 10.0 ** x[1], *exps, theta)
            return -float(((l_ - f_) / w_)[0, 0])

        res = minimize(neg, np.log10(pts[j]), method="L-BFGS-B", bounds=[(lo, hi), (lo, hi)])
        if -res.fun > -neg(np.log10(pts[j])):
            pts[j] = 10.0 ** res.x
    return pts


def _interp_violation(shapes, amps, C, exps, theta):
    lhs, free, weight = _interp_parts(shapes, amps[:, 0:1], amps[:, 1:2], *exps, theta)
    return float(np.max(lhs - free - C * weight))


def check_interpolation(lambda_e, mu_e, k, q, m, theta=0.1, trials=200, seed=0, safety=2.0,
                        basis: Optional[SpectralBasis] = None) -> InequalityCertificate:
    """Witness ``C_theta`` over random field pairs on a fixed spectral basis.

    For each of ``trials`` random shape pairs the amplitudes in the box
    ``[1e-2, 1e2]^2`` demanding the most are located; ``C_theta`` is bisected to
    the least value valid there, multiplied by ``safety`` and rounded up.  It
    is then re-checked on ``10 * trials`` fresh pairs at random amplitudes.
    """
    consts = {"lambda": lambda_e, "mu": mu_e, "k": k, "q": q, "m": m, "theta": theta}
    bad = interpolation_conditions(lambda_e, mu_e, k, q, m)
    if bad:
        return InequalityCertificate("interpolation", False, consts, {}, float("inf"),
                                     message="exponent condition violated: " + ", ".join(bad))
    if not theta > 0 or trials < 1:
        raise ArgumentError("theta must be positive and trials at least 1")
    basis = basis or _interp_basis()
    exps = (lambda_e, mu_e, k, q, m)
    grid = {"kind": "random_field_pairs", "trials": trials, "seed": seed, "n_modes": basis.count,
            "quad_points": basis.domain.quad_points_per_axis, "amplitude_log10": list(AMP_LOG10),
            "decays": [0.0, 0.5, 1.0], "amplitude_search": "41x41 log grid + L-BFGS-B"}
    shapes = _interp_shapes(basis, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,))), trials, *exps)
    amps = _worst_amplitudes(shapes, exps, theta)
    # bisection on the monotone predicate "holds on every search point"
    lo_c, hi_c = 0.0, 1.0
    while _interp_violation(shapes, amps, hi_c, exps, theta) > 0:
        lo_c, hi_c = hi_c, 2.0 * hi_c
        if hi_c > C_MAX:
            return InequalityCertificate("interpolation", False, consts, grid, float("inf"),
                                         message=f"no constant below {C_MAX:g} found")
    while hi_c - lo_c > 1e-9 * hi_c:
        mid = 0.5 * (lo_c + hi_c)
        if _interp_violation(shapes, amps, mid, exps, theta) <= 0:
            hi_c = mid
        else:
            lo_c = mid
    C = round_up_sig(safety * hi_c, 3)
    viol = _interp_violation(shapes, amps, C, exps, theta)
    held = _interp_shapes(basis, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,))), 10 * trials, *exps)
    hviol = _interp_violation(held, held[:, 4:6], C, exps, theta)
    hworst = _worst_amplitudes(held, exps, theta, grid_n=11)
    lhs, free, weight = (x[:, 0] for x in _interp_parts(held, hworst[:, 0:1], hworst[:, 1:2], *exps, theta))
    consts.update(C_theta=C, C_min=hi_c, safety=safety)
    verification = {"trials": 10 * trials, "seed_spawn_key": 1, "max_violation": hviol, "passed": bool(hviol <= 0),
                    "required_C_worst_amplitudes": float(np.max((lhs - free) / weight))}
    passed = viol <= 0 and hviol <= 0
    return InequalityCertificate("interpolation", passed, consts, grid, viol, None, verification,
                                 message="" if passed else "constant fails on held-out trials")


# -- Gronwall lemma -------------------------------------------------------------

@dataclass(frozen=True)
class GronwallProfile:
    name: str
    h1: Callable
    h2: Callable
    phi0: float = 1.0


def gronwall_profile(name: str, alpha: float, a: float = 1.0, b: float = 1.0, phi0: float = 1.0) -> GronwallProfile:
    """Built-in forcing profiles: ``constant``, ``zero`` and ``oscillatory``."""
    if name == "constant":
        return GronwallProfile(name, lambda t: np.zeros_like(t), lambda t: np.full_like(t, b), phi0)
    if name == "zero":
        return GronwallProfile(name, lambda t: np.zeros_like(t), lambda t: np.zeros_like(t), 1.0)
    if name == "oscillatory":
        # int |h1| over [tau, t] = alpha (t - tau) + (alpha/w)(cos w tau - cos w t) <= alpha (t - tau) + a/2
        w = 4.0 * alpha / a if a > 0 else 0.0
        if a > 0:
            h1 = lambda t: alpha * (1.0 + np.sin(w * t))  # noqa: E731
        else:
            h1 = lambda t: np.full_like(t, alpha)  # noqa: E731
        return GronwallProfile(name, h1, lambda t: b * (1.0 + np.cos(2 * np.pi * t)), phi0)
    raise ArgumentError(f"unknown Gronwall profile {name!r}")


def _cumtrapz(y, t):
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _gronwall_preconditions(profile, alpha, a, b, T, per_unit=4000):
    # unit windows must be whole numbers of cells
    t = np.arange(int(math.ceil(T + 1.0)) * per_unit + 1) / per_unit
    H1 = _cumtrapz(np.abs(profile.h1(t)), t)
    D = H1 - alpha * t
    drawup = float(np.max(D - np.minimum.accumulate(D)))
    H2 = _cumtrapz(np.abs(profile.h2(t)), t)
    shift = per_unit
    window = float(np.max(H2[shift:] - H2[:-shift]))
    tol = 1e-7 * (1.0 + a + b)
    return drawup <= a + tol, window <= b + tol, {"h1_excess": drawup, "h2_window_max": window}


def check_gronwall(h1_spec, h2_spec=None, phi0: Optional[float] = None, alpha: float = 0.1, a: float = 1.0,
                   b: Optional[float] = None, T: float = 30.0, points: int = 3001) -> InequalityCertificate:
    """Integrate the extremal ODE ``Phi' + 2 alpha Phi = h1 Phi + h2`` and check
    ``Phi <= mu |Phi(0)| e^(-alpha t) + rho`` with ``mu = e^a``.

    ``h1_spec`` is either a :class:`GronwallProfile`, a profile name, or a
    callable (then ``h2_spec`` must be one too).  ``b`` defaults to 0 for the
    ``zero`` profile and 1 otherwise.
    """
    if b is None:
        b = 0.0 if h1_spec == "zero" else 1.0
    if isinstance(h1_spec, GronwallProfile):
        profile = h1_spec
    elif isinstance(h1_spec, str):
        profile = gronwall_profile(h1_spec, alpha, a, b, 1.0 if phi0 is None else phi0)
    else:
        profile = GronwallProfile("custom", h1_spec, h2_spec, 1.0)
    if phi0 is not None:
        profile = GronwallProfile(profile.name, profile.h1, profile.h2, float(phi0))
    if not alpha > 0 or a < 0 or b < 0 or not T > 0:
        raise ArgumentError("need alpha > 0, a >= 0, b >= 0 and T > 0")
    mu = math.exp(a)
    rho = b * mu * math.exp(2 * alpha) / (math.exp(alpha) - 1.0)
    consts = {"alpha": alpha, "a": a, "b": b, "mu": mu, "rho": rho, "phi0": profile.phi0, "profile": profile.name}
    ok1, ok2, pre = _gronwall_preconditions(profile, alpha, a, b, T)
    consts.update(pre)
    grid = {"kind": "uniform_time", "T": T, "points": points}
    if not (ok1 and ok2):
        which = [n for n, ok in (("h1 integral bound", ok1), ("h2 window bound", ok2)) if not ok]
        return InequalityCertificate("gronwall", False, consts, grid, float("inf"),
                                     message="precondition failed: " + ", ".join(which))

    def rhs(t, y):
        return (profile.h1(np.array([t]))[0] - 2 * alpha) * y + profile.h2(np.array([t]))[0]

    sol = solve_ivp(rhs, (0.0, T), [profile.phi0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    if not sol.success:
        return InequalityCertificate("gronwall", False, consts, grid, float("inf"), message=sol.message)

    def violation(ts):
        phi = sol.sol(ts)[0]
        return float(np.max(phi - (mu * abs(profile.phi0) * np.exp(-alpha * ts) + rho)))

    ts = np.linspace(0.0, T, points)
    viol = violation(ts)
    dense = np.linspace(0.0, T, 10 * (points - 1) + 1)
    dense = 0.5 * (dense[1:] + dense[:-1])
    dviol = violation(dense)
    verification = {"grid": {"kind": "uniform_time_midpoints", "points": len(dense)}, "max_violation": dviol,
                    "passed": bool(dviol <= 0)}
    passed = viol <= 0 and dviol <= 0
    return InequalityCertificate("gronwall", passed, consts, grid, viol, None, verification,
                                 message="" if passed else "bound violated along the oracle solution")
