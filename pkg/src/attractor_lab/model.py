"""Damping ``g`` and nonlinearity ``f`` families and their assumption checks.

Built-in closed forms::

    g(s) = beta |s|^(m-1) s + gamma s
    f(s) = beta |s|^(p-1) s - lin s

Custom tables are interpolated with a monotone cubic (PCHIP) and extended
linearly past the last node.  The validators sample the conditions on a
sign-symmetric log grid; growth conditions at infinity are judged from the
trend over the last decade of the grid and the margin there is recorded.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ArgumentError, ModelError
from .spectral import Field

DAMPING_FAMILIES = ("power", "power_plus_linear", "linear", "table")
NONLINEARITY_FAMILIES = ("power", "power_minus_linear", "zero", "table", "truncated")

_RATIO_TOL = 2.0  # allowed drift of a bounded ratio over the last grid decade


def sample_grid(n: int = 400, lo: float = 1e-6, hi: float = 1e3) -> np.ndarray:
    """Sign-symmetric grid: ``n`` log-spaced magnitudes on each side plus 0."""
    mags = np.logspace(np.log10(lo), np.log10(hi), n)
    return np.concatenate([-mags[::-1], [0.0], mags])


class _Table:
    """PCHIP table with linear extension past the end nodes."""

    def __init__(self, table):
        pts = np.asarray(table, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ModelError("table must be a list of at least three (s, value) pairs")
        order = np.argsort(pts[:, 0])
        s, y = pts[order, 0], pts[order, 1]
        if np.any(np.diff(s) <= 0):
            raise ModelError("table abscissae must be distinct")
        if not (s[0] < 0.0 < s[-1]) or not np.any(s == 0.0):
            raise ModelError("table must contain s = 0 strictly inside its range")
        if y[s == 0.0][0] != 0.0:
            raise ModelError("tabulated function must vanish at s = 0")
        self.s, self.y = s, y
        self.p = PchipInterpolator(s, y, extrapolate=False)
        self.dp = self.p.derivative()
        self.d2p = self.p.derivative(2)
        self.P = self.p.antiderivative()
        self.P0 = float(self.P(0.0))
        self.lo, self.hi = s[0], s[-1]
        self.slope_lo = float(self.dp(self.lo))
        self.slope_hi = float(self.dp(self.hi))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lo, self.hi)
        out = self.p(xc)
        out = out + np.where(x > self.hi, self.slope_hi * (x - self.hi), 0.0)
        out = out + np.where(x < self.lo, self.slope_lo * (x - self.lo), 0.0)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = self.dp(np.clip(x, self.lo, self.hi))
        out = np.where(x > self.hi, self.slope_hi, out)
        return np.where(x < self.lo, self.slope_lo, out)

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, self.d2p(np.clip(x, self.lo, self.hi)), 0.0)

    def primitive(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lo, self.hi)
        out = self.P(xc) - self.P0
        y_hi, y_lo = float(self.p(self.hi)), float(self.p(self.lo))
        dh = np.where(x > self.hi, x - self.hi, 0.0)
        dl = np.where(x < self.lo, x - self.lo, 0.0)
        out = out + y_hi * dh + 0.5 * self.slope_hi * dh**2
        return out + y_lo * dl + 0.5 * self.slope_lo * dl**2


def _signed_power(s, e):
    return np.abs(s) ** (e - 1.0) * s


@dataclass(frozen=True)
class DampingSpec:
    family: str = "power"
    m: float = 3.0
    gamma: float = 0.0
    coefficient: float = 1.0
    c1: Optional[float] = None
    c2: Optional[float] = None
    c3: Optional[float] = None
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in DAMPING_FAMILIES:
            raise ModelError(f"unknown damping family {self.family!r}")
        if not 1.0 < float(self.m) <= 5.0:
            raise ModelError(f"damping exponent m must lie in (1, 5], got {self.m}")
        if self.gamma < 0:
            raise ModelError("gamma must be non-negative")
        if self.family == "power" and self.gamma != 0.0:
            raise ModelError("family 'power' has no linear part; use 'power_plus_linear'")
        if self.family in ("power", "power_plus_linear") and self.coefficient <= 0:
            raise ModelError("power coefficient must be positive")
        if self.family == "linear" and self.gamma <= 0:
            raise ModelError("linear damping needs gamma > 0")
        if self.family == "table":
            if self.table is None:
                raise ModelError("table family requires a table")
            object.__setattr__(self, "table", tuple(tuple(map(float, r)) for r in self.table))
            t = self._tab
            if np.any(np.diff(t.y) <= 0):
                raise ModelError("damping table is not strictly increasing")

    @cached_property
    def _tab(self):
        return _Table(self.table)

    def g(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "table":
            return self._tab.value(s)
        if self.family == "linear":
            return self.gamma * s
        return self.coefficient * _signed_power(s, self.m) + self.gamma * s

    def dg(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "table":
            return self._tab.derivative(s)
        if self.family == "linear":
            return np.full_like(s, self.gamma)
        return self.coefficient * self.m * np.abs(s) ** (self.m - 1.0) + self.gamma

    def G(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "table":
            return self._tab.primitive(s)
        if self.family == "linear":
            return 0.5 * self.gamma * s * s
        return self.coefficient * np.abs(s) ** (self.m + 1.0) / (self.m + 1.0) + 0.5 * self.gamma * s * s

    def to_dict(self):
        d = {"family": self.family, "m": self.m, "gamma": self.gamma, "coefficient": self.coefficient}
        for key in ("c1", "c2", "c3"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.table is not None:
            d["table"] = [list(r) for r in self.table]
        return d


@dataclass(frozen=True)
class NonlinearitySpec:
    """``lam`` is the (F2) constant; ``None`` means half the first eigenvalue."""

    family: str = "power"
    p: float = 3.0
    lin: float = 0.0
    coefficient: float = 1.0
    lam: Optional[float] = None
    omega: float = 1e-2
    K_omega: Optional[float] = None
    table: Optional[tuple] = None
    base: Optional["NonlinearitySpec"] = None
    n: Optional[float] = None

    def __post_init__(self):
        if self.family not in NONLINEARITY_FAMILIES:
            raise ModelError(f"unknown nonlinearity family {self.family!r}")
        if self.family != "truncated" and not 2.0 <= float(self.p) <= 5.0:
            raise ModelError(f"nonlinearity exponent p must lie in [2, 5], got {self.p}")
        if self.lin < 0:
            raise ModelError("linear coefficient must be non-negative")
        if self.family == "power" and self.lin != 0.0:
            raise ModelError("family 'power' has no linear part; use 'power_minus_linear'")
        if self.omega <= 0:
            raise ModelError("omega must be positive")
        if self.family == "table":
            if self.table is None:
                raise ModelError("table family requires a table")
            object.__setattr__(self, "table", tuple(tuple(map(float, r)) for r in self.table))
            self._tab  # noqa: B018  (validates the table eagerly)
        if self.family == "truncated":
            if self.base is None or self.n is None or self.n < 1:
                raise ModelError("truncated family requires a base spec and n >= 1")

    @cached_property
    def _tab(self):
        return _Table(self.table)

    def resolved_lambda(self, lambda_1: float) -> float:
        return 0.5 * lambda_1 if self.lam is None else float(self.lam)

    def f(self, s):
        s = np.asarray(s, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(s)
        if fam == "table":
            return self._tab.value(s)
        if fam == "truncated":
            return self.base.f(np.clip(s, -self.n, self.n))
        return self.coefficient * _signed_power(s, self.p) - self.lin * s

    def df(self, s):
        s = np.asarray(s, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(s)
        if fam == "table":
            return self._tab.derivative(s)
        if fam == "truncated":
            inside = np.abs(s) < self.n
            return np.where(inside, self.base.df(np.clip(s, -self.n, self.n)), 0.0)
        return self.coefficient * self.p * np.abs(s) ** (self.p - 1.0) - self.lin

    def d2f(self, s):
        s = np.asarray(s, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(s)
        if fam == "table":
            return self._tab.second_derivative(s)
        if fam == "truncated":
            inside = np.abs(s) < self.n
            return np.where(inside, self.base.d2f(np.clip(s, -self.n, self.n)), 0.0)
        return self.coefficient * self.p * (self.p - 1.0) * np.sign(s) * np.abs(s) ** (self.p - 2.0)

    def F(self, s):
        s = np.asarray(s, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(s)
        if fam == "table":
            return self._tab.primitive(s)
        if fam == "truncated":
            n = float(self.n)
            sc = np.clip(s, -n, n)
            out = self.base.F(sc)
            fp, fm = float(self.base.f(n)), float(self.base.f(-n))
            return out + np.where(s > n, fp * (s - n), 0.0) + np.where(s < -n, fm * (s + n), 0.0)
        return self.coefficient * np.abs(s) ** (self.p + 1.0) / (self.p + 1.0) - 0.5 * self.lin * s * s

    @property
    def growth_p(self) -> float:
        return float(self.base.p if self.family == "truncated" else self.p)

    def to_dict(self):
        d = {
            "family": self.family,
            "p": self.p,
            "lin": self.lin,
            "coefficient": self.coefficient,
            "lambda": self.lam,
            "omega": self.omega,
            "K_omega": self.K_omega,
        }
        if self.table is not None:
            d["table"] = [list(r) for r in self.table]
        if self.base is not None:
            d["base"] = self.base.to_dict()
            d["n"] = self.n
        return d


@dataclass(frozen=True)
class ModelSpec:
    damping: DampingSpec
    nonlinearity: NonlinearitySpec
    forcing: Optional[Field] = None

    def forcing_coefficients(self, basis) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(basis.count)
        if self.forcing.basis.count != basis.count:
            raise ArgumentError("forcing field has a different basis size")
        return np.asarray(self.forcing.coefficients)

    def to_dict(self):
        return {
            "damping": self.damping.to_dict(),
            "nonlinearity": self.nonlinearity.to_dict(),
            "forcing": None
            if self.forcing is None
            else [repr(float(a)) for a in self.forcing.coefficients],
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- pointwise evaluation ------------------------------------------------------

def eval_g(spec: DampingSpec, s):
    return spec.g(s)


def eval_g_prime(spec: DampingSpec, s):
    return spec.dg(s)


def eval_G(spec: DampingSpec, s):
    return spec.G(s)


def eval_f(spec: NonlinearitySpec, s):
    return spec.f(s)


def eval_f_prime(spec: NonlinearitySpec, s):
    return spec.df(s)


def eval_F(spec: NonlinearitySpec, s):
    return spec.F(s)


def truncate_f(spec: NonlinearitySpec, n: float) -> NonlinearitySpec:
    """Plateau truncation ``f_n``: equal to ``f`` on ``(-n, n)``, constant outside."""
    if n < 1:
        raise ArgumentError("truncation level n must be at least 1")
    return NonlinearitySpec(
        family="truncated",
        p=spec.growth_p,
        lam=spec.lam,
        omega=spec.omega,
        K_omega=spec.K_omega,
        base=spec,
        n=float(n),
    )


def truncation_lipschitz(spec: NonlinearitySpec, n: float, samples: int = 4001) -> float:
    s = np.linspace(-n, n, samples)
    return float(np.max(np.abs(spec.df(s))))


# -- exponents and the well-posedness diagram ---------------------------------

def exponent_k(m: float) -> float:
    """Space-time integrability exponent ``min(5/m, 3m - 2)``."""
    if not 1.0 < m <= 5.0:
        raise ArgumentError(f"m must lie in (1, 5], got {m}")
    return min(5.0 / m, 3.0 * m - 2.0)


def region_classify(m: float, p: float) -> str:
    """Region tag of ``(m, p)`` in the well-posedness diagram."""
    if not (1.0 < m <= 5.0) or not (1.0 <= p <= 5.0):
        return "invalid"
    if p <= 3.0:
        return "I"
    if p <= 6.0 * m / (m + 1.0):
        return "II"
    if p <= min(5.0, 3.0 * m):
        return "III"
    return "uncovered"


def exponents_compatible(m: float, p: float) -> bool:
    return 2.0 <= p <= min(5.0, 3.0 * m)


# -- validation -----------------------------------------------------------------

@dataclass
class ConditionResult:
    name: str
    passed: bool
    constants: dict = dc_field(default_factory=dict)
    edge_margin: Optional[float] = None
    message: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "constants": {k: _jsonable(v) for k, v in self.constants.items()},
            "edge_margin": _jsonable(self.edge_margin),
            "message": self.message,
        }


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, (bool, str)):
        return v
    v = float(v)
    return v if np.isfinite(v) else repr(v)


@dataclass
class ValidationReport:
    lambda_1: float
    lam: float
    entries: dict = dc_field(default_factory=dict)
    grid: dict = dc_field(default_factory=dict)

    def add(self, res: ConditionResult):
        self.entries[res.name] = res

    def passed(self, name: str) -> bool:
        return self.entries[name].passed

    def constant(self, name: str, key: str):
        return self.entries[name].constants[key]

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def failures(self):
        return [n for n, e in self.entries.items() if not e.passed]

    def to_dict(self):
        return {
            "lambda_1": self.lambda_1,
            "lambda": self.lam,
            "grid": self.grid,
            "entries": {k: v.to_dict() for k, v in self.entries.items()},
        }


def _tail_ratio(s, r):
    """Ratio of ``r`` at the grid edge to ``r`` one decade in, worst side."""
    a = np.abs(s)
    edge = a.max()
    out = []
    for side in (s > 0, s < 0):
        ss, rr = a[side], r[side]
        i_edge = np.argmax(ss)
        i_in = np.argmin(np.abs(np.log10(ss) - (np.log10(edge) - 1.0)))
        denom = rr[i_in]
        if denom == 0:
            out.append(0.0 if rr[i_edge] == 0 else np.inf)
        else:
            out.append(rr[i_edge] / denom)
    return out


def check_g1(spec: DampingSpec, c1: float, c2: float, c3: float, grid=None) -> bool:
    """Pointwise check of ``c1(|s|^m - c2) <= |g(s)| <= c3(|s|^m + 1)`` on the grid."""
    s = sample_grid() if grid is None else np.asarray(grid)
    g = np.abs(spec.g(s))
    sm = np.abs(s) ** spec.m
    tol = 1e-12 * (1.0 + sm)
    return bool(np.all(c1 * (sm - c2) <= g + tol) and np.all(g <= c3 * (sm + 1.0) + tol))


def _validate_damping(report, d: DampingSpec, s):
    g = d.g(s)
    dg = d.dg(s)
    pos = s[s != 0]
    mono = bool(np.all(np.diff(g) > 0)) and float(d.g(0.0)) == 0.0
    report.add(ConditionResult("g_monotone", mono, {}, None,
                               "g strictly increasing with g(0)=0" if mono else "g not strictly increasing or g(0) != 0"))

    # (G1) lower and upper growth
    a = np.abs(s)
    big = a >= 1.0
    glow = np.abs(g[big]) / a[big] ** d.m
    c1 = float(np.min(glow))
    sm = a ** d.m
    c2 = 0.0 if c1 <= 0 else float(max(0.0, np.max(sm - np.abs(g) / c1)))
    c3 = float(np.max(np.abs(g) / (sm + 1.0)))
    lo_trend = min(_tail_ratio(s[big], glow))
    hi_trend = max(_tail_ratio(s, np.abs(g) / (sm + 1.0)))
    ok = c1 > 0 and lo_trend >= 1.0 / _RATIO_TOL and hi_trend <= _RATIO_TOL and mono
    msg = []
    if lo_trend < 1.0 / _RATIO_TOL:
        msg.append("|g|/|s|^m decays at the grid edge (lower growth fails)")
    if hi_trend > _RATIO_TOL:
        msg.append("|g|/(|s|^m+1) grows at the grid edge (upper growth fails)")
    report.add(ConditionResult("G1", ok, {"c1": c1, "c2": c2, "c3": c3},
                               float(np.abs(g[-1]) / sm[-1]), "; ".join(msg)))

    # (G2) gamma <= g' <= c (1 + g s)^(2/3)
    gamma_w = float(np.min(dg))
    up = dg / (1.0 + g * s) ** (2.0 / 3.0)
    c_up = float(np.max(up))
    trend = max(_tail_ratio(s, up))
    target = d.gamma if d.gamma > 0 else 0.0
    ok2 = gamma_w > 0 and gamma_w >= target * (1 - 1e-12) and trend <= _RATIO_TOL
    msg2 = ""
    if gamma_w <= 0:
        msg2 = f"min g' = {gamma_w:.3g}: no positive lower bound"
    elif trend > _RATIO_TOL:
        msg2 = "g' outgrows (1 + g s)^(2/3)"
    report.add(ConditionResult("G2", ok2, {"gamma": gamma_w, "c": c_up}, float(up[-1]), msg2))
    return pos


def _validate_nonlinearity(report, f: NonlinearitySpec, s, lam, lambda_1):
    fv, dfv, d2fv, Fv = f.f(s), f.df(s), f.d2f(s), f.F(s)
    a = np.abs(s)
    p = f.growth_p
    # f'(0) = 0 up to the built-in linear part -lin s, which only shifts (F2)
    lin = f.base.lin if f.family == "truncated" else f.lin
    df0 = float(f.df(0.0))
    zero_ok = abs(float(f.f(0.0))) == 0.0 and abs(df0 + lin) <= 1e-12
    report.add(ConditionResult("f_origin", zero_ok, {"f_prime_0": df0, "linear_part": lin}, None,
                               "" if zero_ok else "f(0) and the nonlinear part of f'(0) must vanish"))

    # (F1)
    r = np.abs(d2fv) / (1.0 + a ** (p - 2.0))
    c = float(np.max(r))
    trend = max(_tail_ratio(s, r))
    report.add(ConditionResult("F1", bool(trend <= _RATIO_TOL and 2.0 <= p <= 5.0), {"c": c},
                               float(r[-1]), "" if trend <= _RATIO_TOL else "|f''| outgrows |s|^(p-2)"))

    # (F2) liminf f(s)/s > -lambda with lambda < lambda_1
    edge = a.max()
    tail = a >= edge / 10.0
    liminf = float(np.min(fv[tail] / s[tail]))
    ok = lam < lambda_1 and lam > 0 and liminf > -lam
    msg = ""
    if not lam < lambda_1:
        msg = f"lambda = {lam:.6g} is not below lambda_1 = {lambda_1:.6g}"
    elif liminf <= -lam:
        msg = f"f(s)/s reaches {liminf:.6g} <= -lambda at the grid edge"
    report.add(ConditionResult("F2", ok, {"lambda": lam, "liminf_f_over_s": liminf}, liminf + lam, msg))

    # (F3) f'(s) >= -omega s^4 - K_omega
    w = f.omega
    need = -dfv - w * s**4
    K_w = float(max(0.0, np.max(need)))
    tail_need = float(np.max(need[tail]))
    ok3 = tail_need <= K_w and np.isfinite(K_w)
    if f.K_omega is not None:
        ok3 = ok3 and bool(np.all(dfv >= -w * s**4 - f.K_omega - 1e-12))
        K_report = float(f.K_omega)
    else:
        K_report = K_w
    report.add(ConditionResult("F3", ok3, {"omega": w, "K_omega": K_report, "K_omega_witness": K_w},
                               float(-tail_need), ""))

    # consequences: two-sided bound on F, f s, and f s - F
    C_low = float(max(0.0, np.max(-lam * s**2 - fv * s), np.max(-0.5 * lam * s**2 - Fv)))
    C_up = float(np.max(Fv / (1.0 + a ** (p + 1.0))))
    low_ok = bool(np.all(fv * s >= -lam * s**2 - C_low - 1e-9) and np.all(Fv >= -0.5 * lam * s**2 - C_low - 1e-9))
    up_trend = max(_tail_ratio(s, Fv / (1.0 + a ** (p + 1.0))))
    report.add(ConditionResult("potential_bounds", low_ok and up_trend <= _RATIO_TOL,
                               {"C": C_low, "C_upper": C_up}, None, ""))
    lhs = fv * s - Fv
    ok5 = bool(np.all(lhs >= -w * s**6 - K_report * s**2 - 1e-9 * (1 + s**2)))
    report.add(ConditionResult("virial_bound", ok5, {"omega": w, "K_omega": K_report},
                               float(np.min(lhs + w * s**6 + K_report * s**2)), ""))


def validate_assumptions(model: ModelSpec, lambda_1: float, grid=None) -> ValidationReport:
    """Sample (G1), (G2), (F1)-(F3) and their consequences on a log grid.

    Failures are report entries; nothing is raised.
    """
    if lambda_1 <= 0:
        raise ArgumentError("lambda_1 must be positive")
    s = sample_grid() if grid is None else np.asarray(grid, dtype=float)
    lam = model.nonlinearity.resolved_lambda(lambda_1)
    report = ValidationReport(lambda_1=float(lambda_1), lam=float(lam))
    report.grid = {"magnitudes": int(np.sum(s > 0)), "min": float(np.min(np.abs(s[s != 0]))),
                   "max": float(np.max(np.abs(s))), "includes_zero": bool(np.any(s == 0))}
    _validate_damping(report, model.damping, s)
    _validate_nonlinearity(report, model.nonlinearity, s, lam, lambda_1)
    m, p = model.damping.m, model.nonlinearity.growth_p
    compat = exponents_compatible(m, p)
    report.add(ConditionResult("exponents", compat, {"m": m, "p": p, "bound": min(5.0, 3.0 * m)}, None,
                               "" if compat else f"p = {p} violates 2 <= p <= min(5, 3m) = {min(5.0, 3.0 * m):.6g}"))
    return report
