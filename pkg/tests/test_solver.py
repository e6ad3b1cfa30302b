import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attractor_lab.errors import ArgumentError, ConfigurationError, DivergenceError, RangeError, SimulationError, StepError
from attractor_lab.functionals import FunctionalParams, energy_identity_residual
from attractor_lab.model import DampingSpec, ModelSpec, NonlinearitySpec
from attractor_lab.presets import standard_initial_state, standard_model, unit_basis
from attractor_lab.solver import (
    MONITOR_COLUMNS,
    State,
    SolverConfig,
    TrajectoryRecord,
    difference_quotient,
    rhs,
    simulate,
    solve_equilibrium,
    step,
)
from attractor_lab.spectral import Field
from oracles import conservative_model, damped_oscillator

B16 = unit_basis(16)
B1 = unit_basis(1)
LINEAR = ModelSpec(DampingSpec("linear", gamma=0.2), NonlinearitySpec("zero", 3.0))


def test_rhs_harmonic_oscillator():
    s = State.from_arrays(B1, [0.7], [-0.3])
    du, dv = rhs(s, conservative_model(), B1, 1)
    assert du.coefficients[0] == -0.3
    assert dv.coefficients[0] == pytest.approx(-np.pi**2 * 0.7, rel=1e-14)


def test_rhs_zero_state():
    du, dv = rhs(State(B16.zero(), B16.zero()), standard_model(), B16, 16)
    assert not np.any(du.coefficients) and not np.any(dv.coefficients)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_rhs_linear_damping_commutes(seed):
    r = np.random.default_rng(seed)
    phi = Field(B16, r.standard_normal(16))
    model = ModelSpec(DampingSpec("linear", gamma=0.7), NonlinearitySpec("zero", 3.0), phi)
    a, b = r.standard_normal(16), r.standard_normal(16)
    _, dv = rhs(State.from_arrays(B16, a, b), model, B16)
    expect = -B16.eigenvalues * a - 0.7 * b + phi.coefficients
    np.testing.assert_allclose(dv.coefficients, expect, atol=1e-10 * (1 + np.abs(expect).max()))


def test_rhs_truncates_to_n():
    s = State.from_arrays(B16, np.ones(16), np.ones(16))
    du, dv = rhs(s, standard_model(), B16, 4)
    assert not np.any(du.coefficients[4:]) and not np.any(dv.coefficients[4:])


def test_linear_mode_oracle():
    cfg = SolverConfig(dt=1e-3)
    rec = simulate(State.from_arrays(B1, [1.0], [0.0]), 1.0, cfg, LINEAR, B1)
    a1 = rec.final.u.coefficients[0]
    assert abs(a1 - damped_oscillator(1.0, np.pi**2, 0.2)) <= 1e-5


def test_linear_mode_oracle_rk4():
    cfg = SolverConfig(dt=1e-3, scheme="rk4_explicit")
    rec = simulate(State.from_arrays(B1, [1.0], [0.0]), 1.0, cfg, LINEAR, B1)
    assert abs(rec.final.u.coefficients[0] - damped_oscillator(1.0, np.pi**2, 0.2)) <= 1e-10


def test_zero_state_is_fixed():
    s = step(State(B16.zero(), B16.zero()), SolverConfig(dt=1e-2), standard_model(), B16)
    assert not np.any(s.u.coefficients) and not np.any(s.v.coefficients)
    assert s.t == pytest.approx(1e-2)


def _final(dt, T=1.0, scheme="implicit_midpoint"):
    rec = simulate(standard_initial_state(B16, 1.0), T, SolverConfig(dt=dt, scheme=scheme, state_every=10**6),
                   standard_model(), B16)
    return rec.final


def test_midpoint_second_order():
    s1, s2, s4 = _final(0.02), _final(0.01), _final(0.005)
    ratio = s1.h_distance(s2) / s2.h_distance(s4)
    assert 3.5 <= ratio <= 4.5


def test_rk4_fourth_order():
    s1, s2, s4 = (_final(dt, scheme="rk4_explicit") for dt in (4e-3, 2e-3, 1e-3))
    ratio = s1.h_distance(s2) / s2.h_distance(s4)
    assert 12 <= ratio <= 20


def test_linear_energy_non_increasing():
    r = np.random.default_rng(3)
    s = State.from_arrays(B16, r.standard_normal(16) / B16.eigenvalues, r.standard_normal(16) * 0.1)
    model = ModelSpec(DampingSpec("linear", gamma=0.3), NonlinearitySpec("zero", 3.0))
    rec = simulate(s, 2.0, SolverConfig(dt=1e-3), model, B16)
    assert np.all(np.diff(rec.monitors["E"]) <= 1e-14)


def test_energy_identity_nonlinear_run():
    rec = simulate(standard_initial_state(B16), 10.0, SolverConfig(dt=1e-3, state_every=1000), standard_model(), B16)
    assert energy_identity_residual(rec).max() <= 1e-6


def test_record_invariants():
    rec = simulate(standard_initial_state(B16, 1.0), 2.0, SolverConfig(dt=1e-2, record_every=3), standard_model(), B16)
    assert set(MONITOR_COLUMNS) <= set(rec.monitors)
    assert np.all(np.diff(rec.times) > 0)
    assert rec.times[-1] == pytest.approx(2.0)
    for col in ("diss_cum", "ut_m1_cum", "st_norm_cum"):
        assert np.all(np.diff(rec.monitors[col]) >= 0)
    assert rec.metadata["outcome"] == "completed"
    assert rec.metadata["model_hash"] == standard_model().hash
    assert rec.metadata["config_hash"] == SolverConfig(dt=1e-2, record_every=3).hash
    assert len(rec.states) == 21


def test_time_reversal_conservative():
    r = np.random.default_rng(8)
    s0 = State.from_arrays(B16, r.standard_normal(16) / B16.eigenvalues, r.standard_normal(16) / np.sqrt(B16.eigenvalues))
    cfg = SolverConfig(dt=1e-3)
    model = conservative_model()
    s = s0
    for _ in range(500):
        s = step(s, cfg, model, B16)
    for _ in range(500):
        s = step(s, cfg, model, B16, dt=-1e-3)
    assert s.h_distance(s0) <= 1e-8
    assert s.t == pytest.approx(0.0, abs=1e-12)


def test_conservative_energy_drift():
    r = np.random.default_rng(9)
    s0 = State.from_arrays(B16, r.standard_normal(16) / B16.eigenvalues, r.standard_normal(16) * 0.1)
    rec = simulate(s0, 2.0, SolverConfig(dt=1e-3, state_every=100), conservative_model(), B16)
    assert energy_identity_residual(rec).max() <= 1e-8


def _forced_cubic(damping=None):
    phi = B16.unit(0) * 0.1
    return ModelSpec(damping or DampingSpec("power", 3.0), NonlinearitySpec("power", 3.0), phi)


def test_equilibrium_trivial():
    res = solve_equilibrium(B16.zero(), standard_model(), B16)
    assert not np.any(res.field.coefficients) and res.iterations == 0
    grad = ModelSpec(DampingSpec(), NonlinearitySpec("power_minus_linear", 3.0, lin=0.5))
    res = solve_equilibrium(B16.zero(), grad, B16)
    assert not np.any(res.field.coefficients)


def test_equilibrium_forced_matches_damped_flow():
    model = _forced_cubic()
    res = solve_equilibrium(B16.zero(), model, B16, tol=1e-10)
    assert res.residual <= 1e-10 and res.iterations >= 1
    flow_model = _forced_cubic(DampingSpec("linear", gamma=2.0))
    rec = simulate(State(B16.zero(), B16.zero()), 20.0, SolverConfig(dt=1e-2, state_every=10**6), flow_model, B16)
    assert np.linalg.norm(rec.final.u.coefficients - res.field.coefficients) <= 1e-6


def test_equilibrium_is_fixed_point_of_flow():
    model = _forced_cubic()
    ubar = solve_equilibrium(B16.zero(), model, B16, tol=1e-12).field
    rec = simulate(State(ubar, B16.zero()), 10.0, SolverConfig(dt=1e-2, state_every=100), model, B16)
    d = [np.sqrt(np.sum(B16.eigenvalues * (s.u.coefficients - ubar.coefficients) ** 2)) for s in rec.states]
    assert max(d) <= 1e-8
    L = rec.monitors["L"]
    assert np.ptp(L) <= 1e-8


def test_equilibrium_bad_tol():
    with pytest.raises(ArgumentError):
        solve_equilibrium(B16.zero(), standard_model(), B16, tol=0.0)


def test_difference_quotient_equilibrium_run():
    rec = simulate(State(B16.zero(), B16.zero()), 1.0, SolverConfig(dt=1e-2, state_every=1), standard_model(), B16)
    Du, Dv = difference_quotient(rec, 0.3, 0.2)
    assert not np.any(Du.coefficients) and not np.any(Dv.coefficients)


def _linear_in_time_record():
    cfg = SolverConfig(dt=0.1, state_every=1)
    states = [State.from_arrays(B1, [t], [1.0], t) for t in np.arange(11) * 0.1]
    return TrajectoryRecord(B1, LINEAR, cfg, FunctionalParams(), None, states, {}, {})


@pytest.mark.parametrize("h", [0.1, 0.2, 0.35, 0.05])
def test_difference_quotient_linear_coefficient(h):
    Du, _ = difference_quotient(_linear_in_time_record(), 0.25, h)
    assert Du.coefficients[0] == pytest.approx(1.0, rel=1e-12)


def test_difference_quotient_first_order():
    rec = simulate(standard_initial_state(B16, 1.0), 1.0, SolverConfig(dt=1e-3, state_every=1), standard_model(), B16)
    t = 0.4
    ut = rec.state_at(t).v.coefficients
    e = [np.linalg.norm(difference_quotient(rec, t, h)[0].coefficients - ut) for h in (0.02, 0.01)]
    assert e[0] / e[1] == pytest.approx(2.0, rel=0.2)


def test_difference_quotient_out_of_range():
    with pytest.raises(RangeError):
        difference_quotient(_linear_in_time_record(), 0.9, 0.2)


def test_step_error_when_newton_starved():
    cfg = SolverConfig(dt=5e-2, newton_max_iters=1)
    s = standard_initial_state(B16, 3.0)
    with pytest.raises(StepError) as info:
        step(s, cfg, standard_model(), B16)
    assert info.value.residual > cfg.newton_tol
    with pytest.raises(SimulationError) as info:
        simulate(s, 1.0, cfg, standard_model(), B16)
    assert info.value.record.metadata["outcome"] == "failed"
    assert info.value.t == 0.0


def test_divergence_detected():
    # omega_max * dt = 5 is outside the RK4 stability interval
    b = unit_basis(32)
    cfg = SolverConfig(dt=5e-2, scheme="rk4_explicit")
    with pytest.raises(DivergenceError) as info:
        simulate(standard_initial_state(b, 2.0), 50.0, cfg, standard_model(), b)
    rec = info.value.record
    assert rec.metadata["outcome"] == "diverged"
    assert info.value.t > 0


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(scheme="euler"), dict(newton_tol=1e-16), dict(newton_max_iters=0),
                                dict(record_every=0)])
def test_solver_config_validation(kw):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kw)


def test_horizon_must_be_whole_steps():
    with pytest.raises(ArgumentError):
        simulate(State(B16.zero(), B16.zero()), 0.015, SolverConfig(dt=1e-2), standard_model(), B16)


def test_state_requires_common_basis():
    with pytest.raises(ArgumentError):
        State(B16.zero(), unit_basis(8).zero())


def test_galerkin_self_convergence():
    model = standard_model()
    cfg = SolverConfig(dt=1e-2, state_every=10**6)
    finals = {}
    for n in (8, 16, 32, 64):
        b = unit_basis(n)
        finals[n] = simulate(standard_initial_state(b, 1.0), 2.0, cfg, model, b).final
    fine = unit_basis(64)

    def lift(s):
        a, v = np.zeros(64), np.zeros(64)
        a[: s.basis.count] = s.u.coefficients
        v[: s.basis.count] = s.v.coefficients
        return State.from_arrays(fine, a, v)

    d = [lift(finals[2 * n]).h_distance(lift(finals[n])) for n in (8, 16, 32)]
    assert d[0] > d[1] > d[2]
