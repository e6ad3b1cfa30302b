import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attractor_lab.functionals import (
    FunctionalParams,
    big_R,
    choose_omega,
    direct_space_time_norm,
    energy_E,
    energy_E_alpha,
    energy_identity_residual,
    functional_J,
    lyapunov,
    space_time_norm,
    strong_energy,
    strong_energy_coercive,
    witness_J_constants,
)
from attractor_lab.model import DampingSpec, ModelSpec, NonlinearitySpec, validate_assumptions
from attractor_lab.presets import gradient_model, sample_state, standard_initial_state, standard_model, unit_basis
from attractor_lab.solver import SolverConfig, State, simulate
from oracles import conservative_model

B16 = unit_basis(16)
MODELS = [standard_model(), gradient_model(), ModelSpec(DampingSpec("power", 5 / 3), NonlinearitySpec("power", 5.0))]
seeds = st.integers(0, 2**32 - 1)


def _random_state(seed, radius=None, basis=B16):
    r = np.random.default_rng(seed)
    radius = radius if radius is not None else float(10 ** r.uniform(-2, 1.5))
    return sample_state(basis, r, radius, decay=0.5)


@pytest.fixture(scope="module")
def standard_run():
    return simulate(standard_initial_state(B16, 1.0), 4.0, SolverConfig(dt=1e-3, state_every=1), standard_model(), B16)


def test_energy_zero_state():
    assert energy_E(State(B16.zero(), B16.zero()), standard_model()) == 0.0


def test_energy_single_mode():
    s = State(B16.unit(0), B16.zero())
    assert energy_E(s, conservative_model()) == pytest.approx(0.5 * np.pi**2, rel=1e-14)


def test_energy_decreases_along_damped_run(standard_run):
    E = standard_run.monitors["E"]
    assert np.all(np.diff(E) <= 1e-12)
    assert E[-1] < E[0]


@given(seeds)
def test_E_alpha_limits(seed):
    s = _random_state(seed)
    model = standard_model()
    E = energy_E(s, model)
    assert energy_E_alpha(s, model, FunctionalParams(alpha=0.0)) == E
    still = State(s.u, s.u.basis.zero())
    assert energy_E_alpha(still, model, FunctionalParams(alpha=0.7)) == energy_E(still, model)


@given(seeds, st.floats(0.0, 0.99))
def test_E_alpha_cauchy_schwarz(seed, alpha):
    s = _random_state(seed)
    model = standard_model()
    diff = abs(energy_E_alpha(s, model, FunctionalParams(alpha=alpha)) - energy_E(s, model))
    bound = alpha * np.linalg.norm(s.u.coefficients) * np.linalg.norm(s.v.coefficients)
    assert diff <= bound * (1 + 1e-12) + 1e-300


def test_strong_energy_zero_state():
    assert strong_energy(State(B16.zero(), B16.zero()), standard_model(), FunctionalParams()) == 0.0


def test_strong_energy_single_mode():
    s = State(B16.unit(0), B16.zero())
    val = strong_energy(s, conservative_model(), FunctionalParams(K_omega=0.0))
    assert val == pytest.approx(0.5 * np.pi**4, rel=1e-13)


@pytest.mark.parametrize("model", MODELS, ids=["standard", "gradient", "critical"])
@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_strong_energy_coercive_on_random_states(model, seed):
    s = _random_state(seed)
    params = choose_omega(s, model)
    assert strong_energy_coercive(s, model, params)


def test_choose_omega_picks_largest_candidate():
    s = _random_state(1, radius=2.0)
    p = choose_omega(s, standard_model())
    assert p.omega == 0.1
    assert p.K_omega >= 0


def test_lyapunov_is_energy():
    for seed in range(20):
        s = _random_state(seed)
        for model in MODELS:
            assert lyapunov(s, model) == energy_E(s, model)


def test_space_time_zero_trajectory():
    rec = simulate(State(B16.zero(), B16.zero()), 1.0, SolverConfig(dt=1e-2), standard_model(), B16)
    assert space_time_norm(rec, rec.k) == 0.0
    assert big_R(rec) == 1.0


def test_space_time_k1_direct_quadrature(standard_run):
    # the k = 1 integral is not monitored, so it is rebuilt from states
    direct = direct_space_time_norm(standard_run, 1.0)
    t = np.array([s.t for s in standard_run.states])
    w = B16.domain.cell_weight
    vals = [(w * np.sum((B16.synthesis @ s.u.coefficients) ** 6)) ** (2 / 6) for s in standard_run.states]
    ref = float(np.sum(0.5 * (np.asarray(vals[1:]) + vals[:-1]) * np.diff(t)))
    assert abs(space_time_norm(standard_run, 1.0) - ref) <= 1e-8 * ref
    assert abs(direct - ref) <= 1e-8 * ref


def test_monitored_space_time_matches_states(standard_run):
    k = standard_run.k
    assert space_time_norm(standard_run, k) == pytest.approx(direct_space_time_norm(standard_run, k), rel=1e-10)


def test_big_R_ingredients(standard_run):
    m = standard_run.monitors
    expect = np.max(m["u_l6"] + m["ut_l2"]) + m["ut_m1_cum"][-1] + 1.0
    assert big_R(standard_run) == pytest.approx(expect, rel=1e-14)
    assert big_R(standard_run, 1.0) < big_R(standard_run)


def test_identity_residual_zero_data():
    rec = simulate(State(B16.zero(), B16.zero()), 1.0, SolverConfig(dt=1e-2), standard_model(), B16)
    assert not np.any(energy_identity_residual(rec))


def _derivative_gap(dt):
    rec = simulate(standard_initial_state(B16, 1.0), 1.0, SolverConfig(dt=dt, state_every=10**6), standard_model(), B16)
    t, E, D = rec.times, rec.monitors["E"], rec.monitors["diss_rate"]
    return np.max(np.abs(np.diff(E) / np.diff(t) + 0.5 * (D[1:] + D[:-1])))


def test_energy_derivative_matches_dissipation():
    g1, g2 = _derivative_gap(2e-3), _derivative_gap(1e-3)
    assert g2 < 1e-4
    assert 3.0 <= g1 / g2 <= 5.0


def test_J_zero_state():
    model = standard_model()
    c = witness_J_constants(model, B16)
    J = functional_J(State(B16.zero(), B16.zero()), model, FunctionalParams(), B16.lambda_1, c)
    assert J == pytest.approx(-(c.C2 + 3 * c.delta))
    assert J < 0


def test_J_delta_cap():
    c = witness_J_constants(standard_model(), B16, C1=100.0)
    assert c.delta <= (B16.lambda_1 - c.lam) / (6 * B16.lambda_1 * 100.0)


@given(seeds, st.floats(0.1, 10.0))
def test_J_monotone_in_norms(seed, scale):
    model = standard_model()
    c = witness_J_constants(model, B16)
    s = _random_state(seed)
    big = State(s.u * (1 + scale), s.v * (1 + scale))
    p = FunctionalParams()
    assert functional_J(big, model, p, B16.lambda_1, c) > functional_J(s, model, p, B16.lambda_1, c)


def test_J_positive_on_large_state():
    model = standard_model()
    assert model.nonlinearity.resolved_lambda(B16.lambda_1) == 0.5 * B16.lambda_1
    s = _random_state(4, radius=100.0)
    assert functional_J(s, model, FunctionalParams(), B16.lambda_1) > 0


@pytest.mark.parametrize("model", MODELS[:2], ids=["standard", "gradient"])
@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_E_alpha_norm_equivalence(model, seed):
    # Dirichlet on (0, L): sup|u|^2 <= (L/4)||u'||^2, which bounds the potential
    s = _random_state(seed)
    alpha = 0.1
    rep = validate_assumptions(model, B16.lambda_1)
    L = B16.domain.volume
    p = model.nonlinearity.growth_p
    C = rep.constant("potential_bounds", "C") * L
    Cu = rep.constant("potential_bounds", "C_upper")
    Cp = 0.5 * (1 + alpha / np.sqrt(B16.lambda_1)) + Cu * L * (1 + (L / 4) ** ((p + 1) / 2))
    h2 = np.sum(B16.eigenvalues * s.u.coefficients**2) + s.v.coefficients @ s.v.coefficients
    Ea = energy_E_alpha(s, model, FunctionalParams(alpha=alpha))
    assert 0.25 * h2 - C <= Ea <= Cp * (h2 + 1) ** ((p + 1) / 2)


def test_strong_energy_coercive_along_runs(standard_run):
    params = standard_run.params
    for s in standard_run.states[::50]:
        assert strong_energy_coercive(s, standard_model(), params)
    lam = B16.eigenvalues
    ev = standard_run.monitors["E_V_omega"]
    for s, e in zip(standard_run.states[::50], ev[::50]):
        assert e >= 0.25 * (np.sum(lam * s.v.coefficients**2) + np.sum(lam**2 * s.u.coefficients**2))


def test_monitored_functionals_match_direct(standard_run):
    params = standard_run.params
    model = standard_model()
    for i in (0, 1000, 4000):
        s = standard_run.states[i]
        assert standard_run.monitors["E"][i] == pytest.approx(energy_E(s, model), rel=1e-12)
        assert standard_run.monitors["E_alpha"][i] == pytest.approx(energy_E_alpha(s, model, params), rel=1e-12)
        assert standard_run.monitors["E_V_omega"][i] == pytest.approx(strong_energy(s, model, params), rel=1e-12)
