import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from attractor_lab.errors import ArgumentError, ModelError
from attractor_lab.model import (
    DampingSpec,
    ModelSpec,
    NonlinearitySpec,
    check_g1,
    eval_f,
    eval_f_prime,
    eval_F,
    eval_g,
    eval_g_prime,
    eval_G,
    exponent_k,
    region_classify,
    sample_grid,
    truncate_f,
    truncation_lipschitz,
    validate_assumptions,
)

LAMBDA_1 = np.pi**2
S = sample_grid()

DAMPINGS = [
    DampingSpec("power", 3.0),
    DampingSpec("power", 5.0 / 3.0),
    DampingSpec("power", 5.0),
    DampingSpec("power_plus_linear", 3.0, gamma=0.5),
    DampingSpec("power_plus_linear", 1.5, gamma=2.0),
    DampingSpec("linear", 2.0, gamma=0.2),
    DampingSpec("table", 3.0, table=((-2.0, -9.0), (-1.0, -1.0), (0.0, 0.0), (1.0, 1.0), (2.0, 9.0))),
]
NONLINEARITIES = [
    NonlinearitySpec("power", 3.0),
    NonlinearitySpec("power", 5.0),
    NonlinearitySpec("power", 2.0),
    NonlinearitySpec("power_minus_linear", 3.0, lin=0.5),
    NonlinearitySpec("zero", 3.0),
]


def test_power_damping_values():
    d = DampingSpec("power", 3.0)
    assert eval_g(d, 2.0) == 8.0
    assert eval_g_prime(d, 2.0) == 12.0
    assert eval_G(d, 2.0) == 4.0


@pytest.mark.parametrize("d", DAMPINGS)
def test_g_vanishes_at_origin(d):
    assert float(eval_g(d, 0.0)) == 0.0
    assert float(eval_G(d, 0.0)) == 0.0


def test_power_plus_linear_primitive():
    assert eval_G(DampingSpec("power_plus_linear", 3.0, gamma=0.5), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_power_nonlinearity_values():
    f = NonlinearitySpec("power", 3.0)
    assert eval_f(f, 2.0) == 8.0
    assert eval_F(f, 2.0) == 4.0


@pytest.mark.parametrize("f", NONLINEARITIES)
def test_f_vanishes_at_origin(f):
    assert float(eval_f(f, 0.0)) == 0.0
    # the only nonzero slope at the origin is the built-in linear part
    assert float(eval_f_prime(f, 0.0)) == pytest.approx(-f.lin, abs=1e-15)


def test_power_minus_linear_primitive():
    assert eval_F(NonlinearitySpec("power_minus_linear", 3.0, lin=0.5), 1.0) == pytest.approx(0.0, abs=1e-15)


def test_nonmonotone_table_rejected():
    with pytest.raises(ModelError):
        DampingSpec("table", 3.0, table=((-1.0, -1.0), (0.0, 0.0), (1.0, -0.5)))


@pytest.mark.parametrize("m", [1.0, 0.5, 5.5])
def test_damping_exponent_range(m):
    with pytest.raises(ModelError):
        DampingSpec("power", m)


@pytest.mark.parametrize("p", [1.5, 5.5])
def test_nonlinearity_exponent_range(p):
    with pytest.raises(ModelError):
        NonlinearitySpec("power", p)


def test_g1_witness_for_cubic():
    d = DampingSpec("power", 3.0)
    assert check_g1(d, 1.0, 0.0, 2.0)
    rep = validate_assumptions(ModelSpec(d, NonlinearitySpec()), LAMBDA_1)
    assert rep.passed("G1")
    assert rep.constant("G1", "c1") == pytest.approx(1.0)
    assert rep.constant("G1", "c2") == pytest.approx(0.0, abs=1e-12)
    assert rep.constant("G1", "c3") <= 2.0


def test_g2_fails_without_linear_part():
    rep = validate_assumptions(ModelSpec(DampingSpec("power", 3.0), NonlinearitySpec()), LAMBDA_1)
    assert not rep.passed("G2")
    assert rep.passed("G1")


def test_g2_passes_with_linear_part():
    rep = validate_assumptions(ModelSpec(DampingSpec("power_plus_linear", 3.0, gamma=0.5), NonlinearitySpec()), LAMBDA_1)
    assert rep.passed("G2")
    assert rep.constant("G2", "gamma") == pytest.approx(0.5)


def test_exponent_compatibility():
    f5 = NonlinearitySpec("power", 5.0)
    ok = validate_assumptions(ModelSpec(DampingSpec("power", 5.0 / 3.0), f5), LAMBDA_1)
    bad = validate_assumptions(ModelSpec(DampingSpec("power", 1.2), f5), LAMBDA_1)
    assert ok.passed("exponents")
    assert not bad.passed("exponents")
    assert "3m" in bad.entries["exponents"].message


def test_lambda_must_be_below_lambda_1():
    rep = validate_assumptions(ModelSpec(DampingSpec(), NonlinearitySpec("power_minus_linear", 3.0, lin=0.5, lam=1.2 * LAMBDA_1)), LAMBDA_1)
    assert not rep.passed("F2")


def test_sublinear_damping_fails_g1():
    # |s|^1.5 table beyond the declared m = 3 cannot satisfy the lower growth
    d = DampingSpec("power", 1.5)
    spoof = DampingSpec("table", 3.0, table=tuple((float(x), float(np.sign(x) * abs(x) ** 1.5)) for x in np.linspace(-1e3, 1e3, 2001)))
    assert validate_assumptions(ModelSpec(d, NonlinearitySpec("power", 3.0)), LAMBDA_1).passed("G1")
    assert not validate_assumptions(ModelSpec(spoof, NonlinearitySpec("power", 3.0)), LAMBDA_1).passed("G1")


def test_validation_grid_is_sign_symmetric():
    assert np.allclose(np.sort(S), np.sort(-S))
    assert 0.0 in S
    pos = S[S > 0]
    assert pos.min() == pytest.approx(1e-6) and pos.max() == pytest.approx(1e3)
    rep = validate_assumptions(ModelSpec(DampingSpec(), NonlinearitySpec()), LAMBDA_1)
    assert rep.grid["includes_zero"]


def test_truncation_examples():
    f2 = truncate_f(NonlinearitySpec("power", 3.0), 2)
    assert eval_f(f2, 5.0) == 8.0
    assert eval_f(f2, 1.0) == 1.0
    assert eval_f(f2, -3.0) == -8.0


@pytest.mark.parametrize("n", [1, 2, 3.5, 10])
def test_truncation_agrees_inside_and_is_bounded(n):
    f = NonlinearitySpec("power", 3.0)
    fn = truncate_f(f, n)
    s = np.linspace(-n, n, 1001)
    np.testing.assert_array_equal(fn.f(s), f.f(s))
    wide = np.linspace(-10 * n, 10 * n, 4001)
    assert np.max(np.abs(fn.f(wide))) == pytest.approx(max(abs(f.f(n)), abs(f.f(-n))))
    L = truncation_lipschitz(f, n)
    slopes = np.abs(np.diff(fn.f(wide)) / np.diff(wide))
    assert np.all(slopes <= L * (1 + 1e-9))


def test_truncation_level_too_small():
    with pytest.raises(ArgumentError):
        truncate_f(NonlinearitySpec(), 0.5)


def test_truncated_primitive_is_continuous():
    fn = truncate_f(NonlinearitySpec("power", 3.0), 2)
    for s in (-6.0, -2.5, 1.1, 3.0, 7.0):
        ref = quad(lambda x: float(fn.f(x)), 0.0, s, points=[-2.0, 2.0] if abs(s) > 2 else None)[0]
        assert float(fn.F(s)) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_exponent_k_examples():
    assert exponent_k(5.0 / 3.0) == pytest.approx(3.0)
    assert exponent_k(5.0) == 1.0
    assert exponent_k(1.5) == pytest.approx(2.5)


@pytest.mark.parametrize("m", [1.0, 0.0, 6.0])
def test_exponent_k_range(m):
    with pytest.raises(ArgumentError):
        exponent_k(m)


def test_region_examples():
    assert region_classify(2, 3) == "I"
    assert region_classify(3, 4) == "II"
    assert region_classify(1.2, 4) == "uncovered"
    assert region_classify(5.0 / 3.0, 4.5) == "III"
    assert region_classify(0.5, 3) == "invalid"
    assert region_classify(3, 6) == "invalid"


@given(st.floats(-1, 7), st.floats(-1, 7))
def test_region_partition(m, p):
    tag = region_classify(m, p)
    assert tag in {"I", "II", "III", "uncovered", "invalid"}
    valid_m = 1 < m <= 5
    flags = {
        "I": valid_m and 1 <= p <= 3,
        "II": valid_m and 3 < p <= 6 * m / (m + 1),
        "III": valid_m and 6 * m / (m + 1) < p <= min(5, 3 * m),
        "uncovered": valid_m and 3 < p <= 5 and p > 3 * m,
    }
    flags["invalid"] = not any(flags.values())
    assert sum(flags.values()) == 1
    assert flags[tag]


@pytest.mark.parametrize("d", DAMPINGS)
def test_g_strictly_increasing(d):
    s = S if d.family != "table" else np.linspace(-2, 2, 801)
    assert np.all(np.diff(d.g(s)) > 0)


# away from the cube-root underflow band around zero
_MAG = st.floats(-50, 50).filter(lambda x: x == 0 or abs(x) > 1e-50)


@given(_MAG, _MAG)
def test_g_monotone_pairs(s, t):
    for d in DAMPINGS[:6]:
        if s < t:
            assert eval_g(d, s) < eval_g(d, t)


@pytest.mark.parametrize("d", DAMPINGS)
def test_damping_primitive(d):
    for s in (-1.7, -0.3, 1e-3, 0.8, 2.0) if d.family == "table" else (-30.0, -1.7, -1e-3, 0.3, 2.0, 40.0):
        ref = quad(lambda x: float(d.g(x)), 0.0, s, epsabs=1e-13, epsrel=1e-13)[0]
        assert float(d.G(s)) == pytest.approx(ref, abs=1e-8, rel=1e-12)
        h = 1e-6 * max(1.0, abs(s))
        assert (float(d.G(s + h)) - float(d.G(s - h))) / (2 * h) == pytest.approx(float(d.g(s)), rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("f", NONLINEARITIES)
def test_nonlinearity_primitive(f):
    for s in (-30.0, -1.7, -1e-3, 0.3, 2.0, 40.0):
        ref = quad(lambda x: float(f.f(x)), 0.0, s, epsabs=1e-13, epsrel=1e-13)[0]
        assert float(f.F(s)) == pytest.approx(ref, abs=1e-8, rel=1e-12)


@pytest.mark.parametrize("f", NONLINEARITIES)
def test_potential_bounds_with_witnessed_constant(f):
    rep = validate_assumptions(ModelSpec(DampingSpec(), f), LAMBDA_1)
    assert rep.passed("F2") and rep.passed("potential_bounds")
    lam, C = rep.lam, rep.constant("potential_bounds", "C")
    assert np.all(f.f(S) * S >= -lam * S**2 - C - 1e-9)
    assert np.all(f.F(S) >= -0.5 * lam * S**2 - C - 1e-9)


@pytest.mark.parametrize("f", NONLINEARITIES + [NonlinearitySpec("power", 5.0, omega=1e-3)])
def test_virial_bound(f):
    rep = validate_assumptions(ModelSpec(DampingSpec(), f), LAMBDA_1)
    w, K = f.omega, rep.constant("F3", "K_omega")
    assert rep.passed("F3") and rep.passed("virial_bound")
    assert np.all(f.f(S) * S - f.F(S) >= -w * S**6 - K * S**2 - 1e-9 * (1 + S**2))


def test_f_origin_entry_accounts_for_linear_part():
    for f in NONLINEARITIES:
        assert validate_assumptions(ModelSpec(DampingSpec(), f), LAMBDA_1).passed("f_origin")


def test_model_hash_stable_and_sensitive():
    a = ModelSpec(DampingSpec("power", 3.0), NonlinearitySpec("power", 3.0))
    b = ModelSpec(DampingSpec("power", 3.0), NonlinearitySpec("power", 3.0))
    c = ModelSpec(DampingSpec("power", 3.0), NonlinearitySpec("power", 5.0))
    assert a.hash == b.hash != c.hash
