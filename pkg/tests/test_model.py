import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exchange_rate, integrate
from tlsrelax.model import (Environment, ProtocolFactors, QubitParams, SystemState, TlsParams, TransitionRates,
                            equilibrium_z, fixed_point, gamma_deltadelta_model, gamma_qt, gamma_sigma_model,
                            instantaneous_rates, propagate, rate_matrix, solomon_derivative, thermal_polarization,
                            tls_polarizability, tls_steady_state)

MS = 1e3


# --------------------------------------------------------------------------
# exchange rate


def test_exchange_rate_on_resonance_value():
    # 2 (2 pi 50 kHz)^2 / (2 pi 1.7 MHz)
    expected = 2 * (2 * math.pi * 5e4) ** 2 / (2 * math.pi * 1.7e6)
    assert gamma_qt(50e3, 1.7e6, 0.0) == pytest.approx(expected, rel=1e-14)
    assert gamma_qt(50e3, 1.7e6, 0.0) == pytest.approx(1.848e4, rel=1e-3)


def test_exchange_rate_half_width_point():
    assert gamma_qt(50e3, 1.7e6, 1.7e6) == pytest.approx(0.5 * gamma_qt(50e3, 1.7e6, 0.0), rel=1e-14)
    assert gamma_qt(50e3, 1.7e6, 1.7e6) == pytest.approx(9.24e3, rel=1e-3)


def test_exchange_rate_zero_coupling():
    assert gamma_qt(0.0, 1e6, 3e5) == 0.0


@pytest.mark.parametrize("args", [(-1.0, 1e6, 0.0), (1e3, 0.0, 0.0), (1e3, 1e6, np.nan), (np.inf, 1e6, 0.0)])
def test_exchange_rate_rejects_bad_input(args):
    with pytest.raises(ValueError):
        gamma_qt(*args)


@given(g=st.floats(0, 1e6), w=st.floats(1e3, 1e8), d=st.floats(-1e9, 1e9))
def test_exchange_rate_symmetric_and_peaked(g, w, d):
    r = gamma_qt(g, w, d)
    assert r == pytest.approx(gamma_qt(g, w, -d), rel=1e-14)
    assert r <= gamma_qt(g, w, 0.0) * (1 + 1e-14)
    assert r == pytest.approx(exchange_rate(g, w, d), rel=1e-12, abs=1e-300)


# --------------------------------------------------------------------------
# rate algebra


def test_equilibrium_z_examples():
    assert equilibrium_z(TransitionRates(1.0, 1.0)) == 0.0
    assert equilibrium_z(TransitionRates(0.0, 3.0)) == -1.0
    assert equilibrium_z(TransitionRates(1.0, 2.0)) == pytest.approx(-1 / 3)
    with pytest.raises(ZeroDivisionError):
        equilibrium_z(TransitionRates(0.0, 0.0))


def test_transition_rates_views():
    r = TransitionRates(1.0, 2.0)
    assert r.gamma_sigma == 3.0 and r.gamma_delta == 1.0
    back = TransitionRates.from_sigma_delta(3.0, 1.0)
    assert (back.gamma_up, back.gamma_down) == (1.0, 2.0)
    with pytest.raises(ValueError):
        TransitionRates(-1.0, 1.0)


def test_thermal_polarization_limits():
    assert thermal_polarization(1e9, 0.0) == -1.0
    assert -1 < thermal_polarization(300e6, 0.027) < 0
    assert thermal_polarization(300e6, 10.0) == pytest.approx(0.0, abs=1e-3)


@pytest.mark.parametrize("kw", [dict(freq_hz=0.0), dict(g_hz=-1.0), dict(gamma2_hz=0.0), dict(gamma_t=-1.0),
                                dict(p_eq=1.5)])
def test_tls_params_validation(kw):
    base = dict(freq_hz=1e8, g_hz=1e4, gamma2_hz=1e6, gamma_t=1e3, p_eq=0.0)
    base.update(kw)
    with pytest.raises(ValueError):
        TlsParams(**base)


def test_qubit_params_validation():
    with pytest.raises(ValueError):
        QubitParams(-1.0, 0.0)
    with pytest.raises(ValueError):
        QubitParams(1.0, 1.2)


def test_environment_requires_frequency_with_tls():
    with pytest.raises(ValueError):
        Environment(QubitParams(1.0), (TlsParams(1e8, 1e4, 1e6, 0.0),))


def test_from_exchange_rate_round_trip():
    t = TlsParams.from_exchange_rate(1234.0, freq_hz=2e8, gamma2_hz=3e6)
    assert t.exchange_rate(2e8) == pytest.approx(1234.0, rel=1e-13)


# --------------------------------------------------------------------------
# Solomon derivative


def test_derivative_vanishes_at_global_equilibrium():
    env = Environment.from_rates(500.0, -0.3, [1e4, 2e3], [1e3, 50.0])
    d = solomon_derivative(SystemState(-0.3, (-0.3, -0.3)), env)
    assert d.z == 0.0 and all(x == 0.0 for x in d.p)


def test_derivative_pure_exchange_is_antisymmetric():
    env = Environment.from_rates(0.0, 0.0, [1.0], [0.0])
    d = solomon_derivative(SystemState(1.0, (-1.0,)), env)
    assert d.z == pytest.approx(-2.0) and d.p[0] == pytest.approx(2.0)


def test_derivative_hand_evaluation():
    env = Environment.from_rates(0.5 * MS, -0.2, [10 * MS], [1 * MS], [-0.1])
    d = solomon_derivative(SystemState(1.0, (-0.1,)), env)
    assert d.z == pytest.approx(-11.6 * MS, rel=1e-12)


def test_derivative_interaction_off_uses_suppressed_rate():
    env = Environment.from_rates(0.0, 0.0, [1e4], [0.0])
    off = solomon_derivative(SystemState(1.0, (-1.0,)), env, interaction_on=False)
    assert off.z == 0.0
    eff = solomon_derivative(SystemState(1.0, (-1.0,)), env, interaction_on=False, gamma_qt_eff=5.0)
    assert eff.z == pytest.approx(-10.0)


def test_derivative_dimension_mismatch():
    env = Environment.from_rates(1.0, 0.0, [1.0], [0.0])
    with pytest.raises(ValueError):
        solomon_derivative(SystemState(0.0, ()), env)


def test_coefficient_identity_from_two_probe_states():
    rng = np.random.default_rng(4)
    env = Environment.from_rates(700.0, -0.4, rng.uniform(0, 1e4, 3), rng.uniform(0, 1e3, 3), [-0.2, 0.1, 0.5])
    p = tuple(rng.uniform(-1, 1, 3))
    up = solomon_derivative(SystemState(1.0, p), env).z      # = -GS - GD
    down = solomon_derivative(SystemState(-1.0, p), env).z   # = +GS - GD
    gs, gd = 0.5 * (down - up), -0.5 * (up + down)
    gqt = env.exchange_rates()
    assert gs == pytest.approx(700.0 + gqt.sum(), rel=1e-12)
    assert gd == pytest.approx(-700.0 * -0.4 - np.sum(gqt * np.array(p)), rel=1e-12)
    assert instantaneous_rates(SystemState(0.3, p), env) == pytest.approx((gs, gd), rel=1e-12)


# --------------------------------------------------------------------------
# propagation


def test_propagate_zero_time_is_identity():
    env = Environment.from_rates(1e3, 0.1, [5e3], [2e2])
    s = SystemState(0.7, (-0.4,))
    assert propagate(s, env, 0.0) == s


def test_propagate_rejects_negative_time():
    env = Environment.from_rates(1e3, 0.1)
    with pytest.raises(ValueError):
        propagate(SystemState(0.0), env, -1.0)


def test_exchange_conserves_total_polarization():
    env = Environment.from_rates(0.0, 0.0, [3e3], [0.0])
    for dt in (1e-6, 1e-4, 1e-2):
        s = propagate(SystemState(0.9, (-0.5,)), env, dt)
        assert s.z + s.p[0] == pytest.approx(0.4, abs=1e-14)


def test_long_time_limit_is_common_equilibrium():
    env = Environment.from_rates(400.0, 0.25, [2e3, 50.0], [10.0, 300.0], [0.25, 0.25])
    s = propagate(SystemState(-1.0, (1.0, -0.3)), env, 1.0)
    assert s.as_vector() == pytest.approx([0.25] * 3, abs=1e-12)


def test_fixed_point_solves_zero_derivative():
    env = Environment.from_rates(400.0, -0.5, [2e3, 50.0], [10.0, 300.0], [0.2, -0.1])
    fp = fixed_point(env)
    d = solomon_derivative(fp, env)
    assert max(abs(d.z), *map(abs, d.p)) < 1e-9
    assert propagate(fp, env, 0.3).as_vector() == pytest.approx(fp.as_vector(), abs=1e-12)


def test_fixed_point_singular_raises():
    env = Environment.from_rates(0.0, 0.0, [1e3], [0.0])
    with pytest.raises(ValueError):
        fixed_point(env)


def test_rate_matrix_structure():
    env = Environment.from_rates(100.0, -0.2, [1e3, 2e3], [10.0, 20.0], [0.1, -0.3])
    m, c = rate_matrix(env)
    assert m == pytest.approx(m.T)
    assert m[0, 0] == pytest.approx(-3100.0)
    assert c == pytest.approx([-20.0, 1.0, -6.0])


def test_propagate_matches_radau_oracle_single_case():
    rates, gt, peq = [1e4, 3e2], [1e3, 5.0], [-0.1, 0.3]
    env = Environment.from_rates(500.0, -0.2, rates, gt, peq)
    y0 = [0.5, -0.1, 0.2]
    for dt in (3e-6, 2e-4, 5e-3):
        got = propagate(SystemState(y0[0], tuple(y0[1:])), env, dt).as_vector()
        ref = integrate(y0, dt, 500.0, -0.2, rates, gt, peq)
        assert np.max(np.abs(got - ref)) <= 1e-9 * np.max(np.abs(ref))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_propagation_stays_bounded(n, seed):
    rng = np.random.default_rng(seed)
    env = Environment.from_rates(rng.uniform(0, 1e4), rng.uniform(-1, 1), rng.uniform(0, 1e4, n),
                                 rng.uniform(0, 1e4, n), rng.uniform(-1, 1, n))
    s = SystemState(rng.uniform(-1, 1), tuple(rng.uniform(-1, 1, n)))
    for dt in (1e-6, 1e-4, 1e-2):
        v = propagate(s, env, dt).as_vector()
        assert np.all(np.abs(v) <= 1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_propagation_composes(seed):
    rng = np.random.default_rng(seed)
    env = Environment.from_rates(rng.uniform(0, 1e4), rng.uniform(-1, 1), rng.uniform(0, 1e4, 2),
                                 rng.uniform(0, 1e4, 2), rng.uniform(-1, 1, 2))
    s = SystemState(0.3, (-0.2, 0.8))
    a, b = rng.uniform(0, 1e-3, 2)
    two = propagate(propagate(s, env, a), env, b).as_vector()
    one = propagate(s, env, a + b).as_vector()
    assert two == pytest.approx(one, abs=1e-12)


# --------------------------------------------------------------------------
# steady states and spectra


def test_tls_steady_state_examples():
    t = TlsParams(1e8, 1e4, 1e6, 0.0, -0.1)
    assert tls_steady_state(TlsParams(1e8, 1e4, 1e6, 5.0, -0.1), 0.0, 0.7) == pytest.approx(-0.1)
    assert tls_steady_state(t, 3.0, 0.7) == pytest.approx(0.7)
    assert tls_steady_state(TlsParams(1e8, 1e4, 1e6, 2.0, -0.1), 2.0, 0.5) == pytest.approx(0.2)
    with pytest.raises(ZeroDivisionError):
        tls_steady_state(t, 0.0, 0.5)


def test_tls_polarizability_examples():
    lossless = TlsParams(1e8, 1e4, 1e6, 0.0)
    assert tls_polarizability(lossless, 5.0, 0.7, 0.2, 0.0, 0.4, -0.3) == pytest.approx(0.7)
    assert tls_polarizability(TlsParams(1e8, 1e4, 1e6, 3.0), 0.0, 0.7, 0.2, 0.0, 0.4, -0.3) == 0.0
    # Gamma_qt eta = Gamma_t with unit contrast
    assert tls_polarizability(TlsParams(1e8, 1e4, 1e6, 1.0), 2.0, 0.5, 0.1, 0.0, 0.5, -0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        tls_polarizability(lossless, 1.0, 0.8, 0.3, 0.0, 1.0, -1.0)


def test_gamma_sigma_model_examples():
    assert gamma_sigma_model(3e8, Environment(QubitParams(555.0))) == 555.0
    gq = 1 / 1.8e-3
    env = Environment(QubitParams(gq), (TlsParams(204.9e6, 50e3, 1.7e6, 1e3),), 204.9e6)
    assert gamma_sigma_model(204.9e6, env) == pytest.approx(gq + 18.48e3, rel=1e-3)
    far = gamma_sigma_model(np.array([250e6, 300e6, 400e6]), env)
    assert np.all(np.diff(far) < 0) and np.all(far > gq)


def test_gamma_deltadelta_model_examples():
    env = Environment(QubitParams(0.0), (TlsParams.from_exchange_rate(1 * MS, 2e8, 1e6, 0.5 * MS),), 2e8)
    f = ProtocolFactors(eta=0.5, epsilon=0.2, zbar_h=0.5, zbar_l=-0.5)
    assert gamma_deltadelta_model(2e8, env, f) == pytest.approx(0.5 * MS, rel=1e-12)
    # lossless TLS: Gamma_dd = (Gamma_Sigma - Gamma_q) * contrast
    lossless = Environment(QubitParams(100.0), (TlsParams(2e8, 3e4, 1e6, 0.0), TlsParams(2.1e8, 2e4, 2e6, 0.0)),
                           2e8)
    w = np.linspace(1.9e8, 2.2e8, 7)
    dd = gamma_deltadelta_model(w, lossless, ProtocolFactors(eta=0.6, zbar_h=0.3, zbar_l=-0.2))
    assert dd == pytest.approx((gamma_sigma_model(w, lossless) - 100.0) * 0.5, rel=1e-12)
    # an unpolarizable bath
    fast = Environment(QubitParams(0.0), (TlsParams(2e8, 3e4, 1e6, 1e15),), 2e8)
    assert gamma_deltadelta_model(2e8, fast, f) == pytest.approx(0.0, abs=1e-6)


@given(st.floats(0.0, 1e5), st.floats(1e-3, 1e5))
def test_gamma_deltadelta_decreases_with_gamma_t(gt, extra):
    f = ProtocolFactors(eta=0.7, epsilon=0.2, gamma_qt_eff=10.0, zbar_h=0.4, zbar_l=-0.4)
    lo = Environment(QubitParams(0.0), (TlsParams(2e8, 3e4, 1e6, gt),), 2e8)
    hi = Environment(QubitParams(0.0), (TlsParams(2e8, 3e4, 1e6, gt + extra),), 2e8)
    assert gamma_deltadelta_model(2e8, hi, f) < gamma_deltadelta_model(2e8, lo, f)
