import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsrelax.calibration import (PhaseModel, Populations3, apply_pulses, four_readouts, phase_pair_to_z,
                                  readout_phase, smooth_contrast, solve_phase_contrast)

MODEL = PhaseModel(0.1, 0.9, 1.6)


def _populations(n=8, seed=0):
    rng = np.random.default_rng(seed)
    pf = np.concatenate([np.linspace(0.15, 0.01, n - 1), [0.0]])
    pe = rng.uniform(0.2, 0.6, n) * (1 - pf)
    return [Populations3(1 - pe[i] - pf[i], pe[i], pf[i]) for i in range(n)]


def test_pulses_permute_levels():
    p = Populations3(0.5, 0.3, 0.2)
    assert apply_pulses(p, ("ef",)) == pytest.approx([0.5, 0.2, 0.3])
    assert apply_pulses(p, ("ge",)) == pytest.approx([0.3, 0.5, 0.2])
    assert apply_pulses(p, ("ge", "ef")) == pytest.approx([0.3, 0.2, 0.5])
    with pytest.raises(ValueError):
        apply_pulses(p, ("gf",))


def test_pulses_are_involutions():
    p = Populations3(0.5, 0.3, 0.2)
    for name in ("ge", "ef"):
        assert apply_pulses(p, (name, name)) == pytest.approx(p.as_array())


def test_readout_differences():
    p = Populations3(0.5, 0.3, 0.2)
    m = four_readouts(p, MODEL)
    assert m[0] - m[2] == pytest.approx((p.p_g - p.p_e) * (MODEL.phi_g - MODEL.phi_e))
    assert m[0] - m[1] == pytest.approx((p.p_e - p.p_f) * (MODEL.phi_e - MODEL.phi_f))
    assert m[0] == pytest.approx(readout_phase(p, MODEL))


def test_population_and_model_validation():
    with pytest.raises(ValueError):
        Populations3(0.5, 0.6, 0.0)
    with pytest.raises(ValueError):
        Populations3(-0.1, 1.1)
    with pytest.raises(ValueError):
        PhaseModel(0.3, 0.3)
    assert Populations3.from_z(0.4).z == pytest.approx(0.4)


def test_round_trip_noiseless():
    pops = _populations()
    m = np.array([four_readouts(p, MODEL) for p in pops])
    cal = solve_phase_contrast(m)
    assert cal.model.as_array() == pytest.approx(MODEL.as_array(), abs=1e-10)
    assert cal.populations == pytest.approx(np.array([p.as_array() for p in pops]), abs=1e-10)
    assert cal.contrast == pytest.approx(0.8, abs=1e-10)


def test_closure_at_other_delay():
    pops = _populations()
    pops[2] = Populations3(0.6, 0.4, 0.0)
    m = np.array([four_readouts(p, MODEL) for p in pops])
    cal = solve_phase_contrast(m, last=2)
    assert cal.contrast == pytest.approx(0.8, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 2.0), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_round_trip_random_models(phi_g, gap, phi_f, seed):
    model = PhaseModel(phi_g, phi_g + gap, phi_f)
    if abs(model.phi_f - model.phi_e) < 0.05:
        return
    pops = _populations(seed=seed)
    m = np.array([four_readouts(p, model) for p in pops])
    cal = solve_phase_contrast(m)
    assert cal.contrast == pytest.approx(gap, abs=1e-8)


def test_noisy_round_trip_is_close():
    pops = _populations(n=12)
    rng = np.random.default_rng(1)
    m = np.array([four_readouts(p, MODEL) for p in pops]) + rng.normal(0, 1e-4, (12, 4))
    assert solve_phase_contrast(m).contrast == pytest.approx(0.8, abs=5e-3)


def test_solver_rejects_bad_input():
    pops = _populations()
    m = np.array([four_readouts(p, MODEL) for p in pops])
    with pytest.raises(ValueError):
        solve_phase_contrast(m[:, :3])
    with pytest.raises(ValueError):
        solve_phase_contrast(m[:1])
    with pytest.raises(ValueError):
        solve_phase_contrast(m, assume_pf_zero_at_last=False)
    bad = m.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        solve_phase_contrast(bad)


def test_solver_rank_deficient():
    # phi_e == phi_f: the ef pulse is invisible
    flat = PhaseModel(0.1, 0.9, 0.9)
    m = np.array([four_readouts(p, flat) for p in _populations()])
    with pytest.raises(ValueError):
        solve_phase_contrast(m)
    # p_e == p_g at the closure delay
    pops = _populations()
    pops[-1] = Populations3(0.5, 0.5, 0.0)
    m = np.array([four_readouts(p, MODEL) for p in pops])
    with pytest.raises(ValueError):
        solve_phase_contrast(m)


def test_leakage_decays_in_solution():
    m = np.array([four_readouts(p, MODEL) for p in _populations()])
    pf = solve_phase_contrast(m).populations[:, 2]
    assert np.all(np.diff(pf) <= 1e-10)


def test_phase_pair_to_z():
    p = Populations3(0.3, 0.7, 0.0)
    m0 = readout_phase(p, MODEL)
    m_pi = readout_phase(p, MODEL, ("ge",))
    assert phase_pair_to_z(m0, m_pi, MODEL.contrast) == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(ValueError):
        phase_pair_to_z(m0, m_pi, 0.0)


def test_smooth_contrast_recovers_polynomial():
    f = np.linspace(2e8, 4e8, 40)
    x = (f - 3e8) / 1e8
    c = 0.8 + 0.05 * x - 0.02 * x**3
    poly = smooth_contrast(f, c)
    assert poly(f) == pytest.approx(c, abs=1e-10)
    with pytest.raises(ValueError):
        smooth_contrast(f[:3], c[:3], order=5)
