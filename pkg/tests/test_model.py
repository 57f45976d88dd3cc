import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltmott.errors import ComplexGapError, ConfigError, PhysicsGuardError
from tiltmott.model import (
    CRITICAL_RATIO,
    Envelope,
    ModelParams,
    Protocol,
    curvature_speed,
    dispersion,
    effective_mass,
    effective_speed,
    energy_gap,
    grid_gap,
    hopping_structure,
    mode_frequency,
)


def test_hopping_structure_examples():
    p = ModelParams(1.0, 10.0, 2)
    assert hopping_structure(p, [0.0, 0.0]) == 1.0
    assert hopping_structure(p, [math.pi, 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert hopping_structure(p, [math.pi / 2, math.pi / 2], math.pi / 2, axis=1) == pytest.approx(-0.5)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(-10, 10))
def test_hopping_structure_bounded_and_periodic(kx, ky, a):
    p = ModelParams(1.0, 10.0, 2)
    T = hopping_structure(p, [kx, ky], a)
    assert -1.0 <= T <= 1.0
    assert hopping_structure(p, [kx + 2 * math.pi, ky], a) == pytest.approx(T, abs=1e-12)
    assert hopping_structure(p, [kx, ky - 2 * math.pi], a) == pytest.approx(T, abs=1e-12)


def test_hopping_structure_rejects_wrong_dimension():
    with pytest.raises(ConfigError):
        hopping_structure(ModelParams(1.0, 10.0, 2), [0.0, 0.0, 0.0])


def test_gap_examples():
    assert energy_gap(ModelParams(0.0, 1.0)) == 1.0
    assert energy_gap(ModelParams(1.0, 10.0)) == pytest.approx(6.4031242, abs=1e-7)
    assert energy_gap(ModelParams(1.0, CRITICAL_RATIO)) == 0.0


def test_gap_complex_inside_the_superfluid_window():
    with pytest.raises(ComplexGapError):
        energy_gap(ModelParams(1.0, 5.0))


def test_gap_closes_continuously_at_criticality():
    gaps = [energy_gap(ModelParams.near_critical(1.0, d)) for d in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_dispersion_examples():
    p = ModelParams(1.0, 10.0, 2)
    pt = dispersion(p, [0.0, 0.0])
    assert pt.omega_plus == pytest.approx(math.sqrt(41) / 2, abs=1e-7)
    assert pt.omega_minus == -pt.omega_plus
    assert dispersion(p, [math.pi, 0.0]).omega_plus == pytest.approx(5.0)


def test_dispersion_curvature_example():
    p = ModelParams(1.0, 10.0, 2)
    k = 1e-3
    w0 = dispersion(p, [0.0, 0.0]).omega_plus
    wk = dispersion(p, [k, 0.0]).omega_plus
    c2 = effective_speed(p) ** 2
    assert (wk**2 - w0**2) / (c2 * k * k) == pytest.approx(1.0, rel=1e-4)


def test_effective_speed_and_mass_examples():
    p = ModelParams(1.0, 10.0, 2)
    assert effective_speed(p) == pytest.approx(math.sqrt(29 / 8), abs=1e-7)
    assert effective_speed(ModelParams(0.0, 3.0)) == 0.0
    assert effective_mass(p) == pytest.approx(math.sqrt(41) / 7.25, abs=1e-7)
    assert energy_gap(p) == pytest.approx(2 * effective_mass(p) * effective_speed(p) ** 2)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(1.001, 20.0), st.sampled_from([1, 2, 3]))
def test_gap_and_curvature_consistency(J, ratio, d):
    p = ModelParams(J, CRITICAL_RATIO * J * ratio, d)
    assert grid_gap(p) == pytest.approx(energy_gap(p), rel=1e-12)
    for axis in range(d):
        assert curvature_speed(p, axis=axis) ** 2 == pytest.approx(effective_speed(p) ** 2, rel=1e-4)


def test_spectral_symmetry_on_grid():
    p = ModelParams(1.0, 7.0, 2)
    for k in np.random.default_rng(1).uniform(-math.pi, math.pi, (20, 2)):
        pt = dispersion(p, k)
        assert pt.omega_minus == -pt.omega_plus


def test_mode_frequency_rejects_unstable_structure_factor():
    with pytest.raises(PhysicsGuardError):
        mode_frequency(ModelParams(1.0, 5.0), 1.0)


def test_params_validation():
    with pytest.raises(ConfigError):
        ModelParams(-1.0, 1.0)
    with pytest.raises(ConfigError):
        ModelParams(1.0, 0.0)
    with pytest.raises(ConfigError):
        ModelParams(1.0, 1.0, 4)
    assert ModelParams(1.0, 10.0, 3).Z == 6


def test_mott_guard_message():
    with pytest.raises(PhysicsGuardError, match="Mott-phase guard"):
        ModelParams(1.0, 5.0).require_mott()
    ModelParams(1.0, 6.0).require_mott()


@pytest.mark.parametrize("ramp", ["cos2", "smooth"])
def test_envelope_c1_at_segment_boundaries(ramp):
    env = Envelope.ramped(2.0, 1.0, 4.0, 3.0, ramp=ramp)
    h = 1e-6
    scale = env.amplitude / 4.0
    # a first-derivative jump would show up as a mismatch of one-sided slopes
    for tb in (env.t0, env.t1, env.t2, env.t3):
        left = (env(tb) - env(tb - h)) / h
        right = (env(tb + h) - env(tb)) / h
        assert abs(left - right) <= 1e-8 * scale + 4 * h * scale
    assert env(0.0) == 0.0 and env(100.0) == 0.0
    assert env(6.0) == 2.0


def test_envelope_integral_matches_quadrature():
    from scipy.integrate import quad

    env = Envelope.ramped(0.7, 2.0, 3.0, 5.0, ramp="smooth")
    for t in (1.0, 3.3, 6.0, 10.5, 20.0):
        ref, _ = quad(env, 0.0, t, points=[2.0, 5.0, 10.0, 13.0], epsabs=1e-13, limit=200)
        assert env.integral(t) == pytest.approx(ref, abs=1e-11)


def test_protocol_ordering_enforced():
    J = Envelope.ramped(1.0, 0.0, 5.0, 10.0)
    with pytest.raises(ConfigError):
        Protocol(J, Envelope.ramped(0.1, 2.0, 2.0, 2.0), J.t3)
    with pytest.raises(ConfigError):
        Protocol(J, Envelope.ramped(0.1, 5.0, 2.0, 9.0), J.t3)
    Protocol(J, Envelope.ramped(0.1, 5.0, 2.0, 6.0), J.t3)


def test_tunneling_protocol_sweeps_whole_zones(near_critical):
    for periods in (1, 2):
        pr = Protocol.tunneling(near_critical, 0.1, bloch_periods=periods)
        assert pr.gauge_integral(pr.t_final) == pytest.approx(2 * math.pi * periods, rel=1e-10)
        assert pr.is_terminated()
        ts = np.linspace(0, pr.t_final, 400)
        G = [pr.gauge_integral(t) for t in ts]
        assert np.all(np.diff(G) >= -1e-12)


def test_tunneling_protocol_rejects_ramps_longer_than_the_sweep(near_critical):
    with pytest.raises(ConfigError, match="bloch_periods"):
        Protocol.tunneling(near_critical, 0.5)
