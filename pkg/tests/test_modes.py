import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltmott.errors import PhysicsGuardError, ProtocolNotTerminated, RegimeViolation, WindowViolation
from tiltmott.model import Envelope, ModelParams, Protocol, hopping_structure
from tiltmott.modes import (
    beta_sq,
    bz_grid,
    evolve_mode,
    extract_bogoliubov,
    mode_trajectory,
    pair_density,
    scalar_gauge_spectrum,
    scaling_fit,
    scaling_point,
)


def test_no_hopping_gives_pure_phases():
    p = ModelParams(0.0, 1.0, 2)
    pr = Protocol(Envelope.zero(), Envelope.ramped(0.3, 0.0, 5.0, 5.0), 15.0)
    for s in mode_trajectory(p, pr, [0.3, -1.0], [1.0, 7.0, 15.0]):
        assert s.f_plus == pytest.approx(np.exp(0.5j * s.t), abs=1e-9)
        assert s.g_minus == pytest.approx(np.exp(-0.5j * s.t), abs=1e-9)
        assert s.g_plus == 0 and s.f_minus == 0


def test_static_eigenvector_only_acquires_a_phase():
    p = ModelParams(1.0, 8.0, 2)
    k = np.array([0.4, -0.9])
    T = hopping_structure(p, k)
    a = 0.5 * (3 * p.J * T - p.U)
    b = math.sqrt(2.0) * p.J * T
    w, v = np.linalg.eig(np.array([[a, b], [-b, -a]]))
    pr = Protocol.static(p.J, 0.0, 200.0)
    states = mode_trajectory(p, pr, k, np.linspace(10.0, 200.0, 20))
    for s in states:
        M = np.array([[s.f_plus, s.f_minus], [s.g_plus, s.g_minus]])
        for j in range(2):
            assert M @ v[:, j] == pytest.approx(np.exp(-1j * w[j] * s.t) * v[:, j], abs=1e-8)
            assert np.abs(M @ v[:, j]) == pytest.approx(np.abs(v[:, j]), abs=1e-8)


def _random_protocol(Ja, Ga, r1, r2, p1):
    J = Envelope.ramped(Ja, 0.0, r1, p1 + 2 * r2 + 2.0, ramp="cos2")
    G = Envelope.ramped(Ga, r1, r2, p1)
    return Protocol(J, G, J.t3)


@settings(max_examples=12, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(-1.0, 1.0), st.floats(1.0, 10.0), st.floats(1.0, 5.0),
       st.floats(0.0, 20.0), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_su11_norms_conserved_under_arbitrary_protocols(Ja, Ga, r1, r2, p1, kx, ky):
    p = ModelParams(Ja, 6.0 * Ja, 2)
    pr = _random_protocol(Ja, Ga, r1, r2, p1)
    times = np.linspace(0.5, pr.t_final, 9)
    assert max(s.su11_residual for s in mode_trajectory(p, pr, [kx, ky], times)) <= 1e-8
    r = extract_bogoliubov(evolve_mode(p, pr, [kx, ky]), p, pr)
    assert r.unitarity_residual <= 1e-8


def test_unterminated_protocol_has_no_out_state(near_critical):
    pr = Protocol.static(1.0, 0.1, 20.0)
    with pytest.raises(ProtocolNotTerminated):
        extract_bogoliubov(evolve_mode(near_critical, pr, [0.0, 0.0]), near_critical, pr)


def test_adiabatic_control_creates_no_pairs(near_critical):
    ctrl = Protocol.tunneling(near_critical, 0.1).without_tilt()
    spec = pair_density(near_critical, ctrl, n=8)
    assert spec.beta_sq.max() <= 1e-6
    assert spec.pair_density <= 1e-6


def test_pair_density_is_the_grid_mean(near_critical, short_protocol):
    spec = pair_density(near_critical, short_protocol, n=8)
    assert np.all(spec.beta_sq >= 0)
    assert spec.pair_density == float(np.mean(spec.beta_sq))
    assert spec.baseline_pair_density == float(np.mean(spec.baseline_beta_sq))
    assert spec.unitarity_residual.max() <= 1e-8
    assert len(spec.records()) == 64


def test_gauge_invariance_against_explicit_potential(short_protocol):
    p = ModelParams.near_critical(1.0, 0.2, 2)
    q = np.linspace(-math.pi, math.pi, 9)
    res = scalar_gauge_spectrum(p, short_protocol, q, k_perp=[0.7], sites=121)
    assert res.edge_weight < 1e-10
    G = res.final_gauge_shift
    ref = np.array([beta_sq(p, short_protocol, [qq - G, 0.7]) for qq in q])
    assert ref.max() > 1e-6
    assert np.max(np.abs(res.beta_sq - ref)) <= 1e-8


def test_transverse_reflection_symmetry(near_critical, short_protocol):
    for kx, ky in [(0.3, 0.8), (-1.2, 2.1), (0.0, 0.4)]:
        a = beta_sq(near_critical, short_protocol, [kx, ky])
        b = beta_sq(near_critical, short_protocol, [kx, -ky])
        assert b == pytest.approx(a, rel=1e-7, abs=1e-14)


def test_brillouin_zone_periodicity(near_critical, short_protocol):
    k = np.array([0.37, -0.81])
    a = beta_sq(near_critical, short_protocol, k)
    for shift in ([2 * math.pi, 0.0], [0.0, -2 * math.pi]):
        assert beta_sq(near_critical, short_protocol, k + shift) == pytest.approx(a, abs=1e-10)


def test_determinism_serial_and_threaded(near_critical, short_protocol):
    a = pair_density(near_critical, short_protocol, n=6)
    b = pair_density(near_critical, short_protocol, n=6)
    c = pair_density(near_critical, short_protocol, n=6, threads=3)
    assert np.array_equal(a.beta_sq, b.beta_sq)
    assert a.pair_density == b.pair_density
    assert np.max(np.abs(a.beta_sq - c.beta_sq)) <= 1e-12
    assert abs(a.pair_density - c.pair_density) <= 1e-12


def test_bz_grid_shape():
    g = bz_grid(4, 2)
    assert g.shape == (16, 2)
    assert g.min() == -math.pi and g.max() < math.pi


def test_scaling_regime_guards():
    with pytest.raises(RegimeViolation):
        scaling_fit(ModelParams.near_critical(1.0, 0.5, 2))
    with pytest.raises(PhysicsGuardError, match="Mott-phase guard"):
        scaling_fit(ModelParams(1.0, 5.0, 2))
    with pytest.raises(WindowViolation):
        scaling_fit(ModelParams.near_critical(1.0, 0.05, 2), gradients=[0.01, 0.1])


def test_smaller_gap_creates_more_pairs():
    g = 0.1
    far = scaling_point(ModelParams.near_critical(1.0, 0.1, 2), g).beta_sq
    mid = scaling_point(ModelParams.near_critical(1.0, 0.05, 2), g).beta_sq
    near = scaling_point(ModelParams.near_critical(1.0, 0.025, 2), g).beta_sq
    assert far < mid < near


def test_pair_density_grid_refinement(near_critical):
    # about a minute: the 64 x 64 grid is the spec's default resolution
    pr = Protocol.tunneling(near_critical, 0.1155)
    coarse = pair_density(near_critical, pr, n=32).pair_density
    fine = pair_density(near_critical, pr, n=64).pair_density
    assert abs(coarse - fine) / fine < 0.01
