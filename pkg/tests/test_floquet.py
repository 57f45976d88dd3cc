import math

import numpy as np
import pytest

from tiltmott.errors import ConfigError, RegimeViolation, StepTooCoarse
from tiltmott.floquet import (
    exponent_check,
    find_resonance,
    growth_rate_check,
    monodromy,
    monodromy_consistency,
    perturbative_growth,
    resonance_scan,
)
from tiltmott.model import ModelParams


@pytest.fixture
def weak():
    return ModelParams(0.01, 1.0, 2)


def test_no_hopping_monodromy_is_diagonal_phase():
    r = monodromy(ModelParams(0.0, 1.0, 2), 0.9, 0.3)
    ph = np.exp(0.5j * r.period)
    assert r.monodromy == pytest.approx(np.diag([ph, ph.conjugate()]), abs=1e-10)
    assert r.exponent == 0.0


@pytest.mark.parametrize("dv", [0.4, 0.5, 0.77, 1.0, 1.3])
def test_unit_determinant_and_nonnegative_exponent(weak, dv):
    r = monodromy(weak, dv, math.pi / 2)
    assert r.det_residual <= 1e-10
    assert r.exponent >= 0


def test_exponent_even_in_transverse_momentum(weak):
    for kt in (0.4, math.pi / 2, 2.5):
        a = monodromy(weak, 1.0, kt).exponent
        b = monodromy(weak, 1.0, -kt).exponent
        assert abs(a - b) <= 1e-10


@pytest.mark.parametrize("dv", [0.4, 0.6, 0.8, 1.2, 1.45])
def test_no_growth_off_resonance(weak, dv):
    assert monodromy(weak, dv, math.pi / 2).exponent <= 1e-8 * weak.U


def test_resonance_at_the_gap(weak):
    r = monodromy(weak, 1.0, math.pi / 2)
    assert r.exponent > 0
    assert r.dimensionless == pytest.approx(r.exponent)


def test_zero_transverse_momentum_shifts_the_band(weak):
    # the mean of T_k moves the first band by 1.5 J; delta_v = U falls just outside it
    r = find_resonance(weak, 1, k_transverse=0.0)
    assert r.center == pytest.approx(weak.U - 1.5 * weak.J, abs=2e-4)
    assert monodromy(weak, 1.0, 0.0).exponent <= 1e-8 * weak.U
    assert monodromy(weak, r.center, 0.0).exponent > 0


def test_correlation_exponent_is_twice_the_mode_exponent(weak):
    m = monodromy(weak, 1.0, math.pi / 2)
    c = monodromy(weak, 1.0, math.pi / 2, "correlation")
    assert c.monodromy.shape == (4, 4)
    assert c.exponent == pytest.approx(2 * m.exponent, rel=1e-6)
    assert c.growth_exponent == pytest.approx(m.growth_exponent, rel=1e-6)


def test_scan_finds_both_resonances(weak):
    dv = np.arange(0.97, 1.03, 0.0025)
    s = resonance_scan(weak, dv)
    lo = resonance_scan(weak, np.arange(0.48, 0.52, 0.0025))
    assert max(s.det_residual.max(), lo.det_residual.max()) <= 1e-10
    r1, r2 = s.resonance(1), lo.resonance(2)
    assert abs(r1.center - weak.U) <= math.sqrt(2) * weak.J
    assert abs(r2.center - weak.U / 2) <= math.sqrt(2) * weak.J
    assert r2.exponent < r1.exponent
    for w in (r1.fwhm, r1.band_width):
        assert 0.5 <= w / (math.sqrt(2) * weak.J) <= 2.0
    ids = s.resonance_id()
    assert ids[np.argmin(abs(dv - r1.center))] == 1
    assert ids[0] == 0


def test_scan_step_guard(weak):
    with pytest.raises(StepTooCoarse):
        resonance_scan(weak, np.arange(0.5, 1.0, 0.01))
    with pytest.raises(ConfigError):
        resonance_scan(weak, [1.0, 0.9, 0.8])


def test_exponent_scaling_laws(weak):
    chk = exponent_check(weak)
    assert chk.linear_scaling == pytest.approx(2.0, rel=0.05)
    assert chk.quadratic_scaling == pytest.approx(4.0, rel=0.10)
    # absolute normalization is secondary: +-25% band
    assert chk.first_ratio == pytest.approx(1.0, rel=0.25)
    assert chk.second_ratio == pytest.approx(1.0, rel=0.25)
    assert "normalization" in chk.summary()


def test_exponent_check_needs_weak_hopping():
    with pytest.raises(RegimeViolation):
        exponent_check(ModelParams(0.05, 1.0, 2))


def test_monodromy_predicts_fifty_periods(weak):
    c = find_resonance(weak, 1).center
    out = monodromy_consistency(weak, c, periods=50)
    assert out["mode_norm"] <= 0.01 and out["f11"] <= 0.01


def test_long_time_growth_is_twice_the_mode_exponent(weak):
    c = find_resonance(weak, 1).center
    assert growth_rate_check(weak, c)["ratio"] == pytest.approx(1.0, rel=0.01)


def test_perturbative_growth_examples():
    r = perturbative_growth(ModelParams(1e-3, 1.0, 2), t_max=100.0)
    assert r.f11_deviation <= 0.05 and r.f12_deviation <= 0.05
    i = int(np.argmin(np.abs(r.t - 50.0)))
    assert r.f11[i] == pytest.approx(1e-6 * r.t[i] ** 2 / 8, rel=0.05)
    assert abs(r.f12[i]) == pytest.approx(1e-3 * r.t[i] / (2 * math.sqrt(2)), rel=0.05)
    # nearest stroboscopic sample is t = 16 * 2pi = 50.27
    assert r.f11[i] == pytest.approx(3.125e-4, rel=0.05)
    assert abs(r.f12[i]) == pytest.approx(1.7678e-2, rel=0.05)


def test_detuned_drive_stays_below_resonant_growth():
    p = ModelParams(1e-3, 1.0, 2)
    res = perturbative_growth(p, t_max=100.0)
    det = perturbative_growth(p, t_max=100.0, delta_v=p.U * (1 + 10 * p.J))
    assert det.f11.max() <= res.f11[-1]


def test_perturbative_guards():
    with pytest.raises(RegimeViolation):
        perturbative_growth(ModelParams(1e-2, 1.0, 2), t_max=100.0)
    with pytest.raises(ConfigError):
        perturbative_growth(ModelParams(1e-3, 1.0, 1), t_max=100.0)
