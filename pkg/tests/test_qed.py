import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltmott.errors import ConfigError, DegenerateFit, WindowTooShort
from tiltmott.qed import (
    QedModeParams,
    default_perp_grid,
    evolve_qed_mode,
    perp_scan_fit,
    schwinger_exponent,
)

# produced by this implementation at m=1, qE=0.2, tau=100, k=0, tol 1e-10;
# tol 1e-11 agrees to 3e-10 relative
BASELINE_BETA_SQ = 1.5212690807162366e-07


def test_no_field_no_mixing():
    r = evolve_qed_mode(QedModeParams(1.0, 0.0, 100.0))
    assert r.beta == 0
    assert abs(r.alpha) == pytest.approx(1.0, abs=1e-12)


def test_regression_baseline_and_order_of_magnitude():
    r = evolve_qed_mode(QedModeParams(1.0, 0.2, 100.0))
    assert r.beta_sq == pytest.approx(BASELINE_BETA_SQ, rel=1e-6)
    ratio = r.beta_sq / math.exp(-math.pi / 0.2)
    assert 0.5 <= ratio <= 2.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(20.0, 200.0), st.floats(0.0, 1.0), st.floats(-0.5, 0.5))
def test_unitarity_for_any_mode(qE, tau, k_perp, dkx):
    p = QedModeParams(1.0, qE, tau, k_perp, -qE * tau + dkx)
    assert evolve_qed_mode(p).unitarity_residual <= 1e-8


def test_time_reversal_relative_agreement():
    p = QedModeParams(1.0, 0.4, 100.0, 0.2)
    a = evolve_qed_mode(p).beta_sq
    b = evolve_qed_mode(p, reverse=True).beta_sq
    assert b == pytest.approx(a, rel=1e-6)


def test_window_too_short():
    with pytest.raises(WindowTooShort):
        evolve_qed_mode(QedModeParams(1.0, 0.2, 100.0), window=8.0)


def test_schwinger_exponent_examples():
    assert schwinger_exponent(QedModeParams(1.0, 0.2, 1.0)) == pytest.approx(-15.7079633, abs=1e-7)
    assert schwinger_exponent(QedModeParams(1.0, 0.2, 1.0, math.sqrt(0.5))) == pytest.approx(-23.5619449, abs=1e-7)
    e = [schwinger_exponent(QedModeParams(1.0, 0.2, 1.0, k)) for k in (0, 1, 10, 100)]
    assert all(a > b for a, b in zip(e, e[1:]))


def test_subcritical_warning():
    with pytest.warns(UserWarning, match="semiclassical"):
        QedModeParams(1.0, 1.5, 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        QedModeParams(1.0, 0.5, 10.0)


def test_parameter_validation():
    with pytest.raises(ConfigError):
        QedModeParams(0.0, 0.1, 1.0)
    with pytest.raises(ConfigError):
        QedModeParams(1.0, -0.1, 1.0)
    with pytest.raises(ConfigError):
        QedModeParams(1.0, 0.1, 0.0)


def test_perp_scan_slope_example():
    grid = np.arange(8) * 0.05
    scan = perp_scan_fit(QedModeParams(1.0, 0.2, 100.0), grid)
    assert scan.fit.slope == pytest.approx(-math.pi / 0.2, rel=0.05)
    assert not scan.excluded
    assert len(scan.records()) == 8


def test_doubling_field_halves_slope():
    a = perp_scan_fit(QedModeParams(1.0, 0.2, 100.0), default_perp_grid(0.2))
    b = perp_scan_fit(QedModeParams(1.0, 0.4, 100.0), default_perp_grid(0.4))
    assert b.fit.slope / a.fit.slope == pytest.approx(0.5, rel=0.05)


def test_degenerate_fit():
    with pytest.raises(DegenerateFit):
        perp_scan_fit(QedModeParams(1.0, 0.2, 100.0), [0.1] * 8)


def test_points_below_noise_floor_are_listed():
    scan = perp_scan_fit(QedModeParams(1.0, 0.2, 100.0), default_perp_grid(0.2), floor=1e-9)
    assert scan.excluded
    assert all(e["beta_sq"] <= 1e-9 for e in scan.excluded)
    assert scan.fit.n_points == 8 - len(scan.excluded)


def test_refinement_convergence():
    p = QedModeParams(1.0, 0.2, 100.0)
    for k2 in default_perp_grid(0.2):
        q = p.with_k_perp(math.sqrt(k2))
        a = evolve_qed_mode(q, 1e-10).beta_sq
        b = evolve_qed_mode(q, 5e-11).beta_sq
        assert abs(math.log(a / b)) < 1e-4


def test_threads_do_not_change_results():
    base = QedModeParams(1.0, 0.2, 100.0)
    grid = default_perp_grid(0.2)
    a = perp_scan_fit(base, grid, threads=1)
    b = perp_scan_fit(base, grid, threads=3)
    assert np.array_equal(a.beta_sq, b.beta_sq)
