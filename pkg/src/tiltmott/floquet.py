"""Floquet analysis of the Bloch-oscillation regime.

With static J and a constant potential drop ``delta_v`` per site, ``T_k``
is periodic with the Bloch period ``T_B = 2 pi / delta_v``.  The one-period
map (monodromy) of the mode system is a 2x2 matrix with unit determinant;
that of the correlation system is the real 4x4 map of
``(Re f12, Im f12, f11, s)`` where ``s`` carries the constant source.

Exponents are reported per unit time (``exponent``) and divided by
``delta_v`` (``dimensionless``).  ``growth_exponent`` is the growth rate of
the correlations (twice the mode rate) divided by ``delta_v``; this is the
quantity with first- and second-resonance values ``J/(sqrt2 dV)`` and
``3 J^2/(4 sqrt2 dV^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import _kernels
from .errors import (
    ConfigError,
    RegimeViolation,
    ResonanceNotFound,
    StepTooCoarse,
)
from .fitting import linear_fit
from .model import ModelParams, Protocol
from .modes import kernel_data
from .parallel import ordered_map

SYSTEMS = ("mode", "correlation")
PERTURBATIVE_JT = 0.2
PERTURBATIVE_J_OVER_U = 0.02


def _wavevector(params: ModelParams, k_transverse) -> np.ndarray:
    kt = np.atleast_1d(np.asarray(k_transverse, dtype=float))
    if params.d == 1:
        if kt.size and np.any(kt != 0):
            raise ConfigError("a 1-d lattice has no transverse momentum")
        return np.zeros(1)
    if kt.size == 1:
        kt = np.repeat(kt, params.d - 1)
    if kt.size != params.d - 1:
        raise ConfigError(f"need {params.d - 1} transverse components, got {kt.size}")
    return np.concatenate([[0.0], kt])


def _static(params: ModelParams, delta_v: float, t_final: float) -> Protocol:
    return Protocol.static(params.J, delta_v, t_final, axis=0)


def bloch_period(delta_v: float) -> float:
    if not delta_v > 0:
        raise ConfigError(f"potential drop must be positive, got {delta_v}")
    return 2.0 * math.pi / delta_v


@dataclass
class FloquetResult:
    delta_v: float
    system: str
    monodromy: np.ndarray
    multipliers: np.ndarray
    exponent: float
    k_transverse: tuple
    period: float

    @property
    def dimensionless(self) -> float:
        return self.exponent / self.delta_v

    @property
    def growth_exponent(self) -> float:
        rate = 2.0 * self.exponent if self.system == "mode" else self.exponent
        return rate / self.delta_v

    @property
    def det_residual(self) -> float:
        return abs(abs(np.linalg.det(self.monodromy)) - 1.0)

    @property
    def half_trace(self) -> float:
        return float(abs(np.trace(self.monodromy)) / 2.0)


def _mode_map(params, delta_v, k, tol, n_periods=1):
    T = bloch_period(delta_v)
    times = T * np.arange(n_periods + 1)
    y0 = np.zeros(_kernels.MODE_STATE)
    y0[0] = 1.0
    y0[6] = 1.0
    data = kernel_data(params, _static(params, delta_v, times[-1]), k)
    return _kernels.integrate(_kernels.mode_rhs, y0, times, data, tol, 1e-14, "mode monodromy")


def _as_matrix(row) -> np.ndarray:
    # columns A = (f+, g+), B = (f-, g-)
    return np.array([[row[0] + 1j * row[1], row[4] + 1j * row[5]],
                     [row[2] + 1j * row[3], row[6] + 1j * row[7]]])


def _corr_map(params, delta_v, k, tol):
    T = bloch_period(delta_v)
    data = kernel_data(params, _static(params, delta_v, T), k)
    M = np.empty((4, 4))
    for j in range(4):
        y0 = np.zeros(_kernels.CORR_STATE)
        y0[j] = 1.0
        M[:, j] = _kernels.integrate(_kernels.corr_rhs, y0, np.array([0.0, T]), data, tol, 1e-14,
                                     "correlation monodromy")[-1, :4]
    return M


def monodromy(params: ModelParams, delta_v: float, k_transverse=0.0, system: str = "mode",
              tol: float = 1e-11) -> FloquetResult:
    """One-Bloch-period map from the identity and its Floquet exponent."""
    if system not in SYSTEMS:
        raise ConfigError(f"system must be one of {SYSTEMS}")
    k = _wavevector(params, k_transverse)
    T = bloch_period(delta_v)
    if system == "mode":
        M = _as_matrix(_mode_map(params, delta_v, k, tol)[-1])
    else:
        M = _corr_map(params, delta_v, k, tol)
    mult = np.linalg.eigvals(M)
    lam = max(0.0, math.log(np.max(np.abs(mult))) / T)
    return FloquetResult(delta_v, system, M, mult, lam, tuple(k[1:]), T)


# --------------------------------------------------------------------------
# Resonance scan
# --------------------------------------------------------------------------

@dataclass
class Resonance:
    order: int
    center: float
    exponent: float
    growth_exponent: float
    fwhm: float
    band_width: float


@dataclass
class ScanResult:
    delta_v: np.ndarray
    exponent: np.ndarray
    half_trace: np.ndarray
    system: str
    det_residual: np.ndarray
    resonances: list = field(default_factory=list)

    @property
    def dimensionless(self) -> np.ndarray:
        return self.exponent / self.delta_v

    def resonance(self, order: int) -> Resonance:
        for r in self.resonances:
            if r.order == order:
                return r
        raise ResonanceNotFound(f"no resonance of order {order} in the scan")

    def resonance_id(self) -> np.ndarray:
        """Order of the resonance band each scan point lies in (0 outside)."""
        ids = np.zeros(len(self.delta_v), dtype=int)
        for r in self.resonances:
            half = 0.5 * max(r.band_width, r.fwhm)
            ids[np.abs(self.delta_v - r.center) <= half] = r.order
        return ids


def _indicator(params, k, tol):
    """Mode exponent where ``|tr M|/2 > 1``, ``|tr M|/2 - 1`` (<= 0) elsewhere."""
    def f(dv):
        M = _as_matrix(_mode_map(params, dv, k, tol)[-1])
        g = abs(np.trace(M)) / 2.0
        if g > 1.0:
            return math.acosh(g) / bloch_period(dv)
        return g - 1.0
    return f


def _refine(params, k, lo, hi, tol, xatol):
    f = _indicator(params, k, tol)
    res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": xatol, "maxiter": 500})
    return float(res.x), f


def _edge(f, center, level, direction, start):
    """Root of ``f - level`` walking away from ``center``."""
    step = start
    a = center
    for _ in range(60):
        b = center + direction * step
        if b <= 0:
            return math.nan
        if f(b) < level:
            return brentq(lambda x: f(x) - level, min(a, b), max(a, b), xtol=1e-13, rtol=1e-12)
        a = b
        step *= 1.6
    return math.nan


def _resonance_at(params, k, center, order, tol, system):
    f = _indicator(params, k, tol)
    lam = f(center)
    if lam <= 0:
        return None
    scale = max(lam * bloch_period(center) * center, 1e-9)  # rough width estimate
    lo = _edge(f, center, 0.5 * lam, -1, 0.1 * scale)
    hi = _edge(f, center, 0.5 * lam, +1, 0.1 * scale)
    blo = _edge(f, center, 0.0, -1, 0.1 * scale)
    bhi = _edge(f, center, 0.0, +1, 0.1 * scale)
    fl = monodromy(params, center, k[1:] if params.d > 1 else 0.0, system, tol)
    return Resonance(order, center, fl.exponent, fl.growth_exponent, hi - lo, bhi - blo)


def resonance_scan(
    params: ModelParams,
    delta_v=None,
    system: str = "mode",
    tol: float = 1e-11,
    *,
    k_transverse=math.pi / 2,
    threads: int | None = 1,
    refine: bool = True,
) -> ScanResult:
    """Exponents on a uniform ``delta_v`` grid and the resonances in it.

    Default grid: ``[U/3, 1.5 U]`` with step ``J/4``.  Candidates are local
    maxima of ``|tr M|/2`` of the mode map (this also exposes resonances far
    narrower than the grid step), refined to ``1e-3 J`` and kept if the
    refined exponent is positive.
    """
    if system not in SYSTEMS:
        raise ConfigError(f"system must be one of {SYSTEMS}")
    if delta_v is None:
        if params.J <= 0:
            raise ConfigError("default scan grid needs J > 0")
        delta_v = np.arange(params.U / 3.0, 1.5 * params.U + 1e-12, params.J / 4.0)
    dv = np.asarray(delta_v, dtype=float)
    if dv.ndim != 1 or len(dv) < 3 or np.any(np.diff(dv) <= 0) or dv[0] <= 0:
        raise ConfigError("scan grid must be increasing, positive, with at least 3 points")
    step = float(np.max(np.diff(dv)))
    if params.J > 0 and step > params.J / 2.0:
        raise StepTooCoarse(f"scan step {step:.4g} exceeds J/2 = {params.J / 2:.4g}; "
                            "resonance centres would be unreliable")
    k = _wavevector(params, k_transverse)
    mode = ordered_map(lambda x: monodromy(params, x, k[1:] if params.d > 1 else 0.0, "mode", tol),
                       dv, threads)
    if system == "mode":
        fl = mode
    else:
        fl = ordered_map(lambda x: monodromy(params, x, k[1:] if params.d > 1 else 0.0, system, tol),
                         dv, threads)
    g = np.array([m.half_trace for m in mode])
    out = ScanResult(dv, np.array([r.exponent for r in fl]), g, system,
                     np.array([m.det_residual for m in mode]))
    if not refine:
        return out
    seen = set()
    for i in range(1, len(dv) - 1):
        if not (g[i] >= g[i - 1] and g[i] >= g[i + 1]):
            continue
        center, _ = _refine(params, k, dv[i - 1], dv[i + 1], tol, 1e-5 * max(params.J, 1e-12))
        order = max(1, int(round(params.U / center)))
        if order in seen:
            continue
        r = _resonance_at(params, k, center, order, tol, system)
        if r is not None:
            seen.add(order)
            out.resonances.append(r)
    out.resonances.sort(key=lambda r: -r.center)
    return out


def find_resonance(params: ModelParams, order: int, k_transverse=math.pi / 2, system: str = "mode",
                   tol: float = 1e-11) -> Resonance:
    """Locate the order-``order`` resonance near ``U/order`` directly."""
    k = _wavevector(params, k_transverse)
    c0 = params.U / order
    half = 4.0 * params.J / order
    dv = np.linspace(c0 - half, c0 + half, 33)
    f = _indicator(params, k, tol)
    vals = [f(x) for x in dv]
    i = int(np.argmax(vals))
    i = min(max(i, 1), len(dv) - 2)
    center, _ = _refine(params, k, dv[i - 1], dv[i + 1], tol, 1e-5 * params.J)
    r = _resonance_at(params, k, center, order, tol, system)
    if r is None:
        raise ResonanceNotFound(f"no growth near delta_v = U/{order} = {c0:.6g}")
    return r


# --------------------------------------------------------------------------
# Checks against the analytic exponents
# --------------------------------------------------------------------------

def predicted_growth_exponent(params: ModelParams, order: int, delta_v: float) -> float:
    if order == 1:
        return params.J / (math.sqrt(2.0) * delta_v)
    if order == 2:
        return 3.0 * params.J**2 / (4.0 * math.sqrt(2.0) * delta_v**2)
    raise ConfigError("analytic exponents exist for the first two resonances only")


@dataclass
class ExponentCheck:
    first: Resonance
    second: Resonance
    first_predicted: float
    second_predicted: float
    first_doubled: Resonance
    second_doubled: Resonance

    @property
    def first_ratio(self) -> float:
        return self.first.growth_exponent / self.first_predicted

    @property
    def second_ratio(self) -> float:
        return self.second.growth_exponent / self.second_predicted

    @property
    def linear_scaling(self) -> float:
        """Peak first-resonance rate at 2J over that at J (expected 2)."""
        return self.first_doubled.exponent / self.first.exponent

    @property
    def quadratic_scaling(self) -> float:
        """Peak second-resonance rate at 2J over that at J (expected 4)."""
        return self.second_doubled.exponent / self.second.exponent

    def summary(self) -> dict:
        return {
            "first_center": self.first.center,
            "first_growth_exponent": self.first.growth_exponent,
            "first_predicted": self.first_predicted,
            "first_ratio": self.first_ratio,
            "first_fwhm": self.first.fwhm,
            "first_band_width": self.first.band_width,
            "second_center": self.second.center,
            "second_growth_exponent": self.second.growth_exponent,
            "second_predicted": self.second_predicted,
            "second_ratio": self.second_ratio,
            "linear_scaling": self.linear_scaling,
            "quadratic_scaling": self.quadratic_scaling,
            "normalization": "growth_exponent = (correlation growth rate) / delta_v "
                             "= 2 (mode exponent per unit time) / delta_v",
        }


def exponent_check(params: ModelParams, system: str = "mode", tol: float = 1e-11,
                   k_transverse=math.pi / 2) -> ExponentCheck:
    if params.J / params.U > PERTURBATIVE_J_OVER_U / 2 + 1e-15:
        # the doubled-J comparison must stay within J/U <= 0.02 as well
        raise RegimeViolation(f"J/U = {params.J / params.U:.3g} too large; need J/U <= "
                              f"{PERTURBATIVE_J_OVER_U / 2} so that 2J/U <= {PERTURBATIVE_J_OVER_U}")
    r1 = find_resonance(params, 1, k_transverse, system, tol)
    r2 = find_resonance(params, 2, k_transverse, system, tol)
    p2 = ModelParams(2.0 * params.J, params.U, params.d)
    return ExponentCheck(
        r1, r2,
        predicted_growth_exponent(params, 1, r1.center),
        predicted_growth_exponent(params, 2, r2.center),
        find_resonance(p2, 1, k_transverse, system, tol),
        find_resonance(p2, 2, k_transverse, system, tol),
    )


def monodromy_consistency(params: ModelParams, delta_v: float, k_transverse=math.pi / 2,
                          periods: int = 50, tol: float = 1e-11) -> dict:
    """Direct integration over ``periods`` Bloch periods against powers of the one-period maps.

    Returns the worst relative mismatch of the mode-state norm and of
    ``f11`` over ``m = 1..periods``.
    """
    k = _wavevector(params, k_transverse)
    rows = _mode_map(params, delta_v, k, tol, periods)
    M = _as_matrix(rows[1])
    w, V = np.linalg.eig(M)
    Vinv = np.linalg.inv(V)
    mode_err = 0.0
    for m in range(1, periods + 1):
        pred = (V * w**m) @ Vinv
        direct = _as_matrix(rows[m])
        mode_err = max(mode_err, abs(np.linalg.norm(direct) / np.linalg.norm(pred) - 1.0))

    T = bloch_period(delta_v)
    Mc = _corr_map(params, delta_v, k, tol)
    wc, Vc = np.linalg.eig(Mc)
    coef = np.linalg.solve(Vc, np.array([0.0, 0.0, 0.0, 1.0]))
    data = kernel_data(params, _static(params, delta_v, periods * T), k)
    direct = _kernels.integrate(_kernels.corr_rhs, np.array([0.0, 0.0, 0.0, 1.0, 0.0]),
                                T * np.arange(periods + 1), data, tol, 1e-16, "correlations")
    corr_err = 0.0
    for m in range(1, periods + 1):
        pred = ((Vc * wc**m) @ coef).real
        corr_err = max(corr_err, abs(direct[m, 2] - pred[2]) / max(abs(pred[2]), 1e-300))
    return {"mode_norm": mode_err, "f11": corr_err}


def growth_rate_check(params: ModelParams, delta_v: float, k_transverse=math.pi / 2,
                      tol: float = 1e-11, e_folds: float = 24.0) -> dict:
    """Long-time slope of ``ln f11`` against twice the mode exponent.

    The run lasts ``e_folds / (2 lambda)``; the fit uses stroboscopic samples
    from its second half, where the decaying Floquet components are gone.
    """
    fl = monodromy(params, delta_v, k_transverse, "mode", tol)
    rate = 2.0 * fl.exponent
    if rate <= 0:
        raise ResonanceNotFound(f"no growth at delta_v = {delta_v}")
    T = fl.period
    n = int(math.ceil(e_folds / (rate * T)))
    times = T * np.arange(n + 1)
    k = _wavevector(params, k_transverse)
    data = kernel_data(params, _static(params, delta_v, times[-1]), k)
    sol = _kernels.integrate(_kernels.corr_rhs, np.array([0.0, 0.0, 0.0, 1.0, 0.0]), times, data,
                             tol, 1e-16, "correlations")
    half = n // 2
    fit = linear_fit(times[half:], np.log(sol[half:, 2]))
    return {"measured": fit.slope, "predicted": rate, "ratio": fit.slope / rate, "periods": n}


@dataclass
class PerturbativeResult:
    t: np.ndarray
    f12: np.ndarray
    f11: np.ndarray
    f12_predicted: np.ndarray
    f11_predicted: np.ndarray

    @property
    def f12_deviation(self) -> float:
        return float(np.max(np.abs(np.abs(self.f12) - self.f12_predicted) / self.f12_predicted))

    @property
    def f11_deviation(self) -> float:
        return float(np.max(np.abs(self.f11 - self.f11_predicted) / self.f11_predicted))


def perturbative_growth(params: ModelParams, k=(0.0, 0.0), t_max: float = 100.0, tol: float = 1e-11,
                        *, delta_v: float | None = None) -> PerturbativeResult:
    """Early-time ``f12``, ``f11`` under drop ``delta_v`` (default ``U``).

    Sampled stroboscopically at ``t = 2 pi n / U``, where the non-resonant
    micromotion (terms oscillating at ``U`` and ``2U``) vanishes at lowest
    order, and compared with ``|f12| = J t / (2 sqrt2)``, ``f11 = J^2 t^2 / 8``.
    """
    if params.d != 2:
        raise ConfigError("the perturbative coefficients refer to the square lattice (d = 2)")
    if params.J * t_max > PERTURBATIVE_JT:
        raise RegimeViolation(f"J t_max = {params.J * t_max:.3g} exceeds {PERTURBATIVE_JT}")
    dv = params.U if delta_v is None else delta_v
    n = int(math.floor(t_max * params.U / (2.0 * math.pi) + 1e-12))
    if n < 1:
        raise ConfigError("t_max shorter than one period 2 pi / U")
    times = 2.0 * math.pi / params.U * np.arange(1, n + 1)
    data = kernel_data(params, _static(params, dv, times[-1]), np.asarray(k, float))
    sol = _kernels.integrate(_kernels.corr_rhs, np.array([0.0, 0.0, 0.0, 1.0, 0.0]),
                             np.concatenate([[0.0], times]), data, tol, 1e-20, "correlations")[1:]
    J = params.J
    return PerturbativeResult(times, sol[:, 0] + 1j * sol[:, 1], sol[:, 2],
                              J * times / (2.0 * math.sqrt(2.0)), J**2 * times**2 / 8.0)
