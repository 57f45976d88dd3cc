"""Particle/hole mode functions under a tilt protocol.

Each wavevector carries two columns of the linear map ``(h, p)(t) =
M(t) (h, p)(0)``: column A starts as a pure hole ``(1, 0)`` and column B as
a pure particle ``(0, 1)``.  In the notation of the mode functions,
column A is ``(f+, g+)`` and column B is ``(f-, g-)``.  The tilt enters by
Peierls substitution: ``T_k`` is evaluated at ``k + G(t) e_axis`` with
``G(t) = int_0^t gradient``.

Fourier convention: ``h_mu = e^{-i Phi_mu} sum_k h_k e^{-i k.r_mu}`` with
``Phi_mu = int V_mu``; this makes the shift ``k -> k + G`` rather than
``k - G``.  :func:`scalar_gauge_spectrum` checks the bookkeeping against an
explicit on-site potential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .errors import (
    ConfigError,
    InvariantViolation,
    ProtocolNotTerminated,
    RegimeViolation,
    ToleranceNotMet,
    WindowViolation,
)
from .fitting import LinearFit, linear_fit
from .model import ModelParams, Protocol, energy_gap, effective_speed
from .parallel import ordered_map
from .qed import BogoliubovResult

SU11_REJECT = 1e-6
EXPONENT_WINDOW = (5.0, 25.0)
DELTA_WINDOW = (0.02, 0.2)
BASELINE_FRACTION = 0.1


def _kvec(params: ModelParams, k) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (params.d,):
        raise ConfigError(f"wavevector needs {params.d} components, got {k.shape}")
    return k


def kernel_data(params: ModelParams, protocol: Protocol, k) -> np.ndarray:
    """Flat parameter record shared by the mode and correlation kernels."""
    kk = np.zeros(3)
    kk[: params.d] = _kvec(params, k)
    if protocol.gradient_axis >= params.d:
        raise ConfigError(f"gradient axis {protocol.gradient_axis} outside a {params.d}-d lattice")
    head = np.array([params.U, params.d, protocol.gradient_axis, *kk])
    return np.concatenate([head, protocol.kernel_array()])


@dataclass(frozen=True)
class ModeState:
    k: tuple
    f_plus: complex
    g_plus: complex
    f_minus: complex
    g_minus: complex
    t: float

    @classmethod
    def from_row(cls, k, row, t) -> "ModeState":
        return cls(tuple(float(x) for x in k), complex(row[0], row[1]), complex(row[2], row[3]),
                   complex(row[4], row[5]), complex(row[6], row[7]), float(t))

    @property
    def norm_residuals(self) -> tuple[float, float]:
        """Deviations of the two SU(1,1) norms from 1."""
        a = abs(self.f_plus) ** 2 - abs(self.g_plus) ** 2 - 1.0
        b = abs(self.g_minus) ** 2 - abs(self.f_minus) ** 2 - 1.0
        return abs(a), abs(b)

    @property
    def su11_residual(self) -> float:
        return max(self.norm_residuals)


def _run_modes(params, protocol, k, times, tol, atol):
    if protocol.j_envelope.is_zero:
        # decoupled: h = e^{iUt/2}, p = e^{-iUt/2}, exactly
        ph = 0.5 * params.U * np.asarray(times, dtype=float)
        sol = np.zeros((len(ph), _kernels.MODE_STATE))
        sol[:, 0], sol[:, 1] = np.cos(ph), np.sin(ph)
        sol[:, 6], sol[:, 7] = np.cos(ph), -np.sin(ph)
        return sol
    y0 = np.zeros(_kernels.MODE_STATE)
    y0[0] = 1.0
    y0[6] = 1.0
    times = np.asarray(times, dtype=float)
    lead = times[0] != 0.0
    if lead:
        times = np.concatenate([[0.0], times])
    sol = _kernels.integrate(_kernels.mode_rhs, y0, times, kernel_data(params, protocol, k),
                             tol, atol, "mode equations")
    return sol[1:] if lead else sol


def mode_trajectory(params: ModelParams, protocol: Protocol, k, times, tol: float = 1e-10,
                    atol: float = 1e-16) -> list[ModeState]:
    """Mode functions at the requested (increasing, non-negative) times."""
    k = _kvec(params, k)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ConfigError("output times must be increasing and non-negative")
    sol = _run_modes(params, protocol, k, times, tol, atol)
    states = [ModeState.from_row(k, row, t) for row, t in zip(sol, times)]
    worst = max(s.su11_residual for s in states)
    if worst > SU11_REJECT:
        raise InvariantViolation(f"SU(1,1) norm drifted by {worst:.3g} at k = {tuple(k)}")
    return states


def evolve_mode(params: ModelParams, protocol: Protocol, k, tol: float = 1e-10,
                atol: float = 1e-16) -> ModeState:
    """Mode functions at ``protocol.t_final``."""
    return mode_trajectory(params, protocol, k, [protocol.t_final], tol, atol)[-1]


def extract_bogoliubov(state: ModeState, params: ModelParams, protocol: Protocol) -> BogoliubovResult:
    """``p_out = alpha p_in + beta h_in`` once hopping and tilt are off."""
    scale = max(abs(protocol.j_envelope.amplitude), abs(protocol.gradient_envelope.amplitude), 1.0)
    if not protocol.is_terminated(atol=1e-14 * scale):
        raise ProtocolNotTerminated(
            f"J = {protocol.hopping(protocol.t_final):.3g}, gradient = "
            f"{protocol.gradient(protocol.t_final):.3g} at t_final; out-states are undefined"
        )
    if not math.isclose(state.t, protocol.t_final, rel_tol=1e-12, abs_tol=1e-12):
        raise ConfigError("state is not at the end of the protocol")
    # free particle evolves as e^{-iUt/2}; strip it
    phase = np.exp(0.5j * params.U * state.t)
    return BogoliubovResult(alpha=complex(state.g_minus * phase), beta=complex(state.g_plus * phase))


def beta_sq(params: ModelParams, protocol: Protocol, k, tol: float = 1e-10) -> float:
    return extract_bogoliubov(evolve_mode(params, protocol, k, tol), params, protocol).beta_sq


# --------------------------------------------------------------------------
# Pair density on a Brillouin-zone grid
# --------------------------------------------------------------------------

def bz_grid(n: int, d: int) -> np.ndarray:
    """Uniform ``n^d`` grid with components ``-pi + 2 pi j / n``."""
    if n < 2 or n % 2:
        raise ConfigError(f"grid size must be an even integer >= 2, got {n}")
    axis = -np.pi + 2.0 * np.pi * np.arange(n) / n
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class PairSpectrum:
    grid: np.ndarray
    beta_sq: np.ndarray
    baseline_beta_sq: np.ndarray
    unitarity_residual: np.ndarray

    @property
    def pair_density(self) -> float:
        # doublon and holon densities coincide by particle-hole symmetry
        return float(np.mean(self.beta_sq))

    @property
    def baseline_pair_density(self) -> float:
        return float(np.mean(self.baseline_beta_sq))

    def records(self) -> list[dict]:
        out = []
        for k, b, b0, r in zip(self.grid, self.beta_sq, self.baseline_beta_sq, self.unitarity_residual):
            rec = {f"k{i}": float(x) for i, x in enumerate(k)}
            rec.update(beta_sq=float(b), baseline_beta_sq=float(b0), unitarity_residual=float(r))
            out.append(rec)
        return out


def _bogoliubov_many(params, protocol, ks, tol, threads):
    def one(k):
        return extract_bogoliubov(evolve_mode(params, protocol, k, tol), params, protocol)
    return ordered_map(one, ks, threads)


def pair_density(params: ModelParams, protocol: Protocol, n: int = 64, tol: float = 1e-10,
                 threads: int | None = 1) -> PairSpectrum:
    """``|beta_k|^2`` on the ``n^d`` grid plus the zero-tilt control run."""
    grid = bz_grid(n, params.d)
    res = _bogoliubov_many(params, protocol, grid, tol, threads)
    base = _bogoliubov_many(params, protocol.without_tilt(), grid, tol, threads)
    return PairSpectrum(
        grid=grid,
        beta_sq=np.array([r.beta_sq for r in res]),
        baseline_beta_sq=np.array([r.beta_sq for r in base]),
        unitarity_residual=np.array([max(r.unitarity_residual, b.unitarity_residual)
                                     for r, b in zip(res, base)]),
    )


# --------------------------------------------------------------------------
# Tunnelling-exponent scaling
# --------------------------------------------------------------------------

def predicted_exponent(params: ModelParams, gradient: float, k_perp_sq: float = 0.0) -> float:
    """``pi [gap^2/4 + c^2 k_perp^2] / (gradient c)``."""
    c = effective_speed(params)
    return math.pi * (energy_gap(params) ** 2 / 4.0 + c * c * k_perp_sq) / (gradient * c)


def centred_wavevector(params: ModelParams, protocol: Protocol, k_perp: float = 0.0) -> np.ndarray:
    """Longitudinal label that reaches kinetic momentum zero at mid-plateau."""
    k = np.zeros(params.d)
    ax = protocol.gradient_axis
    G = protocol.gauge_integral(protocol.tilt_midpoint())
    k[ax] = math.remainder(-G, 2.0 * math.pi)
    if params.d > 1:
        k[(ax + 1) % params.d] = k_perp
    elif k_perp:
        raise ConfigError("a 1-d lattice has no transverse momentum")
    return k


@dataclass
class ScanPoint:
    gradient: float
    k_perp_sq: float
    beta_sq: float
    baseline_beta_sq: float
    unitarity_residual: float
    predicted_exponent: float

    @property
    def valid(self) -> bool:
        return self.beta_sq > 0 and self.baseline_beta_sq <= BASELINE_FRACTION * self.beta_sq


@dataclass
class ScalingResult:
    inv_gradient_points: list
    perp_points: list
    perp_gradient: float
    inv_gradient_fit: LinearFit
    perp_fit: LinearFit
    predicted_inv_gradient_slope: float
    predicted_perp_slope: float
    excluded: list = field(default_factory=list)

    @property
    def inv_gradient_ratio(self) -> float:
        return self.inv_gradient_fit.slope / self.predicted_inv_gradient_slope

    @property
    def perp_ratio(self) -> float:
        return self.perp_fit.slope / self.predicted_perp_slope


def scaling_point(params: ModelParams, gradient: float, k_perp_sq: float = 0.0, tol: float = 1e-10,
                  **proto_kw) -> ScanPoint:
    protocol = Protocol.tunneling(params, gradient, **proto_kw)
    k = centred_wavevector(params, protocol, math.sqrt(k_perp_sq))
    r = extract_bogoliubov(evolve_mode(params, protocol, k, tol), params, protocol)
    ctrl = protocol.without_tilt()
    r0 = extract_bogoliubov(evolve_mode(params, ctrl, k, tol), params, ctrl)
    return ScanPoint(gradient, k_perp_sq, r.beta_sq, r0.beta_sq,
                     max(r.unitarity_residual, r0.unitarity_residual),
                     predicted_exponent(params, gradient, k_perp_sq))


def check_scaling_regime(params: ModelParams, gradients, k_perp_sq, perp_gradient) -> None:
    params.require_mott("the tunnelling scaling experiment")
    lo, hi = DELTA_WINDOW
    if not lo <= params.delta <= hi:
        raise RegimeViolation(
            f"distance from criticality delta = {params.delta:.4g} outside [{lo}, {hi}]"
        )
    pts = [(g, 0.0) for g in gradients] + [(perp_gradient, q) for q in k_perp_sq]
    for g, q in pts:
        if not g > 0:
            raise ConfigError(f"gradients must be positive, got {g}")
        e = predicted_exponent(params, g, q)
        if not EXPONENT_WINDOW[0] <= e <= EXPONENT_WINDOW[1]:
            raise WindowViolation(
                f"predicted exponent {e:.3g} at gradient {g:.4g}, k_perp^2 = {q:.4g} "
                f"outside [{EXPONENT_WINDOW[0]}, {EXPONENT_WINDOW[1]}]"
            )


def default_gradients(params: ModelParams, n: int = 8, exponents=(6.0, 16.0)) -> np.ndarray:
    """Gradients whose k = 0 predicted exponents are evenly spaced."""
    P0 = predicted_exponent(params, 1.0)
    return P0 / np.linspace(exponents[0], exponents[1], n)


def scaling_fit(
    params: ModelParams,
    gradients=None,
    k_perp_sq=None,
    tol: float = 1e-10,
    *,
    perp_gradient: float | None = None,
    threads: int | None = 1,
    **proto_kw,
) -> ScalingResult:
    """Slopes of ``ln|beta|^2`` against ``1/gradient`` (k = 0) and ``k_perp^2``.

    Defaults: 8 gradients with k = 0 exponents from 6 to 16, the
    transverse scan at the gradient with exponent 8 over ``k_perp^2 in
    [0, 0.25]``.
    """
    params.require_mott("the tunnelling scaling experiment")
    if params.d < 2 and k_perp_sq is not None and len(k_perp_sq):
        raise ConfigError("the transverse scan needs d >= 2")
    gradients = default_gradients(params) if gradients is None else np.asarray(gradients, float)
    if perp_gradient is None:
        perp_gradient = predicted_exponent(params, 1.0) / 8.0
    if k_perp_sq is None:
        k_perp_sq = np.linspace(0.0, 0.25, 8)
    k_perp_sq = np.asarray(k_perp_sq, float)
    check_scaling_regime(params, gradients, k_perp_sq, perp_gradient)

    jobs = [(g, 0.0) for g in gradients] + [(perp_gradient, q) for q in k_perp_sq]
    pts = ordered_map(lambda gq: scaling_point(params, gq[0], gq[1], tol, **proto_kw), jobs, threads)
    inv_pts, perp_pts = pts[: len(gradients)], pts[len(gradients):]

    excluded = [
        {"gradient": p.gradient, "k_perp_sq": p.k_perp_sq, "beta_sq": p.beta_sq,
         "baseline_beta_sq": p.baseline_beta_sq, "reason": "baseline above 10% of signal"}
        for p in pts if not p.valid
    ]
    good_inv = [p for p in inv_pts if p.valid]
    good_perp = [p for p in perp_pts if p.valid]
    inv_fit = linear_fit([1.0 / p.gradient for p in good_inv], np.log([p.beta_sq for p in good_inv]))
    perp_fit = linear_fit([p.k_perp_sq for p in good_perp], np.log([p.beta_sq for p in good_perp]))
    c = effective_speed(params)
    gap = energy_gap(params)
    return ScalingResult(
        inv_pts, perp_pts, perp_gradient, inv_fit, perp_fit,
        predicted_inv_gradient_slope=-math.pi * gap**2 / (4.0 * c),
        predicted_perp_slope=-math.pi * c / perp_gradient,
        excluded=excluded,
    )


# --------------------------------------------------------------------------
# Scalar-potential gauge on a real-space chain
# --------------------------------------------------------------------------

@dataclass
class ScalarGaugeResult:
    q: np.ndarray
    beta_sq: np.ndarray
    final_gauge_shift: float
    edge_weight: float


def scalar_gauge_spectrum(params: ModelParams, protocol: Protocol, q, k_perp=(), sites: int = 161,
                          tol: float = 1e-10) -> ScalarGaugeResult:
    """``|beta|^2`` from an explicit potential ``V_mu = gradient(t) x_mu``.

    A hole is injected at the centre of an open chain along the gradient
    axis (transverse directions stay in momentum space at ``k_perp``); the
    out-particle amplitude is projected onto plane waves ``e^{i q x}``.
    In Peierls language this is ``|beta_{q - G_final}|^2``.  The chain must
    be long enough that the amplitude never reaches its ends; the weight
    left on the outermost sites is returned as ``edge_weight``.
    """
    if sites % 2 == 0 or sites < 5:
        raise ConfigError("chain length must be odd and at least 5")
    k_perp = np.atleast_1d(np.asarray(k_perp, float))
    if len(k_perp) != params.d - 1:
        raise ConfigError(f"need {params.d - 1} transverse components")
    d, U = params.d, params.U
    x = np.arange(sites) - sites // 2
    T_perp = float(np.sum(np.cos(k_perp))) / d

    def K(f):
        out = T_perp * f
        out[:-1] += f[1:] / (2 * d)
        out[1:] += f[:-1] / (2 * d)
        return out

    def rhs(t, y):
        h, p = y[:sites], y[sites:]
        J = protocol.hopping(t)
        V = protocol.gradient(t) * x
        Kh, Kp = K(h), K(p)
        dh = -1j * ((V - 0.5 * U) * h + J * (1.5 * Kh + math.sqrt(2.0) * Kp))
        dp = -1j * ((V + 0.5 * U) * p - J * (1.5 * Kp + math.sqrt(2.0) * Kh))
        return np.concatenate([dh, dp])

    y0 = np.zeros(2 * sites, complex)
    y0[sites // 2] = 1.0
    sol = solve_ivp(rhs, (0.0, protocol.t_final), y0, method="DOP853", rtol=tol, atol=1e-14)
    if not sol.success:
        raise ToleranceNotMet(f"scalar-gauge chain: {sol.message}")
    yf = sol.y[:, -1]
    pf = yf[sites:]
    edge = float(np.max(np.abs(yf[[0, sites - 1, sites, 2 * sites - 1]])))
    q = np.atleast_1d(np.asarray(q, float))
    amp = np.exp(1j * np.outer(q, x)) @ pf
    return ScalarGaugeResult(q, np.abs(amp) ** 2, protocol.gauge_integral(protocol.t_final), edge)
