"""Scalar QED reference: a single momentum mode in a Sauter pulse.

The vector potential is ``A(t) = qE tau (1 + tanh(t/tau))``, so the field
is ``E(t) = qE sech^2(t/tau)`` and ``A`` runs from 0 to ``2 qE tau``.  The
symmetric choice ``k_x = -A(inf)/2`` puts the mode in the middle of the
pulse, where in- and out-frequencies agree.

The oscillator ``psi'' + omega(t)^2 psi = 0`` is integrated in adiabatic
amplitudes,

    psi  = (alpha e^{-i theta} + beta e^{+i theta}) / sqrt(2 omega)
    psi' = -i omega (alpha e^{-i theta} - beta e^{+i theta}) / sqrt(2 omega)

with ``theta' = omega``.  This is an exact rewriting of the mode equation:
at any instant ``(alpha, beta)`` are the projections onto the instantaneous
positive and negative frequency solutions, and at the window edges
(field below 1e-10 of its peak) they are the Bogoliubov coefficients.
Tiny ``|beta|^2`` then no longer has to be recovered from cancellations in
``psi`` itself.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, InvariantViolation, WindowTooShort
from .fitting import LinearFit, linear_fit
from .parallel import ordered_map

DEFAULT_WINDOW = 12.5  # half-window in units of tau; sech^2(12.5) ~ 5.6e-11
FIELD_EDGE_RATIO = 1e-10
# |beta|^2 below this is indistinguishable from integration noise at atol 1e-20
NOISE_FLOOR = 1e-20


@dataclass(frozen=True)
class QedModeParams:
    m: float
    qE: float
    tau: float
    k_perp: float = 0.0
    k_x: float | None = None  # None: centred on the pulse

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError(f"mass must be positive, got {self.m}")
        if not self.qE >= 0:
            raise ConfigError(f"field strength must be non-negative, got {self.qE}")
        if not self.tau > 0:
            raise ConfigError(f"pulse width must be positive, got {self.tau}")
        if self.qE >= self.m**2:
            warnings.warn(
                f"qE = {self.qE} >= m^2 = {self.m**2}: outside the semiclassical window",
                stacklevel=2,
            )

    @property
    def kx(self) -> float:
        return -self.qE * self.tau if self.k_x is None else self.k_x

    def vector_potential(self, t):
        return self.qE * self.tau * (1.0 + np.tanh(np.asarray(t, float) / self.tau))

    def field(self, t):
        return self.qE / np.cosh(np.asarray(t, float) / self.tau) ** 2

    def omega(self, t):
        P = self.kx + self.vector_potential(t)
        return np.sqrt(P * P + self.k_perp**2 + self.m**2)

    def with_k_perp(self, k_perp: float) -> "QedModeParams":
        return QedModeParams(self.m, self.qE, self.tau, k_perp, self.k_x)


@dataclass(frozen=True)
class BogoliubovResult:
    alpha: complex
    beta: complex

    @property
    def beta_sq(self) -> float:
        return abs(self.beta) ** 2

    @property
    def unitarity_residual(self) -> float:
        return abs(abs(self.alpha) ** 2 - abs(self.beta) ** 2 - 1.0)


def schwinger_exponent(p: QedModeParams) -> float:
    """Predicted ``ln |beta|^2`` up to a constant: ``-pi (m^2 + k_perp^2) / qE``."""
    if not p.qE > 0:
        raise ConfigError("the exponent needs a non-zero field")
    return -math.pi * (p.m**2 + p.k_perp**2) / p.qE


def evolve_qed_mode(
    p: QedModeParams,
    tol: float = 1e-10,
    *,
    window: float = DEFAULT_WINDOW,
    atol: float = 1e-20,
    reverse: bool = False,
    max_residual: float = 1e-8,
) -> BogoliubovResult:
    """Bogoliubov coefficients of one mode after the pulse.

    ``window`` is the half-width of the integration interval in units of
    ``tau``; ``reverse`` runs the time-reversed pulse ``A(-t)``.
    """
    edge = 1.0 / math.cosh(window) ** 2
    if edge > FIELD_EDGE_RATIO:
        raise WindowTooShort(
            f"field at the window edge is {edge:.3g} of its peak (> {FIELD_EDGE_RATIO:g}); "
            f"use a half-window of at least {math.acosh(FIELD_EDGE_RATIO**-0.5):.3g} tau"
        )
    T = window * p.tau
    w_in = float(p.omega(T if reverse else -T))
    data = np.array([p.m, p.qE, p.tau, p.k_perp**2, p.kx, -1.0 if reverse else 1.0])
    # start the phase at -omega_in T so theta stays O(omega t) rather than O(2 omega T)
    y0 = np.array([1.0, 0.0, 0.0, 0.0, -w_in * T])
    sol = _kernels.integrate(
        _kernels.qed_rhs, y0, np.array([-T, T]), data, tol, atol, what="QED mode"
    )[-1]
    res = BogoliubovResult(complex(sol[0], sol[1]), complex(sol[2], sol[3]))
    if res.unitarity_residual > max_residual:
        raise InvariantViolation(
            f"QED mode lost unitarity: ||alpha|^2 - |beta|^2 - 1| = {res.unitarity_residual:.3g}"
        )
    return res


@dataclass
class PerpScan:
    qE: float
    k_perp_sq: np.ndarray
    results: list
    fit: LinearFit
    predicted_slope: float
    excluded: list = field(default_factory=list)

    @property
    def beta_sq(self) -> np.ndarray:
        return np.array([r.beta_sq for r in self.results])

    @property
    def slope_ratio(self) -> float:
        return self.fit.slope / self.predicted_slope

    def records(self) -> list[dict]:
        return [
            {
                "qE": self.qE,
                "k_perp_sq": float(k2),
                "re_alpha": r.alpha.real,
                "im_alpha": r.alpha.imag,
                "re_beta": r.beta.real,
                "im_beta": r.beta.imag,
                "beta_sq": r.beta_sq,
                "unitarity_residual": r.unitarity_residual,
            }
            for k2, r in zip(self.k_perp_sq, self.results)
        ]


def default_perp_grid(qE: float, n: int = 8) -> np.ndarray:
    """``k_perp^2`` grid spanning 1.75 qE, i.e. a drop of e^{-5.5} in |beta|^2."""
    return np.linspace(0.0, 1.75 * qE, n)


def perp_scan_fit(
    base: QedModeParams,
    k_perp_sq,
    tol: float = 1e-10,
    *,
    floor: float = NOISE_FLOOR,
    threads: int | None = 1,
    **mode_kw,
) -> PerpScan:
    """Solve each transverse momentum and fit ``ln|beta|^2`` against ``k_perp^2``."""
    k2 = np.asarray(k_perp_sq, dtype=float)
    if np.any(k2 < 0):
        raise ConfigError("k_perp^2 values must be non-negative")
    results = ordered_map(
        lambda q: evolve_qed_mode(base.with_k_perp(math.sqrt(q)), tol, **mode_kw), k2, threads
    )
    bsq = np.array([r.beta_sq for r in results])
    ok = bsq > floor
    excluded = [{"k_perp_sq": float(q), "beta_sq": float(b), "reason": "below noise floor"}
                for q, b in zip(k2[~ok], bsq[~ok])]
    fit = linear_fit(k2[ok], np.log(bsq[ok]))
    return PerpScan(base.qE, k2, results, fit, -math.pi / base.qE, excluded)
