"""Physical parameters, hopping structure factor, dispersion and protocols.

Units: hbar = 1, lattice constant 1, all potentials in energy units.  The
lattice is hypercubic with coordination number ``Z = 2 d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (
    ComplexFrequencyError,
    ComplexGapError,
    ConfigError,
    PhysicsGuardError,
)

#: U/J at which the Mott gap closes.
CRITICAL_RATIO = 3.0 + 2.0 * math.sqrt(2.0)
#: The other (unphysical, superfluid-side) zero of the gap formula.
LOWER_RATIO = 3.0 - 2.0 * math.sqrt(2.0)

# Rounding slack when the gap radicand is evaluated exactly at criticality.
_RADICAND_SLACK = 1e-12


@dataclass(frozen=True)
class ModelParams:
    J: float
    U: float
    d: int = 2

    def __post_init__(self):
        if not self.J >= 0:
            raise ConfigError(f"hopping J must be >= 0, got {self.J}")
        if not self.U > 0:
            raise ConfigError(f"interaction U must be > 0, got {self.U}")
        if self.d not in (1, 2, 3):
            raise ConfigError(f"lattice dimension must be 1, 2 or 3, got {self.d}")

    @classmethod
    def near_critical(cls, J: float, delta: float, d: int = 2) -> "ModelParams":
        """Parameters at ``U = (3 + 2 sqrt 2) J (1 + delta)``."""
        return cls(J=J, U=CRITICAL_RATIO * J * (1.0 + delta), d=d)

    @property
    def Z(self) -> int:
        return 2 * self.d

    @property
    def xi(self) -> float:
        """Stiffness of the long-wavelength expansion of the hopping matrix."""
        return 1.0 / self.Z

    @property
    def filling(self) -> int:
        return 1

    @property
    def delta(self) -> float:
        """Relative distance above the critical coupling, ``U/(U_c) - 1``."""
        if self.J == 0:
            return math.inf
        return self.U / (CRITICAL_RATIO * self.J) - 1.0

    def in_mott_regime(self) -> bool:
        return self.U > CRITICAL_RATIO * self.J

    def require_mott(self, what: str = "this experiment") -> None:
        if not self.in_mott_regime():
            raise PhysicsGuardError(
                f"Mott-phase guard: {what} needs U > (3+2*sqrt(2)) J = "
                f"{CRITICAL_RATIO * self.J:.6g}, got U = {self.U:.6g}"
            )

    @property
    def gap(self) -> float:
        return energy_gap(self)

    @property
    def c_eff(self) -> float:
        return effective_speed(self)

    @property
    def m_eff(self) -> float:
        return effective_mass(self)


def critical_U(J: float) -> float:
    return CRITICAL_RATIO * J


def hopping_structure(params: ModelParams, k, a_shift=0.0, axis: int = 0):
    """Fourier transform of ``T_{mu nu}/Z`` with the tilt phase absorbed.

    ``T_k = (1/d) sum_i cos(k_i + a_shift delta_{i,axis})``.  ``k`` may be a
    single wavevector of length ``d`` or an array of shape ``(..., d)``;
    ``a_shift`` broadcasts against the leading dimensions.
    """
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != params.d:
        raise ConfigError(f"wavevector needs {params.d} components, got shape {k.shape}")
    shift = np.zeros(params.d)
    shift[axis] = 1.0
    arg = k + np.multiply.outer(np.asarray(a_shift, dtype=float), shift)
    T = np.cos(arg).mean(axis=-1)
    return float(T) if T.ndim == 0 else T


def energy_gap(params: ModelParams) -> float:
    """Mott gap ``sqrt(J^2 - 6 J U + U^2)``."""
    J, U = params.J, params.U
    radicand = J * J - 6.0 * J * U + U * U
    if radicand < 0:
        if radicand > -_RADICAND_SLACK * U * U:
            return 0.0
        raise ComplexGapError(
            f"gap is complex for U/J = {U / J:.6g}: inside "
            f"({LOWER_RATIO:.6g}, {CRITICAL_RATIO:.6g})"
        )
    return math.sqrt(radicand)


def mode_frequency(params: ModelParams, T):
    """Positive eigenfrequency of the particle-hole 2x2 system at structure factor T."""
    J, U = params.J, params.U
    T = np.asarray(T, dtype=float)
    radicand = 0.25 * (3.0 * J * T - U) ** 2 - 2.0 * J * J * T * T
    if np.any(radicand < -_RADICAND_SLACK * U * U):
        raise ComplexFrequencyError(
            "particle-hole frequency is complex: linearised Mott state is unstable"
        )
    w = np.sqrt(np.clip(radicand, 0.0, None))
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class DispersionPoint:
    k: tuple
    omega_plus: float
    omega_minus: float


def dispersion(params: ModelParams, k, a_shift: float = 0.0, axis: int = 0) -> DispersionPoint:
    T = hopping_structure(params, k, a_shift, axis)
    w = mode_frequency(params, T)
    return DispersionPoint(k=tuple(float(x) for x in np.asarray(k, float)), omega_plus=w, omega_minus=-w)


def effective_speed(params: ModelParams) -> float:
    """``c_eff = sqrt(xi (3 J U - J^2) / 2)`` with ``xi = 1/Z``."""
    J, U = params.J, params.U
    val = params.xi * (3.0 * J * U - J * J) / 2.0
    if val < 0:
        raise PhysicsGuardError(f"effective speed undefined for J = {J}, U = {U}")
    return math.sqrt(val)


def effective_mass(params: ModelParams) -> float:
    c = effective_speed(params)
    if c == 0:
        return math.inf
    return energy_gap(params) / (2.0 * c * c)


def grid_gap(params: ModelParams, n: int = 101) -> float:
    """Minimum of ``2 omega(k)`` over ``n`` points per axis spanning ``[-pi, pi]``.

    Odd ``n`` puts k = 0, where the Mott-side minimum sits, on the grid.
    """
    ks = np.linspace(-math.pi, math.pi, n)
    # T depends on k only through the cosines, so an outer sum avoids the n^d array
    c = np.cos(ks)
    T = c
    for _ in range(params.d - 1):
        T = np.add.outer(T, c)
    return float(2.0 * np.min(mode_frequency(params, T / params.d)))


def curvature_speed(params: ModelParams, h: float = 1e-3, axis: int = 0) -> float:
    """``c_eff`` from a central difference of ``omega^2`` along one axis at k = 0."""
    def w2(x):
        k = np.zeros(params.d)
        k[axis] = x
        return mode_frequency(params, hopping_structure(params, k)) ** 2

    # second derivative of omega^2 is 2 c^2
    d2 = (w2(h) - 2.0 * w2(0.0) + w2(-h)) / (h * h)
    return math.sqrt(d2 / 2.0)


# --------------------------------------------------------------------------
# Envelopes and protocols
# --------------------------------------------------------------------------

RAMP_SHAPES = ("cos2", "smooth")
_KIND = {"zero": 0, "constant": 1, "cos2": 2, "smooth": 3}


def ramp_profile(x, shape: str = "cos2"):
    """Rising ramp on ``x in [0, 1]``; 0 at 0, 1 at 1.

    ``cos2`` is ``sin^2(pi x / 2)`` (C^1).  ``smooth`` is the compactly
    supported C-infinity step ``e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)})``.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if shape == "cos2":
        return np.sin(0.5 * np.pi * x) ** 2
    if shape == "smooth":
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
            b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
        return a / (a + b)
    raise ConfigError(f"unknown ramp shape {shape!r}")


def _ramp_integral(x: float, shape: str) -> float:
    """``int_0^x ramp_profile(s) ds``."""
    x = min(max(x, 0.0), 1.0)
    if shape == "cos2":
        return 0.5 * x - math.sin(math.pi * x) / (2.0 * math.pi)
    if x > 0.5:
        # profile(s) + profile(1 - s) = 1
        return x - 0.5 + _ramp_integral(1.0 - x, shape)
    val, _ = quad(lambda s: float(ramp_profile(s, shape)), 0.0, x, epsabs=1e-15, epsrel=1e-13)
    return val


@dataclass(frozen=True)
class Envelope:
    """Piecewise envelope: zero, ramp up, plateau, ramp down, zero.

    ``kind`` is ``"ramped"`` (support ``[t0, t3]``), ``"constant"`` or
    ``"zero"``.
    """

    amplitude: float = 0.0
    t0: float = 0.0
    t1: float = 0.0
    t2: float = 0.0
    t3: float = 0.0
    kind: str = "ramped"
    ramp: str = "cos2"

    def __post_init__(self):
        if self.kind not in ("ramped", "constant", "zero"):
            raise ConfigError(f"unknown envelope kind {self.kind!r}")
        if self.ramp not in RAMP_SHAPES:
            raise ConfigError(f"unknown ramp shape {self.ramp!r}")
        if self.kind == "ramped" and not (self.t0 <= self.t1 <= self.t2 <= self.t3):
            raise ConfigError(
                f"envelope breakpoints must be ordered, got {(self.t0, self.t1, self.t2, self.t3)}"
            )

    @classmethod
    def zero(cls) -> "Envelope":
        return cls(kind="zero")

    @classmethod
    def constant(cls, amplitude: float) -> "Envelope":
        return cls(amplitude=amplitude, kind="constant")

    @classmethod
    def ramped(cls, amplitude, start, ramp_up, plateau, ramp_down=None, ramp="cos2") -> "Envelope":
        if ramp_down is None:
            ramp_down = ramp_up
        if min(ramp_up, plateau, ramp_down) < 0:
            raise ConfigError("envelope segment durations must be non-negative")
        t1 = start + ramp_up
        t2 = t1 + plateau
        return cls(amplitude, start, t1, t2, t2 + ramp_down, "ramped", ramp)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "constant":
            out = np.full_like(t, self.amplitude)
        else:
            tt = np.atleast_1d(t)
            out = np.zeros_like(tt)
            rise = (tt > self.t0) & (tt < self.t1)
            fall = (tt > self.t2) & (tt < self.t3)
            out[rise] = ramp_profile((tt[rise] - self.t0) / (self.t1 - self.t0), self.ramp)
            out[fall] = ramp_profile((self.t3 - tt[fall]) / (self.t3 - self.t2), self.ramp)
            out[(tt >= self.t1) & (tt <= self.t2)] = 1.0
            out = (self.amplitude * out).reshape(t.shape)
        return float(out) if out.ndim == 0 else out

    def segment(self, t: float) -> str:
        if self.kind != "ramped":
            return self.kind
        if t <= self.t0 or t >= self.t3:
            return "zero"
        if t < self.t1:
            return "ramp-up"
        if t <= self.t2:
            return "plateau"
        return "ramp-down"

    def integral(self, t: float) -> float:
        """``int_0^t envelope(s) ds`` (analytic up to one quadrature inside a ramp)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.amplitude * t
        if t <= 0:
            return 0.0
        if self.t0 < 0:
            raise ConfigError("gauge integral needs an envelope switched on at t >= 0")
        total = 0.0
        up, down = self.t1 - self.t0, self.t3 - self.t2
        if t > self.t0 and up > 0:
            total += up * _ramp_integral((min(t, self.t1) - self.t0) / up, self.ramp)
        if t > self.t1:
            total += min(t, self.t2) - self.t1
        if t > self.t2 and down > 0:
            # descending ramp integrates as 1 - (rising ramp integral from the far end)
            x = (min(t, self.t3) - self.t2) / down
            total += down * (_ramp_integral(1.0, self.ramp) - _ramp_integral(1.0 - x, self.ramp))
        return self.amplitude * total

    def kernel_array(self) -> np.ndarray:
        kind = _KIND["zero"] if self.kind == "zero" else (
            _KIND["constant"] if self.kind == "constant" else _KIND[self.ramp]
        )
        return np.array([kind, self.amplitude, self.t0, self.t1, self.t2, self.t3], dtype=float)


@dataclass(frozen=True)
class Protocol:
    """Time dependence of hopping and tilt.

    ``j_envelope`` gives ``J(t)`` directly (its amplitude is the plateau
    hopping); ``gradient_envelope`` gives the potential drop per site along
    ``gradient_axis``.
    """

    j_envelope: Envelope
    gradient_envelope: Envelope
    t_final: float
    gradient_axis: int = 0

    def __post_init__(self):
        if self.t_final <= 0:
            raise ConfigError("protocol duration must be positive")
        if self.gradient_axis not in (0, 1, 2):
            raise ConfigError(f"gradient axis must be 0, 1 or 2, got {self.gradient_axis}")
        g, j = self.gradient_envelope, self.j_envelope
        if g.kind == "ramped" and not g.is_zero and j.kind == "ramped":
            eps = 1e-12 * max(1.0, abs(j.t3))  # coincident boundaries up to rounding
            if g.t0 < j.t1 - eps or g.t3 > j.t2 + eps:
                raise ConfigError(
                    "tilt must be switched on after and off before the hopping plateau "
                    f"(tilt support [{g.t0}, {g.t3}], hopping plateau [{j.t1}, {j.t2}])"
                )
        if g.kind == "constant" and j.kind == "ramped" and not g.is_zero:
            raise ConfigError("a permanent tilt needs permanent hopping")

    @classmethod
    def tunneling(
        cls,
        params: ModelParams,
        gradient: float,
        *,
        plateau: float | None = None,
        j_ramp: float | None = None,
        gradient_ramp: float | None = None,
        ramp: str = "smooth",
        axis: int = 0,
        bloch_periods: float = 1.0,
    ) -> "Protocol":
        """Hopping on, tilt on, tilt off, hopping off.

        Defaults: hopping ramps ``200/gap``, tilt ramps ``50/gap``, and a
        tilt plateau sized so that the whole pulse sweeps the wavevector
        through ``bloch_periods`` Brillouin zones (gauge integral
        ``2 pi bloch_periods``).  Every label then crosses the gap the same
        number of times, which keeps ``|beta_k|^2`` continuous in k.
        """
        gap = energy_gap(params)
        if gap <= 0:
            raise PhysicsGuardError("adiabatic protocol needs a finite gap")
        if j_ramp is None:
            j_ramp = 200.0 / gap
        if gradient_ramp is None:
            gradient_ramp = 50.0 / gap
        if plateau is None:
            if gradient <= 0:
                raise ConfigError("plateau length needed when the gradient is zero")
            # each ramp contributes gradient * gradient_ramp / 2 to the sweep
            plateau = bloch_periods * 2.0 * math.pi / gradient - gradient_ramp
            if plateau < 0:
                raise ConfigError(
                    f"tilt ramps alone sweep more than {bloch_periods} zone(s) at gradient "
                    f"{gradient:.4g}; raise bloch_periods or shorten gradient_ramp"
                )
        t_tilt = 2.0 * gradient_ramp + plateau
        jenv = Envelope.ramped(params.J, 0.0, j_ramp, t_tilt, ramp=ramp)
        genv = Envelope.ramped(gradient, j_ramp, gradient_ramp, plateau, ramp=ramp)
        return cls(jenv, genv, jenv.t3, axis)

    @classmethod
    def static(cls, J: float, gradient: float, t_final: float, axis: int = 0) -> "Protocol":
        return cls(Envelope.constant(J), Envelope.constant(gradient) if gradient else Envelope.zero(), t_final, axis)

    def without_tilt(self) -> "Protocol":
        return Protocol(self.j_envelope, Envelope.zero(), self.t_final, self.gradient_axis)

    def hopping(self, t):
        return self.j_envelope(t)

    def gradient(self, t):
        return self.gradient_envelope(t)

    def gauge_integral(self, t: float) -> float:
        return self.gradient_envelope.integral(t)

    def tilt_midpoint(self) -> float:
        g = self.gradient_envelope
        if g.kind != "ramped":
            return 0.5 * self.t_final
        return 0.5 * (g.t1 + g.t2)

    def is_terminated(self, atol: float = 0.0) -> bool:
        return abs(self.hopping(self.t_final)) <= atol and abs(self.gradient(self.t_final)) <= atol

    def kernel_array(self) -> np.ndarray:
        return np.concatenate([self.j_envelope.kernel_array(), self.gradient_envelope.kernel_array()])
