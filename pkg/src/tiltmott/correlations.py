"""Two-point correlations of particle and hole operators.

Only ``f12`` and ``f11`` are stored: ``f21`` is the Hermitian partner of
``f12`` and ``f22`` equals ``f11``, so both symmetries hold by
construction.

Momentum space::

    i f12' = (U - 3 J T_k) f12 - sqrt2 J T_k (f11 + f22 + 1)
    i f11' = sqrt2 J T_k (f12 - f21)

Real space, ``F`` the site-pair matrices and ``T~`` the (gauge-dressed)
hopping matrix::

    i F12' = (U - V_mu + V_nu) F12 - J/Z [sqrt2 T~ + T~ (3 F12 + sqrt2 (F11 + F22))]
    i F11' = -(V_mu - V_nu) F11 - sqrt2 J/Z T~ (F21 - F12),   F21 = F12^H

The real-space pair ``(mu, nu)`` maps to momentum space through
``F_k = sum_s F(s) e^{i k.s}`` with ``s = r_nu - r_mu``.  This reproduces
the momentum equations exactly only if the coincident entries ``F(0)``
are evolved as well (``coincident=True``, the default); with
``coincident=False`` they are pinned to zero, as for a strict ``nu != mu``
system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .errors import ConfigError, GaugeMismatch, SizeExceeded, ToleranceNotMet
from .model import ModelParams, Protocol
from .modes import kernel_data, mode_trajectory
from .parallel import ordered_map

SQRT2 = math.sqrt(2.0)
MAX_SITES = {1: 64, 2: 144}


@dataclass(frozen=True)
class CorrelationState:
    k: tuple
    f12: complex
    f11: float
    t: float

    @property
    def f21(self) -> complex:
        return self.f12.conjugate()

    @property
    def f22(self) -> float:
        return self.f11


def correlation_trajectory(params: ModelParams, protocol: Protocol, k, times, tol: float = 1e-10,
                           atol: float = 1e-16) -> list[CorrelationState]:
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ConfigError("output times must be increasing and non-negative")
    lead = times[0] != 0.0
    grid = np.concatenate([[0.0], times]) if lead else times
    # state: Re f12, Im f12, f11, source weight (the "+1"), gauge integral
    y0 = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
    sol = _kernels.integrate(_kernels.corr_rhs, y0, grid, kernel_data(params, protocol, k),
                             tol, atol, "correlation equations")
    if lead:
        sol = sol[1:]
    kk = tuple(float(x) for x in np.atleast_1d(k))
    return [CorrelationState(kk, complex(r[0], r[1]), float(r[2]), float(t)) for r, t in zip(sol, times)]


def evolve_correlations_k(params: ModelParams, protocol: Protocol, k, tol: float = 1e-10) -> CorrelationState:
    return correlation_trajectory(params, protocol, k, [protocol.t_final], tol)[-1]


# --------------------------------------------------------------------------
# Factorisation through the mode functions
# --------------------------------------------------------------------------

def factorization_residuals(params: ModelParams, protocol: Protocol, k, times, tol: float = 1e-10) -> dict:
    """Largest deviations of ``f12 - conj(f+) g+``, ``f11 - (|f+|^2 - 1)`` and ``f22 - |g+|^2``."""
    modes = mode_trajectory(params, protocol, k, times, tol)
    corr = correlation_trajectory(params, protocol, k, times, tol)
    r12 = max(abs(c.f12 - m.f_plus.conjugate() * m.g_plus) for m, c in zip(modes, corr))
    r11 = max(abs(c.f11 - (abs(m.f_plus) ** 2 - 1.0)) for m, c in zip(modes, corr))
    r22 = max(abs(c.f22 - abs(m.g_plus) ** 2) for m, c in zip(modes, corr))
    return {"f12": r12, "f11": r11, "f22": r22}


def factorization_check(params: ModelParams, protocol: Protocol, grid, tol: float = 1e-10,
                        n_times: int = 16, threads: int | None = 1) -> float:
    """Max factorisation residual over the grid and ``n_times`` sample times."""
    times = np.linspace(0.0, protocol.t_final, n_times + 1)[1:]
    res = ordered_map(lambda k: factorization_residuals(params, protocol, k, times, tol), grid, threads)
    return max(max(r.values()) for r in res)


# --------------------------------------------------------------------------
# Real-space system
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeSpec:
    """Hypercubic block of ``shape`` sites; ``periodic`` gives a ring/torus."""

    shape: tuple
    periodic: bool = True

    def __post_init__(self):
        if len(self.shape) not in MAX_SITES:
            raise ConfigError("real-space correlations support d = 1 and d = 2 only")
        if min(self.shape) < 3:
            raise ConfigError("each lattice direction needs at least 3 sites")
        if self.n_sites > MAX_SITES[self.d]:
            raise SizeExceeded(f"{self.n_sites} sites exceeds the d={self.d} limit {MAX_SITES[self.d]}")

    @classmethod
    def ring(cls, n: int) -> "LatticeSpec":
        return cls((n,), True)

    @classmethod
    def chain(cls, n: int) -> "LatticeSpec":
        return cls((n,), False)

    @classmethod
    def torus(cls, lx: int, ly: int) -> "LatticeSpec":
        return cls((lx, ly), True)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    def coords(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return idx.astype(float)

    def links(self, axis: int):
        """Adjacency along ``axis`` and the signed displacement on each link."""
        n = self.n_sites
        A = np.zeros((n, n))
        D = np.zeros((n, n))
        idx = np.indices(self.shape).reshape(self.d, -1).T
        L = self.shape[axis]
        flat = np.ravel_multi_index(idx.T, self.shape)
        for step in (+1, -1):
            nb = idx.copy()
            nb[:, axis] += step
            inside = (nb[:, axis] >= 0) & (nb[:, axis] < L)
            if self.periodic:
                nb[:, axis] %= L
                inside[:] = True
            j = np.ravel_multi_index(nb[inside].T, self.shape)
            i = flat[inside]
            A[i, j] += 1.0
            D[i, j] = step  # minimal-image displacement r_kappa - r_mu along the axis
        return A, D


@dataclass
class RealCorrelationState:
    lattice: LatticeSpec
    f12: np.ndarray
    f11: np.ndarray
    t: float

    @property
    def f21(self) -> np.ndarray:
        return self.f12.conj().T

    @property
    def f22(self) -> np.ndarray:
        return self.f11

    def fourier(self, k) -> tuple[complex, complex]:
        """Translation-averaged ``(f12_k, f11_k)``; periodic lattices only."""
        r = self.lattice.coords()
        k = np.atleast_1d(np.asarray(k, float))
        ph = np.exp(1j * (r @ k))
        # sum over mu, nu of F_{mu nu} e^{ik(r_nu - r_mu)}, averaged over mu
        n = self.lattice.n_sites
        return complex(ph.conj() @ self.f12 @ ph / n), complex(ph.conj() @ self.f11 @ ph / n)


def evolve_correlations_real(
    params: ModelParams,
    protocol: Protocol,
    lattice: LatticeSpec,
    gauge: str = "peierls",
    tol: float = 1e-10,
    *,
    coincident: bool = True,
    times=None,
    atol: float = 1e-14,
) -> list[RealCorrelationState]:
    """Dense integration of the site-pair system.

    ``gauge`` is ``"peierls"`` (tilt as a time-dependent link phase) or
    ``"scalar"`` (explicit ``V_mu = gradient(t) x_mu``, open lattices only).
    Returns the state at each of ``times`` (default: ``t_final``).
    """
    if lattice.d != params.d:
        raise ConfigError(f"lattice dimension {lattice.d} does not match model d = {params.d}")
    if gauge not in ("peierls", "scalar"):
        raise ConfigError(f"unknown gauge {gauge!r}")
    has_tilt = not protocol.gradient_envelope.is_zero
    if gauge == "scalar" and lattice.periodic and has_tilt:
        raise GaugeMismatch("a uniform gradient cannot be an on-site potential on a periodic lattice; "
                            "use the Peierls gauge or an open chain")
    ax = protocol.gradient_axis
    if ax >= lattice.d:
        raise ConfigError(f"gradient axis {ax} outside a {lattice.d}-d lattice")
    times = np.array([protocol.t_final] if times is None else times, dtype=float)

    n = lattice.n_sites
    Z = params.Z
    U = params.U
    A_ax, D_ax = lattice.links(ax)
    A_perp = sum((lattice.links(a)[0] for a in range(lattice.d) if a != ax), np.zeros((n, n)))
    x = lattice.coords()[:, ax]
    Vdiff = x[:, None] - x[None, :]  # V_mu - V_nu per unit gradient
    offdiag = ~np.eye(n, dtype=bool)

    def hopping(t):
        if gauge == "peierls":
            return A_ax * np.exp(1j * protocol.gauge_integral(t) * D_ax) + A_perp
        return (A_ax + A_perp).astype(complex)

    def rhs(t, y):
        F12 = y[: n * n].reshape(n, n)
        F11 = y[n * n:].reshape(n, n)
        J = protocol.hopping(t)
        T = hopping(t)
        w = U - (protocol.gradient(t) * Vdiff if gauge == "scalar" else 0.0)
        d12 = w * F12 - (J / Z) * (SQRT2 * T + T @ (3.0 * F12 + 2.0 * SQRT2 * F11))
        d11 = (w - U) * F11 - (SQRT2 * J / Z) * (T @ (F12.conj().T - F12))
        if not coincident:
            d12 = d12 * offdiag
            d11 = d11 * offdiag
        return -1j * np.concatenate([d12.ravel(), d11.ravel()])

    # the tilt profile is only piecewise smooth; stop at its breakpoints
    y = np.zeros(2 * n * n, complex)
    t_now = 0.0
    out = []
    for t_out in times:
        for tb in _breakpoints(protocol, t_now, t_out) + [t_out]:
            if tb > t_now:
                sol = solve_ivp(rhs, (t_now, tb), y, method="DOP853", rtol=tol, atol=atol)
                if not sol.success:
                    raise ToleranceNotMet(f"real-space correlations: {sol.message}")
                y = sol.y[:, -1]
                t_now = tb
        out.append(RealCorrelationState(lattice, y[: n * n].reshape(n, n).copy(),
                                        y[n * n:].reshape(n, n).copy(), float(t_out)))
    return out


def _breakpoints(protocol: Protocol, t0: float, t1: float) -> list[float]:
    pts = []
    for env in (protocol.j_envelope, protocol.gradient_envelope):
        if env.kind == "ramped":
            pts += [env.t0, env.t1, env.t2, env.t3]
    return sorted({p for p in pts if t0 < p < t1})


def to_peierls(state: RealCorrelationState, protocol: Protocol) -> RealCorrelationState:
    """Scalar-gauge pair correlations rewritten in the link-phase gauge."""
    x = state.lattice.coords()[:, protocol.gradient_axis]
    G = protocol.gauge_integral(state.t)
    ph = np.exp(-1j * G * (x[:, None] - x[None, :]))
    return RealCorrelationState(state.lattice, state.f12 * ph, state.f11 * ph, state.t)


def ring_momentum_mismatch(params: ModelParams, protocol: Protocol, n: int, tol: float = 1e-12) -> float:
    """Max difference between the Fourier-transformed ring and the k-space results."""
    from .modes import bz_grid

    lattice = LatticeSpec.ring(n) if params.d == 1 else LatticeSpec.torus(n, n)
    st = evolve_correlations_real(params, protocol, lattice, "peierls", tol)[-1]
    worst = 0.0
    for k in bz_grid(n, params.d):
        c = evolve_correlations_k(params, protocol, k, tol)
        f12, f11 = st.fourier(k)
        worst = max(worst, abs(f12 - c.f12), abs(f11 - c.f11))
    return worst


def chain_bulk_mismatch(params: ModelParams, protocol: Protocol, n: int, times, tol: float = 1e-12,
                        margin: int = 2) -> dict:
    """Open scalar-gauge chain against the Peierls ring, on pairs inside the bulk.

    At time ``t`` only sites farther than ``ceil(c_eff t) + margin`` from
    either end count.  Times must stay below ``n / (2 c_eff)``, after which
    the edge disturbance has crossed the whole chain.
    """
    if params.d != 1:
        raise ConfigError("the open-chain comparison is one-dimensional")
    c = params.c_eff
    times = np.asarray(times, dtype=float)
    if np.any(times >= n / (2.0 * c)):
        raise ConfigError(f"times must stay below n/(2 c_eff) = {n / (2.0 * c):.4g}")
    ring = evolve_correlations_real(params, protocol, LatticeSpec.ring(n), "peierls", tol, times=times)
    chain = evolve_correlations_real(params, protocol, LatticeSpec.chain(n), "scalar", tol, times=times)
    worst = 0.0
    bulk_sites = []
    for r, s in zip(ring, chain):
        s = to_peierls(s, protocol)
        edge = int(math.ceil(c * r.t)) + margin
        b = slice(edge, n - edge)
        bulk_sites.append(max(n - 2 * edge, 0))
        if edge >= n - edge:
            continue
        worst = max(worst, float(np.abs(r.f12[b, b] - s.f12[b, b]).max()),
                    float(np.abs(r.f11[b, b] - s.f11[b, b]).max()))
    return {"max_mismatch": worst, "times": times.tolist(), "bulk_sites": bulk_sites}
