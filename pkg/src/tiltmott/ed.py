"""Exact diagonalisation of the full Bose-Hubbard chain at fixed particle number.

``H = -(J/Z) sum_<mu nu> T_{mu nu} a+_mu a_nu + (U/2) sum n(n-1) + sum V_mu n_mu``

on an open chain (tilt as an on-site potential ``V_mu = gradient x_mu``)
or a ring (tilt as the Peierls phase ``e^{i G (x_mu - x_nu)}`` on each
link).  ``Z`` defaults to the bulk coordination 2 of the chain, so boundary
sites of an open chain just have fewer terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import eigsh

from .errors import ConfigError, NonConvergence, SizeExceeded, ToleranceNotMet
from .model import ModelParams, Protocol

MAX_SITES = 10
MAX_DIM = 1_000_000
DENSE_LIMIT = 400


def fock_basis(sites: int, n_max: int, total_n: int | None = None) -> np.ndarray:
    """Occupation tuples, one per row, in lexicographic order.

    With ``total_n=None`` every particle number ``0..sites*n_max`` is
    included (used to test number conservation).
    """
    if total_n is None:
        rows = [fock_basis(sites, n_max, n) for n in range(sites * n_max + 1)]
        return np.concatenate([r for r in rows if len(r)])
    if total_n < 0 or total_n > sites * n_max:
        return np.zeros((0, sites), dtype=np.int64)
    # stars and bars: choose the positions of sites-1 bars among total_n+sites-1 slots
    out = []
    for bars in combinations(range(total_n + sites - 1), sites - 1):
        edges = (-1,) + bars + (total_n + sites - 1,)
        occ = [edges[i + 1] - edges[i] - 1 for i in range(sites)]
        if max(occ) <= n_max:
            out.append(occ)
    return np.array(out[::-1], dtype=np.int64).reshape(-1, sites)


def basis_dimension(sites: int, n_max: int, total_n: int) -> int:
    """Number of compositions of ``total_n`` into ``sites`` parts of size <= n_max."""
    # inclusion-exclusion over sites forced above the cutoff
    tot = 0
    for j in range(sites + 1):
        rest = total_n - j * (n_max + 1)
        if rest < 0:
            break
        tot += (-1) ** j * math.comb(sites, j) * math.comb(rest + sites - 1, sites - 1)
    return tot


@dataclass(frozen=True)
class EDConfig:
    sites: int
    params: ModelParams
    protocol: Protocol | None = None
    geometry: str = "open"
    n_max: int = 4
    total_n: int | None = None  # default: unit filling
    coordination: int | None = None  # default: bulk value 2

    def __post_init__(self):
        if not 2 <= self.sites <= MAX_SITES:
            raise ConfigError(f"ED supports 2..{MAX_SITES} sites, got {self.sites}")
        if self.geometry not in ("open", "ring"):
            raise ConfigError(f"geometry must be 'open' or 'ring', got {self.geometry!r}")
        if self.geometry == "ring" and self.sites < 3:
            raise ConfigError("a ring needs at least 3 sites")
        if self.n_max < 2:
            raise ConfigError("occupancy cutoff must be at least 2")
        if self.params.d != 1:
            raise ConfigError("ED is implemented for chains (d = 1)")
        if self.protocol is not None and self.protocol.gradient_axis != 0:
            raise ConfigError("a chain has only gradient axis 0")
        if self.Z <= 0:
            raise ConfigError("coordination number must be positive")
        dim = basis_dimension(self.sites, self.n_max, self.N)
        if dim > MAX_DIM:
            raise SizeExceeded(f"Fock space dimension {dim} exceeds {MAX_DIM}")

    @property
    def N(self) -> int:
        return self.sites if self.total_n is None else self.total_n

    @property
    def Z(self) -> int:
        return 2 if self.coordination is None else self.coordination

    @cached_property
    def basis(self) -> np.ndarray:
        return fock_basis(self.sites, self.n_max, self.N)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @cached_property
    def operators(self) -> "_Operators":
        return _Operators.build(self.basis, self.n_max, self.geometry)

    def with_protocol(self, protocol: Protocol) -> "EDConfig":
        return EDConfig(self.sites, self.params, protocol, self.geometry, self.n_max,
                        self.total_n, self.coordination)


@dataclass
class _Operators:
    forward: sp.csr_matrix  # sum_mu a+_{mu+1} a_mu (including the wrap link on a ring)
    interaction: sp.csr_matrix  # sum n(n-1)
    position: sp.csr_matrix  # sum x_mu n_mu

    @classmethod
    def build(cls, basis: np.ndarray, n_max: int, geometry: str) -> "_Operators":
        dim, L = basis.shape
        base = (n_max + 1) ** np.arange(L)[::-1]
        keys = basis @ base
        order = np.argsort(keys)
        skeys = keys[order]
        rows, cols, vals = [], [], []
        links = [(m, m + 1) for m in range(L - 1)]
        if geometry == "ring":
            links.append((L - 1, 0))
        for src, dst in links:
            # a+_dst a_src
            ok = (basis[:, src] > 0) & (basis[:, dst] < n_max)
            j = np.nonzero(ok)[0]
            amp = np.sqrt(basis[j, src] * (basis[j, dst] + 1.0))
            new = keys[j] - base[src] + base[dst]
            i = order[np.searchsorted(skeys, new)]
            rows.append(i)
            cols.append(j)
            vals.append(amp)
        fwd = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(dim, dim))
        inter = sp.diags((basis * (basis - 1)).sum(axis=1).astype(float)).tocsr()
        x = np.arange(L) - 0.5 * (L - 1)
        pos = sp.diags((basis * x).sum(axis=1).astype(float)).tocsr()
        return cls(fwd, inter, pos)


def build_hamiltonian(cfg: EDConfig, t: float = 0.0, protocol: Protocol | None = None) -> sp.csr_matrix:
    """Sparse ``H(t)``; without a protocol, static hopping ``params.J`` and no tilt."""
    protocol = protocol or cfg.protocol
    ops = cfg.operators
    if protocol is None:
        J, g, G = cfg.params.J, 0.0, 0.0
    else:
        J, g, G = protocol.hopping(t), protocol.gradient(t), protocol.gauge_integral(t)
    if cfg.geometry == "ring":
        # a+_{mu+1} a_mu picks up e^{iG (x_{mu+1} - x_mu)} = e^{iG}
        hop = ops.forward * np.exp(1j * G)
        H = -(J / cfg.Z) * (hop + hop.getH()) + 0.5 * cfg.params.U * ops.interaction
    else:
        hop = ops.forward
        H = -(J / cfg.Z) * (hop + hop.T) + 0.5 * cfg.params.U * ops.interaction + g * ops.position
    return sp.csr_matrix(H, dtype=complex)


@dataclass
class EDState:
    amplitudes: np.ndarray
    t: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def product_state(cfg: EDConfig, occupations) -> EDState:
    occ = np.asarray(occupations, dtype=np.int64)
    hit = np.nonzero((cfg.basis == occ).all(axis=1))[0]
    if len(hit) != 1:
        raise ConfigError(f"occupation {tuple(occ)} not in the basis")
    psi = np.zeros(cfg.dim, complex)
    psi[hit[0]] = 1.0
    return EDState(psi)


def mott_state(cfg: EDConfig) -> EDState:
    if cfg.N != cfg.sites:
        raise ConfigError("the unit-filling product state needs total_n = sites")
    return product_state(cfg, np.ones(cfg.sites, dtype=np.int64))


def ground_state(cfg: EDConfig, t: float = 0.0, protocol: Protocol | None = None) -> tuple[EDState, float]:
    H = build_hamiltonian(cfg, t, protocol)
    diag = H.diagonal()
    if (H - sp.diags(diag)).count_nonzero() == 0:
        # no hopping: Krylov methods break down on the few distinct levels
        i = int(np.argmin(diag.real))
        e, psi = diag[i], np.zeros(cfg.dim, complex)
        psi[i] = 1.0
    elif cfg.dim <= DENSE_LIMIT:
        w, v = np.linalg.eigh(H.toarray())
        e, psi = w[0], v[:, 0]
    else:
        try:
            w, v = eigsh(H, k=1, which="SA", tol=1e-12, maxiter=100_000)
        except Exception as exc:  # ArpackNoConvergence and friends
            raise NonConvergence(f"ground state did not converge: {exc}") from exc
        e, psi = w[0], v[:, 0]
    # fix the global phase: largest component real positive
    i = int(np.argmax(np.abs(psi)))
    psi = psi * (abs(psi[i]) / psi[i])
    return EDState(np.asarray(psi, complex), t), float(np.real(e))


def site_probabilities(state: EDState, cfg: EDConfig, n: int) -> np.ndarray:
    """``<|n><n|>`` on each site."""
    p = np.abs(state.amplitudes) ** 2
    p = p / p.sum()
    return p @ (cfg.basis == n)


def defect_density(state: EDState, cfg: EDConfig) -> tuple[float, float]:
    """Site-averaged (doublon, holon) probabilities."""
    return (float(site_probabilities(state, cfg, 2).mean()),
            float(site_probabilities(state, cfg, 0).mean()))


@dataclass
class EDRun:
    state: EDState
    times: np.ndarray
    density: np.ndarray  # (times, sites)
    doublon: np.ndarray
    holon: np.ndarray
    norm: np.ndarray
    number: np.ndarray
    energy: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - 1.0)))

    @property
    def number_drift(self) -> float:
        return float(np.max(np.abs(self.number - self.number[0])))

    def series(self) -> dict:
        return {
            "t": self.times.tolist(),
            "doublon": self.doublon.tolist(),
            "holon": self.holon.tolist(),
            "density": self.density.tolist(),
            "norm": self.norm.tolist(),
            "energy": self.energy.tolist(),
        }


def evolve_ed(cfg: EDConfig, state: EDState, protocol: Protocol | None = None, tol: float = 1e-10,
              times=None) -> EDRun:
    """Schroedinger evolution from ``state.t`` to ``protocol.t_final``.

    Observables are recorded at ``times`` (default 101 evenly spaced).  The
    energy column is ``<H(t)>`` with the instantaneous Hamiltonian.
    """
    protocol = protocol or cfg.protocol
    if protocol is None:
        raise ConfigError("evolution needs a protocol")
    if abs(state.norm - 1.0) > 1e-10:
        raise ConfigError(f"initial state norm {state.norm:.12g} is not 1")
    t0 = state.t
    if times is None:
        times = np.linspace(t0, protocol.t_final, 101)
    times = np.asarray(times, float)
    ops = cfg.operators
    U = cfg.params.U
    Z = cfg.Z
    fwd = ops.forward.astype(complex)
    bwd = fwd.getH().tocsr()
    static = (0.5 * U * ops.interaction).astype(complex)

    def rhs(t, y):
        J = protocol.hopping(t)
        if cfg.geometry == "ring":
            ph = np.exp(1j * protocol.gauge_integral(t))
            Hy = static @ y - (J / Z) * (ph * (fwd @ y) + (bwd @ y) / ph)
        else:
            Hy = static @ y - (J / Z) * (fwd @ y + bwd @ y) + protocol.gradient(t) * (ops.position @ y)
        return -1j * Hy

    bps = sorted({b for env in (protocol.j_envelope, protocol.gradient_envelope) if env.kind == "ramped"
                  for b in (env.t0, env.t1, env.t2, env.t3)})
    y = state.amplitudes.astype(complex).copy()
    t_now = t0
    snaps = []
    for t_out in times:
        for tb in [b for b in bps if t_now < b < t_out] + [t_out]:
            if tb > t_now:
                sol = solve_ivp(rhs, (t_now, tb), y, method="DOP853", rtol=tol, atol=tol * 1e-3)
                if not sol.success:
                    raise ToleranceNotMet(f"ED propagation: {sol.message}")
                y = sol.y[:, -1]
                t_now = tb
        snaps.append(y.copy())

    occ = cfg.basis.astype(float)
    P = np.array([np.abs(s) ** 2 for s in snaps])
    norm = np.sqrt(P.sum(axis=1))
    Pn = P / (norm**2)[:, None]
    energy = np.array([np.vdot(s, build_hamiltonian(cfg, t, protocol) @ s).real / np.vdot(s, s).real
                       for s, t in zip(snaps, times)])
    return EDRun(
        state=EDState(snaps[-1], float(times[-1])),
        times=times,
        density=Pn @ occ,
        doublon=(Pn @ (cfg.basis == 2)).mean(axis=1),
        holon=(Pn @ (cfg.basis == 0)).mean(axis=1),
        norm=norm,
        number=Pn @ occ.sum(axis=1),
        energy=energy,
    )


def grand_hamiltonian(sites: int, n_max: int, J: float, U: float, Z: int = 2,
                      geometry: str = "open", gradient: float = 0.0) -> tuple[sp.csr_matrix, np.ndarray]:
    """Hamiltonian on the Fock space of all particle numbers, with the basis."""
    basis = fock_basis(sites, n_max, None)
    ops = _Operators.build(basis, n_max, geometry)
    H = -(J / Z) * (ops.forward + ops.forward.T) + 0.5 * U * ops.interaction + gradient * ops.position
    return sp.csr_matrix(H), basis


def ed_resonance_scan(cfg: EDConfig, delta_v, *, ramp: float, plateau: float, tol: float = 1e-9) -> dict:
    """Final doublon probability after a tilt pulse of each strength, plus the zero-tilt control.

    Hopping ramps on over ``ramp``, the tilt ramps over ``ramp`` to each
    ``delta_v`` and holds for ``plateau``; everything then ramps back
    down and the system starts in the unit-filling product state.
    """
    J = cfg.params.J
    out = []

    def run(g):
        from .model import Envelope

        tilt = Envelope.ramped(g, ramp, ramp, plateau, ramp="smooth")
        hop = Envelope.ramped(J, 0.0, ramp, 2 * ramp + plateau, ramp="smooth")
        pr = Protocol(hop, tilt if g else Envelope.zero(), hop.t3)
        r = evolve_ed(cfg, mott_state(cfg), pr, tol, times=[pr.t_final])
        return r.doublon[-1], r.norm_drift

    control, _ = run(0.0)
    for g in np.asarray(delta_v, float):
        dbl, drift = run(float(g))
        out.append({"delta_v": float(g), "doublon": float(dbl), "norm_drift": drift})
    peak = max(out, key=lambda r: r["doublon"])
    return {
        "scan": out,
        "control_doublon": float(control),
        "peak_delta_v": peak["delta_v"],
        "peak_doublon": peak["doublon"],
        "enhancement": peak["doublon"] / control if control > 0 else math.inf,
    }


def high_occupancy_weight(state: EDState, cfg: EDConfig) -> float:
    """Site-averaged ``sum_{n>=3} (n - 1) P(n)``.

    At unit filling ``holon - doublon`` equals this exactly, so it bounds
    the particle-hole asymmetry that the occupancy cutoff can affect.
    """
    return float(sum((n - 1) * site_probabilities(state, cfg, n).mean() for n in range(3, cfg.n_max + 1)))


def ed_diagnostics(cfg: EDConfig) -> dict:
    """Basis size, Hermiticity and ground-state defects at static hopping ``params.J``.

    Includes the change of the ground-state observables when the occupancy
    cutoff is lowered by one.
    """
    cfg = cfg.with_protocol(None)
    H = build_hamiltonian(cfg)
    gs, e = ground_state(cfg)
    d, h = defect_density(gs, cfg)
    out = {
        "dim": cfg.dim,
        "sites": cfg.sites,
        "n_max": cfg.n_max,
        "total_n": cfg.N,
        "coordination": cfg.Z,
        "hermiticity_residual": float(abs(H - H.getH()).max()) if H.nnz else 0.0,
        "ground_energy": e,
        "ground_doublon": d,
        "ground_holon": h,
        "ground_high_occupancy": high_occupancy_weight(gs, cfg),
    }
    if cfg.n_max > 2:
        lower = EDConfig(cfg.sites, cfg.params, None, cfg.geometry, cfg.n_max - 1,
                         cfg.total_n, cfg.coordination)
        gl, el = ground_state(lower)
        dl, hl = defect_density(gl, lower)
        out["cutoff_change"] = max(abs(e - el), abs(d - dl), abs(h - hl))
    return out
