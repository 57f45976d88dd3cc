"""Compiled right-hand sides and the DOP853 driver.

The per-mode systems are tiny (at most nine real unknowns) but need many
thousands of steps, so the right-hand sides are numba ``cfunc``s handed to
the compiled DOP853 of ``numbalsoda``.  Every kernel takes its parameters
through one flat float64 ``data`` array whose layout is documented next to
each kernel.

Envelope records are 6 floats: ``[kind, amplitude, t0, t1, t2, t3]`` with
kind 0 = zero, 1 = constant, 2 = cos^2 ramps, 3 = C-infinity ramps.
"""
from __future__ import annotations

import ctypes
import importlib.util
import math
import os

import numpy as np
from numba import carray, cfunc, njit, types

from .errors import ToleranceNotMet

# Load the DOP853 shared library shipped with numbalsoda directly; importing
# the Python package would JIT-compile drivers we do not use.
_pkgdir = importlib.util.find_spec("numbalsoda").submodule_search_locations[0]
_lib = ctypes.CDLL(os.path.join(_pkgdir, "libdop853.so"))
_dop853 = _lib.dop853_wrapper
_dop853.argtypes = [
    ctypes.c_void_p, ctypes.c_int, ctypes.c_void_p, ctypes.c_void_p,
    ctypes.c_int, ctypes.c_void_p, ctypes.c_void_p, ctypes.c_double,
    ctypes.c_double, ctypes.c_int, ctypes.c_void_p,
]
_dop853.restype = None

lsoda_sig = types.void(
    types.double, types.CPointer(types.double), types.CPointer(types.double), types.CPointer(types.double)
)

SQRT2 = math.sqrt(2.0)
MAX_STEPS = 50_000_000


@njit(cache=True)
def _profile(x, kind):
    if kind == 2:
        s = math.sin(0.5 * math.pi * x)
        return s * s
    a = math.exp(-1.0 / x) if x > 0.0 else 0.0
    b = math.exp(-1.0 / (1.0 - x)) if x < 1.0 else 0.0
    return a / (a + b)


@njit(cache=True)
def envelope_value(t, e, o):
    """Envelope stored at ``e[o:o+6]`` evaluated at ``t``."""
    kind = int(e[o])
    if kind == 0:
        return 0.0
    amp = e[o + 1]
    if kind == 1:
        return amp
    t0, t1, t2, t3 = e[o + 2], e[o + 3], e[o + 4], e[o + 5]
    if t1 <= t <= t2:
        return amp
    if t0 < t < t1:
        return amp * _profile((t - t0) / (t1 - t0), kind)
    if t2 < t < t3:
        return amp * _profile((t3 - t) / (t3 - t2), kind)
    return 0.0


@njit(cache=True)
def _structure(q, G):
    # q layout shared by mode and correlation kernels:
    # [U, d, axis, k0, k1, k2, J-envelope(6), gradient-envelope(6)]
    d = int(q[1])
    axis = int(q[2])
    T = 0.0
    for i in range(d):
        arg = q[3 + i]
        if i == axis:
            arg += G
        T += math.cos(arg)
    return T / d


MODE_STATE = 9
MODE_DATA = 18


@cfunc(lsoda_sig, cache=True)
def mode_rhs(t, u, du, p):
    # state: two columns (h, p) as re/im pairs, then the gauge integral G
    y = carray(u, (MODE_STATE,))
    dy = carray(du, (MODE_STATE,))
    q = carray(p, (MODE_DATA,))
    J = envelope_value(t, q, 6)
    g = envelope_value(t, q, 12)
    T = _structure(q, y[8])
    a = 0.5 * (3.0 * J * T - q[0])
    b = SQRT2 * J * T
    for c in range(2):
        o = 4 * c
        hr, hi, pr, pi = y[o], y[o + 1], y[o + 2], y[o + 3]
        # i h' = a h + b p ;  i p' = -a p - b h
        dy[o] = a * hi + b * pi
        dy[o + 1] = -(a * hr + b * pr)
        dy[o + 2] = -(a * pi + b * hi)
        dy[o + 3] = a * pr + b * hr
    dy[8] = g


CORR_STATE = 5


@cfunc(lsoda_sig, cache=True)
def corr_rhs(t, u, du, p):
    # state: [Re f12, Im f12, f11 (= f22), source weight s, G]
    y = carray(u, (CORR_STATE,))
    dy = carray(du, (CORR_STATE,))
    q = carray(p, (MODE_DATA,))
    J = envelope_value(t, q, 6)
    g = envelope_value(t, q, 12)
    T = _structure(q, y[4])
    w = q[0] - 3.0 * J * T
    b = SQRT2 * J * T
    sr = w * y[0] - b * (2.0 * y[2] + y[3])
    si = w * y[1]
    # i f12' = (U - 3 J T) f12 - sqrt2 J T (f11 + f22 + s)
    dy[0] = si
    dy[1] = -sr
    dy[2] = 2.0 * b * y[1]
    dy[3] = 0.0
    dy[4] = g


QED_STATE = 5


@cfunc(lsoda_sig, cache=True)
def qed_rhs(t, u, du, p):
    # data: [m, qE, tau, k_perp^2, k_x, direction]; direction -1 reverses the pulse
    # state: [Re alpha, Im alpha, Re beta, Im beta, theta]
    y = carray(u, (QED_STATE,))
    dy = carray(du, (QED_STATE,))
    q = carray(p, (6,))
    m, qE, tau, kp2, kx, sgn = q[0], q[1], q[2], q[3], q[4], q[5]
    s = sgn * t / tau
    P = kx + qE * tau * (1.0 + math.tanh(s))
    om = math.sqrt(P * P + kp2 + m * m)
    ch = math.cosh(s)
    E = sgn * qE / (ch * ch)
    c = P * E / (2.0 * om * om)
    cr = math.cos(2.0 * y[4])
    ci = math.sin(2.0 * y[4])
    ar, ai, br, bi = y[0], y[1], y[2], y[3]
    # alpha' = c e^{2 i theta} beta ; beta' = c e^{-2 i theta} alpha
    dy[0] = c * (cr * br - ci * bi)
    dy[1] = c * (cr * bi + ci * br)
    dy[2] = c * (cr * ar + ci * ai)
    dy[3] = c * (cr * ai - ci * ar)
    dy[4] = om


def integrate(kernel, y0, t_eval, data, rtol, atol, what="integration"):
    """Run DOP853 on a compiled kernel; returns the solution at ``t_eval``.

    The foreign call releases the GIL, so independent modes can be farmed
    out to threads.
    """
    u0 = np.ascontiguousarray(y0, dtype=np.float64)
    t_eval = np.ascontiguousarray(t_eval, dtype=np.float64)
    data = np.ascontiguousarray(data, dtype=np.float64)
    usol = np.empty((len(t_eval), len(u0)), dtype=np.float64)
    success = np.array(999, dtype=np.int32)
    _dop853(
        kernel.address, len(u0), u0.ctypes.data, data.ctypes.data, len(t_eval),
        t_eval.ctypes.data, usol.ctypes.data, float(rtol), float(atol), MAX_STEPS,
        success.ctypes.data,
    )
    if success != 1 or not np.all(np.isfinite(usol)):
        raise ToleranceNotMet(f"{what}: DOP853 failed to reach rtol={rtol:g}")
    return usol
