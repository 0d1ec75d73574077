"""Hot L-BFGS kernels.

Every kernel is written once in numba-compatible numpy.  When numba is
importable and ``HASGLD_DISABLE_NUMBA`` is unset (or ``0``), the module-level
names are bound to ``@njit`` compiled versions; otherwise the plain Python
functions run as-is.  Both variants stay reachable through :data:`PY` and
:data:`JIT` so benchmarks and tests can compare them.

Memory layout shared by all kernels: ``ss`` and ``yy`` are ``(M, d)`` arrays
holding curvature pairs oldest-first, and only the first ``n`` rows are live.
``yy`` holds the damped gradient differences.
"""
import os
from types import SimpleNamespace

import numpy as np

__all__ = ["two_loop", "sqrt_apply", "dense_recursion", "USING_NUMBA", "PY", "JIT"]


def _flag_disabled():
    return os.environ.get("HASGLD_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


def _two_loop(ss, yy, n, gamma, g):
    q = g.copy()
    alpha = np.empty(n)
    rho = np.empty(n)
    for i in range(n - 1, -1, -1):
        rho[i] = np.dot(yy[i], ss[i])
        alpha[i] = np.dot(ss[i], q) / rho[i]
        q -= alpha[i] * yy[i]
    xi = q / gamma
    for i in range(n):
        b = np.dot(yy[i], xi) / rho[i]
        xi += (alpha[i] - b) * ss[i]
    return xi


def _sqrt_apply(ss, yy, n, gamma, z):
    d = z.shape[0]
    # rows of t hold B_{i} s_j for the current recursion level i
    t = np.empty((n, d))
    for j in range(n):
        t[j] = gamma * ss[j]
    a = np.empty((n, d))
    rho = np.empty(n)
    for i in range(n):
        a[i] = t[i]
        rho[i] = np.dot(ss[i], yy[i])
        sa = np.dot(ss[i], a[i])
        if not sa > 0.0:
            raise ValueError("s^T B s must be positive")
        for j in range(i + 1, n):
            t[j] += (np.dot(yy[i], ss[j]) / rho[i]) * yy[i] - (np.dot(a[i], ss[j]) / sa) * a[i]
    eta = z / np.sqrt(gamma)
    for i in range(n):
        sa = np.dot(ss[i], a[i])
        c = np.sqrt(rho[i] / sa)
        qv = yy[i] - c * a[i]
        eta -= (np.dot(qv, eta) / rho[i]) * ss[i]
    return eta


def _dense_recursion(ss, yy, n, gamma):
    d = ss.shape[1]
    B = gamma * np.eye(d)
    G = np.eye(d) / gamma
    S = np.eye(d) / np.sqrt(gamma)
    for i in range(n):
        s = ss[i]
        yb = yy[i]
        rho = np.dot(yb, s)
        Bs = B @ s
        sBs = np.dot(s, Bs)
        if not sBs > 0.0:
            raise ValueError("s^T B s must be positive")
        # square root first: it needs B_{k,i}, not B_{k,i+1}
        qv = yb - np.sqrt(rho / sBs) * Bs
        S = S - np.outer(s / rho, qv @ S)
        Gy = G @ yb
        sGy = np.outer(s, Gy)
        G = G - (sGy + sGy.T) / rho + (np.dot(yb, Gy) / rho**2 + 1.0 / rho) * np.outer(s, s)
        B = B + np.outer(yb, yb) / rho - np.outer(Bs, Bs) / sBs
    return B, G, S


PY = SimpleNamespace(two_loop=_two_loop, sqrt_apply=_sqrt_apply, dense_recursion=_dense_recursion)

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

if numba is not None:
    JIT = SimpleNamespace(
        two_loop=numba.njit(cache=True)(_two_loop),
        sqrt_apply=numba.njit(cache=True)(_sqrt_apply),
        dense_recursion=numba.njit(cache=True)(_dense_recursion),
    )
else:  # pragma: no cover
    JIT = None

USING_NUMBA = JIT is not None and not _flag_disabled()
_impl = JIT if USING_NUMBA else PY

two_loop = _impl.two_loop
sqrt_apply = _impl.sqrt_apply
dense_recursion = _impl.dense_recursion
