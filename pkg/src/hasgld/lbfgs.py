"""Damped online L-BFGS preconditioner.

Curvature pairs are built from consecutive chain states with both gradients
evaluated on the same minibatch.  Pairs are Powell-damped so that
``s @ y_bar >= r * gamma * |s|^2`` always holds, which keeps every BFGS
matrix in the recursion positive definite.

Two routes compute the same quantities:

* dense reference recursions (:func:`dense_B_step`, :func:`dense_G_step`,
  :func:`dense_S_step`, :func:`dense_build`) that materialise ``d x d``
  matrices, and
* matrix-free products (:func:`apply_Gg`, :func:`apply_Sz`) used inside the
  sampler for large ``d``.

The dense route is normative; the matrix-free route must agree with it.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "CurvatureError",
    "CurvaturePair",
    "LbfgsMemory",
    "DensePrecond",
    "make_curvature_pair",
    "gamma_init",
    "damp",
    "build_pair",
    "memory_push",
    "dense_B_step",
    "dense_G_step",
    "dense_S_step",
    "dense_build",
    "apply_Gg",
    "apply_Sz",
]

# pairs with |s| below this (relative to 1 + |beta|) carry no usable curvature
ZERO_STEP_RTOL = 1e-12


class CurvatureError(ValueError):
    """Raised for curvature pairs or matrices that cannot enter the recursion."""


@dataclass(frozen=True)
class CurvaturePair:
    """One (s, y_bar) pair with its damping record.

    ``gamma`` is the B0 scale that was active when the pair was damped.
    """

    s: np.ndarray
    y_raw: np.ndarray
    y_bar: np.ndarray
    theta: float
    gamma: float

    @property
    def curvature(self):
        return float(self.s @ self.y_bar)

    def check(self, r, rtol=1e-12):
        """Raise :class:`CurvatureError` unless the pair invariants hold."""
        sy = self.curvature
        if not sy > 0.0:
            raise CurvatureError(f"s^T y_bar = {sy!r} is not positive")
        if self.theta < 1.0:
            target = r * self.gamma * float(self.s @ self.s)
            if abs(sy - target) > rtol * abs(target):
                raise CurvatureError("damped pair violates s^T y_bar = r gamma |s|^2")
        elif not np.array_equal(self.y_bar, self.y_raw):
            raise CurvatureError("undamped pair must keep y_bar == y_raw")


def make_curvature_pair(beta_prev, beta_next, grad_prev, grad_next):
    """Return the raw pair ``(s, y_raw)`` from two states and their gradients.

    Both gradients must come from the same minibatch.
    """
    vecs = [np.asarray(v, dtype=float) for v in (beta_prev, beta_next, grad_prev, grad_next)]
    shapes = {v.shape for v in vecs}
    if len(shapes) != 1 or vecs[0].ndim != 1:
        raise CurvatureError(f"dimension mismatch: {sorted(shapes)}")
    s = vecs[1] - vecs[0]
    if not np.any(s):
        raise CurvatureError("zero increment: beta_next == beta_prev")
    return s, vecs[3] - vecs[2]


def gamma_init(s, y_bar, delta_floor):
    """Initial Hessian scale ``max(y_bar.y_bar / s.y_bar, delta_floor)``."""
    sy = float(np.dot(s, y_bar))
    if not sy > 0.0:
        raise CurvatureError(f"s^T y_bar = {sy!r} is not positive")
    return max(float(np.dot(y_bar, y_bar)) / sy, float(delta_floor))


def damp(s, y_raw, gamma, r):
    """Powell damping of ``y_raw`` against ``B0 = gamma * I``.

    Returns ``(y_bar, theta)``.  In the damped branch
    ``s @ y_bar == r * gamma * |s|^2`` up to rounding.
    """
    s = np.asarray(s, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float)
    sBs = gamma * float(s @ s)
    sy = float(s @ y_raw)
    if sy >= r * sBs:
        return y_raw.copy(), 1.0
    theta = (1.0 - r) * sBs / (sBs - sy)
    y_bar = theta * y_raw + (1.0 - theta) * gamma * s
    return y_bar, theta


def build_pair(s, y_raw, r, delta_floor):
    """Damp a raw pair and return a :class:`CurvaturePair`.

    The damping scale is provisional: ``max(y.y / s.y, delta_floor)`` when
    ``s.y > 0`` and ``delta_floor`` otherwise.  The recursion's own B0 is
    recomputed from the damped pair by :func:`gamma_init`.
    """
    s = np.asarray(s, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float)
    sy = float(s @ y_raw)
    gamma = max(float(y_raw @ y_raw) / sy, delta_floor) if sy > 0.0 else float(delta_floor)
    y_bar, theta = damp(s, y_raw, gamma, r)
    return CurvaturePair(s=s, y_raw=y_raw, y_bar=y_bar, theta=theta, gamma=gamma)


class LbfgsMemory:
    """Bounded FIFO of curvature pairs.

    Parameters
    ----------
    dim : int
        Parameter dimension ``d``.
    size : int
        Capacity ``M``; the oldest pair is evicted first.
    r : float
        Damping constant in ``(0, 1)``.
    delta_floor : float
        Lower bound ``delta`` on the initial Hessian scale.
    """

    def __init__(self, dim, size, r=0.25, delta_floor=0.1):
        if size < 1:
            raise ValueError("memory size must be >= 1")
        if not 0.0 < r < 1.0:
            raise ValueError("damping r must lie in (0, 1)")
        if not delta_floor > 0.0:
            raise ValueError("delta_floor must be positive")
        self.dim = int(dim)
        self.size = int(size)
        self.r = float(r)
        self.delta_floor = float(delta_floor)
        self.pairs = deque(maxlen=self.size)
        # an empty memory acts as the identity preconditioner
        self.gamma_current = max(1.0, self.delta_floor)
        self._ss = np.zeros((self.size, self.dim))
        self._yy = np.zeros((self.size, self.dim))

    def __len__(self):
        return len(self.pairs)

    @property
    def arrays(self):
        """``(ss, yy, n)`` views in the layout the kernels expect."""
        return self._ss, self._yy, len(self.pairs)

    def push(self, pair):
        pair.check(self.r)
        if pair.s.shape != (self.dim,):
            raise CurvatureError(f"pair dimension {pair.s.shape} != ({self.dim},)")
        n = len(self.pairs)
        if n == self.size:
            self._ss[:-1] = self._ss[1:]
            self._yy[:-1] = self._yy[1:]
            n -= 1
        self._ss[n] = pair.s
        self._yy[n] = pair.y_bar
        self.pairs.append(pair)
        self.gamma_current = gamma_init(pair.s, pair.y_bar, self.delta_floor)
        return self

    def clear(self):
        self.pairs.clear()
        self.gamma_current = max(1.0, self.delta_floor)


def memory_push(mem, pair):
    """Append ``pair`` to ``mem`` (evicting the oldest if full) and return ``mem``."""
    return mem.push(pair)


@dataclass
class DensePrecond:
    B: np.ndarray
    G: np.ndarray
    S: np.ndarray


def dense_B_step(B, s, y_bar):
    """One BFGS update of the Hessian approximation."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if not sBs > 0.0:
        raise CurvatureError("s^T B s <= 0: B is not positive definite")
    return B + np.outer(y_bar, y_bar) / float(y_bar @ s) - np.outer(Bs, Bs) / sBs


def dense_G_step(G, s, y_bar):
    """One BFGS update of the inverse Hessian approximation."""
    rho = float(y_bar @ s)
    V = np.eye(len(s)) - np.outer(s, y_bar) / rho
    return V @ G @ V.T + np.outer(s, s) / rho


def dense_S_step(S, B, s, y_bar):
    """Product-form update of the square root ``S`` with ``S S^T = B^{-1}``."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if not sBs > 0.0:
        raise CurvatureError("s^T B s <= 0: B is not positive definite")
    rho = float(s @ y_bar)
    p = s / rho
    q = y_bar - np.sqrt(rho / sBs) * Bs
    return S - np.outer(p, q @ S)


def dense_build(mem):
    """Run the full recursion over ``mem`` from ``B0 = gamma_current * I``."""
    if len(mem) == 0:
        raise CurvatureError("dense_build needs a non-empty memory")
    ss, yy, n = mem.arrays
    B, G, S = _kernels.dense_recursion(ss, yy, n, mem.gamma_current)
    return DensePrecond(B=B, G=G, S=S)


def _check_vec(mem, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (mem.dim,):
        raise CurvatureError(f"{name} has shape {v.shape}, expected ({mem.dim},)")
    return v


def apply_Gg(mem, g):
    """Two-loop recursion for the inverse-Hessian product ``G g``."""
    g = _check_vec(mem, g, "g")
    ss, yy, n = mem.arrays
    return _kernels.two_loop(ss, yy, n, mem.gamma_current, g)


def apply_Sz(mem, z):
    """Matrix-free square-root product ``S z``, ``O(M^2 d)``."""
    z = _check_vec(mem, z, "z")
    ss, yy, n = mem.arrays
    return _kernels.sqrt_apply(ss, yy, n, mem.gamma_current, z)
