"""Stochastic-approximation smoothing of the preconditioner.

``G_k = (1 - w) G_{k-1} + w G_tilde_k`` with a power-law gain
``w_k = c1 * (k + c2) ** -alpha``.  Dense mode keeps the matrices; vector mode
smooths the products ``G g`` and ``S z`` directly and never forms a matrix.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OmegaSchedule",
    "SaState",
    "omega",
    "validate_schedule",
    "sa_matrix_update",
    "sa_product_update",
]


@dataclass(frozen=True)
class OmegaSchedule:
    c1: float = 1.0
    c2: float = 1.0
    alpha: float = 1.0

    def __call__(self, k):
        return omega(k, self)


def omega(k, sched):
    """Gain ``c1 * (k + c2) ** -alpha``."""
    return sched.c1 * (k + sched.c2) ** (-sched.alpha)


def validate_schedule(sched):
    """Return a list of violated gain conditions; empty means the schedule is usable.

    A power-law gain has ``sum w_k = inf`` iff ``alpha <= 1`` and
    ``sum w_k**2 < inf`` iff ``alpha > 1/2``.
    """
    problems = []
    if not sched.c1 > 0:
        problems.append(f"c1={sched.c1} must be positive")
    if sched.c2 < 0:
        problems.append(f"c2={sched.c2} must be nonnegative")
    if sched.alpha > 1:
        problems.append(f"alpha={sched.alpha} > 1: sum of omega converges (must diverge)")
    elif sched.alpha <= 0.5:
        problems.append(f"alpha={sched.alpha} <= 0.5: sum of omega^2 diverges (must converge)")
    return problems


def sa_matrix_update(G_prev, G_tilde, omega):
    G_prev = np.asarray(G_prev, dtype=float)
    G_tilde = np.asarray(G_tilde, dtype=float)
    if G_prev.shape != G_tilde.shape:
        raise ValueError(f"dimension mismatch: {G_prev.shape} vs {G_tilde.shape}")
    return (1.0 - omega) * G_prev + omega * G_tilde


def sa_product_update(prev, fresh, omega):
    """Smooth a product vector; ``prev=None`` (first step) returns ``fresh``."""
    fresh = np.asarray(fresh, dtype=float)
    if prev is None:
        return fresh.copy()
    if prev.shape != fresh.shape:
        raise ValueError(f"dimension mismatch: {prev.shape} vs {fresh.shape}")
    return (1.0 - omega) * prev + omega * fresh


@dataclass
class SaState:
    """Smoothed preconditioner for one chain.

    In ``dense`` mode ``G`` and ``S`` start at the identity.  In ``vector``
    mode ``smoothed_Gg`` / ``smoothed_Sz`` hold the previous step's smoothed
    products and stand in for ``G_{k-1} g_k`` / ``S_{k-1} z_k``.
    """

    mode: str
    dim: int
    k: int = 0
    G: np.ndarray = None
    S: np.ndarray = None
    smoothed_Gg: np.ndarray = None
    smoothed_Sz: np.ndarray = None

    def __post_init__(self):
        if self.mode not in ("dense", "vector"):
            raise ValueError(f"unknown SA mode {self.mode!r}")
        if self.mode == "dense":
            if self.G is None:
                self.G = np.eye(self.dim)
            if self.S is None:
                self.S = np.eye(self.dim)

    def update_dense(self, G_tilde, S_tilde, w):
        self.G = sa_matrix_update(self.G, G_tilde, w)
        self.S = sa_matrix_update(self.S, S_tilde, w)
        self.k += 1

    def update_vector(self, Gg_tilde, Sz_tilde, w):
        self.smoothed_Gg = sa_product_update(self.smoothed_Gg, Gg_tilde, w)
        self.smoothed_Sz = sa_product_update(self.smoothed_Sz, Sz_tilde, w)
        self.k += 1
        return self.smoothed_Gg, self.smoothed_Sz
