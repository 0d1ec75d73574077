"""Chain drivers: plain SGLD and the adaptive Hessian-approximated SGLD with SA.

All randomness for a chain comes from one integer seed, split with
:class:`numpy.random.SeedSequence` into independent Philox streams for the
initial point, the injected noise and the minibatch draws.  Both samplers
consume the noise stream identically (one ``N(0, I)`` draw per step), so with
the preconditioner pinned to the identity they produce the same chain.
"""
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .lbfgs import ZERO_STEP_RTOL, CurvatureError, LbfgsMemory, apply_Gg, apply_Sz, build_pair, dense_build, make_curvature_pair
from .sa import OmegaSchedule, SaState, validate_schedule

__all__ = [
    "DivergenceError",
    "SamplerConfig",
    "PruningMask",
    "ChainState",
    "Trace",
    "sgld_step",
    "normalize_direction",
    "magnitude_prune",
    "hasgld_sa_step",
    "init_state",
    "run_chain",
    "DENSE_MAX_DIM",
]

DENSE_MAX_DIM = 2000
METHODS = ("sgld", "hasgld_sa")


class DivergenceError(RuntimeError):
    """A chain produced a nonfinite state.  ``trace`` holds what was recorded so far."""

    def __init__(self, message, step=None, trace=None):
        super().__init__(message)
        self.step = step
        self.trace = trace


@dataclass
class SamplerConfig:
    method: str = "hasgld_sa"
    step_size: float = 0.01
    # eps_k = step_size * k ** -step_decay (k counts from 1); 0 means constant
    step_decay: float = 0.0
    temperature: float = 1.0
    memory: int = 5
    damping_r: float = 0.25
    delta_floor: float = 0.1
    omega: OmegaSchedule = field(default_factory=OmegaSchedule)
    mode: str = "auto"
    normalize_directions: bool = True
    adapt_preconditioner: bool = True
    # "smoothed": noise factor S_k smoothed on its own; "cholesky": chol(G_k),
    # so the noise metric matches the drift metric (dense mode only)
    noise_factor: str = "smoothed"
    burn_in: int = 0
    iterations: int = 1000
    thin: int = 1
    seed: int = 0
    batch_size: int = None
    pruning: tuple = ()

    def step(self, k):
        return self.step_size * k ** (-self.step_decay) if self.step_decay else self.step_size

    def validate(self):
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.step_size > 0 or self.step_decay < 0:
            problems.append("step size must be positive and non-increasing")
        if not self.temperature > 0:
            problems.append("temperature must be positive")
        if self.memory < 1:
            problems.append("memory must be >= 1")
        if not 0 < self.damping_r < 1:
            problems.append("damping_r must lie in (0, 1)")
        if not self.delta_floor > 0:
            problems.append("delta_floor must be positive")
        if self.mode not in ("auto", "dense", "vector"):
            problems.append(f"mode must be auto, dense or vector, got {self.mode!r}")
        if self.noise_factor not in ("smoothed", "cholesky"):
            problems.append(f"noise_factor must be smoothed or cholesky, got {self.noise_factor!r}")
        elif self.noise_factor == "cholesky" and self.mode == "vector":
            problems.append("noise_factor 'cholesky' needs dense mode")
        if not 0 <= self.burn_in < self.iterations:
            problems.append(f"need 0 <= burn_in < iterations, got {self.burn_in}, {self.iterations}")
        if self.thin < 1:
            problems.append("thin must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            problems.append("batch_size must be positive")
        last = 0.0
        for it, rate in self.pruning:
            if not 0 <= rate < 1:
                problems.append(f"pruning rate {rate} outside [0, 1)")
            if rate < last:
                problems.append("pruning rates must be nondecreasing")
            last = rate
        problems += [f"omega: {p}" for p in validate_schedule(self.omega)]
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_dict(self):
        out = asdict(self)
        out["pruning"] = [list(p) for p in self.pruning]
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "omega" in d and not isinstance(d["omega"], OmegaSchedule):
            d["omega"] = OmegaSchedule(**d["omega"])
        if "pruning" in d:
            d["pruning"] = tuple((int(it), float(rate)) for it, rate in d["pruning"])
        return cls(**d)


@dataclass
class PruningMask:
    active: np.ndarray

    @classmethod
    def full(cls, d):
        return cls(np.ones(d, dtype=bool))

    @property
    def sparsity(self):
        return 1.0 - np.count_nonzero(self.active) / self.active.size

    @property
    def inactive(self):
        return ~self.active


def sgld_step(beta, stoch_grad, eps, tau, noise):
    """``beta + eps * grad + sqrt(2 eps / tau) * noise``; ``grad`` is of the log-posterior."""
    out = beta + eps * stoch_grad + math.sqrt(2.0 * eps / tau) * noise
    if not np.all(np.isfinite(out)):
        raise DivergenceError("nonfinite SGLD update")
    return out


def normalize_direction(v):
    norm = np.linalg.norm(v)
    if norm > 1e-300:
        return v / norm
    return np.zeros_like(v)


def magnitude_prune(beta, mask, target_rate):
    """Deactivate the smallest-magnitude active coordinates until ``target_rate`` is reached.

    Ties are broken by lowest index.  Already inactive coordinates stay inactive.
    """
    d = mask.active.size
    current = d - np.count_nonzero(mask.active)
    if target_rate * d < current - 1e-9:
        raise ValueError(f"target rate {target_rate} below current sparsity {current / d}")
    n_target = math.ceil(target_rate * d - 1e-9)
    active = mask.active.copy()
    if n_target > current:
        idx = np.flatnonzero(active)
        order = np.lexsort((idx, np.abs(np.asarray(beta)[idx])))
        active[idx[order[: n_target - current]]] = False
    return PruningMask(active)


@dataclass
class ChainState:
    beta: np.ndarray
    memory: LbfgsMemory
    sa: SaState
    mask: PruningMask
    k: int = 0
    last_eps: float = float("nan")
    last_omega: float = float("nan")
    last_grad_norm: float = float("nan")
    last_pair_ok: bool = False


def init_state(config, beta0):
    d = beta0.size
    mode = config.mode
    if mode == "auto":
        mode = "dense" if d <= DENSE_MAX_DIM else "vector"
    if mode == "vector" and config.noise_factor == "cholesky":
        raise ValueError(f"noise_factor 'cholesky' needs dense mode; d={d} resolves to vector mode")
    return ChainState(
        beta=np.array(beta0, dtype=float),
        memory=LbfgsMemory(d, config.memory, config.damping_r, config.delta_floor),
        sa=SaState(mode, d),
        mask=PruningMask.full(d),
    )


def _fresh_preconditioned(state, g, z):
    mem = state.memory
    if state.sa.mode == "dense":
        if len(mem):
            P = dense_build(mem)
            return P.G, P.S
        d = g.size
        return np.eye(d) / mem.gamma_current, np.eye(d) / math.sqrt(mem.gamma_current)
    return apply_Gg(mem, g), apply_Sz(mem, z)


def hasgld_sa_step(state, target, batch, rng, config):
    """Advance ``state`` by one preconditioned step and return it.

    Curvature pairs use the gradient of the negative log-posterior so that
    ``s^T y > 0`` on log-concave regions; both endpoints share ``batch``.
    """
    k = state.k + 1
    beta = state.beta
    g = target.loggrad(beta, batch)
    z = rng.standard_normal(beta.size)
    w = min(1.0, config.omega(k + 1))

    if not config.adapt_preconditioner:
        xi, eta = g, z
    elif state.sa.mode == "dense":
        G_t, S_t = _fresh_preconditioned(state, g, z)
        state.sa.update_dense(G_t, S_t, w)
        xi = state.sa.G @ g
        if config.noise_factor == "cholesky":
            eta = np.linalg.cholesky(state.sa.G) @ z
        else:
            eta = state.sa.S @ z
    else:
        Gg_t, Sz_t = _fresh_preconditioned(state, g, z)
        xi, eta = state.sa.update_vector(Gg_t, Sz_t, w)
        xi, eta = xi.copy(), eta.copy()

    inactive = state.mask.inactive
    if inactive.any():
        xi[inactive] = 0.0
        eta[inactive] = 0.0
    if config.normalize_directions:
        xi, eta = normalize_direction(xi), normalize_direction(eta)

    eps = config.step(k)
    beta_new = beta + eps * xi + math.sqrt(2.0 * eps / config.temperature) * eta
    if not np.all(np.isfinite(beta_new)):
        raise DivergenceError(f"nonfinite parameters at step {k}", step=k)
    if inactive.any():
        beta_new[inactive] = 0.0

    pair_ok = False
    if config.adapt_preconditioner:
        g_next = target.loggrad(beta_new, batch)
        if not np.all(np.isfinite(g_next)):
            raise DivergenceError(f"nonfinite gradient at step {k}", step=k)
        if np.linalg.norm(beta_new - beta) > ZERO_STEP_RTOL * (1.0 + np.linalg.norm(beta)):
            s, y_raw = make_curvature_pair(beta, beta_new, -g, -g_next)
            if inactive.any():
                y_raw[inactive] = 0.0
            # a pair failing its invariants (rounding on ill-conditioned
            # increments) is dropped and flagged in the trace
            try:
                state.memory.push(build_pair(s, y_raw, config.damping_r, config.delta_floor))
                pair_ok = True
            except CurvatureError:
                pass

    state.beta = beta_new
    state.k = k
    state.last_eps, state.last_omega = eps, w
    state.last_grad_norm = float(np.linalg.norm(g))
    state.last_pair_ok = pair_ok
    return state


def _sgld_chain_step(state, target, batch, rng, config):
    k = state.k + 1
    g = target.loggrad(state.beta, batch)
    z = rng.standard_normal(state.beta.size)
    eps = config.step(k)
    try:
        beta_new = sgld_step(state.beta, g, eps, config.temperature, z)
    except DivergenceError as exc:
        raise DivergenceError(f"nonfinite parameters at step {k}", step=k) from exc
    inactive = state.mask.inactive
    if inactive.any():
        beta_new[inactive] = 0.0
    state.beta = beta_new
    state.k = k
    state.last_eps, state.last_omega = eps, float("nan")
    state.last_grad_norm = float(np.linalg.norm(g))
    state.last_pair_ok = False
    return state


@dataclass
class Trace:
    samples: np.ndarray
    steps: np.ndarray
    posterior_mean: np.ndarray
    eps: np.ndarray
    omega: np.ndarray
    grad_norm: np.ndarray
    pair_ok: np.ndarray
    sparsity: float
    config: dict
    seed: int
    wall_time: float = 0.0
    diverged: bool = False
    message: str = ""

    def diagnostics_summary(self):
        done = np.isfinite(self.grad_norm)
        return {
            "steps_run": int(done.sum()),
            "pairs_accepted": int(self.pair_ok.sum()),
            "grad_norm_mean": float(np.mean(self.grad_norm[done])) if done.any() else None,
            "grad_norm_max": float(np.max(self.grad_norm[done])) if done.any() else None,
            "final_sparsity": float(self.sparsity),
            "diverged": self.diverged,
            "message": self.message,
        }


def _chain_streams(seed):
    init_ss, noise_ss, batch_ss = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(ss)) for ss in (init_ss, noise_ss, batch_ss))


def run_chain(config, target, callback=None):
    """Run one chain and return its :class:`Trace`.

    Samples from step ``burn_in + 1`` onwards are kept (every ``thin``-th one in
    ``samples``; all of them in ``posterior_mean``).  ``callback(state, target)``
    runs after every step.  Raises :class:`DivergenceError` with the partial
    trace attached when the chain blows up.
    """
    config.validate()
    if hasattr(target, "spawn"):
        target = target.spawn()
    init_rng, noise_rng, batch_rng = _chain_streams(config.seed)
    state = init_state(config, np.asarray(target.initial(init_rng), dtype=float))
    step_fn = hasgld_sa_step if config.method == "hasgld_sa" else _sgld_chain_step
    adapt = getattr(target, "adapt", None)
    n = target.n_data
    use_batches = n is not None and config.batch_size is not None and config.batch_size < n
    prune_at = {}
    for it, rate in config.pruning:
        prune_at[int(it)] = max(rate, prune_at.get(int(it), 0.0))

    iters, d = config.iterations, state.beta.size
    n_keep = len(range(config.burn_in, iters, config.thin))
    samples = np.empty((n_keep, d))
    steps = np.empty(n_keep, dtype=np.int64)
    eps_rec = np.full(iters, np.nan)
    omega_rec = np.full(iters, np.nan)
    gnorm_rec = np.full(iters, np.nan)
    pair_rec = np.zeros(iters, dtype=bool)
    mean = np.zeros(d)
    n_mean = 0
    kept = 0
    t0 = time.perf_counter()

    def build(diverged=False, message=""):
        return Trace(
            samples=samples[:kept], steps=steps[:kept],
            posterior_mean=mean.copy() if n_mean else np.full(d, np.nan),
            eps=eps_rec, omega=omega_rec, grad_norm=gnorm_rec, pair_ok=pair_rec,
            sparsity=state.mask.sparsity, config=config.to_dict(), seed=config.seed,
            wall_time=time.perf_counter() - t0, diverged=diverged, message=message,
        )

    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(iters):
            batch = batch_rng.choice(n, config.batch_size, replace=False) if use_batches else None
            try:
                step_fn(state, target, batch, noise_rng, config)
            except DivergenceError as exc:
                exc.trace = build(True, str(exc))
                raise
            if adapt is not None:
                adapt(state.beta, batch, state.k)
            rate = prune_at.get(state.k)
            if rate is not None:
                state.mask = magnitude_prune(state.beta, state.mask, rate)
                state.beta[state.mask.inactive] = 0.0
                # stored pairs still carry the pruned coordinates
                state.memory.clear()
                if state.sa.mode == "vector" and state.sa.smoothed_Gg is not None:
                    state.sa.smoothed_Gg[state.mask.inactive] = 0.0
                    state.sa.smoothed_Sz[state.mask.inactive] = 0.0
            eps_rec[it], omega_rec[it] = state.last_eps, state.last_omega
            gnorm_rec[it], pair_rec[it] = state.last_grad_norm, state.last_pair_ok
            if it >= config.burn_in:
                n_mean += 1
                mean += (state.beta - mean) / n_mean
                if (it - config.burn_in) % config.thin == 0:
                    samples[kept] = state.beta
                    steps[kept] = state.k
                    kept += 1
            if callback is not None:
                callback(state, target)
    return build()
