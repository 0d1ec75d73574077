"""Target log-posteriors and their stochastic gradients.

A target exposes ``dim``, ``n_data`` (``None`` when there is no dataset to
batch over), ``loggrad(beta, batch)`` returning the gradient of the
log-posterior, and ``initial(rng)``.  Stateful targets also provide
``adapt(beta, batch, k)`` (called once per sampler step) and ``spawn()``
(a fresh per-chain copy).
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

__all__ = [
    "GaussianTarget",
    "correlated_gaussian2d",
    "gaussian2d_loggrad",
    "RegressionDataset",
    "make_regression_data",
    "SpikeSlabHyper",
    "spike_slab_responsibility",
    "regression_loggrad",
    "regression_logpost",
    "hyper_sa_update",
    "RegressionTarget",
    "MlpArch",
    "MlpDataset",
    "make_mlp_data",
    "mlp_forward",
    "mlp_loggrad",
    "mlp_logpost",
    "MlpTarget",
]

DELTA_CLAMP = 1e-6


def _batch_rows(batch, n):
    if batch is None:
        return slice(None), n
    idx = np.asarray(batch)
    if idx.size == 0:
        raise ValueError("empty batch")
    return idx, idx.size


# -- Gaussian -----------------------------------------------------------------


class GaussianTarget:
    """Multivariate normal ``N(mu, cov)``; gradients are exact (no data)."""

    n_data = None

    def __init__(self, mu, cov):
        self.mu = np.asarray(mu, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        if self.cov.shape != (self.mu.size, self.mu.size):
            raise ValueError("cov shape does not match mu")
        try:
            np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is singular or not positive definite") from exc
        self.precision = np.linalg.inv(self.cov)
        self.dim = self.mu.size

    def loggrad(self, beta, batch=None):
        return -self.precision @ (beta - self.mu)

    def logpdf(self, beta):
        diff = np.asarray(beta) - self.mu
        return -0.5 * diff @ self.precision @ diff

    def initial(self, rng):
        return self.mu.copy()


def correlated_gaussian2d(sigma_x=0.12, sigma_y=1.0, corr=-0.95, mu=(0.0, 0.0)):
    """Zero-mean 2-D Gaussian with strongly different scales and correlation ``corr``."""
    off = corr * sigma_x * sigma_y
    return GaussianTarget(mu, [[sigma_x**2, off], [off, sigma_y**2]])


def gaussian2d_loggrad(beta, target):
    return target.loggrad(np.asarray(beta, dtype=float))


# -- Sparse linear regression -------------------------------------------------


@dataclass(frozen=True)
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray
    beta_true: np.ndarray
    noise_var: float
    seed: int
    X_test: np.ndarray = None
    y_test: np.ndarray = None

    @property
    def N(self):
        return self.X.shape[0]


def predictor_cov(p, base=0.8):
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return base ** (lag / 4.0)


def make_regression_data(n=100, p=200, seed=0, noise_var=3.0, n_test=0):
    """Large-p-small-n design: ``beta = (3, 1, 0, ..., 0)``, AR-type correlated rows.

    Rows of ``X`` are ``N_p(0, Sigma)`` with ``Sigma_ij = 0.8 ** (|i-j| / 4)``
    and ``y = X beta + N(0, noise_var)``.  ``n_test`` extra points from the same
    generator form a held-out set.
    """
    if n < 2 or p < 2:
        raise ValueError("need n, p >= 2")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    L = np.linalg.cholesky(predictor_cov(p))
    beta = np.zeros(p)
    beta[:2] = (3.0, 1.0)
    m = n + n_test
    X = rng.standard_normal((m, p)) @ L.T
    y = X @ beta + np.sqrt(noise_var) * rng.standard_normal(m)
    return RegressionDataset(
        X=X[:n], y=y[:n], beta_true=beta, noise_var=float(noise_var), seed=seed,
        X_test=X[n:], y_test=y[n:],
    )


@dataclass(frozen=True)
class SpikeSlabHyper:
    """Hyperparameters of the Gaussian-slab / Laplace-spike prior.

    ``v1`` scales the included (Gaussian, variance ``sigma2 * v1``) component,
    ``v0`` the excluded (Laplace, scale ``sigma * v0``) one.  ``rho`` holds the
    per-coordinate inclusion responsibilities.
    """

    v0: float = 0.1
    v1: float = 100.0
    nu: float = 1.0
    lam: float = 1.0
    a: float = 1.0
    b: float = 1.0
    delta: float = 0.5
    sigma2: float = 1.0
    rho: np.ndarray = None

    @classmethod
    def default(cls, p, **kw):
        kw.setdefault("b", float(p))
        hyper = cls(**kw)
        if hyper.rho is None:
            hyper = replace(hyper, rho=np.full(p, hyper.delta))
        return hyper

    def validate(self):
        for name in ("v0", "v1", "nu", "lam", "a", "b", "sigma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.rho is not None and (np.any(self.rho < 0) or np.any(self.rho > 1)):
            raise ValueError("rho must lie in [0, 1]")


def spike_slab_responsibility(beta_j, hyper):
    """Posterior probability that ``beta_j`` comes from the Gaussian slab."""
    beta_j = np.asarray(beta_j, dtype=float)
    if hyper.delta >= 1.0:
        return np.ones_like(beta_j)[()]
    if hyper.delta <= 0.0:
        return np.zeros_like(beta_j)[()]
    sigma = np.sqrt(hyper.sigma2)
    var1 = hyper.sigma2 * hyper.v1
    log_slab = np.log(hyper.delta) - 0.5 * np.log(2 * np.pi * var1) - beta_j**2 / (2 * var1)
    log_spike = np.log1p(-hyper.delta) - np.log(2 * sigma * hyper.v0) - np.abs(beta_j) / (sigma * hyper.v0)
    return expit(log_slab - log_spike)[()]


def _prior_grad(beta, hyper):
    sigma = np.sqrt(hyper.sigma2)
    rho = hyper.rho
    return -rho * beta / (hyper.sigma2 * hyper.v1) - (1.0 - rho) * np.sign(beta) / (sigma * hyper.v0)


def regression_loggrad(beta, batch, data, hyper):
    """Minibatch-scaled log-posterior gradient under the spike-and-slab prior."""
    rows, m = _batch_rows(batch, data.N)
    Xb = data.X[rows]
    resid = data.y[rows] - Xb @ beta
    return (data.N / m) * (Xb.T @ resid) / hyper.sigma2 + _prior_grad(beta, hyper)


def regression_logpost(beta, batch, data, hyper):
    """Log-posterior (up to a constant) whose gradient is :func:`regression_loggrad`.

    The prior is the responsibility-weighted mixture of the two component log
    densities, with ``rho`` held fixed.
    """
    rows, m = _batch_rows(batch, data.N)
    resid = data.y[rows] - data.X[rows] @ beta
    sigma = np.sqrt(hyper.sigma2)
    loglik = -(data.N / m) * (resid @ resid) / (2 * hyper.sigma2)
    logprior = np.sum(
        -hyper.rho * beta**2 / (2 * hyper.sigma2 * hyper.v1)
        - (1.0 - hyper.rho) * np.abs(beta) / (sigma * hyper.v0)
    )
    return loglik + logprior


def hyper_sa_update(hyper, beta, batch, data, omega):
    """One stochastic-approximation step of the empirical-Bayes hyperparameters.

    Targets are the posterior-odds responsibilities, the beta-posterior mode
    for ``delta`` and the inverse-gamma posterior mode for ``sigma2`` (with
    minibatch-scaled residuals); each is blended in with gain ``omega``.
    """
    p = beta.size
    rho_star = np.asarray(spike_slab_responsibility(beta, hyper), dtype=float)
    delta_star = (hyper.a - 1.0 + rho_star.sum()) / (hyper.a + hyper.b - 2.0 + p)
    if not DELTA_CLAMP <= delta_star <= 1.0 - DELTA_CLAMP:
        logger.debug("delta target %.3g clamped into (0, 1)", delta_star)
        delta_star = min(max(delta_star, DELTA_CLAMP), 1.0 - DELTA_CLAMP)
    rows, m = _batch_rows(batch, data.N)
    resid = data.y[rows] - data.X[rows] @ beta
    sigma2_star = (hyper.nu * hyper.lam + (data.N / m) * (resid @ resid)) / (hyper.nu + data.N + 2.0)
    rho = hyper.rho if hyper.rho is not None else np.full(p, hyper.delta)
    return replace(
        hyper,
        rho=(1.0 - omega) * rho + omega * rho_star,
        delta=(1.0 - omega) * hyper.delta + omega * delta_star,
        sigma2=(1.0 - omega) * hyper.sigma2 + omega * sigma2_star,
    )


class RegressionTarget:
    """Spike-and-slab linear regression whose hyperparameters adapt along the chain."""

    def __init__(self, data, hyper=None, hyper_schedule=None):
        self.data = data
        self.dim = data.X.shape[1]
        self.n_data = data.N
        self.initial_hyper = hyper if hyper is not None else SpikeSlabHyper.default(self.dim)
        self.initial_hyper.validate()
        self.hyper = self.initial_hyper
        self.hyper_schedule = hyper_schedule

    def spawn(self):
        return RegressionTarget(self.data, self.initial_hyper, self.hyper_schedule)

    def loggrad(self, beta, batch=None):
        return regression_loggrad(beta, batch, self.data, self.hyper)

    def adapt(self, beta, batch, k):
        if self.hyper_schedule is None:
            return
        w = min(1.0, self.hyper_schedule(k))
        self.hyper = hyper_sa_update(self.hyper, beta, batch, self.data, w)

    def initial(self, rng):
        return np.zeros(self.dim)

    def predict(self, beta, X=None):
        return (self.data.X_test if X is None else X) @ beta


# -- Small MLP ----------------------------------------------------------------


@dataclass(frozen=True)
class MlpArch:
    widths: tuple
    activation: str = "tanh"

    @property
    def shapes(self):
        return [(a, b) for a, b in zip(self.widths[:-1], self.widths[1:])]

    @property
    def n_params(self):
        return sum(a * b + b for a, b in self.shapes)

    def unpack(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        layers, at = [], 0
        for a, b in self.shapes:
            W = params[at:at + a * b].reshape(a, b)
            at += a * b
            layers.append((W, params[at:at + b]))
            at += b
        return layers


def _act(h, name):
    if name == "tanh":
        return np.tanh(h)
    if name == "identity":
        return h
    raise ValueError(f"unknown activation {name!r}")


def _act_deriv(out, name):
    if name == "tanh":
        return 1.0 - out**2
    return np.ones_like(out)


def mlp_forward(params, x, arch):
    """Dense layers with ``arch.activation`` on hidden layers and a linear output."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    layers = arch.unpack(params)
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = _act(h, arch.activation)
    return h if np.ndim(x) > 1 else h[0]


def mlp_loggrad(params, batch, data, prior_precision, arch, noise_var=1.0):
    """Backprop gradient of Gaussian log-likelihood plus isotropic Gaussian log-prior."""
    rows, m = _batch_rows(batch, data.N)
    X, Y = data.X[rows], data.Y[rows]
    layers = arch.unpack(params)
    acts = [X]
    h = X
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = _act(h, arch.activation)
        acts.append(h)
    delta = (Y - acts[-1]) * ((data.N / m) / noise_var)
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ W.T) * _act_deriv(acts[i], arch.activation)
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
    return flat - prior_precision * params


def mlp_logpost(params, batch, data, prior_precision, arch, noise_var=1.0):
    rows, m = _batch_rows(batch, data.N)
    resid = data.Y[rows] - mlp_forward(params, data.X[rows], arch)
    return -(data.N / m) * np.sum(resid**2) / (2 * noise_var) - 0.5 * prior_precision * params @ params


@dataclass(frozen=True)
class MlpDataset:
    X: np.ndarray
    Y: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    seed: int

    @property
    def N(self):
        return self.X.shape[0]


def make_mlp_data(n=200, n_test=200, seed=0, noise_sd=0.1):
    """Smooth 2-D regression surface ``sin(2 x1) + 0.5 x2^2 - 0.5`` plus Gaussian noise."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    X = rng.uniform(-1.5, 1.5, size=(n + n_test, 2))
    f = np.sin(2 * X[:, 0]) + 0.5 * X[:, 1] ** 2 - 0.5
    Y = (f + noise_sd * rng.standard_normal(n + n_test))[:, None]
    return MlpDataset(X=X[:n], Y=Y[:n], X_test=X[n:], Y_test=Y[n:], seed=seed)


class MlpTarget:
    """Bayesian MLP regression with a fixed noise variance."""

    def __init__(self, data, widths=(2, 32, 1), prior_precision=1.0, noise_var=0.01, activation="tanh"):
        self.data = data
        self.arch = MlpArch(tuple(widths), activation)
        self.prior_precision = float(prior_precision)
        self.noise_var = float(noise_var)
        self.dim = self.arch.n_params
        self.n_data = data.N

    def loggrad(self, beta, batch=None):
        return mlp_loggrad(beta, batch, self.data, self.prior_precision, self.arch, self.noise_var)

    def initial(self, rng):
        parts = []
        for a, b in self.arch.shapes:
            parts.append(rng.standard_normal(a * b) / np.sqrt(a))
            parts.append(np.zeros(b))
        return np.concatenate(parts)

    def predict(self, params, X=None):
        return mlp_forward(params, self.data.X_test if X is None else X, self.arch)
