"""Chain quality metrics."""
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["ACT_CUTOFF", "MetricReport", "autocorrelation", "act", "act_per_coord", "cov_error", "mse_mae"]

# the truncation rule is recorded in every MetricReport so runs compare like-for-like
ACT_CUTOFF = 0.05


def autocorrelation(series):
    """Empirical autocorrelation at all lags (FFT, biased normalisation)."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if not acov[0] > 0:
        raise ValueError("constant series has no autocorrelation")
    return acov / acov[0]


def act(series):
    """Integrated autocorrelation time ``1 + 2 * sum_{t=1}^{T*} rho_t``.

    ``T*`` is the first lag with ``rho_t < ACT_CUTOFF``, capped at ``len/4``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ValueError("act needs a 1-D series of length >= 10")
    if np.ptp(x) == 0:
        raise ValueError("constant series (zero variance)")
    rho = autocorrelation(x)
    cap = x.size // 4
    below = np.flatnonzero(rho[1:cap + 1] < ACT_CUTOFF)
    t_star = below[0] + 1 if below.size else cap
    return float(1.0 + 2.0 * rho[1:t_star + 1].sum())


def act_per_coord(samples):
    samples = np.asarray(samples, dtype=float)
    return np.array([act(samples[:, j]) for j in range(samples.shape[1])])


def cov_error(samples, sigma_true):
    """Mean absolute entrywise error of the unbiased sample covariance."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("cov_error needs at least 2 samples")
    C = np.atleast_2d(np.cov(samples, rowvar=False))
    return float(np.mean(np.abs(C - np.asarray(sigma_true, dtype=float))))


def mse_mae(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size != truth.size or pred.size == 0:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    diff = pred - truth
    return float(np.mean(diff**2)), float(np.mean(np.abs(diff)))


@dataclass
class MetricReport:
    act: list = field(default_factory=list)
    act_max: float = None
    cov_error: float = None
    mse: float = None
    mae: float = None
    n_samples: int = 0
    n_test: int = 0
    act_estimator: str = f"truncated initial sequence, cutoff {ACT_CUTOFF}, max lag n/4"

    def to_dict(self):
        return asdict(self)
