"""Hessian-approximated SGLD with stochastic-approximation preconditioning.

Set ``HASGLD_DISABLE_NUMBA=1`` before import to run the pure-numpy kernels.
"""
from ._kernels import USING_NUMBA
from .diagnostics import MetricReport, act, cov_error, mse_mae
from .lbfgs import (
    CurvatureError,
    CurvaturePair,
    DensePrecond,
    LbfgsMemory,
    apply_Gg,
    apply_Sz,
    build_pair,
    damp,
    dense_build,
    gamma_init,
    make_curvature_pair,
)
from .sa import OmegaSchedule, SaState, omega, validate_schedule
from .samplers import DivergenceError, PruningMask, SamplerConfig, Trace, magnitude_prune, run_chain, sgld_step

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA", "MetricReport", "act", "cov_error", "mse_mae",
    "CurvatureError", "CurvaturePair", "DensePrecond", "LbfgsMemory", "apply_Gg", "apply_Sz",
    "build_pair", "damp", "dense_build", "gamma_init", "make_curvature_pair",
    "OmegaSchedule", "SaState", "omega", "validate_schedule",
    "DivergenceError", "PruningMask", "SamplerConfig", "Trace", "magnitude_prune", "run_chain", "sgld_step",
]
