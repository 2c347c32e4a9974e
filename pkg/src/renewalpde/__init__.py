"""Characteristic-based solver and certificates for nonlocal renewal transport."""

from .characteristics import CharRecord, VelocityField, exit_jacobian, growth_factor, trace_back
from .domain import Domain, Grid, GridFn, integrate_kernel, l1_norm, linf_norm
from .kernels import ScalarComponentKernel, WeightedMassKernel
from .models import (
    CellGrowthParams,
    CompetitiveParams,
    SIHRParams,
    build_blowup,
    build_cell_growth,
    build_competitive,
    build_sihr,
)
from .picard import LocalExistenceError, PicardConfig, Trajectory, apply_T, solve, solve_slab
from .problem import HypothesisConstants, SystemDef, check_hypotheses, eval_p, eval_q, eval_ub
from .transport import LinearProblem, evaluate, solve_series

__all__ = [
    "CharRecord", "VelocityField", "exit_jacobian", "growth_factor", "trace_back",
    "Domain", "Grid", "GridFn", "integrate_kernel", "l1_norm", "linf_norm",
    "ScalarComponentKernel", "WeightedMassKernel",
    "CellGrowthParams", "CompetitiveParams", "SIHRParams",
    "build_blowup", "build_cell_growth", "build_competitive", "build_sihr",
    "LocalExistenceError", "PicardConfig", "Trajectory", "apply_T", "solve", "solve_slab",
    "HypothesisConstants", "SystemDef", "check_hypotheses", "eval_p", "eval_q", "eval_ub",
    "LinearProblem", "evaluate", "solve_series",
]

__version__ = "0.1.0"
