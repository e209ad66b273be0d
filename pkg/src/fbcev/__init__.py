"""Numerical laboratory for the American-put free boundary under a square-root CEV diffusion.

Solvers for the boundary integral equation, closed-form small-rho regime
evaluators, a finite-difference obstacle-problem oracle, and transform-based
pricing, with a CLI front end (``fbcev``).
"""

from ._kernels import BACKEND
from .asymptotics import (
    CompositeAlpha,
    Regime,
    alpha_composite,
    alpha_perpetual_asym,
    alpha_regime_i,
    alpha_regime_ii,
    alpha_regime_iii,
    alpha_regime_iv,
    alpha_regime_v,
    f_tail_neg,
    f_tail_pos,
)
from .ie import (
    FLambdaCurve,
    QuadratureError,
    SolveReport,
    ie_residual,
    perpetual_root,
    solve_boundary,
    solve_F,
    tau,
)
from .model import BoundaryCurve, ModelParams, TimePoint, curve_eval, make_params, scale_time
from .pde import PdeGridSpec, PriceSurface, extract_boundary, solve_pde
from .pricing import invert_transform, perpetual_price, price, q_transform
from .specfun import EULER_GAMMA, e1, log_e1

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundaryCurve",
    "CompositeAlpha",
    "EULER_GAMMA",
    "FLambdaCurve",
    "ModelParams",
    "PdeGridSpec",
    "PriceSurface",
    "QuadratureError",
    "Regime",
    "SolveReport",
    "TimePoint",
    "alpha_composite",
    "alpha_perpetual_asym",
    "alpha_regime_i",
    "alpha_regime_ii",
    "alpha_regime_iii",
    "alpha_regime_iv",
    "alpha_regime_v",
    "curve_eval",
    "e1",
    "extract_boundary",
    "f_tail_neg",
    "f_tail_pos",
    "ie_residual",
    "invert_transform",
    "log_e1",
    "make_params",
    "perpetual_price",
    "perpetual_root",
    "price",
    "q_transform",
    "scale_time",
    "solve_F",
    "solve_boundary",
    "solve_pde",
    "tau",
]
