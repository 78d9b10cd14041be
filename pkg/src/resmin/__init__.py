"""Minimal-residual interpolation of ODE solution skeletons.

Given the nodes an ODE solver reports, find on every stage the interpolant
whose defect ``x' - f(t, x)`` is smallest in L2 or in the max-norm, and
compare it with the residual of the solver's own continuous extension.
"""

from .closedform import (compare_norms, dahlquist_l2, dahlquist_linf, lambert_w0,
                         lambert_wm1, norm_ratio, sqrt_l2, sqrt_linf)
from .dp45 import DenseSolution, dense_eval, dense_weights, integrate, skeleton_of
from .minres import (StageSolution, TranscriptionConfig, adjoint_check_l2,
                     bangbang_check_linf, evaluate_on_grid, minimize_l2_stage,
                     minimize_linf_stage, minimize_skeleton)
from .problems import OdeSystem, dahlquist, from_spec, sho, sqrt_flow, van_der_pol
from .residual import dense_curve, hermite_curve, report, work_precision
from .skeleton import Skeleton, Stage, load_skeleton, refine_mesh, save_skeleton

__version__ = "0.1.0"
