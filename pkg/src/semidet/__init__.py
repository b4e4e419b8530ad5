"""Semi-deterministic limits of small-noise diffusions leaving a repulsive boundary.

Submodules: ``models`` (diffusion catalog), ``flow`` (deterministic and
rescaled flows), ``sde`` (Euler simulation), ``limit_law`` (exact law of the
martingale limit), ``branching`` (transform equations), ``scale`` (scale and
speed functions), ``stats`` and ``experiments``; ``cli`` is the command line.
"""
from .branching import (BranchingMechanism, geometric_theta_residual, mechanism, solve_csb_kappa, solve_ct_phi,
                        solve_gw_phi, theta_inverse_csb, theta_inverse_ct)
from .errors import SemidetError
from .flow import RescaledFlow, compute_rescaled_flow, flow, flow_solution, invert_w, poincare_residual
from .limit_law import WLaw, laplace_W, laplace_Yt, sample_limit_position, sample_W
from .models import DiffusionModel, ModelParams, builtin_model, make_model, validate_assumptions
from .scale import (ScaleProfile, classify_boundaries, hitting_probability, max_exceedance_probability,
                    scale_density, scale_profile, speed_density)
from .sde import (PathEnsemble, StagePartition, critical_time, simulate_coupled_blowup, simulate_feller,
                  simulate_paths)
from .stats import EmpiricalLaw, ks_distance, wasserstein1

__all__ = [
    "BranchingMechanism", "DiffusionModel", "EmpiricalLaw", "ModelParams", "PathEnsemble", "RescaledFlow",
    "ScaleProfile", "SemidetError", "StagePartition", "WLaw", "builtin_model", "classify_boundaries",
    "compute_rescaled_flow", "critical_time", "flow", "flow_solution", "geometric_theta_residual",
    "hitting_probability", "invert_w", "ks_distance", "laplace_W", "laplace_Yt", "make_model",
    "max_exceedance_probability", "mechanism", "poincare_residual", "sample_W", "sample_limit_position",
    "scale_density", "scale_profile", "simulate_coupled_blowup", "simulate_feller", "simulate_paths",
    "solve_csb_kappa", "solve_ct_phi", "solve_gw_phi", "speed_density", "theta_inverse_csb", "theta_inverse_ct",
    "validate_assumptions", "wasserstein1",
]

__version__ = "0.1.0"
