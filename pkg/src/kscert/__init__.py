"""Certified numerics for equilibrium correlation functions of classical gases:
Mayer activity series with rigorous tails, residual checks of the
Kirkwood-Salsburg and stationary BBGKY equations, the exact hard-rod gas
and the soft-to-hard-core limit on the line."""

__version__ = "0.1.0"

from .integrate import QuadResult, QuadSpec, integrate_cluster, integrate_radial, nested_integral
from .potential import (PairPotential, ThermoState, eval_phi, grad_mayer, grad_f_sup, i_beta, j_beta,
                        mayer_f, w_energy, grad_w_energy)
from .mayer import (ConvergenceError, IdealGasEvaluator, MayerEvaluator, MayerExpansion, SeriesValue,
                    activity_from_state, coeff, coeff_bound, invert_activity, rho_series, xi_admissible)
from .residuals import (ResidualReport, bbgky_residual, bogolyubov_residual, cluster_gap, iteration_tail,
                        ks_residual, ks_symmetric_residual)
from .hardrod import (TonksEvaluator, TonksParams, density_from_activity, extracted_constant_residual,
                      hardrod_hierarchy_residual, hc_activity, hc_ks_residual, tonks_activity, tonks_R,
                      tonks_rho2, tonks_rhon)
from .hclimit import SweepPlan, coeff_limit_check, groeneveld_check, hardcore_coeff, limit_sweep
