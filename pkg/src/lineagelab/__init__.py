"""Numerical laboratory for trait-structured growth, lineages, and their
small-mutation limits.

The package follows one moving-frame model family end to end: the
equilibrium profile of a population tracking a moving optimum, the dual
weight that prices ancestries, labelled neutral fractions, the ancestral
trait process backward in time, the small-mutation limit flow, and a
stochastic individual-based counterpart with full genealogy tracking.
Everything is reachable from the ``lineagelab`` executable.
"""

from .params import (ConfigError, Grid, KernelSpec, ModelParams,
                     SelectionSpec, ValidationReport, eval_mu,
                     grid_from_config, params_from_config, validate)
from .discretization import (Field, OperatorContext, apply_A,
                             apply_A_diffusive, apply_A_jump_form, apply_L,
                             apply_L_diffusive, apply_L_star,
                             apply_L_star_diffusive, build_stencil,
                             integrate, make_context, positivity_window,
                             upwind_dz)
from .equilibrium import (EquilibriumSolution, critical_speed_quadratic,
                          gaussian_quadratic_oracle, solve_equilibrium,
                          solve_equilibrium_diffusive)
from .fractions import (DualSolution, FractionState, HorizonResult,
                        adaptive_horizon, asymptotic_proportion,
                        evolve_dirac_fraction, evolve_fraction,
                        indicator_fraction, solve_dual_phi)
from .ancestral import (AncestralSeries, MonteCarloResult, ancestral_stats,
                        monte_carlo_Y, monte_carlo_Y_diffusive, ou_moments,
                        semigroup_apply, y_infinity_density)
from .hj import (CoalescenceScales, HJProfile, HamiltonianModel,
                 coalescence_scales, convexity_defect, d_hamiltonian,
                 dominant_trait_zstar, epsilon_scale, gamma_ode,
                 gamma_quadratic_approx, hamiltonian, hamiltonian_model,
                 hamiltonian_quadrature, lagrangian, lambda_hj, solve_U_hj,
                 u_from_F, variance_approx, variance_quadratic)
from .ibm import (IBMConfig, IBMResult, Individual, Lineage, LineageTable,
                  SampleSpec, coalescence_times, extract_lineages,
                  lineage_stats, matched_competition, run_replicates,
                  sample_individuals, stationary_size)
from .errors import (BranchInversionFailure, DegenerateWeight, Extinction,
                     LineageLabError, NoConvergence, OrphanChain,
                     StabilityViolation, WindowExit)

__version__ = "0.1.0"

__all__ = [
    "AncestralSeries", "BranchInversionFailure", "CoalescenceScales",
    "ConfigError", "DegenerateWeight", "DualSolution",
    "EquilibriumSolution", "Extinction", "Field", "FractionState", "Grid",
    "HJProfile", "HamiltonianModel", "HorizonResult", "IBMConfig",
    "IBMResult", "Individual", "KernelSpec", "Lineage", "LineageLabError",
    "LineageTable", "ModelParams", "MonteCarloResult", "NoConvergence",
    "OperatorContext", "OrphanChain", "SampleSpec", "SelectionSpec",
    "StabilityViolation", "ValidationReport", "WindowExit",
    "adaptive_horizon", "ancestral_stats", "apply_A", "apply_A_diffusive",
    "apply_A_jump_form", "apply_L", "apply_L_diffusive", "apply_L_star",
    "apply_L_star_diffusive", "asymptotic_proportion", "build_stencil",
    "coalescence_scales", "coalescence_times", "convexity_defect",
    "critical_speed_quadratic", "d_hamiltonian", "dominant_trait_zstar",
    "epsilon_scale", "eval_mu", "evolve_dirac_fraction", "evolve_fraction",
    "extract_lineages", "gamma_ode", "gamma_quadratic_approx",
    "gaussian_quadratic_oracle", "grid_from_config", "hamiltonian",
    "hamiltonian_model", "hamiltonian_quadrature", "indicator_fraction",
    "integrate", "lagrangian", "lambda_hj", "lineage_stats", "make_context",
    "matched_competition", "monte_carlo_Y", "monte_carlo_Y_diffusive",
    "ou_moments", "params_from_config", "positivity_window",
    "run_replicates", "sample_individuals", "semigroup_apply", "solve_U_hj",
    "solve_dual_phi", "solve_equilibrium", "solve_equilibrium_diffusive",
    "stationary_size", "u_from_F", "upwind_dz", "validate",
    "variance_approx", "variance_quadratic", "y_infinity_density",
]
