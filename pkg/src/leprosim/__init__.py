"""Within-host leprosy dynamics toolkit.

Simulation of the three-compartment schwann-cell/bacterial-load model,
equilibrium and stability analysis, global sensitivity scans, multi-drug
optimal scheduling via the forward-backward sweep, and drug-combination
effectiveness ranking.
"""

from .analysis import (BifurcationCurve, EquilibriumReport, HeatGrid,
                       StabilityVerdict, bifurcation_sweep, classify_stability,
                       critical_recruitment, disease_free_equilibrium,
                       doubling_heatmap, endemic_equilibrium, equilibria,
                       jacobian, lyapunov_descent, reproduction_number)
from .control import (COMPARISON_MASKS, CONTROL_NAMES, MASKS, ControlSchedule,
                      DrugMask, FbsSettings, OptimalControlProblem,
                      SolveResult, Weights, adjoint_derivative,
                      compare_combinations, controlled_derivative, cost,
                      forward_backward_sweep, hamiltonian, optimal_controls,
                      summarize)
from .effectiveness import (EFFICACY_LEVELS, HAZARD_RATIOS, EfficacyProfile,
                            derive_efficacies, modified_r0, percent_reduction,
                            rank_combinations)
from .errors import ConfigError, DivergenceError, DomainError, EstimatorError
from .model import (PositivityReport, SimulationConfig, Trajectory,
                    asymptotic_bounds, check_positivity, derivative,
                    integrate, integrate_batch, write_trajectory_csv)
from .params import PRESETS, ParameterSet, preset
from .sensitivity import (EnsembleResult, ParameterRange, SampleMatrix,
                          SobolResult, coefficient_series, default_ranges,
                          lhs_sample, prcc, r0_sensitivity, run_ensemble,
                          sobol_index, srcc)

__version__ = "0.1.0"
