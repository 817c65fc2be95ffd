"""Partial exclusion in quenched random environments on finite tori.

Library layout:

- :mod:`sepenv.environment`   occupancy fields, laws, conductances
- :mod:`sepenv.random_walk`   one-walker dynamics, semigroups, time change
- :mod:`sepenv.exclusion`     the interacting system, duality, martingales
- :mod:`sepenv.homogenization` diffusivity estimation and convergence checks
- :mod:`sepenv.hydrodynamics` density fields and the scaling-limit experiment
- :mod:`sepenv.cli`           reproducible command-line experiments
"""

from .environment import (ConductanceField, EnvLaw, Environment, conductances,
                          constant_law, ergodic_average, iid_law, markov_law,
                          sample_environment, translate)
from .exclusion import (CheckReport, DeviationReport, DualityReport,
                        LadderConfig, SepEnsemble, SepTrajectory, apply_move,
                        binomial_config, duality_check, duality_function,
                        duality_suite, ladder_direct_equivalence_check,
                        ladder_from_config, martingale_covariation_check,
                        mean_density_evolution_check, multi_duality_check,
                        reversibility_check, sep_ensemble,
                        simulate_sep_direct, simulate_sep_ladder,
                        single_particle_equivalence_check)
from .homogenization import (ConvergenceReport, HolderFit, SigmaEstimate,
                             estimate_sigma_msd, holder_modulus_estimate,
                             local_clt_check, semigroup_convergence,
                             sigma_oracle_1d)
from .hydrodynamics import (DensityFieldSeries, ExperimentReport,
                            VarianceBoundReport, consistency_check,
                            density_field, density_field_bound,
                            hdl_experiment, heat_solution, limit_field,
                            record_density_series, variance_bound_check)
from .random_walk import (BoundReport, GeneratorMatrix, SemigroupTable,
                          Trajectory, WalkEnsemble, dirichlet_form, generator,
                          heat_kernel, heat_kernel_bound_check, holding_rate,
                          jump_distribution, nash_ratio, semigroup,
                          semigroup_action, semigroup_action_grid,
                          simulate_walk, time_change,
                          time_change_equivalence_check, transition_row,
                          walk_ensemble)
from .seeding import derive_seed, rng_from
from .testfunctions import (MacroscopicProfile, TestFunction, constant_profile,
                            cosine_bump, gaussian_bump, polynomial_bump,
                            sine_profile)

__version__ = "0.1.0"
