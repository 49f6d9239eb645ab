"""Projected SARSA and fitted SARSA with linear function approximation on finite MDPs,
with exact mean-field oracles and finite-sample bound evaluators."""
from .bounds import (BoundInputs, BoundResult, g_constant, lambda_const, radius_bound, tau0,
                     tau0_block, theorem1_bound, theorem2_bound, theorem3_bounds)
from .errors import (BoundInapplicableWarning, ContradictionError, DegenerateFeaturesError,
                     ErgodicityError, FitError, IndependenceError, NoCertificateError,
                     NoFixedPointError, ParameterError)
from .features import FeatureMap, evaluate, gram_report, normalize, one_hot, random_gaussian
from .harness import (ExperimentConfig, MseCurve, RateFit, b_sweep, chatter_demo,
                      coupling_diagnostic, default_suite, fit_rate, run_mse_experiment, splitmix64)
from .learner import (LearnerConfig, Observation, StepSchedule, ThetaTrace, project, run_fitted_sarsa,
                      run_sarsa, semi_gradient, step_size, td_error)
from .mdp import (FiniteMdp, MixingProfile, PolicyMatrix, build_random_mdp, mixing_profile,
                  policy_kernel, sample_step, stationary_distribution, tv_distance, two_state_mdp)
from .oracle import (FixedPointReport, MeanFieldPair, bias_functional, exact_q, mean_field,
                     mean_field_gradient, solve_fixed_point, stationary_action_measure)
from .policy import PolicyOperator, improve, lipschitz_certificate

__version__ = "0.1.0"
