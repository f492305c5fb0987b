"""Scale-free l1-penalized regression with log-concave noise (the exp-Lasso)."""

from .noise import (FisherInfo, NoiseModel, Gaussian, Subbotin, Logistic, Huber, Gumbel,
                    make_model, eval_l, eval_l_dot, sample, normalization_check,
                    fisher_info, neg_log_const)
from .design import (Dataset, DataError, RankError, load_csv, with_intercept, gram,
                     irrepresentable_eta0, restricted_eigenvalue_proxy,
                     generate_gaussian_design, diagnose)
from .solver import (FitConfig, FitResult, risk, scale_step, fit_exp_lasso,
                     fit_known_scale, predict, null_threshold)
from .calibration import CalibrationResult, sample_lambda_star, calibrate, quantile_scaling_check
from .experiments import (ScenarioConfig, ExperimentReport, run_oracle_rates, run_detection_edge,
                          run_variable_selection, run_efficiency)

__version__ = "0.1.0"
