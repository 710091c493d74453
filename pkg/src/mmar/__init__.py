"""Mixture matrix autoregression toolkit.

Simulation, stationarity analysis, EM maximum-likelihood estimation,
asymptotic inference, information-criterion model selection and
mixture-density forecasting for matrix-valued time series.
"""

__version__ = "0.1.0"

from .estimate import (EmOptions, FitReport, e_step, fit_em, fit_multistart,
                       initial_values, log_likelihood, m_step)
from .exceptions import (DataError, DivergenceError, EstimationError,
                         InvalidParameterError, MmarError,
                         NotPositiveDefiniteError)
from .forecast import (PredictiveMarginal, conditional_mean, mspe,
                       predictive_marginal, residuals, standardized_residuals)
from .inference import (InferenceReport, infer, joint_ellipse_test,
                        observed_information, score_gamma, score_theta,
                        wald_intervals, xi_indices)
from .model import (MatrixSeries, MmarComponent, MmarModel, MmarSpec,
                    ThetaVector, companion_matrix, conditional_log_density,
                    load_model, normalize, pack_theta, param_dim, save_model,
                    to_constrained_var, unpack_theta)
from .scenarios import frozen_scenario, generate_scenario
from .selection import Criteria, SelectionTable, criteria, select_grid, select_stepwise
from .simulate import SimulationResult, draw_matrix_normal, make_rng, simulate
from .stationarity import (StationarityReport, build_report,
                           check_mean_stationarity, check_qth_moment,
                           check_second_order_stationarity,
                           check_strict_sufficient, estimate_lyapunov)

__all__ = [name for name in dir() if not name.startswith("_")]
