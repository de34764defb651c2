"""Exact finite-dimensional filters and smoothers for counting processes
whose self-exciting intensity is modulated by a hidden finite-state
Markov chain, with simulation and likelihood-based calibration."""

from .errors import DegeneratePosteriorError, DiagnosticError, InputError, \
    InvalidStateError, MMHPError, NonStationaryError, ReducibleChainError, \
    StabilityError, UnsupportedError
from .estimate import EMResult, NelderMeadOptions, OccupationStats, \
    em_calibrate, em_rate_matrix_step, initial_clustering, loglik_complete, \
    loglik_partial_discrete, nelder_mead_maximize, pack_params, tune_epsilon, \
    unpack_params
from .filtering import FilterState, ForwardRecord, PosteriorPath, \
    default_max_substep, filter_counts, filter_events, filter_init, \
    filter_step_interval, filter_step_jump, predict
from .linalg import mat_exp, mat_vec
from .model import HawkesParams, IntensityState, ModelSpec, \
    initial_intensity, intensity_decay, intensity_discrete_update, \
    intensity_eval, intensity_jump, long_run_rate, stationary_distribution, \
    symmetric_two_state, validate_rate_matrix
from .robust import GammaProcess, RobustState, gamma_init, gamma_update, \
    robust_filter_path, robust_filter_step, robust_smoother_path, \
    robust_smoother_step
from .simulate import ChainPath, CountSeries, bin_counts, simulate_chain, \
    simulate_events_branching, simulate_events_thinning, validate_events
from .smoothing import SmootherState, smooth_combine, smooth_counts_backward, \
    smooth_events_backward, smoother_init, smoother_step_interval_backward, \
    smoother_step_jump_backward

__version__ = "0.1.0"
