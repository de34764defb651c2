"""Gauge-transformed filter and smoother with overflow diagnostics.

A diagonal positive process built from the observed events can absorb
every stochastic update of the forward/backward recursions, leaving
transformed vectors that evolve by ordinary ODEs between (and across)
events.  The price is conditioning: the gauge logs drift apart at the
rate of the intensity spread, the conjugated coefficient matrix picks up
factors exp(spread), and the transformed vectors then grow doubly fast.
This module implements the construction at desk scale and turns the
blow-up into a first-class diagnostic (:class:`~mmhp.errors.StabilityError`)
instead of silent infs.

The stepping is the exponential-integrator map conjugate to the standard
filter's step on the same grid (rates frozen at each substep start), so
while everything is finite the two agree to rounding; comparisons need
no tolerance tuning.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InvalidStateError, StabilityError
from .linalg import mat_exp
from .model import initial_intensity, intensity_decay, intensity_eval, \
    intensity_jump
from .simulate import validate_events

DEFAULT_LOG_THRESHOLD = 300.0


@dataclass(frozen=True)
class GammaProcess:
    """Diagonal gauge at one time, stored as logarithms."""

    t: float
    log_gamma: np.ndarray

    def __post_init__(self):
        lg = np.atleast_1d(np.asarray(self.log_gamma, dtype=float))
        if not np.all(np.isfinite(lg)):
            raise InvalidStateError("gauge logs must be finite")
        object.__setattr__(self, "log_gamma", lg)
        object.__setattr__(self, "t", float(self.t))

    @property
    def condition_log(self):
        """Spread of the gauge logs; the conditioning of the conjugation."""
        return float(np.max(self.log_gamma) - np.min(self.log_gamma))


@dataclass(frozen=True)
class RobustState:
    """Transformed forward/backward vectors and the current conditioning."""

    t: float
    qbar: np.ndarray
    vbar: np.ndarray
    condition_log: float


def gamma_init(n):
    """Gauge at time zero: identity (all logs zero)."""
    return GammaProcess(t=0.0, log_gamma=np.zeros(n))


def gamma_update(g, dt, lam, jump=False):
    """Advance the gauge: drift -(lam - 1) dt, plus log(lam) at a jump.

    ``lam`` is the per-state rate vector frozen over the step; ``jump``
    marks an observed event at the interval end.
    """
    if dt < 0:
        raise InputError("dt must be nonnegative")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam <= 0):
        raise InvalidStateError("rates must be strictly positive")
    lg = g.log_gamma - (lam - 1.0) * dt
    if jump:
        lg = lg + np.log(lam)
    return GammaProcess(t=g.t + dt, log_gamma=lg)


def _conjugated_coefficients(a, log_gamma, transpose, log_threshold):
    """Entries of Gamma^-1 A Gamma (or Gamma A^T Gamma^-1), with overflow check.

    Entry (i, j) is a[i, j] * exp(log_gamma[j] - log_gamma[i]) in the
    forward case and a[j, i] * exp(log_gamma[i] - log_gamma[j]) in the
    transposed (backward) case; any entry whose log magnitude exceeds
    ``log_threshold`` trips the instability diagnostic.
    """
    a = np.asarray(a, dtype=float)
    diff = log_gamma[None, :] - log_gamma[:, None]
    if transpose:
        base = a.T
        diff = -diff
    else:
        base = a
    with np.errstate(divide="ignore"):
        log_mag = np.where(base != 0.0, np.log(np.abs(base) + 0.0), -np.inf) + diff
    if np.any(log_mag > log_threshold):
        raise StabilityError(
            "conjugated coefficient magnitude exceeded the overflow threshold",
            last_stable_time=None,
            condition_log=float(np.max(log_gamma) - np.min(log_gamma)))
    return base * np.exp(diff)


def robust_filter_step(state, g, a, dt, lam, log_threshold=DEFAULT_LOG_THRESHOLD):
    """One forward step of the transformed filter vector.

    ``g`` and ``lam`` belong to the step start; the map applied is the
    exact conjugation of the standard filter's frozen-rate exponential
    step, assembled from the gauge-log differences.
    """
    if dt <= 0:
        raise InputError("dt must be positive")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    n = lam.size
    coeff = _conjugated_coefficients(a, g.log_gamma, False, log_threshold)
    exponent = (coeff - np.diag(lam) + np.eye(n)) * dt
    qbar = np.exp((lam - 1.0) * dt) * (mat_exp(exponent) @ state.qbar)
    condition = g.condition_log
    if not np.all(np.isfinite(qbar)):
        raise StabilityError("transformed filter vector overflowed",
                             last_stable_time=state.t, condition_log=condition)
    return RobustState(t=state.t + dt, qbar=qbar, vbar=state.vbar,
                       condition_log=condition)


def robust_smoother_step(state, g, a, dt, lam,
                         log_threshold=DEFAULT_LOG_THRESHOLD):
    """One backward step of the transformed smoother vector.

    Moves ``vbar`` from the interval end to the interval start; ``g``
    and ``lam`` belong to the interval start, mirroring the forward
    freezing, so the pairing with the forward pass is exact.
    """
    if dt <= 0:
        raise InputError("dt must be positive")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    n = lam.size
    coeff = _conjugated_coefficients(a, g.log_gamma, True, log_threshold)
    exponent = (coeff - np.diag(lam) + np.eye(n)) * dt
    vbar = mat_exp(exponent) @ (np.exp((lam - 1.0) * dt) * state.vbar)
    condition = g.condition_log
    if not np.all(np.isfinite(vbar)):
        raise StabilityError("transformed smoother vector overflowed",
                             last_stable_time=state.t - dt,
                             condition_log=condition)
    return RobustState(t=state.t - dt, qbar=state.qbar, vbar=vbar,
                       condition_log=condition)


@dataclass
class RobustRunResult:
    """Trajectories of a transformed run, truncated at overflow if any."""

    times: np.ndarray
    qbar: np.ndarray
    log_gamma: np.ndarray
    condition_log: np.ndarray
    qbar_max: np.ndarray
    overflowed: bool = False
    last_stable_time: float = None
    vbar: np.ndarray = None
    substeps: list = field(default_factory=list)

    def gamma_qbar(self):
        """Recover the untransformed (unnormalized) forward vectors."""
        return np.exp(self.log_gamma) * self.qbar


def _substep_plan(events, horizon, substep):
    """Per-substep (t_start, t_end, jump_at_end) triples covering [0, horizon].

    Interval ends land exactly on the breakpoint floats so recorded
    times never drift past the horizon.
    """
    events = validate_events(events, horizon=horizon)
    cuts = np.unique(np.concatenate([[0.0, float(horizon)], events]))
    event_set = set(events.tolist())
    plan = []
    for left, right in zip(cuts[:-1], cuts[1:]):
        n_sub = max(1, int(np.ceil((right - left) / substep - 1e-12)))
        h = (right - left) / n_sub
        prev = float(left)
        for j in range(n_sub):
            t_end = float(right) if j == n_sub - 1 else left + (j + 1) * h
            plan.append((prev, t_end,
                         j == n_sub - 1 and right in event_set))
            prev = t_end
    return plan


def robust_filter_path(model, events, horizon, substep,
                       log_threshold=DEFAULT_LOG_THRESHOLD):
    """Drive the transformed filter over [0, horizon].

    Records time, gauge logs, conditioning and max |qbar| at every
    substep boundary.  On overflow the run stops, the result is flagged
    and truncated at the last stable time; no exception propagates (the
    blow-up is the documented behaviour, not a bug).
    """
    if substep <= 0 or horizon < 0:
        raise InputError("need a positive substep and nonnegative horizon")
    params = model.params
    kernel = initial_intensity(params)
    g = gamma_init(model.n)
    state = RobustState(t=0.0, qbar=model.q0.copy(), vbar=None,
                        condition_log=0.0)
    times = [0.0]
    qbars = [state.qbar.copy()]
    log_gammas = [g.log_gamma.copy()]
    conditions = [0.0]
    substeps = []
    overflowed = False
    last_stable = None
    try:
        for t_start, t_end, jump_at_end in _substep_plan(
                events, horizon, substep):
            h = t_end - t_start
            lam = intensity_eval(kernel, params)
            # backward replay only needs the start gauge and rate:
            # the transformed vectors are continuous across events
            substeps.append((g.log_gamma.copy(), lam, h))
            state = robust_filter_step(state, g, a=model.rate_matrix,
                                       dt=h, lam=lam,
                                       log_threshold=log_threshold)
            state = RobustState(t=t_end, qbar=state.qbar, vbar=state.vbar,
                                condition_log=state.condition_log)
            g = gamma_update(g, h, lam)
            kernel = intensity_decay(kernel, params, h)
            if jump_at_end:
                lam_jump = intensity_eval(kernel, params)
                g = gamma_update(g, 0.0, lam_jump, jump=True)
                kernel = intensity_jump(kernel, params)
            times.append(state.t)
            qbars.append(state.qbar.copy())
            log_gammas.append(g.log_gamma.copy())
            conditions.append(g.condition_log)
    except StabilityError as err:
        overflowed = True
        last_stable = times[-1] if err.last_stable_time is None \
            else err.last_stable_time
    qbar = np.asarray(qbars)
    return RobustRunResult(
        times=np.asarray(times), qbar=qbar, log_gamma=np.asarray(log_gammas),
        condition_log=np.asarray(conditions),
        qbar_max=np.max(np.abs(qbar), axis=1), overflowed=overflowed,
        last_stable_time=last_stable, substeps=substeps)


def robust_smoother_path(model, forward_result,
                         log_threshold=DEFAULT_LOG_THRESHOLD):
    """Drive the transformed smoother backwards along a finished forward run.

    Consumes the substep trace of :func:`robust_filter_path` (which must
    not have overflowed) and returns the result with ``vbar`` filled on
    the same grid.
    """
    if forward_result.overflowed:
        raise InputError("cannot smooth a forward run that overflowed")
    res = forward_result
    n = model.n
    terminal = np.exp(res.log_gamma[-1])
    if not np.all(np.isfinite(terminal)) or np.max(terminal) == 0.0:
        raise StabilityError("terminal gauge under/overflowed",
                             last_stable_time=res.times[-1],
                             condition_log=res.condition_log[-1])
    state = RobustState(t=float(res.times[-1]), qbar=res.qbar[-1],
                        vbar=terminal, condition_log=res.condition_log[-1])
    vbars = [terminal.copy()]
    for log_gamma, lam, h in reversed(res.substeps):
        g = GammaProcess(t=state.t - h, log_gamma=log_gamma)
        state = robust_smoother_step(state, g, a=model.rate_matrix, dt=h,
                                     lam=np.atleast_1d(lam),
                                     log_threshold=log_threshold)
        vbars.append(state.vbar.copy())
    vbars.reverse()
    res.vbar = np.asarray(vbars)
    return res
