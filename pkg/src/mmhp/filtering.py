"""Forward pass: posterior state probabilities given the event stream.

The recursions propagate the posterior in normalized form, accumulating
the log of every discarded normalization factor in ``log_evidence``.
That accumulator equals the log likelihood of the observations relative
to a unit-rate Poisson reference, so likelihood comparisons across
parameter values remain meaningful while the stored vectors stay O(1).

Two observation modes share one machinery:

* continuous mode -- exact event times; between events the posterior is
  advanced with an exponential integrator over substeps (the per-state
  rate frozen at each substep start), and each event applies a diagonal
  rate reweighting;
* discrete mode -- per-bin counts on a uniform grid; each bin applies a
  single combined matrix exponential mixing the interval generator with
  ``count * log(rate)`` on the diagonal, and the kernel absorbs the
  bin's events through the uniform-in-bin correction.

Every computational step is appended to a :class:`ForwardRecord`, which
the smoother replays backwards so both passes see the identical rate
trajectory.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import DegeneratePosteriorError, InputError, InvalidStateError
from .linalg import expm_stack, mat_exp
from .model import discrete_excitation_factor, initial_intensity, \
    intensity_decay, intensity_eval, intensity_jump, validate_rate_matrix
from .simulate import CountSeries, validate_events


@dataclass(frozen=True)
class PosteriorPath:
    """Posterior probability vectors on a time grid, plus the log evidence."""

    times: np.ndarray
    probs: np.ndarray
    log_evidence: float = 0.0

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if probs.shape[0] != times.size:
            raise InputError("need one probability vector per time")
        if times.size > 1 and np.any(np.diff(times) < 0):
            raise InputError("times must be nondecreasing")
        if np.any(probs < -1e-12) or \
                np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("rows must be probability vectors")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self):
        return self.probs.shape[1]

    def argmax_states(self):
        """Most likely state at each recorded time."""
        return np.argmax(self.probs, axis=1)


@dataclass
class ForwardStep:
    """One computational step of the forward pass.

    ``kind`` is "interval" (event-free substep), "jump" (an observed
    event; zero duration) or "bin" (one count bin).  ``lam`` holds the
    per-state rates the step was built from: at the step start for
    interval/bin steps, at the left limit of the event time for jumps.
    """

    kind: str
    t_start: float
    t_end: float
    dt: float
    lam: np.ndarray
    count: float
    p_after: np.ndarray
    log_evidence_after: float


@dataclass
class ForwardRecord:
    """Replayable trace of a forward pass (consumed by the smoother)."""

    model: object
    mode: str
    horizon: float
    p0: np.ndarray
    steps: list = field(default_factory=list)
    emit_times: np.ndarray = None


@dataclass(frozen=True)
class FilterState:
    """Filter state: time, posterior, log evidence, kernel, model."""

    t: float
    p: np.ndarray
    log_evidence: float
    kernel: object
    model: object


def default_max_substep(params):
    """Default integrator substep: min(0.1, 1 / max decay rate)."""
    gmax = float(np.max(params.gamma))
    return min(0.1, 1.0 / gmax) if gmax > 0 else 0.1


def _normalize(u):
    """Normalize a nonnegative vector, returning (p, log of its sum)."""
    u = np.asarray(u, dtype=float)
    bad = u < 0
    if np.any(bad):
        if np.min(u) < -1e-12 * max(np.max(np.abs(u)), 1.0):
            raise InvalidStateError("posterior update produced negative mass")
        u = np.where(bad, 0.0, u)
    total = u.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegeneratePosteriorError(
            "posterior mass vanished or overflowed; cannot normalize")
    return u / total, float(np.log(total))


def filter_init(model):
    """Initial filter state: posterior q0, empty history, zero evidence."""
    return FilterState(t=0.0, p=model.q0.copy(), log_evidence=0.0,
                       kernel=initial_intensity(model.params), model=model)


def filter_step_interval(state, dt, max_substep=None, record=None):
    """Advance across an event-free interval of length ``dt``.

    The interval is split into substeps of at most ``max_substep``; on
    each substep the posterior is multiplied by
    exp((A - diag(rate) + I) h) with the rate frozen at the substep
    start, then renormalized, while the kernel decays exactly.
    """
    if dt <= 0:
        raise InputError(f"interval length must be positive, got {dt}")
    model = state.model
    params = model.params
    if max_substep is None:
        max_substep = default_max_substep(params)
    if max_substep <= 0:
        raise InputError("max_substep must be positive")
    n = model.n
    eye = np.eye(n)
    n_sub = max(1, int(np.ceil(dt / max_substep - 1e-12)))
    h = dt / n_sub
    t, p, log_ev, kernel = state.t, state.p, state.log_evidence, state.kernel
    for _ in range(n_sub):
        lam = intensity_eval(kernel, params)
        exponent = (model.rate_matrix - np.diag(lam) + eye) * h
        p, log_s = _normalize(mat_exp(exponent) @ p)
        log_ev += log_s
        kernel = intensity_decay(kernel, params, h)
        t += h
        if record is not None:
            record.steps.append(ForwardStep(
                kind="interval", t_start=t - h, t_end=t, dt=h, lam=lam,
                count=0.0, p_after=p, log_evidence_after=log_ev))
    # land exactly on the interval end despite accumulated rounding
    t = state.t + dt
    if record is not None:
        record.steps[-1].t_end = t
    return FilterState(t=t, p=p, log_evidence=log_ev, kernel=kernel,
                       model=model)


def filter_step_jump(state, record=None):
    """Apply one observed event at the current time.

    Reweights the posterior by the per-state rates evaluated at the left
    limit, then lets the kernel absorb the event.
    """
    params = state.model.params
    lam = intensity_eval(state.kernel, params)
    if np.any(lam <= 0):
        raise InvalidStateError("event update needs strictly positive rates")
    p, log_s = _normalize(lam * state.p)
    log_ev = state.log_evidence + log_s
    kernel = intensity_jump(state.kernel, params)
    if record is not None:
        record.steps.append(ForwardStep(
            kind="jump", t_start=state.t, t_end=state.t, dt=0.0, lam=lam,
            count=1.0, p_after=p, log_evidence_after=log_ev))
    return FilterState(t=state.t, p=p, log_evidence=log_ev, kernel=kernel,
                       model=state.model)


def filter_events(model, events, horizon, output_grid=None,
                  max_substep=None, return_record=False):
    """Run the continuous-observation filter over [0, horizon].

    The posterior is recorded at time zero, at every output grid time
    and at every event time (after the event's update).  Events must lie
    in (0, horizon].
    """
    if horizon < 0:
        raise InputError("horizon must be nonnegative")
    events = validate_events(events, horizon=horizon)
    if output_grid is None:
        output_grid = np.empty(0)
    output_grid = np.atleast_1d(np.asarray(output_grid, dtype=float))
    if output_grid.size and (output_grid.min() < 0 or
                             output_grid.max() > horizon):
        raise InputError("output grid times must lie within [0, horizon]")
    breakpoints = np.unique(np.concatenate(
        [[0.0, float(horizon)], output_grid, events]))
    event_set = set(events.tolist())
    emit_set = set(output_grid.tolist()) | event_set | {0.0, float(horizon)}

    state = filter_init(model)
    record = ForwardRecord(model=model, mode="events", horizon=float(horizon),
                           p0=state.p.copy())
    times = [0.0]
    probs = [state.p.copy()]
    for t_next in breakpoints[1:]:
        state = filter_step_interval(state, t_next - state.t,
                                     max_substep=max_substep, record=record)
        if t_next in event_set:
            state = filter_step_jump(state, record=record)
        if t_next in emit_set:
            times.append(float(t_next))
            probs.append(state.p.copy())
    path = PosteriorPath(times=np.asarray(times), probs=np.asarray(probs),
                         log_evidence=state.log_evidence)
    record.emit_times = path.times
    if return_record:
        return path, record
    return path


def discrete_rate_path(params, counts):
    """Per-state rates at every bin start, driven by the observed counts.

    Runs the kernel recursion the discrete filter uses (exact decay plus
    the uniform-in-bin excitation term), vectorized with a linear filter
    per state; row i holds the rates the i-th bin update sees.
    """
    if not isinstance(counts, CountSeries):
        raise InputError("counts must be a CountSeries")
    m = counts.n_bins
    dt = counts.dt
    decay = np.exp(-params.gamma * dt)
    factor = discrete_excitation_factor(params.gamma, dt)
    k = np.empty((m, params.n))
    with np.errstate(over="ignore"):
        for i in range(params.n):
            drive = params.beta[i] * factor[i] * counts.counts
            excess = lfilter([1.0], [1.0, -decay[i]], drive)
            k[0, i] = params.alpha[i]
            k[1:, i] = params.alpha[i] + excess[:-1]
        if params.is_linear:
            return k
        return k ** params.zeta


def bin_exponents(model, rates, counts_values, dt):
    """Per-bin update exponents (A - diag(rate) + I) dt + count diag(log rate).

    ``rates`` holds the bin-start per-state rates, row per bin; the rate
    path is data-driven, so all exponents exist before any posterior is
    touched and their exponentials can be taken in one stacked call.
    """
    m, n = rates.shape
    if np.any(rates <= 0):
        raise InvalidStateError("bin updates need strictly positive rates")
    exps = np.tile(((model.rate_matrix + np.eye(n)) * dt)[None, :, :],
                   (m, 1, 1))
    diag_idx = np.arange(n)
    exps[:, diag_idx, diag_idx] += -rates * dt \
        + np.asarray(counts_values)[:, None] * np.log(rates)
    return exps


def filter_counts(model, counts, return_record=False):
    """Run the discrete-observation filter over a count series.

    Each bin applies one matrix exponential of
    (A - diag(rate) + I) dt + count * diag(log rate), with the rate
    frozen at the bin start; the kernel absorbs each bin's events
    through the uniform-in-bin excitation correction.  Counts may be
    real valued.
    """
    if not isinstance(counts, CountSeries):
        raise InputError("counts must be a CountSeries")
    # deferred import: estimate builds on this module for everything else
    from .estimate import discrete_rate_path

    params = model.params
    state = filter_init(model)
    record = ForwardRecord(model=model, mode="counts",
                           horizon=counts.horizon, p0=state.p.copy())
    grid = counts.grid
    dt = counts.dt
    rates = discrete_rate_path(params, counts)
    updates = expm_stack(bin_exponents(model, rates, counts.counts, dt))
    times = [float(grid[0])]
    probs = [state.p.copy()]
    p, log_ev = state.p, state.log_evidence
    for i, c in enumerate(counts.counts):
        p, log_s = _normalize(updates[i] @ p)
        log_ev += log_s
        record.steps.append(ForwardStep(
            kind="bin", t_start=float(grid[i]), t_end=float(grid[i + 1]),
            dt=dt, lam=rates[i], count=float(c), p_after=p,
            log_evidence_after=log_ev))
        times.append(float(grid[i + 1]))
        probs.append(p.copy())
    path = PosteriorPath(times=np.asarray(times), probs=np.asarray(probs),
                         log_evidence=log_ev)
    record.emit_times = path.times
    if return_record:
        return path, record
    return path


def predict(p, a, s):
    """Propagate a posterior ``s`` time units ahead through the chain alone."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    a = validate_rate_matrix(a)
    if s < 0:
        raise InputError("prediction lead time must be nonnegative")
    if p.size != a.shape[0] or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise InputError("p must be a probability vector matching the matrix")
    if s == 0:
        return p.copy()
    out, _ = _normalize(mat_exp(a * s) @ p)
    return out
