"""Sample paths: hidden chain, modulated self-exciting events, binned counts.

Two event samplers are provided.  Thinning is the workhorse (exact for
power exponents zeta <= 1, where the rate is non-increasing between
events); the branching/cluster sampler covers the linear case only and
exists as an independent cross-check.  Both split their random streams
per chain segment so runs are reproducible for a fixed seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DiagnosticError, InputError, NonStationaryError, \
    UnsupportedError
from .model import validate_rate_matrix


@dataclass(frozen=True)
class ChainPath:
    """Piecewise-constant, right-continuous path of the hidden chain.

    ``states[0]`` holds on [0, jump_times[0]) and ``states[k]`` from
    ``jump_times[k-1]`` on, so there is one more state than jump time.
    Repeated consecutive states are permitted (they describe the same
    path as the merged segment).
    """

    jump_times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        jt = np.atleast_1d(np.asarray(self.jump_times, dtype=float))
        st = np.atleast_1d(np.asarray(self.states, dtype=int))
        if jt.size == 0:
            jt = jt.reshape(0)
        if st.size != jt.size + 1:
            raise InputError("need exactly one more state than jump times")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0):
            raise InputError("jump times must be strictly increasing and positive")
        if np.any(st < 0):
            raise InputError("state indices must be nonnegative")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "states", st)

    def state_at(self, t):
        """State index at time ``t`` (right-continuous)."""
        return int(self.states[np.searchsorted(self.jump_times, t, side="right")])

    def segments(self, horizon):
        """(start, end, state) triples covering [0, horizon]."""
        if horizon < 0:
            raise InputError("horizon must be nonnegative")
        cuts = [0.0]
        for t in self.jump_times:
            if 0.0 < t < horizon:
                cuts.append(float(t))
        cuts.append(float(horizon))
        out = []
        for i in range(len(cuts) - 1):
            if cuts[i + 1] > cuts[i]:
                out.append((cuts[i], cuts[i + 1], int(self.states[i])))
        return out

    def n_switches(self, horizon=np.inf):
        """Number of actual state changes up to ``horizon``."""
        count = 0
        for i, t in enumerate(self.jump_times):
            if t <= horizon and self.states[i + 1] != self.states[i]:
                count += 1
        return count


@dataclass(frozen=True)
class CountSeries:
    """Event counts on a uniform grid of bins (t0 + (i-1) dt, t0 + i dt].

    Counts may be real valued: rescaled data stays representable.
    """

    t0: float
    dt: float
    counts: np.ndarray

    def __post_init__(self):
        counts = np.atleast_1d(np.asarray(self.counts, dtype=float))
        if self.dt <= 0:
            raise InputError(f"bin width must be positive, got {self.dt}")
        if counts.ndim != 1 or counts.size == 0:
            raise InputError("counts must be a nonempty vector")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise InputError("counts must be finite and nonnegative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_bins(self):
        return self.counts.size

    @property
    def grid(self):
        """All bin boundaries t0, t0 + dt, ..., t0 + n dt."""
        return self.t0 + self.dt * np.arange(self.n_bins + 1)

    @property
    def horizon(self):
        return float(self.t0 + self.dt * self.n_bins)


def validate_events(times, horizon=None):
    """Return event times as a strictly increasing positive float array."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        return times.reshape(0)
    if not np.all(np.isfinite(times)):
        raise InputError("event times must be finite")
    if np.any(np.diff(times) <= 0):
        raise InputError("event times must be strictly increasing")
    if times[0] <= 0:
        raise InputError("event times must be strictly positive")
    if horizon is not None and times[-1] > horizon:
        raise InputError(f"event at {times[-1]} lies beyond the horizon {horizon}")
    return times


def simulate_chain(a, x0, horizon, seed):
    """Simulate the hidden chain on [0, horizon].

    ``x0`` is either a state index or an initial probability vector to
    draw the starting state from.  Holding times in state j are
    exponential with rate -a[j, j]; the successor i is drawn with
    probability a[i, j] / (-a[j, j]).  States with zero exit rate are
    absorbing.
    """
    a = validate_rate_matrix(a)
    if horizon < 0:
        raise InputError("horizon must be nonnegative")
    n = a.shape[0]
    rng = np.random.default_rng(seed)
    if np.isscalar(x0) or np.asarray(x0).ndim == 0:
        state = int(x0)
        if not 0 <= state < n:
            raise InputError(f"initial state {state} out of range for {n} states")
    else:
        law = np.asarray(x0, dtype=float)
        if law.size != n or np.any(law < 0) or abs(law.sum() - 1.0) > 1e-9:
            raise InputError("initial law must be a probability vector")
        state = int(rng.choice(n, p=law / law.sum()))
    jump_times = []
    states = [state]
    t = 0.0
    while True:
        exit_rate = -a[state, state]
        if exit_rate <= 0:
            break
        t += rng.exponential(1.0 / exit_rate)
        if t >= horizon:
            break
        rates = a[:, state].copy()
        rates[state] = 0.0
        state = int(rng.choice(n, p=rates / rates.sum()))
        jump_times.append(t)
        states.append(state)
    return ChainPath(np.asarray(jump_times), np.asarray(states))


def simulate_events_thinning(model, chain, horizon, seed,
                             intensity_bound=None):
    """Exact event sampler by thinning a dominating Poisson stream.

    Within a chain segment the active rate is non-increasing between
    events whenever zeta <= 1, so the rate just after the last accepted
    event (or the segment start) dominates and is refreshed at every
    candidate.  For zeta > 1 a finite ``intensity_bound`` must be
    supplied by the caller and is checked against the realized rate.

    The kernel carries over across chain jumps: a state change swaps the
    (alpha, beta, gamma, zeta) coefficients but keeps the accumulated
    event history.
    """
    params = model.params
    if horizon < 0:
        raise InputError("horizon must be nonnegative")
    if np.any(params.zeta > 1.0) and intensity_bound is None:
        raise UnsupportedError(
            "thinning needs an explicit intensity_bound when some zeta > 1")
    segments = chain.segments(horizon)
    streams = np.random.SeedSequence(seed).spawn(max(len(segments), 1))
    alpha, beta, gamma, zeta = params.alpha, params.beta, params.gamma, params.zeta
    k = alpha.copy()
    events = []
    for (seg_start, seg_end, s), stream in zip(segments, streams):
        rng = np.random.default_rng(stream)
        t = seg_start
        while True:
            lam = k[s] ** zeta[s]
            if intensity_bound is not None:
                if lam > intensity_bound:
                    raise DiagnosticError(
                        f"realized intensity {lam} exceeds the supplied bound "
                        f"{intensity_bound}", code="bound-exceeded")
                bound = intensity_bound
            else:
                bound = lam
            t_cand = t + rng.exponential(1.0 / bound)
            if t_cand >= seg_end:
                k = alpha + np.exp(-gamma * (seg_end - t)) * (k - alpha)
                break
            k = alpha + np.exp(-gamma * (t_cand - t)) * (k - alpha)
            if rng.random() * bound <= k[s] ** zeta[s]:
                events.append(t_cand)
                k = k + beta
            t = t_cand
    return np.asarray(events)


def simulate_events_branching(model, chain, horizon, seed,
                              return_details=False):
    """Cluster (immigrant/offspring) sampler for the linear case.

    Each segment is treated as an independent linear self-exciting
    process: immigrants arrive at rate alpha, every event spawns a
    Poisson(beta/gamma) number of offspring at exponential(gamma) lags,
    and offspring falling beyond the segment end are dropped together
    with their descendants (segment-boundary edge effects are ignored
    on purpose; this sampler exists as a cross-check).
    """
    params = model.params
    if not params.is_linear:
        raise UnsupportedError("branching sampler requires zeta = 1")
    if horizon < 0:
        raise InputError("horizon must be nonnegative")
    segments = chain.segments(horizon)
    for _, _, s in segments:
        if params.beta[s] > 0 and params.beta[s] >= params.gamma[s]:
            raise NonStationaryError(
                f"state {s} has beta >= gamma; clusters would be infinite")
    streams = np.random.SeedSequence(seed).spawn(max(len(segments), 1))
    all_events = []
    n_immigrants = 0
    for (seg_start, seg_end, s), stream in zip(segments, streams):
        rng = np.random.default_rng(stream)
        length = seg_end - seg_start
        n_imm = rng.poisson(params.alpha[s] * length)
        n_immigrants += n_imm
        generation = seg_start + rng.random(n_imm) * length
        all_events.append(generation)
        mean_offspring = params.beta[s] / params.gamma[s] if params.gamma[s] > 0 else 0.0
        while generation.size and mean_offspring > 0:
            counts = rng.poisson(mean_offspring, size=generation.size)
            parents = np.repeat(generation, counts)
            children = parents + rng.exponential(1.0 / params.gamma[s],
                                                 size=parents.size)
            children = children[children <= seg_end]
            all_events.append(children)
            generation = children
    times = np.sort(np.concatenate(all_events)) if all_events else np.empty(0)
    if return_details:
        return times, n_immigrants
    return times


def bin_counts(events, t0, dt, n_bins):
    """Count events per bin (t0 + (i-1) dt, t0 + i dt], i = 1..n_bins."""
    if dt <= 0:
        raise InputError(f"bin width must be positive, got {dt}")
    if n_bins <= 0:
        raise InputError(f"need at least one bin, got {n_bins}")
    events = validate_events(events)
    edges = t0 + dt * np.arange(n_bins + 1)
    hi = np.searchsorted(events, edges[1:], side="right")
    lo = np.searchsorted(events, edges[:-1], side="right")
    return CountSeries(t0=t0, dt=dt, counts=(hi - lo).astype(float))
