"""Likelihood evaluation and calibration of the observation parameters.

The intensity parameters are estimated by maximizing the partial
(observation-only) log likelihood with a derivative-free simplex search,
iterated EM style: compute posterior state weights under the current
parameters, then maximize the weighted likelihood, and repeat.  The
chain's rate matrix is deliberately never estimated this way -- its EM
update is the identity map (see :func:`em_rate_matrix_step`, which
demonstrates exactly that) -- so it is treated as a tuning parameter,
explored with :func:`tune_epsilon`.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import DiagnosticError, InputError
from .filtering import PosteriorPath, filter_counts
from .model import HawkesParams, ModelSpec, discrete_excitation_factor, \
    symmetric_two_state, validate_rate_matrix
from .simulate import ChainPath, CountSeries, validate_events
from .smoothing import smooth_counts_backward


def pack_params(params, include_zeta=False):
    """Pack (alpha, beta, gamma[, zeta]) into unconstrained reals via log.

    Every packed entry must be strictly positive; use a tiny positive
    value instead of an exact zero if a component is inactive.
    """
    parts = [params.alpha, params.beta, params.gamma]
    if include_zeta:
        parts.append(params.zeta)
    flat = np.concatenate(parts)
    if np.any(flat <= 0):
        raise InputError("log packing requires strictly positive entries")
    return np.log(flat)


def unpack_params(x, n, include_zeta=False, zeta=None):
    """Inverse of :func:`pack_params`; always yields valid parameters."""
    x = np.asarray(x, dtype=float)
    expected = 4 * n if include_zeta else 3 * n
    if x.size != expected:
        raise InputError(f"expected {expected} packed values, got {x.size}")
    vals = np.exp(x)
    alpha, beta, gamma = vals[:n], vals[n:2 * n], vals[2 * n:3 * n]
    if include_zeta:
        zeta = vals[3 * n:]
    return HawkesParams(alpha=alpha, beta=beta, gamma=gamma, zeta=zeta)


def _exact_piece_integral(k0, alpha, gamma, zeta, length):
    """Integral of the rate over an event-free piece, exact when zeta = 1."""
    if zeta == 1.0:
        if gamma > 0:
            return alpha * length + (k0 - alpha) * \
                (1.0 - np.exp(-gamma * length)) / gamma
        return k0 * length
    # quadrature on the closed-form kernel; substep capped at 1e-2
    m = max(2, int(np.ceil(length / 1e-2)))
    ts = np.linspace(0.0, length, m + 1)
    k = alpha + (k0 - alpha) * np.exp(-gamma * ts)
    return float(np.trapezoid(k ** zeta, ts))


def loglik_complete(params, chain, events, horizon):
    """Log likelihood of the events given the full chain path.

    Sum of the log rate at each event minus the integrated rate, both
    evaluated along the realized chain.  The integral is exact piecewise
    for the linear intensity and uses quadrature otherwise.  Returns
    ``-inf`` if a rate vanishes at an event.
    """
    if horizon <= 0:
        raise InputError("horizon must be positive")
    events = validate_events(events, horizon=horizon)
    if not isinstance(chain, ChainPath):
        raise InputError("chain must be a ChainPath")
    alpha, beta, gamma, zeta = params.alpha, params.beta, params.gamma, \
        params.zeta
    cuts = np.unique(np.concatenate(
        [[0.0, float(horizon)], events,
         chain.jump_times[(chain.jump_times > 0)
                          & (chain.jump_times < horizon)]]))
    event_set = set(events.tolist())
    k = alpha.copy()
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        s = chain.state_at(left)
        length = right - left
        total -= _exact_piece_integral(k[s], alpha[s], gamma[s], zeta[s],
                                       length)
        k = alpha + np.exp(-gamma * length) * (k - alpha)
        if right in event_set:
            if k[s] <= 0:
                return -np.inf
            total += zeta[s] * np.log(k[s])
            k = k + beta
    return float(total)


def discrete_rate_path(params, counts):
    """Per-state rates at every bin start, driven by the observed counts.

    Runs the same kernel recursion the discrete filter uses (exact decay
    plus the uniform-in-bin excitation term), vectorized with a linear
    filter per state; row i holds the rates the i-th bin update sees.
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


def loglik_partial_discrete(params, rhat, counts):
    """Posterior-weighted discrete log likelihood of the counts.

    For each bin, weights the per-state contribution
    count * log(rate) - rate * dt (rate frozen at the bin start under
    the candidate parameters) by the posterior at the bin end.  ``rhat``
    must live on exactly the count grid, boundaries included.
    """
    if not isinstance(rhat, PosteriorPath):
        raise InputError("rhat must be a PosteriorPath")
    grid = counts.grid
    if rhat.times.size != grid.size or \
            np.max(np.abs(rhat.times - grid)) > 1e-9 * max(1.0, counts.dt):
        raise InputError("posterior path grid does not match the count series")
    rates = discrete_rate_path(params, counts)
    weights = rhat.probs[1:]
    with np.errstate(over="ignore", invalid="ignore"):
        per_bin = counts.counts[:, None] * np.log(rates) - rates * counts.dt
        value = float(np.sum(weights * per_bin))
    return value if np.isfinite(value) else -np.inf


@dataclass(frozen=True)
class NelderMeadOptions:
    """Simplex search controls: diameter tolerance, budget, initial step."""

    tol: float = 1e-6
    max_iter: int = 2000
    step: float = 0.25


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def nelder_mead_maximize(objective, x0, opts=None):
    """Maximize ``objective`` with the classic simplex method.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink
    0.5.  Stops when the simplex diameter falls below ``opts.tol`` or
    after ``opts.max_iter`` iterations, returning the best vertex.
    Non-finite objective values are treated as worst possible.
    """
    if opts is None:
        opts = NelderMeadOptions()
    x0 = np.asarray(x0, dtype=float)

    def f(x):
        v = objective(x)
        return -v if np.isfinite(v) else np.inf

    dim = x0.size
    vertices = [x0.copy()]
    for i in range(dim):
        v = x0.copy()
        v[i] += opts.step
        vertices.append(v)
    scores = np.array([f(v) for v in vertices])
    if not np.any(np.isfinite(scores)):
        raise InputError("objective is not finite at any initial vertex")

    iterations = 0
    converged = False
    while iterations < opts.max_iter:
        iterations += 1
        order = np.argsort(scores, kind="stable")
        vertices = [vertices[i] for i in order]
        scores = scores[order]
        diameter = max(np.max(np.abs(v - vertices[0])) for v in vertices[1:])
        if diameter < opts.tol:
            converged = True
            break
        centroid = np.mean(vertices[:-1], axis=0)
        worst = vertices[-1]
        reflected = centroid + (centroid - worst)
        f_r = f(reflected)
        if f_r < scores[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = f(expanded)
            if f_e < f_r:
                vertices[-1], scores[-1] = expanded, f_e
            else:
                vertices[-1], scores[-1] = reflected, f_r
        elif f_r < scores[-2]:
            vertices[-1], scores[-1] = reflected, f_r
        else:
            if f_r < scores[-1]:
                contracted = centroid + 0.5 * (centroid - worst)
                f_c = f(contracted)
                if f_c <= f_r:
                    vertices[-1], scores[-1] = contracted, f_c
                    continue
            else:
                contracted = centroid - 0.5 * (centroid - worst)
                f_c = f(contracted)
                if f_c < scores[-1]:
                    vertices[-1], scores[-1] = contracted, f_c
                    continue
            best = vertices[0]
            vertices = [best] + [best + 0.5 * (v - best) for v in vertices[1:]]
            scores = np.array([scores[0]] + [f(v) for v in vertices[1:]])
    order = np.argsort(scores, kind="stable")
    best = vertices[order[0]]
    return NelderMeadResult(x=best, value=-scores[order[0]],
                            iterations=iterations, converged=converged)


def initial_clustering(counts, changepoints, labels, n_states=None):
    """Hard posterior path that is constant between hand-picked changepoints.

    ``labels`` assigns a state to each of the ``len(changepoints) + 1``
    stretches; changepoints snap to the nearest bin edge and the path is
    right-continuous there.
    """
    changepoints = np.asarray(list(changepoints), dtype=float)
    labels = [int(v) for v in labels]
    if len(labels) != changepoints.size + 1:
        raise InputError("need exactly one more label than changepoints")
    if changepoints.size and np.any(np.diff(changepoints) <= 0):
        raise InputError("changepoints must be strictly increasing")
    if any(v < 0 for v in labels):
        raise InputError("labels must be nonnegative state indices")
    n = max(labels) + 1 if n_states is None else int(n_states)
    if any(v >= n for v in labels):
        raise InputError(f"labels must be below n_states={n}")
    snapped = counts.t0 + np.round((changepoints - counts.t0) / counts.dt) \
        * counts.dt
    grid = counts.grid
    segment = np.searchsorted(snapped, grid, side="right")
    probs = np.zeros((grid.size, n))
    for i, seg in enumerate(segment):
        probs[i, labels[seg]] = 1.0
    return PosteriorPath(times=grid, probs=probs)


@dataclass(frozen=True)
class OccupationStats:
    """Expected occupation time per state and transition counts between them.

    ``transitions[i, j]`` is the expected number of jumps from state i to
    state j; its diagonal holds the negative row sums.
    """

    occupation: np.ndarray
    transitions: np.ndarray


def em_rate_matrix_step(a_hat, rhat):
    """One EM update of the rate matrix from a smoothed path.

    Computes the expected occupation times (trapezoid rule on the
    posterior path) and expected transition counts under ``a_hat``, then
    the maximum-likelihood rate matrix those statistics imply.  The
    update reproduces ``a_hat`` identically -- the fixed point is exact,
    which is precisely why this route cannot calibrate the chain.
    """
    a_hat = validate_rate_matrix(a_hat)
    times = rhat.times
    if times.size < 2:
        raise InputError("posterior path needs at least two times")
    diffs = np.diff(times)
    if np.max(np.abs(diffs - diffs[0])) > 1e-9 * max(1.0, diffs[0]):
        raise InputError("posterior path must live on a uniform grid")
    occupation = np.trapezoid(rhat.probs, times, axis=0)
    if np.any(occupation <= 0):
        raise DiagnosticError(
            "a state has zero expected occupation time; the rate matrix "
            "update is undefined", code="zero-occupation")
    transitions = np.diag(occupation) @ a_hat.T
    a_next = transitions.T @ np.diag(1.0 / occupation)
    return OccupationStats(occupation=occupation, transitions=transitions), \
        a_next


@dataclass
class EMResult:
    """Parameter trajectory and per-iteration objective values."""

    params: list
    loglik: list
    improvement: list
    weighting: str

    @property
    def final_params(self):
        return self.params[-1]


def em_calibrate(model0, counts, r0=None, iters=4, weighting="smoothed",
                 include_zeta=False, opts=None):
    """Iterate posterior weighting and likelihood maximization.

    Each iteration maximizes :func:`loglik_partial_discrete` over the
    packed (alpha, beta, gamma[, zeta]) starting from the previous
    iterate.  The weights for the first iteration are ``r0`` when given
    (e.g. a hand clustering); otherwise, and on every later iteration,
    they come from running the filter and smoother under the current
    parameters.  The rate matrix is held fixed throughout.
    """
    if weighting not in ("smoothed", "filtered"):
        raise InputError("weighting must be 'smoothed' or 'filtered'")
    if iters <= 0:
        raise InputError("need at least one iteration")
    if opts is None:
        opts = NelderMeadOptions()
    params = model0.params
    zeta_fixed = None if include_zeta else params.zeta
    x = pack_params(params, include_zeta=include_zeta)
    rhat = r0
    traj, logliks, improvements = [], [], []
    for _ in range(iters):
        if rhat is None:
            model_it = ModelSpec(rate_matrix=model0.rate_matrix,
                                 params=params, q0=model0.q0)
            fpath, frec = filter_counts(model_it, counts, return_record=True)
            rhat = fpath if weighting == "filtered" else \
                smooth_counts_backward(model_it, counts, frec)

        def objective(packed):
            cand = unpack_params(packed, params.n,
                                 include_zeta=include_zeta, zeta=zeta_fixed)
            return loglik_partial_discrete(cand, rhat, counts)

        before = objective(x)
        result = nelder_mead_maximize(objective, x, opts)
        x = result.x
        params = unpack_params(x, params.n, include_zeta=include_zeta,
                               zeta=zeta_fixed)
        traj.append(params)
        logliks.append(result.value)
        improvements.append(result.value - before)
        rhat = None
    return EMResult(params=traj, loglik=logliks, improvement=improvements,
                    weighting=weighting)


@dataclass(frozen=True)
class TuneEntry:
    """Smoothed-path switching behaviour for one rate-matrix scale."""

    epsilon: float
    n_switches: int
    dwell_mean: float
    dwell_min: float
    dwell_max: float


def tune_epsilon(family_scale, counts, model_base):
    """Sweep the symmetric two-state rate scale; report switching behaviour.

    For each scale, runs the filter and smoother on ``counts`` with the
    rate matrix eps * [[-1, 1], [1, -1]] (uniform initial law) and
    summarizes how often the smoothed most-likely state switches and how
    long it dwells.  Larger scales let the state move more freely; scale
    zero freezes the chain (the smoothed argmax can then never switch).
    """
    if model_base.n != 2:
        raise InputError("the tunable family is two-state")
    entries = []
    for eps in family_scale:
        a = symmetric_two_state(eps)
        model = ModelSpec(rate_matrix=a, params=model_base.params,
                          q0=np.array([0.5, 0.5]))
        _, record = filter_counts(model, counts, return_record=True)
        smoothed = smooth_counts_backward(model, counts, record)
        states = smoothed.argmax_states()
        flips = np.nonzero(np.diff(states) != 0)[0]
        run_edges = np.concatenate([[0], flips + 1, [states.size]])
        dwells = np.diff(run_edges) * counts.dt
        entries.append(TuneEntry(
            epsilon=float(eps), n_switches=int(flips.size),
            dwell_mean=float(np.mean(dwells)),
            dwell_min=float(np.min(dwells)),
            dwell_max=float(np.max(dwells))))
    return entries
