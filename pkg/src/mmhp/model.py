"""Model specification and the forward evolution of the exciting kernel.

The observed counting process has, conditionally on the hidden state i,
the intensity

    lambda_i(t) = k_i(t) ** zeta_i,
    k_i(t) = alpha_i + beta_i * sum over past events s of exp(-gamma_i (t - s)),

so ``k`` relaxes toward ``alpha`` between events and jumps by ``beta``
at each event.  The hidden state only selects which component of the
vector is the active rate; the kernel vector itself is driven purely by
the event history, which is what keeps all recursions finite dimensional.

Rate matrices follow the column convention throughout the package:
entry (i, j) is the rate of jumping from state j to state i, so every
column sums to zero and the off-diagonal entries are nonnegative.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, InvalidStateError, NonStationaryError, \
    ReducibleChainError, UnsupportedError

_COLUMN_SUM_TOL = 1e-10


def validate_rate_matrix(a):
    """Check the column-convention generator invariants and return ``a``.

    Requires a square matrix with nonnegative off-diagonal entries whose
    columns each sum to zero within 1e-10.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InputError(f"rate matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("rate matrix entries must be finite")
    off = a - np.diag(np.diag(a))
    if np.any(off < -1e-12):
        raise InputError("off-diagonal rate matrix entries must be nonnegative")
    col_sums = a.sum(axis=0)
    if np.any(np.abs(col_sums) > _COLUMN_SUM_TOL):
        raise InputError(
            "rate matrix columns must sum to zero (column convention: entry "
            f"(i, j) is the rate from state j to state i); got sums {col_sums}")
    return a


def symmetric_two_state(epsilon):
    """The tunable two-state family eps * [[-1, 1], [1, -1]]."""
    if epsilon < 0:
        raise InputError("epsilon must be nonnegative")
    return float(epsilon) * np.array([[-1.0, 1.0], [1.0, -1.0]])


@dataclass(frozen=True)
class HawkesParams:
    """Per-state intensity parameters (alpha, beta, gamma, zeta).

    ``alpha`` must be strictly positive so the intensity stays positive;
    ``beta`` and ``gamma`` are nonnegative; the power ``zeta`` is strictly
    positive and defaults to one (the plain self-exciting case).
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    zeta: np.ndarray = None

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        zeta = self.zeta
        if zeta is None:
            zeta = np.ones_like(alpha)
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        if not (alpha.shape == beta.shape == gamma.shape == zeta.shape) \
                or alpha.ndim != 1:
            raise InputError("alpha, beta, gamma, zeta must be vectors of equal length")
        for name, v in (("alpha", alpha), ("beta", beta),
                        ("gamma", gamma), ("zeta", zeta)):
            if not np.all(np.isfinite(v)):
                raise InputError(f"{name} entries must be finite")
        if np.any(alpha <= 0):
            raise InputError("alpha entries must be strictly positive")
        if np.any(beta < 0) or np.any(gamma < 0):
            raise InputError("beta and gamma entries must be nonnegative")
        if np.any(zeta <= 0):
            raise InputError("zeta entries must be strictly positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "zeta", zeta)

    @property
    def n(self):
        return self.alpha.size

    @property
    def is_linear(self):
        """True when every power exponent equals one."""
        return bool(np.all(self.zeta == 1.0))


@dataclass(frozen=True)
class IntensityState:
    """Kernel values k_i(t) for every state, at one instant.

    The values are the left limits k_i(t-): an event exactly at ``t`` has
    not been added yet.  Use :func:`intensity_jump` to add it.
    """

    t: float
    k: np.ndarray

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        if not np.all(np.isfinite(k)) or np.any(k <= 0):
            raise InvalidStateError("kernel values must be finite and positive")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class ModelSpec:
    """Hidden-chain generator, intensity parameters and initial law."""

    rate_matrix: np.ndarray
    params: HawkesParams
    q0: np.ndarray = None

    def __post_init__(self):
        a = validate_rate_matrix(self.rate_matrix)
        if a.shape[0] != self.params.n:
            raise InputError(
                f"rate matrix is {a.shape[0]}x{a.shape[0]} but parameters "
                f"describe {self.params.n} states")
        q0 = self.q0
        if q0 is None:
            q0 = stationary_distribution(a)
        q0 = np.atleast_1d(np.asarray(q0, dtype=float))
        if q0.size != self.params.n:
            raise InputError("q0 length must match the number of states")
        if np.any(q0 < -1e-12) or abs(q0.sum() - 1.0) > 1e-9:
            raise InputError("q0 must be a probability vector")
        object.__setattr__(self, "rate_matrix", a)
        object.__setattr__(self, "q0", np.clip(q0, 0.0, None) / q0.sum())

    @property
    def n(self):
        return self.params.n


def initial_intensity(params):
    """Kernel state at time zero (empty event history): k = alpha."""
    return IntensityState(t=0.0, k=params.alpha.copy())


def intensity_decay(state, params, dt):
    """Relax the kernel toward alpha over an event-free stretch ``dt``.

    Componentwise k <- alpha + exp(-gamma dt) (k - alpha); exact for the
    exponential kernel, any dt >= 0.
    """
    if dt < 0:
        raise InputError(f"dt must be nonnegative, got {dt}")
    if dt == 0:
        return state
    k = params.alpha + np.exp(-params.gamma * dt) * (state.k - params.alpha)
    return IntensityState(t=state.t + dt, k=k)


def intensity_jump(state, params):
    """Add one observed event at the current time: k <- k + beta."""
    return IntensityState(t=state.t, k=state.k + params.beta)


def intensity_eval(state, params):
    """Per-state rates lambda_i = k_i ** zeta_i."""
    if np.any(state.k <= 0):
        raise InvalidStateError("kernel values must be positive to evaluate rates")
    if params.is_linear:
        return state.k.copy()
    return state.k ** params.zeta


def discrete_excitation_factor(gamma, dt):
    """Mean kernel contribution of an event hitting uniformly inside a bin.

    Returns (1 - exp(-gamma dt)) / (gamma dt) componentwise, with the
    limit value 1 when gamma * dt < 1e-12.
    """
    g = np.asarray(gamma, dtype=float) * dt
    out = np.ones_like(g)
    mask = g >= 1e-12
    out[mask] = (1.0 - np.exp(-g[mask])) / g[mask]
    return out


def intensity_discrete_update(state, params, dt, count):
    """Advance the kernel across one bin of width ``dt`` holding ``count`` events.

    Combines the exact decay with the uniform-in-bin correction factor on
    the excitation term; ``count`` may be any nonnegative real (rescaled
    count data is allowed).
    """
    if dt <= 0:
        raise InputError(f"bin width must be positive, got {dt}")
    if count < 0:
        raise InputError(f"count must be nonnegative, got {count}")
    decay = np.exp(-params.gamma * dt)
    factor = discrete_excitation_factor(params.gamma, dt)
    k = params.alpha + decay * (state.k - params.alpha) \
        + params.beta * factor * count
    return IntensityState(t=state.t + dt, k=k)


def long_run_rate(params):
    """Long-run mean event rate per state, alpha / (1 - beta/gamma).

    Only defined for the linear intensity (all zeta equal one) under the
    componentwise subcriticality condition beta < gamma; beta = 0 states
    are plain Poisson with rate alpha.
    """
    if not params.is_linear:
        raise UnsupportedError("long-run rate formula requires zeta = 1")
    rate = np.empty(params.n)
    for i in range(params.n):
        if params.beta[i] == 0.0:
            rate[i] = params.alpha[i]
        elif params.gamma[i] == 0.0 or params.beta[i] >= params.gamma[i]:
            raise NonStationaryError(
                f"state {i} is not subcritical: beta={params.beta[i]}, "
                f"gamma={params.gamma[i]}")
        else:
            rate[i] = params.alpha[i] / (1.0 - params.beta[i] / params.gamma[i])
    return rate


def stationary_distribution(a):
    """Probability vector pi with a @ pi = 0 for an irreducible generator."""
    a = validate_rate_matrix(a)
    n = a.shape[0]
    if n == 1:
        return np.array([1.0])
    # null space via SVD; a unique stationary law needs a 1-d kernel
    _, s, vt = np.linalg.svd(a)
    scale = max(s[0], 1.0)
    null_dim = int(np.sum(s <= 1e-12 * scale))
    if null_dim != 1:
        raise ReducibleChainError(
            "rate matrix does not have a unique stationary distribution")
    pi = vt[-1]
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise ReducibleChainError(
            "stationary distribution is not strictly positive; chain is reducible")
    return pi
