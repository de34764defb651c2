"""Backward pass: smoothed posterior given observations up to the horizon.

The smoother carries a positive backward vector ``w`` (renormalized at
every step; only its direction matters) from the terminal condition of
all ones down to time zero, replaying the rate trajectory recorded by
the forward pass.  The smoothed posterior at a time is the normalized
componentwise product of the filtered posterior and ``w`` there.

Backward steps are the transposes of the forward updates, so the pairing
of the two passes conserves the inner product between the unnormalized
forward and backward vectors up to rounding; :class:`BackwardDetails`
exposes the accumulated rescaling logs so that conservation is checkable
from the normalized quantities.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePosteriorError, InputError, InvalidStateError
from .filtering import PosteriorPath, _normalize
from .linalg import mat_exp
from .simulate import CountSeries


@dataclass(frozen=True)
class SmootherState:
    """Backward vector at one time (normalized; any positive scaling works)."""

    t: float
    w: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidStateError("backward vector must be positive and finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class BackwardDetails:
    """Backward sweep internals at the emitted times (ascending order).

    ``log_rescale[i]`` restores the unnormalized backward vector as
    exp(log_rescale[i]) * w[i]; together with the filter's log evidence
    this makes the conserved inner product reconstructable:
    log_rescale + filter_log_evidence + log <w, p> is constant in time.
    """

    times: np.ndarray
    w: np.ndarray
    log_rescale: np.ndarray
    filter_probs: np.ndarray
    filter_log_evidence: np.ndarray


def smoother_init(n):
    """Terminal backward state: all states weighted equally."""
    if n <= 0:
        raise InputError("need at least one state")
    return SmootherState(t=np.nan, w=np.full(n, 1.0 / n))


def smoother_step_interval_backward(state, a, dt, lam):
    """Pull the backward vector across an event-free stretch of length ``dt``."""
    if dt <= 0:
        raise InputError(f"interval length must be positive, got {dt}")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam <= 0):
        raise InvalidStateError("rates must be strictly positive")
    n = lam.size
    exponent = (np.asarray(a, dtype=float).T - np.diag(lam) + np.eye(n)) * dt
    w, _ = _normalize(mat_exp(exponent) @ state.w)
    return SmootherState(t=state.t - dt if np.isfinite(state.t) else state.t, w=w)


def smoother_step_jump_backward(state, lam):
    """Pull the backward vector across an observed event (left limit)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam <= 0):
        raise InvalidStateError("rates must be strictly positive")
    w, _ = _normalize(lam * state.w)
    return SmootherState(t=state.t, w=w)


def smooth_combine(filter_p, w):
    """Smoothed posterior: normalized componentwise product of filter and w."""
    filter_p = np.atleast_1d(np.asarray(filter_p, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if filter_p.shape != w.shape:
        raise InputError("dimension mismatch between posterior and backward vector")
    r = filter_p * w
    total = r.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegeneratePosteriorError(
            "filtered posterior and backward vector have no common support")
    return r / total


def _backward_step(model, step, w):
    """Apply one recorded forward step in reverse; returns (w, log scale)."""
    if step.kind == "jump":
        return _normalize(step.lam * w)
    n = model.n
    exponent = (model.rate_matrix.T - np.diag(step.lam) + np.eye(n)) * step.dt
    if step.kind == "bin" and step.count != 0.0:
        exponent = exponent + step.count * np.diag(np.log(step.lam))
    return _normalize(mat_exp(exponent) @ w)


def _sweep(model, forward, with_details):
    """Walk the forward record backwards, emitting at the recorded times."""
    if forward.emit_times is None or len(forward.steps) == 0:
        # nothing was computed forward: smoothing degenerates to the prior
        path = PosteriorPath(times=np.array([0.0]),
                             probs=forward.p0[None, :].copy())
        if with_details:
            n = forward.p0.size
            details = BackwardDetails(
                times=np.array([0.0]), w=np.full((1, n), 1.0 / n),
                log_rescale=np.array([np.log(n)]),
                filter_probs=forward.p0[None, :].copy(),
                filter_log_evidence=np.array([0.0]))
            return path, details
        return path
    if not np.allclose(model.rate_matrix, forward.model.rate_matrix):
        raise InputError("forward record was built under a different model")
    n = model.n
    w = np.full(n, 1.0 / n)
    log_rescale = np.log(n)  # unnormalized terminal vector is all ones
    emit_set = set(np.asarray(forward.emit_times, dtype=float).tolist())
    out = []
    seen = set()
    for step in reversed(forward.steps):
        t = float(step.t_end)
        if t in emit_set and t not in seen:
            seen.add(t)
            out.append((t, smooth_combine(step.p_after, w), w.copy(),
                        log_rescale, step.p_after, step.log_evidence_after))
        w, log_s = _backward_step(model, step, w)
        log_rescale += log_s
    if 0.0 in emit_set and 0.0 not in seen:
        out.append((0.0, smooth_combine(forward.p0, w), w.copy(),
                    log_rescale, forward.p0, 0.0))
    out.reverse()
    times = np.array([row[0] for row in out])
    probs = np.array([row[1] for row in out])
    final_log_ev = forward.steps[-1].log_evidence_after
    path = PosteriorPath(times=times, probs=probs, log_evidence=final_log_ev)
    if with_details:
        details = BackwardDetails(
            times=times,
            w=np.array([row[2] for row in out]),
            log_rescale=np.array([row[3] for row in out]),
            filter_probs=np.array([row[4] for row in out]),
            filter_log_evidence=np.array([row[5] for row in out]))
        return path, details
    return path


def smooth_events_backward(model, forward, with_details=False):
    """Smooth a continuous-observation forward pass."""
    if forward.mode != "events":
        raise InputError("forward record does not come from the event filter")
    return _sweep(model, forward, with_details)


def smooth_counts_backward(model, counts, forward, with_details=False):
    """Smooth a discrete-observation forward pass over ``counts``.

    The record must match the count series bin for bin; a mismatch means
    the forward pass was run on different data and is rejected.
    """
    if not isinstance(counts, CountSeries):
        raise InputError("counts must be a CountSeries")
    if forward.mode != "counts":
        raise InputError("forward record does not come from the count filter")
    if len(forward.steps) != counts.n_bins:
        raise InputError("forward record covers a different number of bins")
    for i, step in enumerate(forward.steps):
        if step.kind != "bin" or abs(step.dt - counts.dt) > 1e-9 * counts.dt \
                or abs(step.count - counts.counts[i]) > 1e-9:
            raise InputError(
                f"forward record disagrees with the count series at bin {i}")
    return _sweep(model, forward, with_details)
