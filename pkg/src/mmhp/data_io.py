"""CSV ingestion and serialization, plus flat key-value run configuration.

All CSV output uses 17 significant digits so that write-then-read
round-trips reproduce every float bit for bit.  Count CSVs carry one row
per bin with the bin's *end* time in the ``t`` column; event CSVs carry
one event time per row.
"""

import numpy as np

from .errors import InputError
from .model import HawkesParams, ModelSpec, symmetric_two_state
from .simulate import ChainPath, CountSeries

_FMT = "%.17g"


def _fmt(x):
    return _FMT % float(x)


def read_events_csv(path):
    """Read event times (header ``t``, one nonnegative real per row).

    Rows must be nondecreasing.  Duplicate timestamps (ties at the
    file's time resolution) are kept as distinct events in file order:
    the j-th repeat of a value is shifted by j * 1e-9.
    """
    times = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t":
            raise InputError(f"{path}: expected header 't', got '{header}'")
        prev = None
        run = 0
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                t = float(line)
            except ValueError:
                raise InputError(f"{path}:{lineno}: cannot parse '{line}'") \
                    from None
            if t < 0 or not np.isfinite(t):
                raise InputError(f"{path}:{lineno}: invalid event time {t}")
            if prev is not None:
                if t < prev:
                    raise InputError(
                        f"{path}:{lineno}: event times decrease ({t} < {prev})")
                run = run + 1 if t == prev else 0
            prev = t
            times.append(t + run * 1e-9)
    return np.asarray(times)


def write_events_csv(path, times):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t\n")
        for t in np.atleast_1d(times):
            fh.write(_fmt(t) + "\n")


def read_counts_csv(path, rescale=1.0):
    """Read a count series (header ``t,count``; ``t`` is the bin end).

    The time column must form a uniform grid (relative deviation below
    1e-9); a hole in the grid is rejected, never imputed.  Counts are
    divided by ``rescale`` and may be fractional afterwards.
    """
    if rescale <= 0:
        raise InputError(f"rescale must be positive, got {rescale}")
    ts, cs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,count":
            raise InputError(f"{path}: expected header 't,count', got '{header}'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected 't,count'")
            try:
                t, c = float(parts[0]), float(parts[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: cannot parse '{line}'") \
                    from None
            if c < 0:
                raise InputError(f"{path}:{lineno}: negative count {c}")
            ts.append(t)
            cs.append(c)
    if len(ts) < 2:
        raise InputError(f"{path}: need at least two bins to infer the grid")
    ts = np.asarray(ts)
    diffs = np.diff(ts)
    dt = diffs[0]
    if dt <= 0 or np.max(np.abs(diffs - dt)) > 1e-9 * abs(dt):
        raise InputError(f"{path}: bin times must form a uniform grid "
                         "(missing bins are not imputed)")
    counts = np.asarray(cs) / rescale
    return CountSeries(t0=float(ts[0] - dt), dt=float(dt), counts=counts)


def write_counts_csv(path, counts):
    grid = counts.grid
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,count\n")
        for t_end, c in zip(grid[1:], counts.counts):
            fh.write(_fmt(t_end) + "," + _fmt(c) + "\n")


def read_chain_csv(path):
    """Read a chain path (header ``t,state``; first row must start at 0)."""
    ts, ss = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,state":
            raise InputError(f"{path}: expected header 't,state', got '{header}'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                ts.append(float(parts[0]))
                ss.append(int(parts[1]))
            except (ValueError, IndexError):
                raise InputError(f"{path}:{lineno}: cannot parse '{line}'") \
                    from None
    if not ts or ts[0] != 0.0:
        raise InputError(f"{path}: chain must start with a row at t=0")
    return ChainPath(jump_times=np.asarray(ts[1:]), states=np.asarray(ss))


def write_chain_csv(path, chain):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,state\n")
        fh.write("0," + str(int(chain.states[0])) + "\n")
        for t, s in zip(chain.jump_times, chain.states[1:]):
            fh.write(_fmt(t) + "," + str(int(s)) + "\n")


def write_posterior_csv(path, filtered, smoothed=None):
    """Write ``t,p_1..p_n`` rows, plus ``p_smooth_*`` columns when given."""
    n = filtered.n_states
    header = ["t"] + [f"p_{i + 1}" for i in range(n)]
    if smoothed is not None:
        if smoothed.times.size != filtered.times.size or \
                np.max(np.abs(smoothed.times - filtered.times)) > 0:
            raise InputError("filtered and smoothed paths must share their grid")
        header += [f"p_smooth_{i + 1}" for i in range(n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i, t in enumerate(filtered.times):
            row = [_fmt(t)] + [_fmt(v) for v in filtered.probs[i]]
            if smoothed is not None:
                row += [_fmt(v) for v in smoothed.probs[i]]
            fh.write(",".join(row) + "\n")


def write_table_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def load_config(path):
    """Parse a flat ``key = value`` configuration file.

    Keys are case-insensitive; ``#`` starts a comment line; values stay
    strings until a typed getter interprets them.
    """
    cfg = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            cfg[key.strip().lower()] = value.strip()
    return cfg


def parse_vector(text):
    try:
        return np.asarray([float(v) for v in str(text).split(",")])
    except ValueError:
        raise InputError(f"cannot parse vector '{text}'") from None


def parse_matrix(text):
    """Rows separated by ';', entries by ',' (entries in row-major order)."""
    try:
        rows = [[float(v) for v in row.split(",")]
                for row in str(text).split(";")]
    except ValueError:
        raise InputError(f"cannot parse matrix '{text}'") from None
    return np.asarray(rows)


def build_model(cfg):
    """Assemble a :class:`~mmhp.model.ModelSpec` from a config mapping.

    The rate matrix comes either from ``rate_matrix`` (explicit entries,
    column convention) or ``epsilon`` (the symmetric two-state family);
    ``q0`` is 'stationary' (default) or an explicit probability vector.
    """
    missing = [k for k in ("alpha", "beta", "gamma") if k not in cfg]
    if missing:
        raise InputError(f"config is missing keys: {', '.join(missing)}")
    alpha = parse_vector(cfg["alpha"])
    beta = parse_vector(cfg["beta"])
    gamma = parse_vector(cfg["gamma"])
    zeta = parse_vector(cfg["zeta"]) if "zeta" in cfg else None
    params = HawkesParams(alpha=alpha, beta=beta, gamma=gamma, zeta=zeta)
    if "rate_matrix" in cfg:
        a = parse_matrix(cfg["rate_matrix"])
    elif "epsilon" in cfg:
        if params.n != 2:
            raise InputError("the epsilon family needs exactly two states")
        a = symmetric_two_state(float(cfg["epsilon"]))
    else:
        raise InputError("config needs either 'rate_matrix' or 'epsilon'")
    q0_text = cfg.get("q0", "stationary")
    q0 = None if q0_text == "stationary" else parse_vector(q0_text)
    return ModelSpec(rate_matrix=a, params=params, q0=q0)
