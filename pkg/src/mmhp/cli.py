"""Command-line interface tying the library into reproducible runs.

Every subcommand reads a flat key-value config file (``--config``) whose
values individual flags override, consumes/produces the CSV formats of
:mod:`mmhp.data_io`, and honours ``--seed`` bit-reproducibly.  Exit
codes: 0 on success, 1 on input errors, 2 when a numerical diagnostic
fires (e.g. the transformed-filter overflow).
"""

import argparse
import sys

import numpy as np

from . import data_io
from .errors import DiagnosticError, InputError, MMHPError
from .estimate import em_calibrate, em_rate_matrix_step, initial_clustering, \
    tune_epsilon
from .filtering import PosteriorPath, filter_counts, filter_events, predict
from .model import validate_rate_matrix
from .robust import DEFAULT_LOG_THRESHOLD, robust_filter_path
from .simulate import bin_counts, simulate_chain, simulate_events_thinning
from .smoothing import smooth_counts_backward, smooth_events_backward


def _merged_config(args):
    cfg = data_io.load_config(args.config) if args.config else {}
    for key in ("seed", "out", "rescale", "bin_width", "max_substep", "data",
                "horizon", "grid_step", "ahead", "epsilons", "iters",
                "substep", "chain_out"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = str(value)
    return cfg


def _get_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise InputError(f"missing required setting '{key}'")
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise InputError(f"setting '{key}' must be a number, got "
                         f"'{cfg[key]}'") from None


def _get_int(cfg, key, default=None):
    return int(_get_float(cfg, key, default))


def _get_out(cfg):
    if "out" not in cfg:
        raise InputError("missing required setting 'out' (output path)")
    return cfg["out"]


def _load_observations(cfg):
    """Read the data file as events or counts, inferring the mode."""
    if "data" not in cfg:
        raise InputError("missing required setting 'data' (input CSV)")
    path = cfg["data"]
    mode = cfg.get("mode")
    if mode is None:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
        mode = "counts" if header == "t,count" else "events"
    if mode == "counts":
        return mode, data_io.read_counts_csv(
            path, rescale=_get_float(cfg, "rescale", 1.0))
    if mode == "events":
        return mode, data_io.read_events_csv(path)
    raise InputError(f"unknown observation mode '{mode}'")


def _run_filter_smoother(cfg, want_smoother):
    model = data_io.build_model(cfg)
    mode, obs = _load_observations(cfg)
    if mode == "counts":
        filtered, record = filter_counts(model, obs, return_record=True)
        smoothed = smooth_counts_backward(model, obs, record) \
            if want_smoother else None
    else:
        horizon = _get_float(cfg, "horizon",
                             float(obs[-1]) if obs.size else 1.0)
        grid_step = _get_float(cfg, "grid_step", 1.0)
        grid = np.arange(0.0, horizon + grid_step * 0.5, grid_step)
        filtered, record = filter_events(
            model, obs, horizon, output_grid=grid,
            max_substep=_get_float(cfg, "max_substep", 0.0) or None,
            return_record=True)
        smoothed = smooth_events_backward(model, record) \
            if want_smoother else None
    return model, filtered, smoothed


def _cmd_simulate(args):
    cfg = _merged_config(args)
    model = data_io.build_model(cfg)
    horizon = _get_float(cfg, "horizon")
    seed = _get_int(cfg, "seed", 0)
    chain_stream, event_stream = np.random.SeedSequence(seed).spawn(2)
    chain = simulate_chain(model.rate_matrix, model.q0, horizon, chain_stream)
    events = simulate_events_thinning(model, chain, horizon, event_stream)
    out = _get_out(cfg)
    if "bin_width" in cfg:
        width = _get_float(cfg, "bin_width")
        n_bins = int(np.floor(horizon / width + 1e-9))
        data_io.write_counts_csv(out, bin_counts(events, 0.0, width, n_bins))
    else:
        data_io.write_events_csv(out, events)
    if "chain_out" in cfg:
        data_io.write_chain_csv(cfg["chain_out"], chain)
    print(f"simulated {events.size} events over horizon {horizon} "
          f"({chain.n_switches(horizon)} state switches)")
    return 0


def _cmd_filter(args):
    cfg = _merged_config(args)
    _, filtered, _ = _run_filter_smoother(cfg, want_smoother=False)
    data_io.write_posterior_csv(_get_out(cfg), filtered)
    print(f"log_evidence {filtered.log_evidence:.12g}")
    return 0


def _cmd_smooth(args):
    cfg = _merged_config(args)
    _, filtered, smoothed = _run_filter_smoother(cfg, want_smoother=True)
    data_io.write_posterior_csv(_get_out(cfg), filtered, smoothed)
    print(f"log_evidence {filtered.log_evidence:.12g}")
    return 0


def _cmd_predict(args):
    cfg = _merged_config(args)
    model, filtered, _ = _run_filter_smoother(cfg, want_smoother=False)
    ahead = _get_float(cfg, "ahead")
    p = predict(filtered.probs[-1], model.rate_matrix, ahead)
    t_last = float(filtered.times[-1])
    header = ["t"] + [f"p_{i + 1}" for i in range(p.size)]
    data_io.write_table_csv(_get_out(cfg), header,
                            [[t_last + ahead] + [float(v) for v in p]])
    print(f"predicted posterior at t={t_last + ahead:.12g}")
    return 0


def _cmd_calibrate(args):
    cfg = _merged_config(args)
    model = data_io.build_model(cfg)
    mode, counts = _load_observations(cfg)
    if mode != "counts":
        raise InputError("calibration expects binned count data")
    r0 = None
    if "changepoints" in cfg or "labels" in cfg:
        changepoints = data_io.parse_vector(cfg["changepoints"]) \
            if cfg.get("changepoints") else []
        labels = [int(v) for v in data_io.parse_vector(cfg["labels"])]
        r0 = initial_clustering(counts, changepoints, labels,
                                n_states=model.n)
    result = em_calibrate(model, counts, r0=r0,
                          iters=_get_int(cfg, "iters", 4),
                          weighting=cfg.get("weighting", "smoothed"))
    n = model.n
    header = (["iter"] + [f"alpha_{i + 1}" for i in range(n)]
              + [f"beta_{i + 1}" for i in range(n)]
              + [f"gamma_{i + 1}" for i in range(n)] + ["loglik"])
    rows = []
    for it, (params, ll) in enumerate(zip(result.params, result.loglik),
                                      start=1):
        rows.append([it] + [float(v) for v in params.alpha]
                    + [float(v) for v in params.beta]
                    + [float(v) for v in params.gamma] + [float(ll)])
    data_io.write_table_csv(_get_out(cfg), header, rows)
    final = result.final_params
    print("final alpha " + ",".join(f"{v:.6g}" for v in final.alpha))
    print("final beta " + ",".join(f"{v:.6g}" for v in final.beta))
    print("final gamma " + ",".join(f"{v:.6g}" for v in final.gamma))
    return 0


def _cmd_em_demo(args):
    cfg = _merged_config(args)
    seed = _get_int(cfg, "seed", 0)
    n = _get_int(cfg, "n", 2)
    rng = np.random.default_rng(seed)
    # random valid generator in the column convention
    a = rng.uniform(0.1, 1.0, size=(n, n))
    np.fill_diagonal(a, 0.0)
    a -= np.diag(a.sum(axis=0))
    a = validate_rate_matrix(a)
    times = np.linspace(0.0, _get_float(cfg, "horizon", 10.0), 101)
    probs = rng.uniform(0.05, 1.0, size=(times.size, n))
    probs /= probs.sum(axis=1, keepdims=True)
    _, a_next = em_rate_matrix_step(a, PosteriorPath(times=times, probs=probs))
    rel = np.linalg.norm(a_next - a) / np.linalg.norm(a)
    print(f"rate-matrix EM update relative change: {rel:.3e}")
    return 0


def _cmd_robust_demo(args):
    cfg = _merged_config(args)
    model = data_io.build_model(cfg)
    if "data" in cfg:
        events = data_io.read_events_csv(cfg["data"])
        default_horizon = float(events[-1]) if events.size else 1.0
    else:
        events = np.empty(0)
        default_horizon = None
    horizon = _get_float(cfg, "horizon", default_horizon)
    result = robust_filter_path(
        model, events, horizon, substep=_get_float(cfg, "substep", 0.05),
        log_threshold=_get_float(cfg, "threshold", DEFAULT_LOG_THRESHOLD))
    rows = [[float(t), float(c), float(q)] for t, c, q in
            zip(result.times, result.condition_log, result.qbar_max)]
    data_io.write_table_csv(_get_out(cfg), ["t", "condition_log", "max_abs_qbar"],
                            rows)
    if result.overflowed:
        raise DiagnosticError(
            "transformed filter overflowed at "
            f"t={result.last_stable_time:.6g}; wrote the stable prefix",
            code="robust-overflow")
    print(f"stable up to horizon {horizon}; final condition_log "
          f"{result.condition_log[-1]:.6g}")
    return 0


def _cmd_tune(args):
    cfg = _merged_config(args)
    model = data_io.build_model(cfg)
    mode, counts = _load_observations(cfg)
    if mode != "counts":
        raise InputError("tuning expects binned count data")
    if "epsilons" not in cfg:
        raise InputError("missing required setting 'epsilons'")
    scales = [float(v) for v in data_io.parse_vector(cfg["epsilons"])]
    entries = tune_epsilon(scales, counts, model)
    rows = [[e.epsilon, e.n_switches, e.dwell_mean, e.dwell_min, e.dwell_max]
            for e in entries]
    data_io.write_table_csv(
        _get_out(cfg),
        ["epsilon", "n_switches", "dwell_mean", "dwell_min", "dwell_max"],
        rows)
    for e in entries:
        print(f"epsilon {e.epsilon:g}: {e.n_switches} switches, "
              f"mean dwell {e.dwell_mean:.6g}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "filter": _cmd_filter,
    "smooth": _cmd_smooth,
    "calibrate": _cmd_calibrate,
    "em-demo": _cmd_em_demo,
    "robust-demo": _cmd_robust_demo,
    "predict": _cmd_predict,
    "tune": _cmd_tune,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmhp",
        description="Filters, smoothers, simulation and calibration for "
                    "counting processes whose self-exciting intensity is "
                    "modulated by a hidden Markov chain.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--data", help="input CSV (events 't' or counts 't,count')")
        p.add_argument("--rescale", type=float,
                       help="divide counts by this factor on ingestion")
        p.add_argument("--bin-width", dest="bin_width", type=float,
                       help="bin width (simulate: emit counts instead of events)")
        p.add_argument("--max-substep", dest="max_substep", type=float,
                       help="integrator substep bound for the event filter")
        p.add_argument("--horizon", type=float, help="time horizon")
        p.add_argument("--grid-step", dest="grid_step", type=float,
                       help="posterior output grid step (event mode)")
        p.add_argument("--ahead", type=float,
                       help="prediction lead time (predict)")
        p.add_argument("--epsilons", help="comma list of rate scales (tune)")
        p.add_argument("--iters", type=int, help="EM iterations (calibrate)")
        p.add_argument("--substep", type=float, help="ODE substep (robust-demo)")
        p.add_argument("--chain-out", dest="chain_out",
                       help="also write the simulated chain path (simulate)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DiagnosticError as err:
        print(f"error[{err.code}]: {err}", file=sys.stderr)
        return 2
    except (InputError, OSError) as err:
        code = getattr(err, "code", "io-error")
        print(f"error[{code}]: {err}", file=sys.stderr)
        return 1
    except MMHPError as err:
        print(f"error[{err.code}]: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
