"""
Command-line entry point.

Every subcommand reads its options from flags and, optionally, a config file
(``--config``, JSON or flat ``key = value`` INI); flags win over the file and
unknown keys are rejected.  The fully resolved options are written to
``resolved_config.json`` in the output directory, and passing that file back
with ``--config`` reruns the command.

Exit codes: 0 on success, 2 on invalid options, 1 on I/O failures.
"""
import argparse
import configparser
import json
import math
import os
import sys
import time

import numpy as np

from .adapt import AdaptiveEstimate, ResolutionGrid, fit_all_levels, lepski_scale, resolution_grid
from .exceptions import ConfigurationError, PreconditionError
from .io import atomic_write, read_data_csv, write_csv
from .regress import EstimatorConfig, ThresholdPolicy, clamp, estimate, fit_level
from .scaling import build_basis

__all__ = ["main", "build_parser", "parse_and_validate", "run"]

THREADS_ENV = "MRPROJ_THREADS"


class UsageError(Exception):
    """Invalid command line or configuration (exit code 2)."""


def _positive_int(v):
    v = int(v)
    if v < 1:
        raise ValueError(f"expected a positive integer, got {v}")
    return v


def _positive_float(v):
    v = float(v)
    if not v > 0:
        raise ValueError(f"expected a positive number, got {v}")
    return v


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _int_list(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).replace(" ", "").split(",") if x]


def _float_list(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(" ", "").split(",") if x]


def parse_levels(v):
    """``'auto'``, ``'4'`` or ``'4..10'``."""
    s = str(v).strip()
    if s == "auto":
        return "auto"
    if ".." in s:
        a, b = s.split("..", 1)
        a, b = int(a), int(b)
        if b < a or a < 0:
            raise ValueError(f"empty or negative level range {s!r}")
        return list(range(a, b + 1))
    j = int(s)
    if j < 0:
        raise ValueError(f"level must be >= 0, got {j}")
    return [j]


# (name, type, default, help); types also coerce config-file values
_COMMON = [
    ("out", str, None, "output directory"),
    ("seed", int, 0, "random seed"),
    ("threads", int, None, f"worker threads (falls back to ${THREADS_ENV}, then 1)"),
]
_FIT = [
    ("data", str, None, "CSV with header x1,...,xd,y"),
    ("r", _positive_int, 2, "order of the scaling function"),
    ("policy", str, "empirical-decile", "threshold policy: theory, density-floor, empirical-decile"),
    ("g_min", _positive_float, None, "density floor g_min (density-floor policy)"),
    ("decile", float, 0.1, "quantile level of the empirical threshold"),
    ("clamp", _positive_float, None, "truncation bound M"),
    ("fallback", str, "zero", "invalid-fit fallback: zero, demote-level, neighbor-average"),
    ("table_depth", int, 12, "dyadic depth of the scaling-function table"),
]
COMMANDS = {
    "estimate": _FIT + [("j", parse_levels, "3", "level")],
    "adapt": _FIT + [
        ("j", parse_levels, "auto", "level range a..b or auto"),
        ("kappa", _positive_float, 1.0, "Lepski constant"),
        ("rule", str, "practical", "top level rule when j=auto: theory or practical"),
        ("selection", str, "valid-only", "valid-only or demote-after"),
    ],
    "maltese": _FIT + [("j", parse_levels, "3", "level or range a..b (Lepski)"),
                       ("kappa", _positive_float, 1.0, "Lepski constant")],
    "classify": [
        ("theta", float, 1.0, "margin exponent"),
        ("s", _positive_float, 1.0, "smoothness label"),
        ("d", _positive_int, 2, "dimension"),
        ("r", _positive_int, 2, "order of the scaling function"),
        ("j", int, 1, "fixed level"),
        ("ns", _int_list, "512,1024,2048,4096,8192", "half-sample sizes"),
        ("reps", _positive_int, 20, "replications per size"),
        ("m", _positive_int, 20000, "Monte-Carlo probes"),
        ("g_min", _positive_float, 1e-9, "density floor g_min (threshold g_min/2)"),
    ],
    "bounds": [
        ("ns", _int_list, "1024,2048,4096,8192", "sample sizes"),
        ("j", int, 4, "level"),
        ("d", _positive_int, 1, "dimension"),
        ("r", _positive_int, 1, "order"),
        ("pi_n", float, 2.0, "pi_n (threshold 1/pi_n)"),
        ("mu_max", _positive_float, 1.0, "density upper bound"),
        ("noise", str, "bounded", "bounded or gaussian"),
        ("K", _positive_float, 0.5, "noise bound"),
        ("sigma", _positive_float, 1.0, "Gaussian noise level"),
        ("s", _positive_float, 1.0, "smoothness"),
        ("M", _positive_float, 1.0, "smoothness radius"),
        ("deltas", _float_list, "", "deviations (default: 1.01, 1.5, 2 times the validity floor)"),
        ("reps", int, 0, "Monte-Carlo reps for empirical frequencies (0: skip)"),
    ],
    "simulate": [
        ("signal", str, "heavisine", "doppler, heavisine, bumps or blocks"),
        ("reps", _positive_int, 100, "trials"),
        ("r", _positive_int, 3, "order"),
        ("kappa", _positive_float, 0.05, "Lepski constant"),
        ("snr", _positive_float, 7.0, "signal-to-noise ratio"),
        ("sigma", float, 1.0, "noise level (0: noiseless)"),
        ("j_low", int, 3, "lowest level"),
        ("J", int, None, "top level (default: practical rule)"),
        ("fallback", str, "demote-level", "invalid-fit fallback"),
        ("timing", _bool, True, "record wall time per trial"),
    ],
    "bench": [
        ("n_raw", _positive_int, 3000, "raw design points before dedupe"),
        ("r", _positive_int, 3, "order"),
        ("levels", parse_levels, "3..10", "levels"),
        ("lpe_degree", int, 2, "LPE polynomial degree"),
    ],
}
_DESCRIPTIONS = {
    "estimate": "fixed-level estimator on a data CSV",
    "adapt": "Lepski-adaptive estimator on a data CSV",
    "maltese": "moving-grid estimator (unknown support) on a data CSV",
    "classify": "plug-in classification excess-risk curve",
    "bounds": "tail-bound curves with optional Monte-Carlo frequencies",
    "simulate": "benchmark-signal study",
    "bench": "regression counts and timings against local polynomials",
}


def _options(command):
    return _COMMON + COMMANDS[command]


def build_parser():
    parser = argparse.ArgumentParser(prog="mrproj", description="Multiresolution local regression.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name])
        p.add_argument("--config", help="JSON or INI file of option values")
        for key, typ, default, text in _options(name):
            flag = "--" + key.replace("_", "-")
            shown = f" (default: {default})" if default not in (None, "") else ""
            if typ is _bool:
                p.add_argument(flag, dest=key, type=_bool, default=argparse.SUPPRESS,
                               help=text + shown, metavar="BOOL")
            else:
                p.add_argument(flag, dest=key, type=str, default=argparse.SUPPRESS, help=text + shown)
    return parser


def _read_config(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json") or text.lstrip().startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise UsageError(f"{path}: expected a JSON object")
        return data
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError:
        cp.read_string("[mrproj]\n" + text)
    out = {}
    for section in cp.sections():
        out.update(cp[section])
    return out


def _coerce(typ, value, key):
    if value is None:
        return None
    try:
        if typ in (_int_list, _float_list, _bool):
            return typ(value)
        if typ is parse_levels and isinstance(value, list):
            lv = [int(v) for v in value]
            if not lv or lv != list(range(lv[0], lv[-1] + 1)):
                raise ValueError("levels must form a contiguous range")
            value = f"{lv[0]}..{lv[-1]}"
        return typ(value if isinstance(value, str) else str(value))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid value for {key}: {value!r} ({exc})") from exc


def parse_and_validate(argv, environ=None):
    """
    Resolve the options of one invocation.

    Returns
    -------
    dict
        ``command`` plus every option of that command, typed and validated.

    Raises
    ------
    UsageError
    """
    environ = os.environ if environ is None else environ
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError("invalid command line") from exc
    command = ns.command
    known = {k: (t, d) for k, t, d, _ in _options(command)}
    resolved = {k: d for k, (t, d) in known.items()}
    if getattr(ns, "config", None):
        try:
            filed = _read_config(ns.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except (json.JSONDecodeError, configparser.Error) as exc:
            raise UsageError(f"malformed config file {ns.config}: {exc}") from exc
        if filed.get("command", command) != command:
            raise UsageError(f"config file is for {filed['command']!r}, not {command!r}")
        unknown = sorted(set(filed) - set(known) - {"command"})
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        resolved.update({k: v for k, v in filed.items() if k != "command"})
    for key in known:
        if hasattr(ns, key):
            resolved[key] = getattr(ns, key)
    out = {"command": command}
    for key, (typ, _) in known.items():
        out[key] = _coerce(typ, resolved[key], key)
    if out["threads"] is None:
        env = environ.get(THREADS_ENV)
        out["threads"] = _coerce(int, env, THREADS_ENV) if env else 1
    _validate(out)
    return out


def _validate(cfg):
    c = cfg["command"]
    if cfg["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if cfg.get("out") is None:
        raise UsageError("--out is required")
    if c in ("estimate", "adapt", "maltese"):
        if cfg["data"] is None:
            raise UsageError("--data is required")
        if cfg["policy"] == "density-floor" and cfg["g_min"] is None:
            raise UsageError("density-floor policy needs --g-min")
        if c == "estimate" and (cfg["j"] == "auto" or len(cfg["j"]) != 1):
            raise UsageError("estimate takes a single level --j")
        if c == "maltese" and cfg["j"] == "auto":
            raise UsageError("maltese takes a level or an explicit range")
        try:
            EstimatorConfig(cfg["r"], 1, _policy(cfg), cfg.get("kappa", 1.0), cfg["fallback"])
        except ConfigurationError as exc:
            raise UsageError(str(exc)) from exc
        if c == "adapt" and cfg["rule"] not in ("theory", "practical"):
            raise UsageError(f"unknown rule {cfg['rule']!r}")
        if c == "adapt" and cfg["selection"] not in ("valid-only", "demote-after"):
            raise UsageError(f"unknown selection {cfg['selection']!r}")
    if c == "classify" and (cfg["theta"] < 0 or cfg["j"] < 0 or not cfg["ns"]):
        raise UsageError("classify needs theta >= 0, j >= 0 and at least one n")
    if c == "bounds":
        if cfg["noise"] not in ("bounded", "gaussian"):
            raise UsageError(f"unknown noise model {cfg['noise']!r}")
        if not cfg["ns"] or min(cfg["ns"]) < 1:
            raise UsageError("bounds needs positive sample sizes")
        if cfg["pi_n"] < 1:
            raise UsageError("pi_n must be >= 1")
        if cfg["reps"] < 0:
            raise UsageError("reps must be >= 0")
        if cfg["reps"] and (cfg["r"] != 1 or cfg["d"] != 1):
            raise UsageError("Monte-Carlo frequencies cover r=1, d=1 only")
    if c == "simulate":
        if cfg["signal"].lower() not in ("doppler", "heavisine", "bumps", "blocks"):
            raise UsageError(f"unknown signal {cfg['signal']!r}")
        if cfg["sigma"] < 0:
            raise UsageError("sigma must be >= 0")
        if cfg["fallback"] not in ("zero", "demote-level", "neighbor-average"):
            raise UsageError(f"unknown fallback {cfg['fallback']!r}")
    if c == "bench" and cfg["lpe_degree"] < 0:
        raise UsageError("lpe_degree must be >= 0")


def _policy(cfg):
    return ThresholdPolicy(cfg["policy"], cfg.get("g_min"), cfg.get("clamp"), cfg.get("decile", 0.1))


def _jsonable(cfg):
    out = {}
    for k, v in cfg.items():
        if isinstance(v, list) and k in ("j", "levels") and len(v) > 1 and v == list(range(v[0], v[-1] + 1)):
            v = f"{v[0]}..{v[-1]}"
        elif isinstance(v, list) and k in ("j", "levels"):
            v = str(v[0]) if len(v) == 1 else v
        out[k] = v
    return out


def _fitted_rows(X, values, extra=()):
    return [list(x) + [v] + [e[i] for e in extra] for i, (x, v) in enumerate(zip(X.tolist(), values.tolist()))]


def _run_estimate(cfg, out):
    sample = read_data_csv(cfg["data"])
    basis = build_basis(cfg["r"], cfg["table_depth"])
    ec = EstimatorConfig(cfg["r"], sample.d, _policy(cfg), 1.0, cfg["fallback"])
    table = estimate(sample, cfg["j"][0], basis, ec)
    atomic_write(os.path.join(out, "fit.json"), table.to_json(indent=1, sort_keys=True) + "\n")
    header = [f"x{i + 1}" for i in range(sample.d)] + ["eta_hat"]
    write_csv(os.path.join(out, "fitted.csv"), header, _fitted_rows(sample.X, table(sample.X)))


def _run_adapt(cfg, out):
    sample = read_data_csv(cfg["data"])
    basis = build_basis(cfg["r"], cfg["table_depth"])
    ec = EstimatorConfig(cfg["r"], sample.d, _policy(cfg), cfg["kappa"], cfg["fallback"])
    pi_n = math.log(sample.n)
    if cfg["j"] == "auto":
        grid = resolution_grid(sample.n, sample.d, cfg["r"], cfg["kappa"], pi_n, rule=cfg["rule"])
    else:
        grid = ResolutionGrid(cfg["j"][0], cfg["j"][-1], lepski_scale(sample.n, cfg["kappa"], pi_n),
                              sample.n, sample.d, cfg["kappa"], pi_n)
    tables, pi_inv = fit_all_levels(sample, grid.levels, basis, ec)
    est = AdaptiveEstimate(tables, grid, cfg["fallback"], cfg["clamp"], cfg["selection"])
    values, levels = est.evaluate(sample.X)
    header = [f"x{i + 1}" for i in range(sample.d)]
    write_csv(os.path.join(out, "fitted.csv"), header + ["eta_hat", "j_at"],
              _fitted_rows(sample.X, values, (levels.tolist(),)))
    est.write_level_map(os.path.join(out, ".level_map.tmp"), sample.X)
    os.replace(os.path.join(out, ".level_map.tmp"), os.path.join(out, "level_map.csv"))
    summary = {"levels": grid.levels, "t_n": grid.t_n, "pi_inv": pi_inv,
               "regressions": {str(j): c for j, c in est.regression_counts.items()}}
    atomic_write(os.path.join(out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _run_maltese(cfg, out):
    from .unknown_support import MalteseEstimator, maltese_adaptive, split

    sample = read_data_csv(cfg["data"])
    basis = build_basis(cfg["r"], cfg["table_depth"])
    halves = split(sample, cfg["seed"])
    policy = _policy(cfg)
    header = [f"x{i + 1}" for i in range(sample.d)]
    if len(cfg["j"]) == 1:
        est = MalteseEstimator(halves, cfg["j"][0], basis, policy)
        values, valid, anchors = est.evaluate(sample.X)
        values = clamp(values, policy.clamp)
        levels = np.full(sample.n, cfg["j"][0])
        regressions = {str(cfg["j"][0]): est.n_regressions}
    else:
        pi_n = math.log(halves.n)
        grid = ResolutionGrid(cfg["j"][0], cfg["j"][-1], lepski_scale(halves.n, cfg["kappa"], pi_n),
                              halves.n, sample.d, cfg["kappa"], pi_n)
        values, levels, ests = maltese_adaptive(sample.X, halves, grid, basis, policy)
        valid = np.ones(sample.n, dtype=bool)
        regressions = {str(j): e.n_regressions for j, e in ests.items()}
    write_csv(os.path.join(out, "fitted.csv"), header + ["eta_hat", "j_at", "valid"],
              _fitted_rows(sample.X, values, (levels.tolist(), valid.astype(int).tolist())))
    summary = {"n_fit": halves.n, "n_anchor": halves.anchor_half.n, "regressions": regressions}
    atomic_write(os.path.join(out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _run_classify(cfg, out):
    from .classify import margin_scenario, risk_curve, write_risk_csv

    scenario = margin_scenario(cfg["theta"], cfg["s"], cfg["d"])
    policy = ThresholdPolicy("density-floor", cfg["g_min"])
    rows = risk_curve(scenario, cfg["ns"], cfg["reps"], build_basis(cfg["r"]), policy,
                      m=cfg["m"], seed=cfg["seed"], j=cfg["j"])
    tmp = os.path.join(out, ".risk.tmp")
    write_risk_csv(rows, tmp)
    os.replace(tmp, os.path.join(out, "risk.csv"))


def _run_bounds(cfg, out):
    from .bounds import BoundParams, clip, deviation_bound, deviation_frequency, validity_floor

    rows = []
    for n in cfg["ns"]:
        p = BoundParams(n=n, j=cfg["j"], d=cfg["d"], r=cfg["r"], pi_n=cfg["pi_n"], mu_max=cfg["mu_max"],
                        noise=cfg["noise"], K=cfg["K"], sigma=cfg["sigma"], s=cfg["s"], M=cfg["M"])
        deltas = cfg["deltas"] or [f * validity_floor(p) for f in (1.01, 1.5, 2.0)]
        freqs = [float("nan")] * len(deltas)
        if cfg["reps"]:
            freqs = deviation_frequency(p, deltas, lambda x: np.asarray(x, dtype=float) * cfg["M"],
                                        reps=cfg["reps"], seed=cfg["seed"]).tolist()
        for delta, f in zip(deltas, freqs):
            raw = deviation_bound(delta, p)
            rows.append([n, cfg["j"], delta, clip(raw), raw, f])
    write_csv(os.path.join(out, "bounds.csv"), ["n", "j", "delta", "bound", "bound_raw", "empirical_freq"], rows)


def _run_simulate(cfg, out):
    from .simulate import StudyConfig, run_study, write_study

    sc = StudyConfig(r=cfg["r"], j_low=cfg["j_low"], J=cfg["J"], snr=cfg["snr"], sigma=cfg["sigma"],
                     kappa=cfg["kappa"], fallback=cfg["fallback"])
    result = run_study(cfg["signal"].lower(), cfg["reps"], sc, cfg["seed"], cfg["threads"])
    write_study(result, out, timing=cfg["timing"])


def _run_bench(cfg, out):
    from .simulate import lpe_baseline, random_density, sample_design

    rng = np.random.default_rng(cfg["seed"])
    design = sample_design(random_density(rng), cfg["n_raw"], 15, rng)
    x = design.X[:, 0]
    sample = design.with_responses(np.sin(4 * np.pi * x) + rng.standard_normal(design.n))
    basis = build_basis(cfg["r"])
    rows = []
    for j in cfg["levels"]:
        t0 = time.perf_counter()
        table = fit_level(sample, j, basis)
        table(sample.X)
        mr_time = time.perf_counter() - t0
        t0 = time.perf_counter()
        _, _, lpe_count = lpe_baseline(sample, sample.X, 2.0 ** (-j - 1), cfg["lpe_degree"])
        lpe_time = time.perf_counter() - t0
        rows.append([j, design.n, table.n_regressions, lpe_count, mr_time, lpe_time])
    write_csv(os.path.join(out, "bench.csv"),
              ["j", "n_effective", "mr_regressions", "lpe_regressions", "mr_seconds", "lpe_seconds"], rows)


_RUNNERS = {
    "estimate": _run_estimate,
    "adapt": _run_adapt,
    "maltese": _run_maltese,
    "classify": _run_classify,
    "bounds": _run_bounds,
    "simulate": _run_simulate,
    "bench": _run_bench,
}


def run(cfg):
    """Execute a resolved configuration; returns the exit code."""
    out = cfg["out"]
    try:
        os.makedirs(out, exist_ok=True)
        resolved = _jsonable(cfg)
        atomic_write(os.path.join(out, "resolved_config.json"),
                     json.dumps(resolved, indent=2, sort_keys=True) + "\n")
        _RUNNERS[cfg["command"]](cfg, out)
    except (ConfigurationError, PreconditionError, ValueError) as exc:
        _error("validation", exc)
        return 2
    except OSError as exc:
        _error("io", exc)
        return 1
    return 0


def _error(kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")


def main(argv=None):
    try:
        cfg = parse_and_validate(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        _error("usage", exc)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
