"""Command-line front end: analytic grids, sweeps, optimizers and simulations.

Every numeric flag may be a single value, a comma list ``1e-4,3e-4`` or a
range ``start:stop:n`` (append ``:log`` for log spacing).  Output goes to
``--out`` (stdout by default) as CSV or JSON, always with a metadata block
holding the tool version, the fully resolved configuration and the seed.

Exit codes: 0 ok, 2 usage, 3 numerical failure, 4 I/O.
"""

import argparse
import io
import itertools
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .coeffs import ChannelParams
from .errors import NumericalError
from .metrics import (BOUND_CHOICES, DEFAULT_MU, DeploymentParams, MonotoneDecreasing,
                      PowerModel, asymptotic_ratio_ru, density_regime, gamma_p0, gamma_pc,
                      metric_report, optimal_antennas, optimal_bs_density,
                      success_probability)
from .sim import (DEFAULT_NOISE_DBM, DEFAULT_WINDOW, LAYOUTS, SimConfig, dbm_to_watts,
                  estimate, simulated_energy_efficiency)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
SIG_DIGITS = 12
SIM_CONFIDENCE = 0.99

# Resolution order: these defaults, then the config file, then flags.
DEFAULTS = {
    "lambda_b": None,
    "lambda_u": "1e-3",
    "rho": None,
    "mu": str(DEFAULT_MU),
    "alpha": "4",
    "gamma_db": "0",
    "antennas": "1",
    "eta": "0.32",
    "pt": "6.3",
    "pc": "35",
    "p0": "34",
    "noise_dbm": str(DEFAULT_NOISE_DBM),
    "trials": "20000",
    "seed": "0",
    "layout": "ppp",
    "window": str(DEFAULT_WINDOW),
    "format": None,
    "bound": "mid",
    "workers": "1",
}

# Per-command defaults that differ from the global ones.
COMMAND_DEFAULTS = {
    "analyze": {"lambda_b": "1e-4,5e-4", "antennas": "1:20:20"},
    "sweep": {},
    "optimize": {},
    "simulate": {"lambda_b": "1e-4,3e-4,5e-4,1e-3", "antennas": "1,3,5"},
}

SWEEP_AXES = ("lambda_b", "rho", "antennas", "gamma_db")

UNITS = {
    "lambda_b": "m^-2", "lambda_u": "m^-2", "lambda_b_star": "m^-2",
    "R_a": "bit/s/Hz/m^2", "R_a_lower": "bit/s/Hz/m^2", "R_a_upper": "bit/s/Hz/m^2",
    "R_u": "bit/s/Hz", "R_u_lower": "bit/s/Hz", "R_u_upper": "bit/s/Hz", "R_0": "bit/s/Hz",
    "eta_EE": "bit/J/Hz", "eta_EE_hat": "bit/J/Hz", "eta_EE_star": "bit/J/Hz",
    "eta_EE_exact": "bit/J/Hz", "gamma_db": "dB", "gamma_p0": "-", "gamma_pc": "W",
    "P_c": "W", "mean_sinr_db": "dB",
}


class UsageError(Exception):
    pass


def parse_values(text, name, integer=False):
    """Expand a flag value into a strictly increasing list of numbers."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
                raise ValueError
            start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1:
                raise ValueError
            if len(parts) == 4:
                if start <= 0 or stop <= 0:
                    raise ValueError
                vals = list(np.geomspace(start, stop, n))
            else:
                vals = list(np.linspace(start, stop, n))
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')}: cannot parse {text!r}") from None
    if not vals:
        raise UsageError(f"--{name.replace('_', '-')}: empty grid")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise UsageError(f"--{name.replace('_', '-')}: grid must be strictly increasing")
    if integer:
        if any(v != round(v) for v in vals):
            raise UsageError(f"--{name.replace('_', '-')}: expected integers")
        vals = [int(round(v)) for v in vals]
    return vals


def parse_single(text, name, integer=False):
    vals = parse_values(text, name, integer)
    if len(vals) != 1:
        raise UsageError(f"--{name.replace('_', '-')} takes a single value")
    return vals[0]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    flag = common.add_argument
    for key in ("lambda_b", "lambda_u", "rho", "mu", "alpha", "gamma_db", "antennas",
                "eta", "pt", "pc", "p0", "noise_dbm", "trials", "seed", "window", "workers"):
        flag("--" + key.replace("_", "-"), dest=key, default=None)
    flag("--layout", choices=LAYOUTS, default=None)
    flag("--bound", choices=BOUND_CHOICES, default=None)
    flag("--format", choices=("csv", "json"), default=None)
    flag("--out", default="-", help="output path, '-' for stdout")
    flag("--config", default=None, help="JSON file of flag-name/value pairs")

    parser = argparse.ArgumentParser(prog="smallcell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="metrics over a parameter grid")
    sub.add_parser("sweep", parents=[common], help="metrics along exactly one axis")
    sub.add_parser("optimize", parents=[common], help="energy-optimal density and antennas")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo vs analytic success")
    return parser


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold one flat object")
    out = {}
    for key, value in data.items():
        norm = key.lstrip("-").replace("-", "_")
        if norm not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(value, (dict, list)):
            raise UsageError(f"config key {key!r} must be a scalar")
        out[norm] = str(value)
    return out


def resolve(args):
    """Merge defaults, config file and flags into one string-valued mapping.

    The BS density is given either as lambda_b or as rho.  The highest
    layer that sets either one decides; setting both in that layer is a
    usage error.
    """
    from_file = load_config_file(args.config) if args.config else {}
    given = {k: getattr(args, k) for k in DEFAULTS if getattr(args, k, None) is not None}
    conf = dict(DEFAULTS)
    conf.update(COMMAND_DEFAULTS[args.command])
    conf.update(from_file)
    conf.update(given)
    for layer in (given, from_file):
        chosen = [k for k in ("lambda_b", "rho") if k in layer]
        if len(chosen) == 2:
            raise UsageError("give the BS density as lambda-b or rho, not both")
        if chosen:
            other = "rho" if chosen[0] == "lambda_b" else "lambda_b"
            conf[other] = None
            conf[chosen[0]] = layer[chosen[0]]
            break
    if conf["lambda_b"] is None and conf["rho"] is None:
        conf["lambda_b"] = "1e-4"
    return conf


def _densities(conf):
    if conf["rho"] is not None:
        return "rho", parse_values(conf["rho"], "rho")
    return "lambda_b", parse_values(conf["lambda_b"], "lambda_b")


def _power(conf):
    return PowerModel(eta=parse_single(conf["eta"], "eta"), P_t=parse_single(conf["pt"], "pt"),
                      P_c=parse_single(conf["pc"], "pc"), P_0=parse_single(conf["p0"], "p0"))


def _scalars(conf):
    return {
        "lambda_u": parse_single(conf["lambda_u"], "lambda_u"),
        "mu": parse_single(conf["mu"], "mu"),
        "alpha": parse_single(conf["alpha"], "alpha"),
    }


def _analytic_row(alpha, gamma_db, M, lambda_b, lambda_u, mu, power):
    channel = ChannelParams(alpha, 10.0 ** (gamma_db / 10.0), M)
    deploy = DeploymentParams(lambda_b, lambda_u, mu)
    rep = metric_report(channel, deploy, power)
    ru = asymptotic_ratio_ru(channel, rep.p_a)
    row = {"lambda_b": lambda_b, "lambda_u": lambda_u, "rho": deploy.rho, "M": M,
           "alpha": alpha, "gamma_db": gamma_db, "regime": density_regime(deploy.rho)}
    row.update(rep.as_dict())
    row["r_u"] = ru
    # Predicted per-antenna slope of log10 p_out for large M.
    row["ru_slope"] = -math.log10(ru)
    return row


def _grid_axes(conf):
    s = _scalars(conf)
    dens_name, dens = _densities(conf)
    axes = {
        dens_name: dens,
        "antennas": parse_values(conf["antennas"], "antennas", integer=True),
        "gamma_db": parse_values(conf["gamma_db"], "gamma_db"),
    }
    return s, dens_name, axes


def _rows_for(conf, combos, dens_name):
    s = _scalars(conf)
    power = _power(conf)
    rows = []
    for dens, M, gdb in combos:
        lb = dens * s["lambda_u"] if dens_name == "rho" else dens
        rows.append(_analytic_row(s["alpha"], gdb, M, lb, s["lambda_u"], s["mu"], power))
    return rows


def cmd_analyze(conf):
    _, dens_name, axes = _grid_axes(conf)
    combos = itertools.product(axes[dens_name], axes["antennas"], axes["gamma_db"])
    return _rows_for(conf, combos, dens_name)


def cmd_sweep(conf):
    _, dens_name, axes = _grid_axes(conf)
    swept = [name for name, vals in axes.items() if len(vals) > 1]
    if len(swept) != 1:
        raise UsageError("sweep needs exactly one axis with several values "
                         f"(one of {', '.join(SWEEP_AXES)}); got {swept or 'none'}")
    combos = itertools.product(axes[dens_name], axes["antennas"], axes["gamma_db"])
    rows = _rows_for(conf, combos, dens_name)
    for row in rows:
        row["swept"] = swept[0]
    return rows


def cmd_optimize(conf):
    s = _scalars(conf)
    power = _power(conf)
    gamma_hat = 10.0 ** (parse_single(conf["gamma_db"], "gamma_db") / 10.0)
    bound = conf["bound"]
    rows = []
    for M in parse_values(conf["antennas"], "antennas", integer=True):
        channel = ChannelParams(s["alpha"], gamma_hat, M)
        opt = optimal_bs_density(channel, power, s["lambda_u"], s["mu"], bound)
        g_p0 = gamma_p0(channel)
        share = power.P_0 / power.p_bs(M)
        row = {"section": "density", "M": M, "bound": bound, "gamma_p0": g_p0,
               "p0_share": share,
               "densification_never_helps": share > g_p0}
        if isinstance(opt, MonotoneDecreasing):
            row.update({"density_regime": "monotone-decreasing", "lambda_b_star": math.nan,
                        "rho_star": math.nan, "p_a_star": opt.p_a_star, "B": opt.B,
                        "eta_EE_star": math.nan, "eta_EE_exact": math.nan,
                        "printed_lambda_b": math.nan, "note": ""})
        else:
            row.update({"density_regime": "interior-optimum" if not opt.unbounded else "unbounded",
                        "lambda_b_star": opt.lambda_b_star, "rho_star": opt.rho_star,
                        "p_a_star": opt.p_a_star, "B": opt.B, "eta_EE_star": opt.eta_EE_star,
                        "eta_EE_exact": opt.eta_EE_exact,
                        "printed_lambda_b": opt.printed_lambda_b, "note": "; ".join(opt.notes)})
        rows.append(row)
    # Antenna optimum at each requested density.
    _, dens_name, axes = _grid_axes(conf)
    channel1 = ChannelParams(s["alpha"], gamma_hat, 1)
    g_pc = gamma_pc(channel1, power)
    for dens in axes[dens_name]:
        lb = dens * s["lambda_u"] if dens_name == "rho" else dens
        deploy = DeploymentParams(lb, s["lambda_u"], s["mu"])
        ant = optimal_antennas(channel1, deploy, power)
        rows.append({"section": "antennas", "lambda_b": lb, "M_star": ant.M_star,
                     "M_star_saturated": ant.saturated,
                     "gamma_pc": g_pc, "P_c": power.P_c,
                     "single_antenna_optimal": power.P_c >= g_pc,
                     "eta_EE": float(ant.eta_EE[ant.M_star - 1])})
    return rows


def cmd_simulate(conf):
    s = _scalars(conf)
    power = _power(conf)
    trials = parse_single(conf["trials"], "trials", integer=True)
    if trials < 1:
        raise UsageError("--trials must be at least 1")
    seed = parse_single(conf["seed"], "seed", integer=True)
    workers = parse_single(conf["workers"], "workers", integer=True)
    window = parse_single(conf["window"], "window")
    noise = dbm_to_watts(parse_single(conf["noise_dbm"], "noise_dbm"))
    gamma_db = parse_single(conf["gamma_db"], "gamma_db")
    _, dens_name, axes = _grid_axes(conf)
    rows = []
    for dens, M in itertools.product(axes[dens_name], axes["antennas"]):
        lb = dens * s["lambda_u"] if dens_name == "rho" else dens
        channel = ChannelParams(s["alpha"], 10.0 ** (gamma_db / 10.0), M)
        deploy = DeploymentParams(lb, s["lambda_u"], s["mu"])
        cfg = SimConfig(channel, deploy, power, window_side=window, trials=trials, seed=seed,
                        noise_power=noise, layout=conf["layout"])
        est = estimate(cfg, workers=workers)
        analytic = success_probability(channel, deploy.p_a)
        lo95, hi95 = est.ps_interval(0.95)
        lo, hi = est.ps_interval(SIM_CONFIDENCE)
        rows.append({
            "layout": conf["layout"], "lambda_b": lb, "M": M, "trials": est.trials_used,
            "p_s_hat": est.p_s_hat, "ci95_low": lo95, "ci95_high": hi95,
            "ci99_low": lo, "ci99_high": hi, "p_s_analytic": analytic,
            "gap": abs(est.p_s_hat - analytic), "within_ci": lo <= analytic <= hi,
            "p_a_hat": est.p_a_hat, "p_a_analytic": deploy.p_a,
            "eta_EE_hat": simulated_energy_efficiency(est, cfg),
            "mean_sinr_db": est.mean_sinr_db, "clamped_distances": est.clamped_distances,
            "no_interference_samples": est.no_interference_samples,
            "density_correction": est.density_correction,
        })
    return rows


COMMANDS = {"analyze": cmd_analyze, "sweep": cmd_sweep, "optimize": cmd_optimize,
            "simulate": cmd_simulate}


def format_value(v):
    """Text form shared by CSV and JSON so both carry identical values."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{SIG_DIGITS}g}"
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan; keep them as the same text CSV uses.
        return float(f"{v:.{SIG_DIGITS}g}") if math.isfinite(v) else format_value(v)
    return v


def columns_of(rows):
    cols = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


def header_name(col):
    unit = UNITS.get(col)
    return f"{col} [{unit}]" if unit else col


def render(rows, meta, fmt):
    cols = columns_of(rows)
    if fmt == "json":
        body = {"meta": dict(meta, units={c: UNITS[c] for c in cols if c in UNITS}),
                "rows": [{c: _json_value(r.get(c, "")) for c in cols} for r in rows]}
        return json.dumps(body, indent=2) + "\n"
    buf = io.StringIO()
    for key in ("tool", "version", "command", "seed"):
        buf.write(f"# {key}: {meta[key]}\n")
    buf.write(f"# config: {json.dumps(meta['config'], sort_keys=True)}\n")
    buf.write(",".join(header_name(c) for c in cols) + "\n")
    for r in rows:
        buf.write(",".join(format_value(r[c]) if c in r else "" for c in cols) + "\n")
    return buf.getvalue()


def write_output(text, path):
    """Write the whole file at once, replacing any previous content."""
    if path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".smallcell-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with code 2 on bad flags
    try:
        conf = resolve(args)
        fmt = conf["format"]
        if fmt is None:
            fmt = "json" if args.out.lower().endswith(".json") else "csv"
        if fmt not in ("csv", "json"):
            raise UsageError(f"unknown format {fmt!r}")
        rows = COMMANDS[args.command](conf)
        meta = {"tool": "smallcell", "version": __version__, "command": args.command,
                "seed": conf["seed"] if args.command == "simulate" else None,
                "config": {k: v for k, v in conf.items() if v is not None}}
        write_output(render(rows, meta, fmt), args.out)
    except (UsageError, ValueError) as exc:
        print(f"smallcell: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"smallcell: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"smallcell: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
