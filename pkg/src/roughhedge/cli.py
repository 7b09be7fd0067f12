"""Batch command-line front end.

Every command writes its outputs plus ``manifest.json`` into the output
directory (``--out``, else ``$ROUGHHEDGE_OUT``, else ``./roughhedge-out``).
``rerun MANIFEST`` replays a manifest and reproduces the outputs byte for byte.

Exit codes: 0 success, 1 computation or input failure (JSON error on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (BacktestConfig, SyntheticDataset, generate_synthetic_dataset, hurst_sweep,
                       run_backtest_suite)
from .core import DAYS_PER_YEAR, WEEKDAYS, BusinessCalendar, DatedSeries, ForwardVarianceCurve, working_day_offset
from .estimators import DEFAULT_LAGS, estimate_hurst, estimate_sigma_rfsv
from .fbm import FbmParams
from .io import (dump_json, export_fvs_csv, export_vix_csv, ingest_fvs_csv, ingest_options_csv,
                 ingest_vix_csv, sha256_file, write_csv)
from .models import MODEL_TAGS
from .replication import PayoffSpec, forward_variance_from_swaps, static_replication_price
from .simulator import (RoughBergomiKernel, delta_hedge_experiment, log_contract_replication_experiment,
                        ueq_panel)

OUT_ENV = "ROUGHHEDGE_OUT"
DEFAULT_OUT = "roughhedge-out"
MANIFEST_NAME = "manifest.json"

log = logging.getLogger("roughhedge")


class UsageError(Exception):
    pass


def _hurst_arg(text: str):
    if text == "window":
        return None
    try:
        h = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1) or 'window', got {text!r}") from None
    if not 0 < h < 1:
        raise argparse.ArgumentTypeError(f"hurst must lie in (0, 1), got {h}")
    return h


def _date_arg(text: str) -> str:
    try:
        return dt.date.fromisoformat(text).isoformat()
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an ISO-8601 date, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed_arg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _add_common(p: argparse.ArgumentParser, seed: bool = False):
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    if seed:
        p.add_argument("--seed", type=_seed_arg, default=0, help="64-bit seed for all randomness")


def _add_protocol(p: argparse.ArgumentParser, model: bool = True):
    if model:
        p.add_argument("--model", choices=MODEL_TAGS, default="rfsv")
    p.add_argument("--hurst", type=_hurst_arg, default=0.377,
                   help="fixed Hurst exponent, or 'window' to re-estimate on every window")
    p.add_argument("--window", type=_positive_int, default=88, help="estimation window in business days")
    p.add_argument("--hedge-days", type=_positive_int, default=29)
    p.add_argument("--maturity-days", type=_positive_int, default=32)
    p.add_argument("--sigma-delta", type=_positive_int, default=1, help="lag used for the sigma estimate")


def _add_data(p: argparse.ArgumentParser):
    p.add_argument("--vix", required=True, help="CSV with header date,close")
    p.add_argument("--fvs", required=True, help="CSV with header date,maturity_date,forward_variance")
    p.add_argument("--calendar", help="holiday file, one ISO date per line")
    p.add_argument("--vix-units", choices=("auto", "decimal", "points"), default="auto",
                   help="closes quoted as 0.20 (decimal) or 20 (points); auto treats a median above 2 as points")
    p.add_argument("--starts-from", type=_date_arg)
    p.add_argument("--starts-to", type=_date_arg)
    p.add_argument("--stride", type=_positive_int, default=1, help="use every n-th admissible start date")
    p.add_argument("--jobs", type=int, default=1, help="parallel episodes (joblib)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughhedge", description="Hedging VIX options with forward variance swaps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("estimate-hurst", help="roughness fit of log VIX (moment scaling)")
    p.add_argument("--vix", required=True)
    p.add_argument("--max-lag", type=_positive_int, default=len(DEFAULT_LAGS))
    p.add_argument("--hurst", type=_hurst_arg, default="window",
                   help="Hurst value for the sigma estimate; default uses the fitted value")
    p.add_argument("--halves", action="store_true", help="also fit the first and second halves")
    _add_common(p)

    p = sub.add_parser("backtest", help="rolling hedge back-test for one model")
    _add_data(p)
    _add_protocol(p)
    _add_common(p)

    p = sub.add_parser("compare", help="back-test all three models on the same episodes")
    _add_data(p)
    _add_protocol(p, model=False)
    _add_common(p)

    p = sub.add_parser("sweep-h", help="hedged RMSE of the rough model over a Hurst grid")
    _add_data(p)
    _add_protocol(p, model=False)
    p.add_argument("--h-from", type=float, default=0.2)
    p.add_argument("--h-to", type=float, default=0.5)
    p.add_argument("--h-step", type=float, default=0.01)
    _add_common(p)

    p = sub.add_parser("simulate", help="forward variance model experiments")
    p.add_argument("--experiment", choices=("ueq", "log-contract", "delta-hedge"), required=True)
    p.add_argument("--hurst", type=_hurst_arg, default=0.1)
    p.add_argument("--eta", type=float, default=1.0, help="vol of variance (rough Bergomi kernel)")
    p.add_argument("--sigma", type=float, default=0.5, help="vol of log VIX (delta-hedge)")
    p.add_argument("--level", type=float, default=0.2, help="VIX level C (delta-hedge)")
    p.add_argument("--rho", type=float, default=-0.7)
    p.add_argument("--xi", type=float, default=0.04, help="flat initial forward variance")
    p.add_argument("--horizon", type=float, default=0.2, help="maturity in years")
    p.add_argument("--steps", type=_positive_int, default=504)
    p.add_argument("--paths", type=_positive_int, default=500)
    _add_common(p, seed=True)

    p = sub.add_parser("synthesize", help="synthetic VIX and forward variance swap CSVs")
    p.add_argument("--days", type=_positive_int, default=2000)
    p.add_argument("--hurst", type=_hurst_arg, default=0.377)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--level", type=float, default=0.2, help="VIX scale C")
    p.add_argument("--substeps", type=_positive_int, default=10)
    p.add_argument("--first-date", type=_date_arg, default="2001-01-02")
    p.add_argument("--window", type=_positive_int, default=88)
    p.add_argument("--hedge-days", type=_positive_int, default=29)
    p.add_argument("--maturity-days", type=_positive_int, default=32)
    _add_common(p, seed=True)

    p = sub.add_parser("replicate", help="variance swaps and forward variance from an option grid")
    p.add_argument("--options", required=True, help="CSV with header date,maturity_date,strike,call_price,put_price")
    p.add_argument("--calendar")
    _add_common(p)

    p = sub.add_parser("rerun", help="replay a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's directory)")
    return parser


# ---------------------------------------------------------------------------
# helpers

def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _calendar(path) -> BusinessCalendar:
    return BusinessCalendar.from_file(path) if path else WEEKDAYS


def _config(args, model: str) -> BacktestConfig:
    return BacktestConfig(estimation_window=args.window, hedge_horizon=args.hedge_days,
                          option_maturity=args.maturity_days, model=model, fixed_hurst=args.hurst,
                          sigma_delta=args.sigma_delta)


def _load_market(args):
    cal = _calendar(args.calendar)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vix = ingest_vix_csv(args.vix)
    for w in caught:
        log.warning("%s", w.message)
    units = args.vix_units
    if units == "auto":
        units = "points" if float(np.median(vix.values)) > 2.0 else "decimal"
    if units == "points":
        log.info("VIX closes read as index points; dividing by 100")
        vix = DatedSeries(vix.dates, vix.values / 100.0, vix.kind)
    fvs = ingest_fvs_csv(args.fvs)
    return vix, fvs, cal


def _starts(args, vix, fvs, cfg: BacktestConfig, cal) -> list:
    lo = dt.date.fromisoformat(args.starts_from) if args.starts_from else None
    hi = dt.date.fromisoformat(args.starts_to) if args.starts_to else None
    have = set(fvs.maturities)
    out = []
    for i, d in enumerate(vix.dates):
        if i < cfg.estimation_window or (lo and d < lo) or (hi and d > hi):
            continue
        if working_day_offset(d, cfg.option_maturity, cal) in have:
            out.append(d)
    out = out[:: args.stride]
    if not out:
        raise ValueError("no admissible start dates (check --starts-from/--starts-to and the forward variance file)")
    return out


def _episode_rows(records):
    return [(r.start_date.isoformat(), r.model, r.pnl_hedged, r.pnl_unhedged) for r in records]


def _block(res) -> dict:
    return {"hedge": res.stats_hedged.as_dict(), "no_hedge": res.stats_unhedged.as_dict(),
            "red_factor": res.red_factor, "episodes": len(res.records), "failures": len(res.failures)}


def _inputs(args, *names) -> dict:
    out = {}
    for n in names:
        path = getattr(args, n, None)
        if path:
            out[n] = {"path": str(Path(path).resolve()), "sha256": sha256_file(path)}
    return out


# ---------------------------------------------------------------------------
# commands; each returns (outputs written, input record, seed)

def cmd_estimate_hurst(args, out: Path):
    vix = ingest_vix_csv(args.vix)
    lags = tuple(range(1, args.max_lag + 1))
    fit = estimate_hurst(vix, lags)
    h_sigma = fit.hurst if args.hurst is None else args.hurst
    sigma = estimate_sigma_rfsv(vix, h_sigma)
    lx = np.log(np.asarray(fit.lags_used, dtype=float))
    rows = [(int(l), m, float(a), float(math.log(m)), float(fit.intercept + 2 * fit.hurst * a))
            for l, m, a in zip(fit.lags_used, fit.moments, lx)]
    write_csv(out / "hurst_fit.csv", ("lag", "m2", "log_lag", "log_m2", "fitted_log_m2"), rows)
    summary = {"hurst": fit.hurst, "intercept": fit.intercept, "r_squared": fit.r_squared,
               "sigma": sigma, "sigma_hurst": h_sigma, "n_obs": len(vix),
               "first_date": vix.dates[0], "last_date": vix.dates[-1]}
    if args.halves:
        mid = len(vix) // 2
        summary["first_half_hurst"] = estimate_hurst(vix.values[:mid], lags).hurst
        summary["second_half_hurst"] = estimate_hurst(vix.values[mid:], lags).hurst
    dump_json(summary, out / "hurst_summary.json")
    return ["hurst_fit.csv", "hurst_summary.json"], _inputs(args, "vix"), None


def cmd_backtest(args, out: Path):
    vix, fvs, cal = _load_market(args)
    cfg = _config(args, args.model)
    starts = _starts(args, vix, fvs, cfg, cal)
    res = run_backtest_suite(vix, fvs, starts, cfg, cal, n_jobs=args.jobs)
    write_csv(out / "episodes.csv", ("start_date", "model", "pnl_hedged", "pnl_unhedged"), _episode_rows(res.records))
    write_csv(out / "failures.csv", ("start_date", "reason"), [(d.isoformat(), m) for d, m in res.failures])
    dump_json({"config": cfg.as_dict(), args.model: _block(res)}, out / "summary.json")
    return ["episodes.csv", "failures.csv", "summary.json"], _inputs(args, "vix", "fvs", "calendar"), None


def cmd_compare(args, out: Path):
    vix, fvs, cal = _load_market(args)
    base = _config(args, "rfsv")
    starts = _starts(args, vix, fvs, base, cal)
    summary = {"config": {k: v for k, v in base.as_dict().items() if k != "model"}}
    rows, fails = [], []
    for tag in MODEL_TAGS:
        res = run_backtest_suite(vix, fvs, starts, replace(base, model=tag), cal, n_jobs=args.jobs)
        summary[tag] = _block(res)
        rows += _episode_rows(res.records)
        fails += [(d.isoformat(), tag, m) for d, m in res.failures]
    write_csv(out / "episodes.csv", ("start_date", "model", "pnl_hedged", "pnl_unhedged"), rows)
    write_csv(out / "failures.csv", ("start_date", "model", "reason"), fails)
    dump_json(summary, out / "summary.json")
    return ["episodes.csv", "failures.csv", "summary.json"], _inputs(args, "vix", "fvs", "calendar"), None


def cmd_sweep_h(args, out: Path):
    if not (0 < args.h_from <= args.h_to < 1) or args.h_step <= 0:
        raise UsageError("need 0 < --h-from <= --h-to < 1 and --h-step > 0")
    vix, fvs, cal = _load_market(args)
    cfg = _config(args, "rfsv")
    starts = _starts(args, vix, fvs, cfg, cal)
    n = int(math.floor((args.h_to - args.h_from) / args.h_step + 1e-9)) + 1
    grid = [round(args.h_from + i * args.h_step, 10) for i in range(n)]
    sweep = hurst_sweep(vix, fvs, starts, cfg, grid, cal)
    write_csv(out / "sweep_h.csv", ("hurst", "rmse_hedged"), sweep)
    best = min(sweep, key=lambda r: r[1])
    dump_json({"argmin_hurst": best[0], "min_rmse": best[1], "n_starts": len(starts)}, out / "sweep_summary.json")
    return ["sweep_h.csv", "sweep_summary.json"], _inputs(args, "vix", "fvs", "calendar"), None


def cmd_simulate(args, out: Path):
    h = 0.1 if args.hurst is None else args.hurst
    curve = ForwardVarianceCurve.flat(args.xi, args.horizon)
    kernel = RoughBergomiKernel(args.eta, h)
    if args.experiment == "ueq":
        panel = ueq_panel(kernel, args.rho, curve, args.horizon, args.steps, args.paths, args.seed,
                          t_max=args.horizon / 2)
        slope, r2 = panel.regression()
        n_show = min(args.paths, 20)
        rows = [(p, k, float(panel.predicted[p, k]), float(panel.dU[p, k]))
                for p in range(n_show) for k in range(panel.dU.shape[1])]
        write_csv(out / "ueq_points.csv", ("path", "step", "predicted", "dU"), rows)
        summary = {"slope": slope, "r_squared": r2, "points": int(panel.dU.size)}
        files = ["ueq_points.csv"]
    elif args.experiment == "log-contract":
        err = log_contract_replication_experiment(kernel, args.rho, curve, args.horizon, args.steps,
                                                  args.paths, args.seed)
        write_csv(out / "replication_error.csv", ("path", "error"), enumerate(map(float, err)))
        summary = {"l2_error": float(np.sqrt(np.mean(err ** 2))), "mean_error": float(err.mean())}
        files = ["replication_error.csv"]
    else:
        exp = delta_hedge_experiment(FbmParams(h, args.sigma), args.level, None, args.horizon, args.steps,
                                     args.paths, args.seed)
        write_csv(out / "hedge_pnl.csv", ("path", "pnl_hedged", "pnl_unhedged"),
                  ((i, float(a), float(b)) for i, (a, b) in enumerate(zip(exp.hedged, exp.unhedged))))
        summary = {"std_hedged": float(exp.hedged.std()), "std_unhedged": float(exp.unhedged.std()),
                   "mean_hedged": float(exp.hedged.mean())}
        files = ["hedge_pnl.csv"]
    summary["experiment"] = args.experiment
    dump_json(summary, out / "simulation_summary.json")
    return files + ["simulation_summary.json"], {}, args.seed


def cmd_synthesize(args, out: Path):
    if args.hurst is None:
        raise UsageError("synthesize needs a numeric --hurst")
    cfg = BacktestConfig(estimation_window=args.window, hedge_horizon=args.hedge_days,
                         option_maturity=args.maturity_days)
    ds: SyntheticDataset = generate_synthetic_dataset(FbmParams(args.hurst, args.sigma), args.level, args.days,
                                                      cfg, args.seed, substeps=args.substeps,
                                                      first_date=dt.date.fromisoformat(args.first_date))
    export_vix_csv(ds.vix, out / "vix.csv")
    export_fvs_csv(ds.fvs, out / "fvs.csv")
    return ["vix.csv", "fvs.csv"], {}, args.seed


def cmd_replicate(args, out: Path):
    cal = _calendar(args.calendar)
    grids = ingest_options_csv(args.options)
    swaps, notes = [], []
    for g in grids:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            u = static_replication_price(g, PayoffSpec.linear())
        notes += [(g.date.isoformat(), g.maturity.isoformat(), str(w.message)) for w in caught]
        theta = cal.count(g.date, g.maturity) / DAYS_PER_YEAR
        swaps.append((g.date, g.maturity, theta, float(u)))
    write_csv(out / "variance_swaps.csv", ("date", "maturity_date", "theta", "swap_value"),
              [(d.isoformat(), m.isoformat(), th, u) for d, m, th, u in swaps])
    curve_rows = []
    for d in sorted({s[0] for s in swaps}):
        rows = [s for s in swaps if s[0] == d]
        if len(rows) < 2:
            notes.append((d.isoformat(), "", "single maturity; no forward variance"))
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            curve = forward_variance_from_swaps([r[2] for r in rows], [r[3] for r in rows])
        notes += [(d.isoformat(), "", str(w.message)) for w in caught]
        curve_rows += [(d.isoformat(), r[1].isoformat(), float(v)) for r, v in zip(rows, curve.values)]
    write_csv(out / "forward_variance_curve.csv", ("date", "maturity_date", "forward_variance"), curve_rows)
    write_csv(out / "replication_warnings.csv", ("date", "maturity_date", "message"), notes)
    return (["variance_swaps.csv", "forward_variance_curve.csv", "replication_warnings.csv"],
            _inputs(args, "options", "calendar"), None)


COMMANDS = {
    "estimate-hurst": cmd_estimate_hurst,
    "backtest": cmd_backtest,
    "compare": cmd_compare,
    "sweep-h": cmd_sweep_h,
    "simulate": cmd_simulate,
    "synthesize": cmd_synthesize,
    "replicate": cmd_replicate,
}

_NOT_CONFIG = {"command", "out", "verbose"}


def _manifest(args, out: Path, outputs, inputs, seed) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}
    return {"command": args.command, "config": config, "inputs": inputs, "output_dir": str(out.resolve()),
            "outputs": sorted(outputs), "seed": seed, "tool_version": __version__}


def _run(args) -> int:
    out = _out_dir(args)
    outputs, inputs, seed = COMMANDS[args.command](args, out)
    dump_json(_manifest(args, out, outputs, inputs, seed), out / MANIFEST_NAME)
    print(json.dumps({"status": "ok", "command": args.command, "out": str(out)}))
    return 0


def _rerun(parser, args) -> int:
    path = Path(args.manifest)
    try:
        man = json.loads(path.read_text())
        command, config = man["command"], dict(man["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise ValueError(f"unreadable manifest {path}: {exc}") from None
    if man.get("tool_version") != __version__:
        log.warning("manifest written by version %s, running %s", man.get("tool_version"), __version__)
    for name, rec in man.get("inputs", {}).items():
        if sha256_file(rec["path"]) != rec["sha256"]:
            raise ValueError(f"input {name} ({rec['path']}) changed since the manifest was written")
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r} in manifest")
    # fill defaults for any option missing from an older manifest
    defaults = parser.parse_args(_minimal_argv(command, config))
    ns = argparse.Namespace(**{**vars(defaults), **config})
    ns.command = command
    ns.out = args.out or str(path.resolve().parent)
    return _run(ns)


def _minimal_argv(command: str, config: dict) -> list:
    argv = [command]
    for key in ("vix", "fvs", "options", "experiment"):
        if key in config and config[key] is not None:
            argv += [f"--{key}", str(config[key])]
    return argv


def _fail(exc: BaseException, command) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "command": command}
    print(json.dumps(err), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            return _rerun(parser, args)
        return _run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"roughhedge: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, ArithmeticError, RuntimeError, OSError) as exc:
        return _fail(exc, args.command)


if __name__ == "__main__":
    sys.exit(main())
