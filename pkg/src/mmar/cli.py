"""Command line interface.

Subcommands: simulate, fit, select, predict, diagnose, replicate. Reports go
to stdout and, with ``--out DIR``, to JSON/CSV files in that directory. Exit
codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .estimate import EmOptions, fit_multistart
from .exceptions import DataError, MmarError
from .forecast import conditional_mean, predictive_marginal
from .inference import derived_standard_errors, infer, wald_intervals
from .io import (Preprocessing, parse_config, preprocess, read_data_csv,
                 write_data_csv, write_labels_csv)
from .model import ThetaLayout, load_model, model_from_dict, model_to_dict
from .replicate import run_coverage_experiment, run_selection_experiment, worker_count
from .scenarios import SCENARIOS, frozen_scenario
from .selection import select_grid, select_stepwise
from .simulate import simulate
from .stationarity import build_report

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_json(path, payload) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as handle:
        json.dump(payload, handle, indent=1)
    os.replace(tmp, path)


def _ensure_out(directory):
    if directory:
        os.makedirs(directory, exist_ok=True)
    return directory


def _int_list(text):
    return [int(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _float_list(text):
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _em_options(args, config) -> EmOptions:
    merged = dict(config)
    for key in ("seed", "n_starts", "max_em_iters", "em_rel_tol",
                "max_inner_iters", "inner_rel_tol", "ridge_jitter"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    kwargs = {k: merged[k] for k in
              ("seed", "n_starts", "max_em_iters", "em_rel_tol",
               "max_inner_iters", "inner_rel_tol", "ridge_jitter") if k in merged}
    return EmOptions(**kwargs)


def _load_fit_or_model(path):
    """A model file may be a bare model or a fit report wrapping one."""
    with open(path) as handle:
        payload = json.load(handle)
    if "model" in payload and "version" not in payload:
        transform = payload.get("preprocessing")
        return (model_from_dict(payload["model"]),
                Preprocessing.from_dict(transform) if transform else None)
    return model_from_dict(payload), None


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    result = simulate(model, args.n_obs, burn_in=args.burn_in, seed=args.seed)
    out = _ensure_out(args.out) or "."
    data_path = os.path.join(out, "simulated.csv")
    labels_path = os.path.join(out, "labels.csv")
    write_data_csv(data_path, result.series)
    write_labels_csv(labels_path, result.labels)
    print(f"wrote {data_path} and {labels_path} "
          f"(T={result.series.n_obs}, burn_in={result.burn_in}, seed={result.seed})")
    return EXIT_OK


def _coefficient_table(model, report, inference) -> str:
    """Aligned text tables of the fitted coefficient matrices with marks."""
    layout = ThetaLayout(model.spec)
    theta = inference.theta_hat.values
    se = inference.standard_errors
    _, _, marks = wald_intervals(inference, 0.95)
    extra = derived_standard_errors(inference)
    lines = []

    def fmt_block(label, values, errors, block_marks):
        lines.append(label)
        for row in range(values.shape[0]):
            cells = []
            for col in range(values.shape[1]):
                cells.append(f"{values[row, col]:9.4f} ({errors[row, col]:.4f}){block_marks[row, col]}")
            lines.append("  " + "  ".join(cells))

    m, n = model.spec.rows, model.spec.cols
    for k, comp in enumerate(model.components):
        sl = layout.component[k]
        lines.append(f"component {k + 1}: alpha = {model.alphas[k]:.4f}")
        for i in range(comp.order):
            a_sl = sl["A"][i]
            vals = theta[a_sl].reshape((m, m), order="F")
            errs = se[a_sl].reshape((m, m), order="F")
            mk = marks[a_sl].reshape((m, m), order="F")
            fmt_block(f" A lag {i + 1}", vals, errs, mk)
            b_sl = sl["B"][i]
            b_vals = np.empty(n * n)
            b_errs = np.empty(n * n)
            b_marks = np.empty(n * n, dtype=object)
            b_vals[1:] = theta[b_sl]
            b_errs[1:] = se[b_sl]
            b_marks[1:] = marks[b_sl]
            b_vals[0] = comp.B[i][0, 0]
            b_errs[0] = extra["B_lead"][(k, i)]
            b_marks[0] = "+"  # positive by the sign normalization
            fmt_block(f" B lag {i + 1}", b_vals.reshape((n, n), order="F"),
                      b_errs.reshape((n, n), order="F"),
                      b_marks.reshape((n, n), order="F"))
        c_sl = sl["C"]
        fmt_block(" C", theta[c_sl].reshape((m, n), order="F"),
                  se[c_sl].reshape((m, n), order="F"),
                  marks[c_sl].reshape((m, n), order="F"))
    return "\n".join(lines)


def cmd_fit(args) -> int:
    series, row_labels, col_labels = read_data_csv(args.data)
    config = parse_config(args.config) if args.config else {}
    n_components = args.n_components or config.get("n_components")
    order = args.order or config.get("order")
    if n_components is None or order is None:
        raise DataError("fit needs --k and --p (or n_components/order in the config)")
    center = config.get("center", False) if args.center is None else args.center
    scale = config.get("scale", False) if args.scale is None else args.scale
    transform = None
    if center or scale:
        series, transform = preprocess(series, center=center, scale=scale)
    opts = _em_options(args, config)

    from .model import MmarSpec

    spec = MmarSpec(rows=series.rows, cols=series.cols,
                    n_components=int(n_components),
                    orders=(int(order),) * int(n_components))
    report = fit_multistart(series, spec, opts, workers=worker_count(None))
    inference = infer(report.model, series)
    table = _coefficient_table(report.model, report, inference)
    stationarity = build_report(report.model)

    print(f"log-likelihood {report.loglik:.4f} after {report.n_iters} iterations "
          f"(converged={report.converged}, starts={len(report.start_logliks)})")
    print(table)
    payload = {
        "model": model_to_dict(report.model),
        "loglik": report.loglik,
        "loglik_trace": report.loglik_trace.tolist(),
        "converged": report.converged,
        "n_iters": report.n_iters,
        "start_index": report.start_index,
        "start_logliks": list(report.start_logliks),
        "flags": list(report.flags),
        "seed": opts.seed,
        "row_labels": row_labels,
        "col_labels": col_labels,
        "standard_errors": inference.standard_errors.tolist(),
        "stationarity": stationarity.as_dict(),
        "preprocessing": transform.to_dict() if transform else None,
    }
    if args.out:
        out = _ensure_out(args.out)
        _write_json(os.path.join(out, "fit.json"), payload)
        with open(os.path.join(out, "coefficients.txt"), "w") as handle:
            handle.write(table + "\n")
        print(f"wrote {os.path.join(out, 'fit.json')}")
    return EXIT_OK


def cmd_select(args) -> int:
    series, _, _ = read_data_csv(args.data)
    config = parse_config(args.config) if args.config else {}
    center = config.get("center", False) if args.center is None else args.center
    scale = config.get("scale", False) if args.scale is None else args.scale
    if center or scale:
        series, _ = preprocess(series, center=center, scale=scale)
    opts = _em_options(args, config)
    k_range = args.k_range or config.get("k_range")
    p_range = args.p_range or config.get("p_range")
    if not k_range or not p_range:
        raise DataError("select needs --k-range and --p-range")
    criterion = (args.criterion or config.get("criterion") or "bic").lower()
    search = select_stepwise if args.stepwise else select_grid
    table, winner, best = search(series, k_range, p_range, criterion, opts,
                                 workers=worker_count(None))
    print(table.to_csv(), end="")
    print(f"winner: K={winner.n_components}, p={winner.order} by {criterion} "
          f"({getattr(winner, criterion):.4f})")
    if args.out:
        out = _ensure_out(args.out)
        with open(os.path.join(out, "selection.csv"), "w") as handle:
            handle.write(table.to_csv())
        _write_json(os.path.join(out, "winner.json"), {
            "criterion": criterion,
            "n_components": winner.n_components,
            "order": winner.order,
            "loglik": winner.loglik,
            "model": model_to_dict(best.model),
        })
    return EXIT_OK


def cmd_predict(args) -> int:
    model, transform = _load_fit_or_model(args.model)
    series, row_labels, col_labels = read_data_csv(args.data)
    values = series.values
    if transform is not None:
        values = transform.transform(values)
    p_max = model.spec.p_max
    if values.shape[1:] != (model.spec.rows, model.spec.cols):
        raise DataError("data dimensions do not match the model")
    holdout = args.holdout
    if holdout < 0 or values.shape[0] < p_max + holdout:
        raise DataError(f"need at least p_max + holdout = {p_max + holdout} "
                        "observations")

    if args.cells == "all":
        cells = [(r, c) for r in range(model.spec.rows)
                 for c in range(model.spec.cols)]
    else:
        cells = [tuple(int(x) for x in tok.split(","))
                 for tok in args.cells.split(";") if tok.strip()]

    # target times to forecast (1-based): the step after the sample, or each
    # of the last `holdout` observed times using only preceding data
    n_obs = values.shape[0]
    if holdout == 0:
        steps = [(n_obs + 1, values[n_obs - p_max:n_obs], None)]
    else:
        steps = [(t + 1, values[t - p_max:t], values[t])
                 for t in range(n_obs - holdout, n_obs)]

    def to_original(matrix):
        return transform.inverse(matrix) if transform is not None else matrix

    out = _ensure_out(args.out)
    lines = ["t,row,col,grid,density,in_hdr"]
    step_reports = []
    errors = []
    for target_t, window, observed in steps:
        point = conditional_mean(model, window)
        point_orig = to_original(point)
        observed_orig = to_original(observed) if observed is not None else None
        if observed is not None:
            diff = point_orig - observed_orig
            errors.append(float(np.sum(diff * diff)))
        cell_reports = []
        for r, c in cells:
            marginal = predictive_marginal(model, window, (r, c),
                                           level=args.level,
                                           grid_size=args.grid_size)
            grid = marginal.grid
            density = marginal.density
            scale_rc = 1.0
            shift = 0.0
            if transform is not None:
                # original units: shift/scale the grid, rescale the density
                if transform.row_scales is not None:
                    scale_rc = float(transform.row_scales[r])
                if transform.cell_means is not None:
                    shift = float(transform.cell_means[r, c])
                grid = grid * scale_rc + shift
                density = density / scale_rc
            inside = marginal.density >= marginal.threshold
            for g, d, flag in zip(grid, density, inside):
                lines.append(f"{target_t},{row_labels[r]},{col_labels[c]},"
                             f"{float(g)!r},{float(d)!r},{int(flag)}")
            hdr = [(float(lo) * scale_rc + shift, float(hi) * scale_rc + shift)
                   for lo, hi in marginal.hdr]
            entry = {"row": row_labels[r], "col": col_labels[c],
                     "point": float(point_orig[r, c]), "hdr": hdr,
                     "level": args.level}
            if observed_orig is not None:
                entry["observed"] = float(observed_orig[r, c])
            cell_reports.append(entry)
            obs_text = ("" if observed_orig is None
                        else f", observed {observed_orig[r, c]:.4f}")
            print(f"t={target_t} ({row_labels[r]}, {col_labels[c]}): point "
                  f"{point_orig[r, c]:.4f}{obs_text}, "
                  f"{int(args.level * 100)}% HDR " + " U ".join(
                      f"[{lo:.4f}, {hi:.4f}]" for lo, hi in hdr))
        step_reports.append({"t": target_t, "cells": cell_reports})
    payload = {"steps": step_reports}
    if errors:
        payload["mspe"] = float(np.mean(errors))
        print(f"mean squared one-step prediction error over {len(errors)} "
              f"steps: {payload['mspe']:.4f}")
    if out:
        with open(os.path.join(out, "predictive.csv"), "w") as handle:
            handle.write("\n".join(lines) + "\n")
        _write_json(os.path.join(out, "prediction.json"), payload)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    model, _ = _load_fit_or_model(args.model)
    if args.lyapunov and args.seed is None:
        raise DataError("--lyapunov needs --seed")
    report = build_report(model, qs=args.q, lyapunov=args.lyapunov,
                          horizon=args.horizon, replications=args.replications,
                          seed=args.seed or 0)
    rows = [
        ("mean stationary", report.mean_stationary, f"radius {report.mean_radius:.4f}"),
        ("second-order stationary", report.second_order_stationary,
         "n/a (mean criterion fails)" if report.second_order_radius is None
         else f"radius {report.second_order_radius:.4f}"),
        ("strict (sufficient)", report.strict_sufficient,
         f"weighted log radius {report.strict_value:.4f}"),
    ]
    for q, (ok, val) in report.qth_moment.items():
        rows.append((f"finite {q:g}th moment (sufficient)", ok,
                     f"weighted radius^q sum {val:.4f}"))
    if report.lyapunov_estimate:
        est, se = report.lyapunov_estimate
        rows.append(("top Lyapunov exponent", est < 0, f"{est:.4f} (se {se:.4f})"))
    width = max(len(r[0]) for r in rows)
    for name, flag, detail in rows:
        print(f"{name:<{width}}  {str(flag):<5}  {detail}")
    for note in report.notes:
        print(f"note: {note}")
    print(json.dumps(report.as_dict()))
    if args.out:
        out = _ensure_out(args.out)
        _write_json(os.path.join(out, "stationarity.json"), report.as_dict())
    return EXIT_OK


def cmd_replicate(args) -> int:
    if args.scenario not in SCENARIOS:
        raise DataError(f"unknown scenario {args.scenario!r}; "
                        f"choose from {sorted(SCENARIOS)}")
    model = frozen_scenario(args.scenario)
    opts = EmOptions(seed=args.seed, max_em_iters=args.max_em_iters or 300,
                     em_rel_tol=args.em_rel_tol or 1e-7)
    workers = worker_count(args.workers)
    if args.mode == "coverage":
        result = run_coverage_experiment(model, args.reps, args.n_obs,
                                         seed=args.seed, opts=opts,
                                         workers=workers)
        print(f"coverage over {result.n_reps - result.n_failed} replications "
              f"({result.n_failed} failed):")
        for name, rate in result.block_coverage.items():
            print(f"  {name:<10} {rate:.3f}")
        for name, rate in result.ellipse_coverage.items():
            print(f"  ellipse {name:<8} {rate:.3f}")
        payload = result.as_dict()
    else:
        result = run_selection_experiment(
            model, args.reps, args.n_obs, k_range=args.k_range,
            p_range=args.p_range, criteria_list=args.criteria, seed=args.seed,
            opts=opts, workers=workers, stepwise=args.stepwise)
        print(f"selection rates over {result.n_reps - result.n_failed} "
              f"replications ({result.n_failed} failed):")
        for crit, table in result.rates.items():
            for (k, p), rate in sorted(table.items()):
                print(f"  {crit:<4} K={k} p={p}: {rate:.3f}")
        payload = result.as_dict()
    if args.out:
        out = _ensure_out(args.out)
        _write_json(os.path.join(out, f"replicate_{args.mode}.json"), payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmar",
        description="Mixture matrix autoregression: simulate, fit, select, "
                    "predict, diagnose, replicate.")
    parser.add_argument("--version", action="version", version=f"mmar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a path from a model file")
    sim.add_argument("--model", required=True)
    sim.add_argument("--n-obs", type=int, required=True, dest="n_obs")
    sim.add_argument("--burn-in", type=int, default=500, dest="burn_in")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=cmd_simulate)

    def add_em_flags(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--n-starts", type=int, default=None, dest="n_starts")
        p.add_argument("--max-em-iters", type=int, default=None, dest="max_em_iters")
        p.add_argument("--em-rel-tol", type=float, default=None, dest="em_rel_tol")
        p.add_argument("--max-inner-iters", type=int, default=None, dest="max_inner_iters")
        p.add_argument("--inner-rel-tol", type=float, default=None, dest="inner_rel_tol")
        p.add_argument("--ridge-jitter", type=float, default=None, dest="ridge_jitter")
        p.add_argument("--center", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--scale", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--out", default=None)

    fit = sub.add_parser("fit", help="fit a model by multi-start EM")
    fit.add_argument("--data", required=True)
    fit.add_argument("--k", type=int, default=None, dest="n_components")
    fit.add_argument("--p", type=int, default=None, dest="order")
    add_em_flags(fit)
    fit.set_defaults(func=cmd_fit)

    sel = sub.add_parser("select", help="information-criterion model search")
    sel.add_argument("--data", required=True)
    sel.add_argument("--k-range", type=_int_list, default=None, dest="k_range")
    sel.add_argument("--p-range", type=_int_list, default=None, dest="p_range")
    sel.add_argument("--criterion", default=None)
    sel.add_argument("--stepwise", action="store_true")
    add_em_flags(sel)
    sel.set_defaults(func=cmd_select)

    pred = sub.add_parser("predict", help="one-step predictive marginals")
    pred.add_argument("--model", required=True,
                      help="model JSON or fit.json produced by `mmar fit`")
    pred.add_argument("--data", required=True)
    pred.add_argument("--cells", default="all",
                      help='"all" or semicolon-separated r,c pairs (0-based)')
    pred.add_argument("--level", type=float, default=0.95)
    pred.add_argument("--grid-size", type=int, default=2048, dest="grid_size")
    pred.add_argument("--holdout", type=int, default=0,
                      help="evaluate one-step forecasts of the last H observed "
                           "times (reports their mean squared error)")
    pred.add_argument("--out", default=None)
    pred.set_defaults(func=cmd_predict)

    diag = sub.add_parser("diagnose", help="stationarity diagnostics")
    diag.add_argument("--model", required=True)
    diag.add_argument("--stationarity", action="store_true", default=True)
    diag.add_argument("--lyapunov", action="store_true")
    diag.add_argument("--q", type=_float_list, default=[2.0, 6.0])
    diag.add_argument("--horizon", type=int, default=2000)
    diag.add_argument("--replications", type=int, default=200)
    diag.add_argument("--seed", type=int, default=None)
    diag.add_argument("--out", default=None)
    diag.set_defaults(func=cmd_diagnose)

    rep = sub.add_parser("replicate", help="Monte-Carlo experiment harness")
    rep.add_argument("--scenario", required=True)
    rep.add_argument("--reps", type=int, required=True)
    rep.add_argument("--n-obs", type=int, required=True, dest="n_obs")
    rep.add_argument("--seed", type=int, required=True)
    rep.add_argument("--mode", choices=("coverage", "selection"), default="coverage")
    rep.add_argument("--k-range", type=_int_list, default=[1, 2, 3], dest="k_range")
    rep.add_argument("--p-range", type=_int_list, default=[1], dest="p_range")
    rep.add_argument("--criteria", type=lambda s: s.split(","), default=["bic", "gic"])
    rep.add_argument("--stepwise", action="store_true")
    rep.add_argument("--workers", type=int, default=None)
    rep.add_argument("--max-em-iters", type=int, default=None, dest="max_em_iters")
    rep.add_argument("--em-rel-tol", type=float, default=None, dest="em_rel_tol")
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MmarError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
