"""Command-line front end.

Three subcommands share a config pipeline (JSON file or named preset plus
overrides): ``run`` executes the iteration loop and writes metrics CSV,
``check`` prints the contraction/feasibility report table, ``transform``
dumps the per-step transform blocks and transformed system as JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .conditions import (
    check_lmi,
    check_rho_cb_gamma,
    check_rho_dxi,
    check_rho_gamma_cb,
    check_rho_xid,
)
from .config import ExperimentConfig, config_from_dict
from .errors import IlcsetError, SchemaError
from .ilc_engine import (
    GAMMA_MODES,
    IlcConfig,
    RunResult,
    realizations_for,
    run,
    run_transformed,
    verify_error_recursion,
    verify_input_recursion,
)
from .matrix_core import inf_norm
from .plant import sample_iteration
from .presets import PRESET_NAMES, preset_config
from .schedule_lang import MatrixSchedule
from .set_transform import (
    build_p_transform,
    build_q_transform,
    apply_q_transform,
    apply_p_transform,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("l", "E_inf", "U_inf", "res_err_rec", "res_in_rec")
EQUIVALENCE_TOL = 1e-9

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("ILCSET_LOG", "warn").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips, for reproducible output."""
    return repr(float(x))


def _load_doc(args) -> dict:
    if args.preset is not None:
        return preset_config(args.preset,
                             seed=42 if args.seed is None else args.seed,
                             iterations=300 if args.iterations is None else args.iterations)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError("/", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("/", "top level must be an object")
    if args.seed is not None:
        doc.setdefault("uncertainty", {})["seed"] = args.seed
    if args.iterations is not None:
        doc.setdefault("run", {})["iterations"] = args.iterations
    return doc


def _build_config(args) -> ExperimentConfig:
    doc = _load_doc(args)
    if getattr(args, "mode", None):
        doc.setdefault("run", {})["mode"] = args.mode
    return config_from_dict(doc)


def _build_transform(cfg: ExperimentConfig):
    if cfg.mode in GAMMA_MODES:
        return build_p_transform(cfg.system.B, cfg.system.C, cfg.gamma)
    return build_q_transform(cfg.system.D, cfg.xi)


def _engine_config(cfg: ExperimentConfig, mode: str) -> IlcConfig:
    return IlcConfig(mode=mode, iterations=cfg.iterations, u0=cfg.u0,
                     record_every=cfg.record_every)


def _execute(cfg: ExperimentConfig) -> RunResult:
    if cfg.mode.startswith("transformed"):
        return run_transformed(cfg.system, cfg.uncertainty, _build_transform(cfg),
                               _engine_config(cfg, cfg.mode))
    return run(cfg.system, cfg.uncertainty, (cfg.xi, cfg.gamma),
               _engine_config(cfg, cfg.mode))


def _residual_reports(cfg: ExperimentConfig, result: RunResult):
    if result.iterations < 2:
        return None, None
    reals = realizations_for(cfg.system, cfg.uncertainty, result.iterations)
    return (verify_error_recursion(result, reals),
            verify_input_recursion(result, reals))


def _metric_rows(result: RunResult, err_report, in_report) -> list:
    rows = []
    for l in range(result.iterations):
        row = [str(l), _fmt(result.E_hist[l]), _fmt(result.U_hist[l])]
        if err_report is not None and l >= 1:
            row.append(_fmt(err_report.per_iteration[l - 1]))
            row.append(_fmt(in_report.per_iteration[l - 1]))
        else:
            row.extend(["", ""])
        rows.append(row)
    return rows


def _write_csv(path, header, rows) -> None:
    if path is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _traj_path(out: str) -> str:
    stem, ext = os.path.splitext(out)
    return stem + "_traj" + (ext or ".csv")


def _trajectory_rows(cfg: ExperimentConfig, result: RunResult, which: str) -> tuple:
    p = cfg.system.p
    header = (["l", "k"] + [f"y{i + 1}" for i in range(p)]
              + [f"r{i + 1}" for i in range(p)] + [f"e{i + 1}" for i in range(p)])
    if which == "final":
        selected = [result.iterations - 1]
    else:
        selected = list(range(0, result.iterations, cfg.record_every))
    rows = []
    for l in selected:
        traj = result.trajectories[l]
        realized = sample_iteration(cfg.system, cfg.uncertainty, l)
        for k in range(cfg.system.N + 1):
            row = [str(l), str(k)]
            row.extend(_fmt(traj.y[k][i, 0]) for i in range(p))
            row.extend(_fmt(realized.r[k][i, 0]) for i in range(p))
            row.extend(_fmt(traj.e[k][i, 0]) for i in range(p))
            rows.append(row)
    return header, rows


def _applicable_reports(cfg: ExperimentConfig) -> list:
    sysm = cfg.system
    if cfg.mode in GAMMA_MODES:
        return [check_rho_cb_gamma(sysm.B, sysm.C, cfg.gamma),
                check_rho_gamma_cb(sysm.B, sysm.C, cfg.gamma)]
    if cfg.uncertainty.structured_D is not None:
        E = cfg.uncertainty.structured_D.E
        F = cfg.uncertainty.structured_D.F
    else:
        E = MatrixSchedule.constant(np.zeros((sysm.p, 1)), sysm.N)
        F = MatrixSchedule.constant(np.zeros((1, sysm.m)), sysm.N)
    return [check_rho_dxi(sysm.D, cfg.xi),
            check_rho_xid(sysm.D, cfg.xi),
            check_lmi(sysm.D, cfg.xi, E, F)]


def _summary_lines(result: RunResult, err_report, in_report) -> list:
    lines = [f"mode: {result.mode}",
             f"iterations: {result.iterations}",
             f"final E_inf: {_fmt(result.E_hist[-1])}",
             f"final U_inf: {_fmt(result.U_hist[-1])}",
             f"converged value: {_fmt(result.converged_value)}"]
    report = result.condition_report
    if report is not None:
        verdict = "pass" if report.satisfied else "FAIL"
        lines.append(f"condition {report.name}: {verdict} "
                     f"(worst {report.worst:.6g} at k={report.worst_k})")
    if err_report is not None:
        lines.append(f"max residual (error recursion): "
                     f"{_fmt(err_report.max_residual)}")
        lines.append(f"max residual (input recursion): "
                     f"{_fmt(in_report.max_residual)}")
    lines.extend(f"warning: {w}" for w in result.warnings)
    return lines


def _parse_sweep(text: str) -> range:
    prefix = "seeds="
    if not text.startswith(prefix):
        raise SchemaError("/sweep", "expected seeds=A..B")
    lo, sep, hi = text[len(prefix):].partition("..")
    if sep != ".." or not lo.lstrip("-").isdigit() or not hi.lstrip("-").isdigit():
        raise SchemaError("/sweep", "expected seeds=A..B with integers A <= B")
    first, last = int(lo), int(hi)
    if first > last:
        raise SchemaError("/sweep", "sweep range is empty")
    if first < 0:
        raise SchemaError("/sweep", "seeds must be nonnegative")
    return range(first, last + 1)


def _sweep_rows(args, seed: int) -> list:
    sub = argparse.Namespace(**vars(args))
    sub.seed = seed
    cfg = _build_config(sub)
    result = _execute(cfg)
    err_report, in_report = _residual_reports(cfg, result)
    return [[str(seed)] + row for row in _metric_rows(result, err_report, in_report)]


def cmd_run(args) -> int:
    if args.sweep is not None:
        seeds = _parse_sweep(args.sweep)
        with ThreadPoolExecutor(max_workers=min(8, len(seeds))) as pool:
            blocks = list(pool.map(lambda s: _sweep_rows(args, s), seeds))
        _write_csv(args.out, ("seed",) + CSV_HEADER,
                   [row for block in blocks for row in block])
        return 0

    cfg = _build_config(args)
    result = _execute(cfg)
    err_report, in_report = _residual_reports(cfg, result)
    _write_csv(args.out, CSV_HEADER, _metric_rows(result, err_report, in_report))

    if args.record_trajectories != "none":
        if args.out is None:
            raise SchemaError("/out", "--record-trajectories needs --out")
        header, rows = _trajectory_rows(cfg, result, args.record_trajectories)
        _write_csv(_traj_path(args.out), header, rows)

    info = sys.stdout if args.out is not None else sys.stderr
    for line in _summary_lines(result, err_report, in_report):
        print(line, file=info)

    status = 0
    if not np.isfinite(result.E_hist[-1]):
        print("run diverged: final error is not finite", file=info)
        status = 1
    if args.verify_set:
        gap = _equivalence_gap(cfg, result)
        print(f"set-equivalence max output gap: {_fmt(gap)}", file=info)
        if not gap <= EQUIVALENCE_TOL:
            status = 1
    return status


def _equivalence_gap(cfg: ExperimentConfig, result: RunResult) -> float:
    """Worst output difference between the direct and split-coordinate runs."""
    transform = _build_transform(cfg)
    if cfg.mode == "repetitive":
        other = run_transformed(cfg.system, cfg.uncertainty, transform,
                                _engine_config(cfg, "repetitive"))
    elif cfg.mode.startswith("transformed"):
        direct_mode = "direct-gamma" if cfg.mode in GAMMA_MODES else "direct-xi"
        other = run(cfg.system, cfg.uncertainty, (cfg.xi, cfg.gamma),
                    _engine_config(cfg, direct_mode))
    else:
        split_mode = ("transformed-gamma" if cfg.mode in GAMMA_MODES
                      else "transformed-xi")
        other = run_transformed(cfg.system, cfg.uncertainty, transform,
                                _engine_config(cfg, split_mode))
    return max(inf_norm(a.y[k] - b.y[k])
               for a, b in zip(result.trajectories, other.trajectories)
               for k in range(cfg.system.N + 1))


def cmd_check(args) -> int:
    cfg = _build_config(args)
    reports = _applicable_reports(cfg)
    names = [r.name for r in reports]
    widths = (14, 9, 16, 16)
    print(f"{'name':<{widths[0]}}{'worst_k':<{widths[1]}}"
          f"{'value':<{widths[2]}}{'margin':<{widths[3]}}verdict")
    for r in reports:
        verdict = "pass" if r.satisfied else "fail"
        print(f"{r.name:<{widths[0]}}{str(r.worst_k):<{widths[1]}}"
              f"{r.worst:<{widths[2]}.9g}{r.margin:<{widths[3]}.9g}{verdict}")
    required = set(names) if args.require_all else set(args.require or ())
    unknown = required - set(names)
    if unknown:
        raise SchemaError("/require",
                          f"not applicable here: {sorted(unknown)}; "
                          f"choose from {names}")
    failed = [r.name for r in reports if r.name in required and not r.satisfied]
    if failed:
        print(f"required conditions failed: {', '.join(failed)}")
        return 1
    return 0


def _grid_list(mats) -> list:
    return [np.asarray(m, dtype=np.float64).tolist() for m in mats]


def cmd_transform(args) -> int:
    cfg = _build_config(args)
    transform = _build_transform(cfg)
    realized = sample_iteration(cfg.system, cfg.uncertainty, 0)
    if cfg.mode in GAMMA_MODES:
        star = apply_p_transform(realized, transform, cfg.u0)
    else:
        star = apply_q_transform(realized, transform, cfg.u0)
    doc = {
        "kind": transform.kind,
        "p": transform.p,
        "m": transform.m,
        "steps": transform.steps,
        "iteration": 0,
        "blocks": [
            {
                "k": k,
                "col_perm": [int(c) for c in transform.col_perm[k]],
                "matrix": transform.matrix(k).tolist(),
                "inverse": transform.inverse(k).tolist(),
                "gain_product": transform.gain_products[k].tolist(),
            }
            for k in range(transform.steps)
        ],
        "transformed": {
            "Bstar": _grid_list(star.Bstar),
            "Dstar": None if star.Dstar is None else _grid_list(star.Dstar),
            "wstar": _grid_list(star.wstar),
            "vstar": _grid_list(star.vstar),
            "gain_star": _grid_list(star.gain_star),
        },
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ilcset",
        description="Iterative learning control with input-space "
                    "equivalence transforms for time-varying MIMO plants.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", metavar="PATH",
                        help="JSON experiment description")
    source.add_argument("--preset", choices=PRESET_NAMES,
                        help="built-in benchmark configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="uncertainty stream seed (default 42 for presets)")
    common.add_argument("--iterations", type=int, default=None, metavar="L",
                        help="number of trials (default 300 for presets)")
    common.add_argument("--mode", default=None,
                        help="override the configured update mode")

    p_run = sub.add_parser("run", parents=[common],
                           help="execute the learning loop and emit metrics CSV")
    p_run.add_argument("--out", metavar="PATH",
                       help="metrics CSV path (stdout when omitted)")
    p_run.add_argument("--record-trajectories", choices=("final", "all", "none"),
                       default="none",
                       help="also write a *_traj.csv with k, y, r, e columns")
    p_run.add_argument("--verify-set", action="store_true",
                       help="also execute the counterpart run in the other "
                            "coordinates and report the worst output gap")
    p_run.add_argument("--sweep", metavar="seeds=A..B",
                       help="run every seed in the range and merge the CSVs")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", parents=[common],
                             help="evaluate the applicable design conditions")
    p_check.add_argument("--require", action="append", metavar="NAME",
                         help="exit 1 unless this condition holds (repeatable)")
    p_check.add_argument("--require-all", action="store_true",
                         help="exit 1 unless every listed condition holds")
    p_check.set_defaults(func=cmd_check)

    p_tr = sub.add_parser("transform", parents=[common],
                          help="dump the per-step transform blocks as JSON")
    p_tr.add_argument("--out", metavar="PATH",
                      help="JSON path (stdout when omitted)")
    p_tr.set_defaults(func=cmd_transform)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except IlcsetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
