"""Batch command-line front end: simulate, fit-ocv, run, compare.

No interactive UI: commands read a config file and CSV inputs, write CSV
and JSON outputs, and print a short summary.  Exit codes are a stable
API: 0 ok, 2 config error, 3 I/O error, 4 excitation gate, 5 reference
unsatisfiable, 6 misuse.  Verbosity is controlled by the SOC_EST_LOG
environment variable (error|warn|info|debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import LoadedConfig, load_config, parse_filter_list
from .errors import (
    ConfigError,
    EmptyInputError,
    IllConditionedError,
    MissingReferenceError,
    SocestError,
    TraceFormatError,
)
from .ident import fit_ocv_polynomial, new_ffrls_state, ocv_ident_step
from .model import coulomb_step
from .pipeline import ReferenceMode, RunResult, run_joint
from .sim import MeasuredTrace, NoiseSpec, TruthTrace, corrupt, generate_cycle, simulate_truth

log = logging.getLogger("socest")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EXCITATION = 4
EXIT_REFERENCE = 5
EXIT_MISUSE = 6

_MEASURED_HEADER = "t,current_a,voltage_v"
_MEASURED_HEADER_REF = "t,current_a,voltage_v,soc_ref"
_TRUTH_HEADER = "t,current_a,soc_true,up_true_v,ut_true_v"

_SUMMARY_FIELDS = (
    "rmse_pct", "mae_pct", "negative_rx_count", "nonphysical_count",
    "filter_error_count", "cutoff_events",
)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: str, columns) -> None:
    n = len(columns[0])
    lines = [header]
    for k in range(n):
        lines.append(",".join(_fmt(col[k]) for col in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_rows(path: Path) -> tuple[str, list[list[float]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError(f"{path}: empty file")
    header = lines[0].strip()
    rows = []
    ncol = len(header.split(","))
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split(",")
        if len(parts) != ncol:
            raise TraceFormatError(f"{path}:{lineno}: expected {ncol} columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: non-numeric value") from exc
    if not rows:
        raise TraceFormatError(f"{path}: no data rows")
    return header, rows


def _validate_sampling(time_s: np.ndarray, dt_cfg: float, path) -> None:
    if time_s.size < 2:
        return
    diffs = np.diff(time_s)
    if np.any(diffs <= 0):
        raise TraceFormatError(f"{path}: timestamps are not strictly increasing")
    med = float(np.median(diffs))
    if np.any(np.abs(diffs - med) > 0.01 * med):
        raise TraceFormatError(f"{path}: irregular sampling (spread over 1% of the median step)")
    if abs(med - dt_cfg) > 0.01 * dt_cfg:
        raise ConfigError(
            f"battery.dt_s: configured step {dt_cfg} differs from the file's median step {med}",
            key="battery.dt_s",
        )


def read_measured_csv(path: Path, dt_cfg: float) -> MeasuredTrace:
    header, rows = _read_rows(path)
    if header not in (_MEASURED_HEADER, _MEASURED_HEADER_REF):
        raise TraceFormatError(
            f"{path}: expected header '{_MEASURED_HEADER}[,soc_ref]', got '{header}'"
        )
    data = np.asarray(rows, dtype=float)
    _validate_sampling(data[:, 0], dt_cfg, path)
    soc_ref = data[:, 3].copy() if header == _MEASURED_HEADER_REF else None
    return MeasuredTrace(
        time_s=data[:, 0].copy(),
        current_a=data[:, 1].copy(),
        voltage_v=data[:, 2].copy(),
        soc_ref=soc_ref,
    )


def read_truth_csv(path: Path, cfg: LoadedConfig) -> TruthTrace:
    header, rows = _read_rows(path)
    if header != _TRUTH_HEADER:
        raise TraceFormatError(f"{path}: expected header '{_TRUTH_HEADER}', got '{header}'")
    data = np.asarray(rows, dtype=float)
    _validate_sampling(data[:, 0], cfg.battery.dt_s, path)
    return TruthTrace(
        time_s=data[:, 0].copy(),
        current_a=data[:, 1].copy(),
        soc_true=data[:, 2].copy(),
        up_true_v=data[:, 3].copy(),
        ut_true_v=data[:, 4].copy(),
        params=cfg.initial_params,
        curve=cfg.curve,
        spec=cfg.battery,
    )


def write_measured_csv(path: Path, trace: MeasuredTrace) -> None:
    if trace.soc_ref is not None:
        _write_csv(path, _MEASURED_HEADER_REF,
                   (trace.time_s, trace.current_a, trace.voltage_v, trace.soc_ref))
    else:
        _write_csv(path, _MEASURED_HEADER, (trace.time_s, trace.current_a, trace.voltage_v))


def write_truth_csv(path: Path, truth: TruthTrace) -> None:
    _write_csv(path, _TRUTH_HEADER,
               (truth.time_s, truth.current_a, truth.soc_true, truth.up_true_v, truth.ut_true_v))


def _summary_dict(result: RunResult) -> dict:
    filters = {}
    for kind, fr in result.filters.items():
        filters[kind.value] = {
            "rmse_pct": fr.rmse_pct,
            "mae_pct": fr.mae_pct,
            "negative_rx_count": fr.negative_rx_count,
            "nonphysical_count": fr.nonphysical_count,
            "filter_error_count": fr.filter_error_count,
            "cutoff_events": fr.cutoff_events,
        }
    return {"steps": result.n_steps, "filters": filters}


def _print_table(filters: dict[str, dict]) -> None:
    print(f"{'method':<10}{'rmse_pct':>12}{'mae_pct':>12}")
    for name, row in sorted(filters.items(), key=lambda kv: kv[1]["rmse_pct"]):
        print(f"{name:<10}{row['rmse_pct']:>12.4f}{row['mae_pct']:>12.4f}")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    noise = cfg.sim_noise
    if args.seed is not None:
        noise = NoiseSpec(v_sigma=noise.v_sigma, i_sigma=noise.i_sigma, seed=args.seed)
    cycle = generate_cycle(cfg.cycle, cfg.battery.dt_s)
    truth = simulate_truth(cfg.battery, cfg.initial_params, cfg.curve, cycle, cfg.sim_soc_init)
    measured = corrupt(truth, noise)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_truth_csv(out_dir / "truth.csv", truth)
    write_measured_csv(out_dir / "measured.csv", measured)
    print(
        f"simulated {len(truth)} steps: final soc {truth.soc_true[-1]:.6f}, "
        f"cutoff events {int(truth.cutoff)}"
    )
    return EXIT_OK


def cmd_fit_ocv(args) -> int:
    cfg = load_config(args.config)
    trace = read_measured_csv(Path(args.input), cfg.battery.dt_s)
    state = new_ffrls_state((cfg.fit_ocv_init_v, cfg.fit_r0_init), lam=cfg.fit_lambda)
    soc = cfg.fit_soc_init
    socs = []
    ocvs = []
    for i_k, v_k in zip(trace.current_a, trace.voltage_v):
        soc, _ = coulomb_step(soc, float(i_k), cfg.battery)
        state, ocv_est = ocv_ident_step(state, float(i_k), float(v_k))
        socs.append(soc)
        ocvs.append(ocv_est)
    skip = min(cfg.fit_skip_initial, max(0, len(socs) - 7))
    curve = fit_ocv_polynomial(
        socs[skip:],
        ocvs[skip:],
        lam=cfg.fit_poly_lambda,
        min_soc_span=cfg.fit_min_soc_span,
        max_condition=cfg.fit_max_condition,
    )
    if not curve.within_voltage_band():
        log.warning("fitted curve leaves the plausible battery band [1.0, 5.5] V on [0, 1]")
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(_fmt(c) for c in curve.coeffs) + "\n", encoding="utf-8")
    print("fitted ocv coefficients (highest power first):")
    for c in curve.coeffs:
        print(f"  {c:+.6f}")
    return EXIT_OK


def _apply_filter_flag(cfg: LoadedConfig, flag: str | None) -> None:
    if flag is not None:
        cfg.run.kinds = parse_filter_list(flag)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _apply_filter_flag(cfg, args.filter)
    samples = read_measured_csv(Path(args.input), cfg.battery.dt_s)
    truth = read_truth_csv(Path(args.truth), cfg) if args.truth else None
    result = run_joint(cfg.run, samples, truth)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for kind, fr in result.filters.items():
        _write_csv(
            out_dir / f"trace_{kind.value}.csv",
            "t,soc_est,soc_ref,up_est,residual_v,r0,rp,cp,rx,qx_trace",
            (samples.time_s, fr.soc_est, result.reference, fr.up_est, fr.residual_v,
             fr.r0_ohm, fr.rp_ohm, fr.cp_f, fr.rx, fr.qx_trace),
        )
    summary = _summary_dict(result)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _print_table(summary["filters"])
    return EXIT_OK


def _compare_one_seed(run_config, truth, v_sigma, i_sigma, seed):
    """Worker for one reseeded comparison run (also used inline when jobs=1)."""
    measured = corrupt(truth, NoiseSpec(v_sigma=v_sigma, i_sigma=i_sigma, seed=seed))
    result = run_joint(run_config, measured, truth)
    return seed, _summary_dict(result)


def cmd_compare(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    cfg = load_config(args.config)
    _apply_filter_flag(cfg, args.filter)
    cfg.run.reference_mode = ReferenceMode.SIM_TRUTH
    header, _ = _read_rows(Path(args.input))
    if header in (_MEASURED_HEADER, _MEASURED_HEADER_REF):
        print(
            "compare needs a simulated truth trace (truth.csv); reseeding a "
            "measured log is meaningless",
            file=sys.stderr,
        )
        return EXIT_MISUSE
    truth = read_truth_csv(Path(args.input), cfg)

    master = args.seed if args.seed is not None else cfg.sim_noise.seed
    seeds = [master + k for k in range(args.seeds)]
    jobs = args.jobs if args.jobs else min(len(seeds), os.cpu_count() or 1)
    work = [(cfg.run, truth, cfg.sim_noise.v_sigma, cfg.sim_noise.i_sigma, s) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_compare_one_seed_star, work))
    else:
        outcomes = [_compare_one_seed(*w) for w in work]
    outcomes.sort(key=lambda pair: pair[0])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_filter: dict[str, dict[str, list]] = {}
    for idx, (seed, summary) in enumerate(outcomes):
        (out_dir / f"summary_seed{idx}.json").write_text(
            json.dumps({"seed": seed, **summary}, indent=2) + "\n", encoding="utf-8"
        )
        for name, row in summary["filters"].items():
            slot = per_filter.setdefault(name, {f: [] for f in _SUMMARY_FIELDS})
            for f in _SUMMARY_FIELDS:
                slot[f].append(row[f])
    median = {
        "seeds": len(seeds),
        "master_seed": master,
        "filters": {
            name: {
                "median_rmse_pct": float(np.median(vals["rmse_pct"])),
                "median_mae_pct": float(np.median(vals["mae_pct"])),
                "total_negative_rx": int(np.sum(vals["negative_rx_count"])),
                "seeds_with_negative_rx": int(np.sum(np.asarray(vals["negative_rx_count"]) > 0)),
            }
            for name, vals in per_filter.items()
        },
    }
    (out_dir / "median.json").write_text(json.dumps(median, indent=2) + "\n", encoding="utf-8")
    print(f"{'method':<10}{'median_rmse_pct':>18}{'median_mae_pct':>18}")
    for name, row in sorted(median["filters"].items(), key=lambda kv: kv[1]["median_rmse_pct"]):
        print(f"{name:<10}{row['median_rmse_pct']:>18.4f}{row['median_mae_pct']:>18.4f}")
    return EXIT_OK


def _compare_one_seed_star(work):
    return _compare_one_seed(*work)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socest",
        description="Online Thevenin-model identification and lithium-ion SOC estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic truth/measured trace pair")
    p_sim.add_argument("--config", default=None, help="dotted-key config file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit-ocv", help="identify OCV online and fit the degree-6 curve")
    p_fit.add_argument("input", help="measured CSV (t,current_a,voltage_v[,soc_ref])")
    p_fit.add_argument("--config", default=None)
    p_fit.add_argument("--out", required=True, help="output coefficients file")
    p_fit.set_defaults(func=cmd_fit_ocv)

    p_run = sub.add_parser("run", help="joint identification + SOC estimation over a trace")
    p_run.add_argument("input", help="measured CSV")
    p_run.add_argument("--config", default=None)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--filter", default=None,
                       help="ekf|hiekf|ahiekf|iahiekf|all or comma list (overrides config)")
    p_run.add_argument("--truth", default=None, help="truth CSV for sim_truth reference mode")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="re-run the pipeline across noise seeds")
    p_cmp.add_argument("input", help="truth CSV from `socest simulate`")
    p_cmp.add_argument("--config", default=None)
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.add_argument("--seeds", type=int, default=10, help="number of noise seeds")
    p_cmp.add_argument("--seed", type=int, default=None, help="master seed (default sim.seed)")
    p_cmp.add_argument("--jobs", type=int, default=None, help="parallel workers (default: cores)")
    p_cmp.add_argument("--filter", default=None, help="filter selection as in `run`")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SOC_EST_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IllConditionedError as exc:
        print(f"excitation gate: {exc}", file=sys.stderr)
        return EXIT_EXCITATION
    except MissingReferenceError as exc:
        print(f"reference error: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    except (TraceFormatError, EmptyInputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SocestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISUSE


if __name__ == "__main__":
    sys.exit(main())
