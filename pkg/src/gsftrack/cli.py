"""Command-line interface for the tracking benchmarks.

Every report command writes delimited data (CSV plus a JSON metadata sidecar,
or plain JSON) and renders a matplotlib figure next to it. Exit code is 0 on
success; failures print one JSON error line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, plots
from .bench import (
    aggregate_rmse,
    benchmark_filters,
    build_metadata,
    emit_results,
    make_tracker_configs,
    run_monte_carlo,
    run_single,
    timing_ratios,
    track_run,
    tuning_sweep,
)
from .simulate import (
    DEMO_SEED,
    make_demo_scenario,
    make_experiment_scenario,
    read_scenario_config,
    scenario_to_mapping,
    simulate_run,
)

_BACKEND_CHOICES = {"kf": ("kf",), "rstkf": ("rstkf",), "both": ("kf", "rstkf")}


def _out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run_experiment(args) -> int:
    t0 = time.perf_counter()
    backends = _BACKEND_CHOICES[args.backend]
    curves = run_monte_carlo(
        exp_id=args.exp,
        m_runs=args.runs,
        seed=args.seed,
        backends=backends,
        iters=args.iters,
        workers=args.workers,
    )
    elapsed = time.perf_counter() - t0
    sc = make_experiment_scenario(args.exp, args.seed)
    meta = build_metadata(
        sc,
        curves,
        elapsed,
        extra={"experiment": args.exp, "vb_iters": args.iters, "workers": args.workers},
    )
    out = _out_dir(args.out)
    stem = f"exp{args.exp}"
    written = emit_results(curves, meta, args.format, out, stem)
    written.append(plots.plot_rmse_curves(curves, out / f"{stem}.png", title=f"experiment {args.exp}"))
    for label in curves.labels:
        mean_pos = float(np.nanmean(curves.pos_rmse[label]))
        lost = curves.lost_counts[label]
        print(f"{label}: mean position RMSE {mean_pos:.3f} m over {curves.m_runs} runs ({lost} lost)")
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_demo_outlier(args) -> int:
    t0 = time.perf_counter()
    sc, outlier = make_demo_scenario(args.seed)
    obs = simulate_run(sc, 0, outlier)
    cfgs = make_tracker_configs(sc, iters=args.iters)
    labels = [cfg.label for cfg in cfgs]
    estimates = {cfg.label: track_run(sc, cfg, obs) for cfg in cfgs}
    result = run_single(sc, cfgs, run=0, outlier=outlier)
    curves = aggregate_rmse([result], labels)
    elapsed = time.perf_counter() - t0
    meta = build_metadata(
        sc,
        curves,
        elapsed,
        extra={"outlier_step": outlier.step, "vb_iters": args.iters, "kind": "demo-outlier"},
    )
    out = _out_dir(args.out)
    written = emit_results(curves, meta, args.format, out, "demo")
    written.append(plots.plot_demo_run(obs, estimates, outlier.step, out / "demo.png"))
    for label in labels:
        total = float(np.nansum(curves.pos_rmse[label]))
        print(f"{label}: total position error {total:.1f} m over {sc.steps} steps")
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_benchmark(args) -> int:
    rows = benchmark_filters(reps=args.reps, iters_list=tuple(args.iters))
    ratios = timing_ratios(rows)
    header = f"{'update':<14}{'median':>12}{'p05':>12}{'p95':>12}"
    print(header)
    for row in rows:
        name = row.name if row.iters is None else f"{row.name}({row.iters})"
        print(f"{name:<14}{row.median_s:>12.3e}{row.p05_s:>12.3e}{row.p95_s:>12.3e}")
    for key, val in ratios.items():
        print(f"{key} = {val:.2f}")
    if args.out:
        out = _out_dir(args.out)
        csv_path = out / "timing.csv"
        lines = ["name,iters,median_s,p05_s,p95_s,reps"]
        for row in rows:
            iters = "" if row.iters is None else row.iters
            lines.append(
                f"{row.name},{iters},{row.median_s!r},{row.p05_s!r},{row.p95_s!r},{row.reps}"
            )
        csv_path.write_text("\n".join(lines) + "\n")
        meta_path = out / "timing.meta.json"
        meta_path.write_text(
            json.dumps({"ratios": ratios, "reps": args.reps, "git": bench.git_describe()}, indent=2, sort_keys=True)
            + "\n"
        )
        fig_path = plots.plot_timing(rows, out / "timing.png")
        for path in (csv_path, meta_path, fig_path):
            print(f"wrote {path}")
    return 0


def _cmd_tune(args) -> int:
    t0 = time.perf_counter()
    result = tuning_sweep(
        points=args.points, cmin=args.cmin, cmax=args.cmax, seed=args.seed, iters=args.iters
    )
    elapsed = time.perf_counter() - t0
    print(f"best c = {result.best_c:.2f} with gsf total RMSE {result.best_gsf_total:.1f} m")
    print(f"rstkf-gsf total RMSE {result.rstkf_total_rmse:.1f} m")
    if args.out:
        out = _out_dir(args.out)
        csv_path = out / "tuning.csv"
        lines = ["c,gsf_total_rmse"]
        for c, total in zip(result.c_grid, result.gsf_total_rmse):
            lines.append(f"{float(c)!r},{float(total)!r}")
        csv_path.write_text("\n".join(lines) + "\n")
        meta_path = out / "tuning.meta.json"
        meta_path.write_text(
            json.dumps(
                {
                    "best_c": result.best_c,
                    "best_gsf_total_rmse": result.best_gsf_total,
                    "rstkf_total_rmse": result.rstkf_total_rmse,
                    "seed": args.seed,
                    "vb_iters": args.iters,
                    "elapsed_s": elapsed,
                    "git": bench.git_describe(),
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
        fig_path = plots.plot_tuning(result, out / "tuning.png")
        for path in (csv_path, meta_path, fig_path):
            print(f"wrote {path}")
    return 0


def _cmd_simulate(args) -> int:
    sc = read_scenario_config(args.config)
    obs = simulate_run(sc, args.run)
    out = _out_dir(args.out)

    truth_path = out / "truth.csv"
    lines = ["step,px,py,vx,vy"]
    for k, ob in enumerate(obs, start=1):
        x = ob.truth.as_array()
        lines.append(f"{k},{x[0]!r},{x[1]!r},{x[2]!r},{x[3]!r}")
    truth_path.write_text("\n".join(lines) + "\n")

    det_path = out / "detections.csv"
    lines = ["step,x,y,from_object"]
    for k, ob in enumerate(obs, start=1):
        for i, det in enumerate(ob.detections):
            flag = 1 if ob.object_index == i else 0
            lines.append(f"{k},{det[0]!r},{det[1]!r},{flag}")
    det_path.write_text("\n".join(lines) + "\n")

    meta_path = out / "simulation.meta.json"
    meta_path.write_text(
        json.dumps(
            {"scenario": scenario_to_mapping(sc), "run": args.run, "git": bench.git_describe()},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    fig_path = plots.plot_simulation(obs, out / "simulation.png")
    for path in (truth_path, det_path, meta_path, fig_path):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsftrack",
        description="Gaussian sum tracking benchmarks with a robust Student's-t update",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run-experiment", help="Monte Carlo RMSE study of one experiment")
    p_run.add_argument("--exp", type=int, choices=(1, 2, 3, 4), required=True)
    p_run.add_argument("--runs", type=int, default=100, metavar="M")
    p_run.add_argument("--seed", type=int, default=0, metavar="S")
    p_run.add_argument("--out", default="results", metavar="DIR")
    p_run.add_argument("--backend", choices=sorted(_BACKEND_CHOICES), default="both")
    p_run.add_argument("--iters", type=int, default=10, metavar="N")
    p_run.add_argument("--workers", type=int, default=1, metavar="W")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.set_defaults(func=_cmd_run_experiment)

    p_demo = sub.add_parser("demo-outlier", help="single run with a forced process outlier")
    p_demo.add_argument("--out", default="results", metavar="DIR")
    p_demo.add_argument("--seed", type=int, default=DEMO_SEED)
    p_demo.add_argument("--iters", type=int, default=10)
    p_demo.add_argument("--format", choices=("csv", "json"), default="csv")
    p_demo.set_defaults(func=_cmd_demo_outlier)

    p_bench = sub.add_parser("benchmark", help="time single conditional updates")
    p_bench.add_argument("--reps", type=int, default=300, metavar="N")
    p_bench.add_argument("--iters", type=int, nargs="+", default=[1, 5, 10])
    p_bench.add_argument("--out", default=None, metavar="DIR")
    p_bench.set_defaults(func=_cmd_benchmark)

    p_tune = sub.add_parser("tune", help="process-noise scale sweep on the demo data")
    p_tune.add_argument("--points", type=int, default=100)
    p_tune.add_argument("--cmin", type=float, default=1.0)
    p_tune.add_argument("--cmax", type=float, default=200.0)
    p_tune.add_argument("--seed", type=int, default=DEMO_SEED)
    p_tune.add_argument("--iters", type=int, default=10)
    p_tune.add_argument("--out", default=None, metavar="DIR")
    p_tune.set_defaults(func=_cmd_tune)

    p_sim = sub.add_parser("simulate", help="generate one dataset from a config file")
    p_sim.add_argument("--config", required=True, metavar="FILE")
    p_sim.add_argument("--out", default="results", metavar="DIR")
    p_sim.add_argument("--run", type=int, default=0)
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface one machine-readable line, fail nonzero
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
