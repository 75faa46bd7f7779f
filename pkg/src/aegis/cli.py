"""Command-line front end: episode runs, benchmark tables, fitting, plots.

Exit codes are stable and documented in the README: 0 success, 2 scenario,
3 unsafe start, 4 degenerate input, 5 non-convergence, 6 perception,
7 assessment/remote, 8 result/trace formats, 9 degenerate constraint,
1 anything unexpected.  AEGIS_THREADS caps episode parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import AegisError, DegenerateInput, ScenarioInvalid, TraceFormatError
from .geometry import fit_mvee, load_cloud_bin, load_cloud_text, save_ellipsoid
from .sim import (
    EpisodeResult,
    Trace,
    compute_metrics,
    load_scenario,
    load_trace_csv,
    run_episode,
    save_trace_binary,
    save_trace_csv,
)
from .suite import builtin_suite


def _thread_count() -> int:
    raw = os.environ.get("AEGIS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _episode_job(args) -> Tuple[str, int, bool, Trace, EpisodeResult]:
    scenario, seed, filter_on, scenario_dir = args
    trace, result = run_episode(scenario, filter_on, seed, scenario_dir=scenario_dir)
    return scenario.name, seed, filter_on, trace, result


def _run_episodes(jobs: List[tuple]) -> List[Tuple[str, int, bool, Trace, EpisodeResult]]:
    workers = _thread_count()
    if workers <= 1 or len(jobs) <= 1:
        return [_episode_job(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_episode_job, jobs))


def _trace_name(scenario: str, seed: int, filter_on: bool) -> str:
    return f"trace_{scenario}_{seed}_{'on' if filter_on else 'off'}"


def _write_outputs(out: Path, rows, *, binary: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    summary_lines = ["scenario,seed,filter,collided,succeeded,steps,min_h"]
    for name, seed, filter_on, trace, result in rows:
        base = _trace_name(name, seed, filter_on)
        save_trace_csv(out / f"{base}.csv", trace)
        if binary:
            save_trace_binary(out / f"{base}.bin", trace)
        if trace.latency_ms is not None:
            with open(out / f"{base}.meta", "w") as fh:
                fh.write("# wall-clock sidecar (non-deterministic)\n")
                fh.write("latency_ms " + " ".join(repr(float(v)) for v in trace.latency_ms) + "\n")
        finite = trace.h[np.isfinite(trace.h)]
        if finite.size:
            min_h = repr(float(finite.min()))
        else:
            min_h = "nan" if np.any(np.isnan(trace.h)) else "inf"
        summary_lines.append(
            f"{name},{seed},{'on' if filter_on else 'off'},"
            f"{int(result.collided)},{int(result.succeeded)},{result.steps},{min_h}"
        )
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n")
    with open(out / "run.meta.json", "w") as fh:
        json.dump({"created_unix": time.time()}, fh)


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario_dir = Path(args.scenario).resolve().parent
    filter_on = args.filter == "on"
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    jobs = [(scenario, seed, filter_on, scenario_dir) for seed in seeds]
    rows = _run_episodes(jobs)
    _write_outputs(Path(args.out), rows, binary=args.binary)
    results = [r for *_, r in rows]
    m = compute_metrics(results)
    print(f"{scenario.name}: episodes={len(results)} car={m.car:.4f} "
          f"tsr={m.tsr:.4f} ets={m.ets:.2f}")
    return 0


def _format_bench_table(metrics_by_key, suites: List[str], methods: List[str]) -> List[List[str]]:
    """Rows of formatted cells; first two columns are method and metric."""
    rows = [["method", "metric", *suites, "average"]]
    for method in methods:
        for metric in ("CAR", "TSR", "ETS"):
            cells = [method, metric]
            acc = []
            for suite_name in suites:
                m = metrics_by_key[(method, suite_name)]
                value = {"CAR": m.car, "TSR": m.tsr, "ETS": m.ets}[metric]
                acc.append(value)
                cells.append(f"{value * 100:.2f}%" if metric != "ETS" else f"{value:.2f}")
            mean = sum(acc) / len(acc)
            cells.append(f"{mean * 100:.2f}%" if metric != "ETS" else f"{mean:.2f}")
            rows.append(cells)
    return rows


def cmd_bench(args) -> int:
    if args.suite:
        suite_dir = Path(args.suite)
        if not suite_dir.is_dir():
            raise ScenarioInvalid(f"suite directory not found: {suite_dir}")
        scenario_paths = sorted(suite_dir.glob("*.toml"))
        if not scenario_paths:
            raise ScenarioInvalid(f"no scenario files in {suite_dir}")
        scenarios = [load_scenario(p) for p in scenario_paths]
        scenario_dir: Optional[Path] = suite_dir.resolve()
    else:
        scenarios = builtin_suite()
        scenario_dir = None

    methods = {"both": ["on", "off"], "on": ["on"], "off": ["off"]}[args.filter]
    jobs = []
    for method in methods:
        for scenario in scenarios:
            for seed in range(args.seeds):
                jobs.append((scenario, seed, method == "on", scenario_dir))
    rows = _run_episodes(jobs)

    suites = sorted({s.suite for s in scenarios})
    by_key = {}
    for method in methods:
        label = f"filter-{method}"
        for suite_name in suites:
            batch = [
                result
                for (name, _, f_on, _, result), job in zip(rows, jobs)
                if job[2] == (method == "on") and job[0].suite == suite_name
            ]
            by_key[(label, suite_name)] = compute_metrics(batch)
    table = _format_bench_table(by_key, suites, [f"filter-{m}" for m in methods])

    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    for row in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text("\n".join(",".join(row) for row in table) + "\n")
    return 0


def cmd_fit_mvee(args) -> int:
    load = load_cloud_bin if args.binary else load_cloud_text
    try:
        cloud = load(args.input)
    except (OSError, ValueError) as exc:
        raise DegenerateInput(f"cannot read point file {args.input}: {exc}") from exc
    try:
        ell = fit_mvee(cloud, args.tolerance, inflate=args.inflate, floor=args.floor)
    except DegenerateInput as exc:
        raise DegenerateInput(f"{exc} (pass --inflate to pad degenerate clouds)") from exc
    save_ellipsoid(args.output, ell)
    print(f"center    {ell.center.tolist()}")
    print(f"semi_axes {ell.semi_axes.tolist()}")
    print(f"volume    {ell.volume:.9g}")
    return 0


def _sparkline(values: np.ndarray, width: int = 72) -> str:
    blocks = "▁▂▃▄▅▆▇█"
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return "(no finite samples)"
    lo, hi = float(finite.min()), float(finite.max())
    span = hi - lo if hi > lo else 1.0
    if values.size > width:
        idx = np.linspace(0, values.size - 1, width).astype(int)
        values = values[idx]
    chars = []
    for v in values:
        if not np.isfinite(v):
            chars.append(" ")
        else:
            chars.append(blocks[int((v - lo) / span * (len(blocks) - 1))])
    return "".join(chars)


def cmd_trace_plot(args) -> int:
    trace = load_trace_csv(args.trace)
    if len(trace) == 0:
        raise TraceFormatError(f"trace {args.trace} is empty")
    if args.latency:
        meta = Path(args.trace).with_suffix(".meta")
        if not meta.exists():
            raise TraceFormatError(f"no latency sidecar next to {args.trace}")
        lat: List[float] = []
        for line in meta.read_text().splitlines():
            if line.startswith("latency_ms"):
                lat = [float(v) for v in line.split()[1:]]
        if not lat:
            raise TraceFormatError(f"sidecar {meta} holds no latency samples")
        median = float(np.median(lat))
        if args.ascii:
            hist, _ = np.histogram(lat, bins=24)
            print(_sparkline(hist.astype(float)))
            print(f"median latency {median * 1000:.1f} us over {len(lat)} steps")
            return 0
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.hist(lat, bins=40, color="#34618e")
        ax.axvline(median, color="k", linestyle="--", label=f"median {median:.3f} ms")
        ax.set_xlabel("filter step latency [ms]")
        ax.set_ylabel("steps")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.output, dpi=130)
        print(f"wrote {args.output} (median {median:.3f} ms)")
        return 0

    finite = trace.h[np.isfinite(trace.h)]
    min_h = float(finite.min()) if finite.size else float("inf")
    if args.ascii:
        print(_sparkline(trace.h))
        print(f"min h = {min_h:.6g} over {len(trace)} steps")
        return 0
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(trace.t, trace.h, color="#34618e", label="h")
    ax.axhline(0.0, color="k", linestyle="--", linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("barrier value h [m]")
    ax.set_title(f"min h = {min_h:.3g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=130)
    print(f"wrote {args.output} (min h {min_h:.6g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aegis",
        description="Ellipsoid barrier safety layer: runs, benchmarks, fits, plots",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario over a seed range")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--filter", choices=["on", "off"], default="on")
    p_run.add_argument("--seeds", type=int, default=1)
    p_run.add_argument("--seed-base", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--binary", action="store_true", help="also write binary traces")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run the benchmark suite and print the table")
    p_bench.add_argument("--suite", help="directory of scenario files (default: builtin)")
    p_bench.add_argument("--filter", choices=["both", "on", "off"], default="both")
    p_bench.add_argument("--seeds", type=int, default=50)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=cmd_bench)

    p_fit = sub.add_parser("fit-mvee", help="fit an enclosing ellipsoid to a point file")
    p_fit.add_argument("input")
    p_fit.add_argument("output")
    p_fit.add_argument("--tolerance", type=float, default=1e-7)
    p_fit.add_argument("--inflate", action="store_true")
    p_fit.add_argument("--floor", type=float, default=0.005)
    p_fit.add_argument("--binary", action="store_true", help="input is float32 xyz binary")
    p_fit.set_defaults(func=cmd_fit_mvee)

    p_plot = sub.add_parser("trace-plot", help="plot h-vs-t or the latency histogram")
    p_plot.add_argument("trace")
    p_plot.add_argument("output", nargs="?", default="trace.png")
    p_plot.add_argument("--ascii", action="store_true")
    p_plot.add_argument("--latency", action="store_true")
    p_plot.set_defaults(func=cmd_trace_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AegisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # pragma: no cover - unexpected failure path
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
