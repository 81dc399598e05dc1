"""Command line front end.

Errors are reported as a single JSON object on stderr with exit code 2,
so scripted callers can tell a usage problem from a crash. The default
seed comes from SPANBANDIT_SEED when set.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, replace

from .abs_sampler import (
    VitalSetConfig,
    build_policy,
    load_policy,
    report,
    save_policy,
)
from .baselines import ComparisonConfig, compare_elimination
from .belief import BeliefStore, load_store, save_store, update_epoch
from .experiment import (
    RunConfig,
    bench_inference,
    run_experiment,
    sweep,
    write_epoch_rows,
    write_sweep_csv,
)
from .presets import get_preset, preset_names
from .simulator import (
    ground_truth_to_json_dict,
    load_spec,
    simulate_workload,
)
from .tag_analysis import build_tag_matrix, correlation_report, strongest_tag
from .trace_model import (
    SpanIdentity,
    decompose,
    read_traces_jsonl,
    write_traces_jsonl,
)
from .utility import compute_batch_utilities, measure_min_samples
from .version import VERSION


def _env_seed() -> int | None:
    raw = os.environ.get("SPANBANDIT_SEED")
    return int(raw) if raw is not None and raw != "" else None


def _resolve_seed(args, fallback: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = _env_seed()
    return env if env is not None else fallback


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_inputs(args):
    if getattr(args, "spec", None):
        return load_spec(args.spec)
    preset = get_preset(args.preset)
    return preset.topology, preset.anomalies, preset.workload


def _cmd_simulate(args) -> int:
    topology, anomalies, workload = _load_inputs(args)
    seed = _resolve_seed(args, workload.rng_seed)
    workload = replace(
        workload,
        rng_seed=seed,
        num_requests=args.requests if args.requests is not None else workload.num_requests,
        request_sampling_rate=args.rate if args.rate is not None else workload.request_sampling_rate,
    )
    policy = load_policy(args.policy) if args.policy else None
    traces, truth = simulate_workload(topology, anomalies, workload, policy)
    write_traces_jsonl(traces, args.out)
    if args.truth_out:
        with open(args.truth_out, "w") as f:
            json.dump(ground_truth_to_json_dict(truth), f, indent=2, sort_keys=True)
            f.write("\n")
    _print_json(
        {
            "command": "simulate",
            "source": args.spec or args.preset,
            "seed": seed,
            "requests": workload.num_requests,
            "traces": len(traces),
            "out": args.out,
            "truthOut": args.truth_out,
            "version": VERSION,
        }
    )
    return 0


def _cmd_decompose(args) -> int:
    traces = read_traces_jsonl(args.input, lenient=args.lenient)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(
            [
                "trace_id",
                "span_id",
                "service",
                "operation",
                "url",
                "duration_us",
                "child_waiting_us",
                "self_segment_us",
            ]
        )
        for trace in traces:
            for row in decompose(trace):
                writer.writerow(
                    [
                        trace.trace_id,
                        row.span_id,
                        row.identity.service,
                        row.identity.operation,
                        row.identity.url,
                        row.duration_us,
                        row.child_waiting_us,
                        row.self_segment_us,
                    ]
                )
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_learn(args) -> int:
    traces = read_traces_jsonl(args.input, lenient=args.lenient)
    if os.path.exists(args.state):
        store = load_store(args.state)
        if args.lam is not None:
            store.lam = args.lam
        if args.mode is not None:
            store.mode = args.mode
        store.__post_init__()
    else:
        store = BeliefStore(
            lam=args.lam if args.lam is not None else 0.3,
            mode=args.mode if args.mode is not None else "verbatim_ewma",
        )
    estimates = compute_batch_utilities(traces, args.measure)
    if not args.keep_thin:
        floor = measure_min_samples(args.measure)
        estimates = [e for e in estimates if e.sample_count >= floor]
    update_epoch(store, estimates)
    save_store(store, args.state_out or args.state)
    policy_entries = None
    if args.policy_out:
        cfg = VitalSetConfig(
            percentile_p=args.percentile,
            epsilon=args.epsilon,
            mc_rows=args.mc_rows,
            rng_seed=_resolve_seed(args),
        )
        policy = build_policy(store, cfg, workers=args.workers)
        save_policy(policy, args.policy_out)
        policy_entries = len(policy.entries)
    _print_json(
        {
            "command": "learn",
            "traces": len(traces),
            "identitiesUpdated": len(estimates),
            "identitiesTracked": len(store.beliefs),
            "epoch": store.epoch,
            "state": args.state_out or args.state,
            "policyOut": args.policy_out,
            "policyEntries": policy_entries,
            "version": VERSION,
        }
    )
    return 0


def _cmd_report(args) -> int:
    store = load_store(args.state)
    if args.policy:
        policy = load_policy(args.policy)
    else:
        cfg = VitalSetConfig(
            percentile_p=args.percentile,
            epsilon=args.epsilon,
            mc_rows=args.mc_rows,
            rng_seed=_resolve_seed(args),
        )
        policy = build_policy(store, cfg, workers=args.workers)
    rep = report(policy, store)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(rep.to_csv())
    print(rep.format_table(args.top))
    return 0


def _cmd_experiment(args) -> int:
    seeds = tuple(int(s) for s in args.seeds.split(",") if s != "")
    config = RunConfig(
        preset=args.preset,
        seeds=seeds,
        num_epochs=args.epochs,
        batch_size=args.batch_size,
        request_sampling_rate=args.rate,
        measure=args.measure,
        lam=args.lam,
        mode=args.mode,
        percentile=args.percentile,
        epsilon=args.epsilon,
        mc_rows=args.mc_rows,
        workers=args.workers,
    )
    if args.sweep:
        values = [float(v) for v in args.values.split(",") if v != ""]
        if not values:
            raise ValueError("--sweep needs --values, a comma list of numbers")
        points = sweep(config, args.sweep, values, threshold=args.threshold)
        if args.out:
            write_sweep_csv(points, config, args.out)
        _print_json({"command": "experiment", "sweep": [asdict(p) for p in points], "version": VERSION})
        return 0
    result = run_experiment(config)
    if args.out:
        write_epoch_rows(result, args.out)
    _print_json({"command": "experiment", **result.summary_dict(args.threshold, args.within)})
    return 0


def _cmd_tags(args) -> int:
    traces = read_traces_jsonl(args.input, lenient=args.lenient)
    identity = None
    if args.service or args.operation:
        if not (args.service and args.operation):
            raise ValueError("--service and --operation must be given together")
        identity = SpanIdentity(args.service, args.operation, args.url or "")
    if identity is None:
        best = strongest_tag(traces, None, target=args.target)
        if best is None:
            raise ValueError("no tagged spans with usable variation found")
        identity = best[0]
    matrix = build_tag_matrix(traces, identity)
    rows = correlation_report(matrix, target=args.target)
    if args.json:
        _print_json(
            {
                "command": "tags",
                "identity": identity.label(),
                "rows": matrix.num_rows,
                "target": args.target,
                "correlations": [asdict(r) for r in rows],
                "version": VERSION,
            }
        )
        return 0
    print(f"identity: {identity.label()}  rows: {matrix.num_rows}  target: {args.target}")
    print(f"{'tag':<24} {'kind':<8} {'r':>9}  flags")
    for row in rows:
        flag = "degenerate" if row.degenerate else ""
        print(f"{row.key:<24} {row.kind:<8} {row.r:>9.4f}  {flag}")
    return 0


def _cmd_compare(args) -> int:
    config = ComparisonConfig(
        num_arms=args.arms,
        budget=args.budget,
        env_kind=args.env,
        seed=_resolve_seed(args),
        ege_quota_cap=args.ege_cap,
        ege_me_cap=args.ege_me_cap,
        abs_percentile=args.percentile,
        abs_mc_rows=args.mc_rows,
    )
    result = compare_elimination(config)
    payload = result.to_json_dict()
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    _print_json(
        {
            "command": "compare-baselines",
            "survivors": result.survivor_counts(),
            "eliminatedFraction": {
                name: o.eliminated_fraction(result.env.num_arms)
                for name, o in sorted(result.outcomes.items())
            },
            "samplesUsed": {
                name: o.samples_used for name, o in sorted(result.outcomes.items())
            },
            "topArmRecall": result.top_arm_recall(),
            "out": args.out,
            "version": VERSION,
        }
    )
    return 0


def _cmd_bench(args) -> int:
    result = bench_inference(
        num_identities=args.identities,
        mc_rows=args.mc_rows,
        reps=args.reps,
        workers=args.workers,
        percentile=args.percentile,
        seed=_resolve_seed(args),
    )
    _print_json({"command": "bench-inference", **result.to_json_dict()})
    return 0


def _add_planner_flags(p: argparse.ArgumentParser, mc_rows_default: int = 100_000) -> None:
    p.add_argument("--percentile", type=float, default=75.0, help="vital-set percentile P")
    p.add_argument("--epsilon", type=float, default=0.05, help="exploration floor")
    p.add_argument("--mc-rows", type=int, default=mc_rows_default, help="Monte Carlo rows")
    p.add_argument("--workers", type=int, default=1, help="draw threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanbandit",
        description="Span-level adaptive trace sampling: simulate, learn, inspect.",
    )
    parser.add_argument("--version", action="version", version=f"spanbandit {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate traces from a preset or spec file")
    p.add_argument("--preset", choices=preset_names(), default="social")
    p.add_argument("--spec", help="JSON file with topology, anomalies, workload")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--truth-out", help="write fault ground truth JSON here")
    p.add_argument("--policy", help="sample spans under this policy file")
    p.add_argument("--requests", type=int)
    p.add_argument("--rate", type=float, help="head sampling rate in (0, 1]")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("decompose", help="self-time decomposition of a trace file, as CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.add_argument("--lenient", action="store_true", help="re-parent orphan spans instead of failing")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("learn", help="one belief update from a batch of traces")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--state", required=True, help="belief snapshot JSON, read if present")
    p.add_argument("--state-out", help="write the snapshot here instead of --state")
    p.add_argument("--measure", default="variance")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="forgetting factor")
    p.add_argument("--mode", choices=("verbatim_ewma", "discounted_count"), default=None)
    p.add_argument("--keep-thin", action="store_true", help="update from estimates below the measure's sample floor")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--policy-out", help="also plan and save a policy")
    p.add_argument("--seed", type=int)
    _add_planner_flags(p)
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("report", help="rank identities by vital-set probability")
    p.add_argument("--state", required=True)
    p.add_argument("--policy", help="use this policy file instead of re-planning")
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--csv", help="also write the full table as CSV")
    p.add_argument("--seed", type=int)
    _add_planner_flags(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("experiment", help="closed-loop runs over seeds, with optional sweeps")
    p.add_argument("--preset", choices=preset_names(), default="social")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma list of seeds")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--measure", default="variance")
    p.add_argument("--lambda", dest="lam", type=float, default=0.3)
    p.add_argument("--mode", choices=("verbatim_ewma", "discounted_count"), default="verbatim_ewma")
    p.add_argument("--threshold", type=float, default=0.9, help="faulty-probability convergence threshold")
    p.add_argument("--within", type=int, default=500, help="trace budget for convergedFraction")
    p.add_argument("--sweep", choices=("percentile", "epsilon", "request_sampling_rate"))
    p.add_argument("--values", default="", help="comma list of sweep values")
    p.add_argument("--out", help="CSV output path")
    _add_planner_flags(p, mc_rows_default=20_000)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("tags", help="correlate span tags with latency")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--service")
    p.add_argument("--operation")
    p.add_argument("--url", default="")
    p.add_argument("--target", choices=("self", "duration", "e2e"), default="self")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_tags)

    p = sub.add_parser("compare-baselines", help="elimination baselines vs the belief sampler")
    p.add_argument("--arms", type=int, default=50)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--env", choices=("skewed", "uniform"), default="skewed")
    p.add_argument("--seed", type=int)
    p.add_argument("--ege-cap", type=int, default=24, help="per-arm round quota cap for the gap baseline")
    p.add_argument("--ege-me-cap", type=int, default=6, help="quota cap inside its reference search")
    p.add_argument("--percentile", type=float, default=90.0)
    p.add_argument("--mc-rows", type=int, default=20_000)
    p.add_argument("--out", help="write the full comparison JSON here")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bench-inference", help="time policy planning at a given store size")
    p.add_argument("--identities", type=int, default=564)
    p.add_argument("--mc-rows", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--percentile", type=float, default=75.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (ValueError, KeyError, OSError) as exc:
        message = str(exc)
        if isinstance(exc, KeyError) and exc.args:
            message = str(exc.args[0])
        print(
            json.dumps({"error": type(exc).__name__, "message": message}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
