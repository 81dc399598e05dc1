"""Multi-seed experiment harness over the closed loop, plus sweeps.

Every CSV produced here starts with a `# config:` comment carrying the
full run configuration and package version, so a result file is enough
to reproduce the run that made it.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .abs_sampler import VitalSetConfig, build_policy
from .belief import BeliefStore, BetaBelief
from .presets import get_preset
from .simulator import ControllerConfig, RunResult, run_closed_loop, with_seed
from .trace_model import SpanIdentity
from .version import VERSION


@dataclass(frozen=True)
class RunConfig:
    preset: str = "social"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    num_epochs: int = 20
    batch_size: int = 50
    request_sampling_rate: float = 1.0
    measure: str = "variance"
    lam: float = 0.3
    mode: str = "verbatim_ewma"
    percentile: float = 75.0
    epsilon: float = 0.05
    mc_rows: int = 20_000
    workers: int = 1

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["version"] = VERSION
        return d

    @staticmethod
    def from_json_dict(obj: dict) -> "RunConfig":
        known = {f for f in RunConfig.__dataclass_fields__}
        kwargs = {k: v for k, v in obj.items() if k in known}
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return RunConfig(**kwargs)

    def controller(self) -> ControllerConfig:
        return ControllerConfig(
            measure=self.measure,
            lam=self.lam,
            mode=self.mode,
            percentile=self.percentile,
            epsilon=self.epsilon,
            mc_rows=self.mc_rows,
            workers=self.workers,
        )


def run_one(config: RunConfig, seed: int) -> RunResult:
    preset = get_preset(config.preset)
    workload = replace(
        with_seed(preset.workload, seed),
        batch_size=config.batch_size,
        request_sampling_rate=config.request_sampling_rate,
    )
    return run_closed_loop(
        preset.topology, preset.anomalies, workload, config.controller(), config.num_epochs
    )


@dataclass
class ExperimentResult:
    config: RunConfig
    results: dict[int, RunResult] = field(default_factory=dict)

    def traces_to_reach(self, seed: int, threshold: float = 0.9) -> int | None:
        for row in self.results[seed].rows:
            if row.faulty_probability >= threshold:
                return row.samples_seen
        return None

    def requests_to_reach(self, seed: int, threshold: float = 0.9) -> int | None:
        for row in self.results[seed].rows:
            if row.faulty_probability >= threshold:
                return row.requests_seen
        return None

    def converged_fraction(self, threshold: float = 0.9, within_traces: int | None = None) -> float:
        hits = 0
        for seed in self.results:
            reached = self.traces_to_reach(seed, threshold)
            if reached is not None and (within_traces is None or reached <= within_traces):
                hits += 1
        return hits / len(self.results)

    def mean_over_seeds(self, fn) -> float:
        return float(np.mean([fn(r) for r in self.results.values()]))

    def summary_dict(self, threshold: float = 0.9, within_traces: int = 500) -> dict:
        traces_needed = [self.traces_to_reach(s, threshold) for s in self.results]
        requests_needed = [self.requests_to_reach(s, threshold) for s in self.results]
        reached = [t for t in traces_needed if t is not None]
        reached_req = [t for t in requests_needed if t is not None]
        final_top5 = [r.rows[-1].top5_hit for r in self.results.values()]
        return {
            "config": self.config.to_json_dict(),
            "seeds": len(self.results),
            "convergedFraction": self.converged_fraction(threshold, within_traces),
            "threshold": threshold,
            "withinTraces": within_traces,
            "meanTracesToReach": float(np.mean(reached)) if reached else None,
            "meanRequestsToReach": float(np.mean(reached_req)) if reached_req else None,
            "meanCumulativeFractionEnabled": self.mean_over_seeds(
                lambda r: r.cumulative_fraction_enabled()
            ),
            "meanFinalFractionEnabled": self.mean_over_seeds(
                lambda r: r.rows[-1].fraction_enabled
            ),
            "meanFinalFaultyProbability": self.mean_over_seeds(
                lambda r: r.rows[-1].faulty_probability
            ),
            "finalTop5HitRate": float(np.mean(final_top5)),
        }


def run_experiment(config: RunConfig) -> ExperimentResult:
    out = ExperimentResult(config=config)
    for seed in config.seeds:
        out.results[seed] = run_one(config, seed)
    return out


def write_epoch_rows(result: ExperimentResult, path: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config: {json.dumps(result.config.to_json_dict(), sort_keys=True)}\n")
        writer = csv.writer(f)
        writer.writerow(
            [
                "seed",
                "epoch",
                "samples_seen",
                "requests_seen",
                "faulty_probability",
                "fraction_enabled",
                "top1_hit",
                "top3_hit",
                "top5_hit",
                "inference_ms",
            ]
        )
        for seed in sorted(result.results):
            for row in result.results[seed].rows:
                writer.writerow(
                    [
                        seed,
                        row.epoch,
                        row.samples_seen,
                        row.requests_seen,
                        f"{row.faulty_probability:.6f}",
                        f"{row.fraction_enabled:.6f}",
                        int(row.top1_hit),
                        int(row.top3_hit),
                        int(row.top5_hit),
                        f"{row.inference_ms:.3f}",
                    ]
                )


# --- sweeps ---------------------------------------------------------------

SWEEPABLE = ("percentile", "epsilon", "request_sampling_rate")


@dataclass(frozen=True)
class SweepPoint:
    param: str
    value: float
    converged_fraction: float
    mean_traces_to_reach: float | None
    mean_requests_to_reach: float | None
    mean_cumulative_fraction_enabled: float
    mean_final_fraction_enabled: float
    mean_final_faulty_probability: float


def sweep(config: RunConfig, param: str, values, threshold: float = 0.9) -> list[SweepPoint]:
    """Re-run the experiment for each value of one knob."""
    if param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; one of {SWEEPABLE}")
    points = []
    for value in values:
        result = run_experiment(replace(config, **{param: float(value)}))
        traces_needed = [
            t
            for s in result.results
            if (t := result.traces_to_reach(s, threshold)) is not None
        ]
        requests_needed = [
            t
            for s in result.results
            if (t := result.requests_to_reach(s, threshold)) is not None
        ]
        points.append(
            SweepPoint(
                param=param,
                value=float(value),
                converged_fraction=result.converged_fraction(threshold),
                mean_traces_to_reach=float(np.mean(traces_needed)) if traces_needed else None,
                mean_requests_to_reach=(
                    float(np.mean(requests_needed)) if requests_needed else None
                ),
                mean_cumulative_fraction_enabled=result.mean_over_seeds(
                    lambda r: r.cumulative_fraction_enabled()
                ),
                mean_final_fraction_enabled=result.mean_over_seeds(
                    lambda r: r.rows[-1].fraction_enabled
                ),
                mean_final_faulty_probability=result.mean_over_seeds(
                    lambda r: r.rows[-1].faulty_probability
                ),
            )
        )
    return points


def write_sweep_csv(points: list[SweepPoint], config: RunConfig, path: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config: {json.dumps(config.to_json_dict(), sort_keys=True)}\n")
        writer = csv.writer(f)
        writer.writerow(
            [
                "param",
                "value",
                "converged_fraction",
                "mean_traces_to_reach",
                "mean_requests_to_reach",
                "mean_cumulative_fraction_enabled",
                "mean_final_fraction_enabled",
                "mean_final_faulty_probability",
            ]
        )
        for p in points:
            writer.writerow(
                [
                    p.param,
                    p.value,
                    f"{p.converged_fraction:.4f}",
                    "" if p.mean_traces_to_reach is None else f"{p.mean_traces_to_reach:.1f}",
                    "" if p.mean_requests_to_reach is None else f"{p.mean_requests_to_reach:.1f}",
                    f"{p.mean_cumulative_fraction_enabled:.6f}",
                    f"{p.mean_final_fraction_enabled:.6f}",
                    f"{p.mean_final_faulty_probability:.6f}",
                ]
            )


# --- planner benchmark ----------------------------------------------------


@dataclass(frozen=True)
class BenchResult:
    num_identities: int
    mc_rows: int
    workers: int
    reps: int
    times_ms: tuple[float, ...]

    @property
    def median_ms(self) -> float:
        return float(np.median(self.times_ms))

    def to_json_dict(self) -> dict:
        return {
            "numIdentities": self.num_identities,
            "mcRows": self.mc_rows,
            "workers": self.workers,
            "reps": self.reps,
            "timesMs": [round(t, 3) for t in self.times_ms],
            "medianMs": round(self.median_ms, 3),
            "version": VERSION,
        }


def synthetic_store(num_identities: int, seed: int = 0) -> BeliefStore:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 9001))))
    beliefs = {}
    for i in range(num_identities):
        identity = SpanIdentity(f"svc-{i // 8:03d}", f"op-{i % 8}")
        beliefs[identity] = BetaBelief(
            alpha=float(1.0 + 9.0 * rng.random()), beta=float(1.0 + 9.0 * rng.random())
        )
    return BeliefStore(epoch=1, beliefs=beliefs)


def bench_inference(
    num_identities: int = 564,
    mc_rows: int = 10_000,
    reps: int = 5,
    workers: int = 1,
    percentile: float = 75.0,
    seed: int = 0,
) -> BenchResult:
    """Median wall time to plan one policy from a store of the given size."""
    store = synthetic_store(num_identities, seed)
    cfg = VitalSetConfig(percentile_p=percentile, epsilon=0.05, mc_rows=mc_rows, rng_seed=seed)
    build_policy(store, cfg, workers=workers)  # warm allocator and caches
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        build_policy(store, cfg, workers=workers)
        times.append((time.perf_counter() - t0) * 1000.0)
    return BenchResult(
        num_identities=num_identities,
        mc_rows=mc_rows,
        workers=workers,
        reps=reps,
        times_ms=tuple(times),
    )
