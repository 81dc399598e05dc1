"""Elimination baselines on synthetic arms, under a shared sample budget.

Median elimination and exponential-gap elimination are fixed-confidence
best-arm algorithms: their per-round quotas come from concentration
bounds and are enormous compared to what a tracing backend can afford.
Run against a finite budget they usually die mid-round; a round that
cannot complete its quota is aborted without eliminating anyone, since
acting on a partial round would void the bound that justified it.

Scaled variants cap the per-arm quota per round. That buys progress
inside the budget at the price of the original guarantee, which is the
honest way to put these algorithms on the same axis as the belief
sampler: same arms, same budget, survivor counts compared directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .abs_sampler import VitalSetConfig, build_policy
from .belief import BeliefStore
from .trace_model import SpanIdentity
from .utility import UtilityEstimate
from .belief import update_epoch


class BudgetExhausted(RuntimeError):
    """Raised when a draw request does not fit in the remaining budget."""


class SampleBudget:
    def __init__(self, total: int):
        if total < 1:
            raise ValueError("budget must be positive")
        self.total = int(total)
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.total - self.used

    def charge(self, n: int) -> None:
        if n > self.remaining:
            self.used = self.total
            raise BudgetExhausted(f"needed {n} draws with {self.remaining} left")
        self.used += n


@dataclass(frozen=True)
class ArmEnvironment:
    """Bernoulli arms with fixed means in [0, 1]."""

    means: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.means:
            raise ValueError("environment needs at least one arm")
        if any(not 0.0 <= m <= 1.0 for m in self.means):
            raise ValueError("arm means must lie in [0, 1]")

    @property
    def num_arms(self) -> int:
        return len(self.means)

    def draw(self, arm: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(n) < self.means[arm]).astype(np.float64)

    def top_arms(self, k: int) -> tuple[int, ...]:
        order = sorted(range(self.num_arms), key=lambda a: (-self.means[a], a))
        return tuple(sorted(order[:k]))


def make_arm_env(num_arms: int = 50, kind: str = "skewed", seed: int = 0) -> ArmEnvironment:
    """Synthetic arm sets.

    "skewed": a few clearly high arms, a band of decoys below them, and a
    mass of low arms; mirrors a system where a handful of operations carry
    most of the signal. "uniform": means spread evenly, no structure.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 4201))))
    if kind == "skewed":
        n_high = max(1, round(num_arms * 0.1))
        n_decoy = max(1, round(num_arms * 0.3))
        n_low = num_arms - n_high - n_decoy
        means = np.concatenate(
            [
                rng.uniform(0.75, 0.90, n_high),
                rng.uniform(0.50, 0.62, n_decoy),
                rng.uniform(0.08, 0.45, n_low),
            ]
        )
        rng.shuffle(means)
    elif kind == "uniform":
        means = rng.uniform(0.2, 0.8, num_arms)
    else:
        raise ValueError(f"unknown environment kind {kind!r}")
    return ArmEnvironment(tuple(float(m) for m in means))


def me_round_quota(eps_l: float, delta_l: float) -> int:
    """Per-arm draws a median-elimination round needs at (eps_l, delta_l)."""
    return math.ceil((4.0 / (eps_l / 2.0) ** 2) * math.log(3.0 / delta_l))


def ege_round_quota(eps_r: float, delta_r: float) -> int:
    """Per-arm draws an exponential-gap round needs at (eps_r, delta_r)."""
    return math.ceil((2.0 / eps_r**2) * math.log(2.0 / delta_r))


@dataclass(frozen=True)
class EliminationOutcome:
    name: str
    survivors: tuple[int, ...]
    samples_used: int
    trail: tuple[tuple[int, int], ...]  # (samples_used, survivor count) per event

    def eliminated_fraction(self, num_arms: int) -> float:
        return 1.0 - len(self.survivors) / num_arms


def _me_halve(
    env: ArmEnvironment,
    arms: list[int],
    quota: int,
    rng: np.random.Generator,
    budget: SampleBudget,
) -> list[int]:
    means = {}
    for a in arms:
        budget.charge(quota)
        means[a] = float(env.draw(a, quota, rng).mean())
    ranked = sorted(arms, key=lambda a: (-means[a], a))
    return sorted(ranked[: (len(arms) + 1) // 2])


def median_elimination(
    env: ArmEnvironment,
    arms: Sequence[int],
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    budget: SampleBudget,
    quota_cap: int | None = None,
    trail: list[tuple[int, int]] | None = None,
) -> int:
    """Halve the arm set on empirical means until one arm remains.

    Raises BudgetExhausted if any round cannot be paid for; the caller
    decides what an aborted search means for its own state.
    """
    current = sorted(arms)
    eps_l = epsilon / 4.0
    delta_l = delta / 2.0
    while len(current) > 1:
        quota = me_round_quota(eps_l, delta_l)
        if quota_cap is not None:
            quota = min(quota, quota_cap)
        current = _me_halve(env, current, quota, rng, budget)
        if trail is not None:
            trail.append((budget.used, len(current)))
        eps_l *= 0.75
        delta_l *= 0.5
    return current[0]


def me_run(
    env: ArmEnvironment,
    budget: SampleBudget,
    seed: int = 0,
    epsilon: float = 0.4,
    delta: float = 0.2,
    quota_cap: int | None = None,
) -> EliminationOutcome:
    """Median elimination as a top-level contender; survivors at abort."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 4301))))
    arms = list(range(env.num_arms))
    trail = [(0, len(arms))]
    eps_l = epsilon / 4.0
    delta_l = delta / 2.0
    try:
        while len(arms) > 1:
            quota = me_round_quota(eps_l, delta_l)
            if quota_cap is not None:
                quota = min(quota, quota_cap)
            arms = _me_halve(env, arms, quota, rng, budget)
            trail.append((budget.used, len(arms)))
            eps_l *= 0.75
            delta_l *= 0.5
    except BudgetExhausted:
        trail.append((budget.used, len(arms)))
    return EliminationOutcome("median_elimination", tuple(arms), budget.used, tuple(trail))


def ege_run(
    env: ArmEnvironment,
    budget: SampleBudget,
    seed: int = 0,
    delta: float = 0.2,
    quota_cap: int | None = None,
    me_quota_cap: int | None = None,
    max_rounds: int = 30,
) -> EliminationOutcome:
    """Exponential-gap elimination; survivors at abort.

    Each round samples every live arm, finds a reference arm with a
    nested (possibly capped) median-elimination search, and drops arms
    whose round mean sits more than eps_r below the reference's.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 4302))))
    arms = list(range(env.num_arms))
    trail = [(0, len(arms))]
    r = 1
    try:
        while len(arms) > 1 and r <= max_rounds:
            eps_r = 2.0 ** (-r) / 4.0
            delta_r = delta / (50.0 * r**3)
            quota = ege_round_quota(eps_r, delta_r)
            if quota_cap is not None:
                quota = min(quota, quota_cap)
            means = {}
            for a in arms:
                budget.charge(quota)
                means[a] = float(env.draw(a, quota, rng).mean())
            ref = median_elimination(
                env, arms, eps_r / 2.0, delta_r, rng, budget, quota_cap=me_quota_cap
            )
            arms = [a for a in arms if means[a] >= means[ref] - eps_r]
            trail.append((budget.used, len(arms)))
            r += 1
    except BudgetExhausted:
        trail.append((budget.used, len(arms)))
    return EliminationOutcome("exponential_gap", tuple(arms), budget.used, tuple(trail))


def abs_run(
    env: ArmEnvironment,
    budget: SampleBudget,
    seed: int = 0,
    draws_per_arm: int = 4,
    lam: float = 0.1,
    mode: str = "discounted_count",
    percentile: float = 90.0,
    epsilon: float = 0.05,
    mc_rows: int = 20_000,
    max_epochs: int = 40,
) -> EliminationOutcome:
    """The belief sampler driving elimination on the same arm interface.

    Arms become span identities; batch means (normalized by the batch
    max) feed the usual belief update, and an arm is retired once its
    vital-set probability falls below epsilon. Eliminated arms stop
    costing budget, which is the mechanism the fixed-quota baselines
    lack. The counting mode is used here because elimination wants
    beliefs that concentrate with evidence.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 4303))))
    identities = [SpanIdentity(f"arm-{i:03d}", "reward") for i in range(env.num_arms)]
    store = BeliefStore(lam=lam, mode=mode)
    survivors = list(range(env.num_arms))
    trail = [(0, len(survivors))]
    for epoch in range(1, max_epochs + 1):
        if len(survivors) <= 1 or budget.remaining < draws_per_arm * len(survivors):
            break
        means = {}
        for a in survivors:
            budget.charge(draws_per_arm)
            means[a] = float(env.draw(a, draws_per_arm, rng).mean())
        top = max(means.values())
        estimates = [
            UtilityEstimate(
                identity=identities[a],
                sample_count=draws_per_arm,
                raw=means[a],
                normalized=means[a] / top if top > 0 else 0.0,
            )
            for a in survivors
        ]
        update_epoch(store, estimates)
        live = BeliefStore(
            lam=lam,
            mode=mode,
            epoch=store.epoch,
            beliefs={identities[a]: store.beliefs[identities[a]] for a in survivors},
        )
        cfg = VitalSetConfig(
            percentile_p=percentile,
            epsilon=epsilon,
            mc_rows=mc_rows,
            rng_seed=int(np.random.SeedSequence((seed, 4304, epoch)).generate_state(1)[0]),
        )
        policy = build_policy(live, cfg)
        survivors = [a for a in survivors if not policy.eliminated(identities[a])]
        trail.append((budget.used, len(survivors)))
    return EliminationOutcome("belief_sampler", tuple(survivors), budget.used, tuple(trail))


@dataclass(frozen=True)
class ComparisonConfig:
    num_arms: int = 50
    budget: int = 2000
    env_kind: str = "skewed"
    seed: int = 0
    epsilon: float = 0.4
    delta: float = 0.2
    ege_quota_cap: int = 24
    ege_me_cap: int = 6
    abs_draws_per_arm: int = 4
    abs_lam: float = 0.1
    abs_mode: str = "discounted_count"
    abs_percentile: float = 90.0
    abs_epsilon: float = 0.05
    abs_mc_rows: int = 20_000


@dataclass
class ComparisonResult:
    config: ComparisonConfig
    env: ArmEnvironment
    outcomes: dict[str, EliminationOutcome] = field(default_factory=dict)

    def survivor_counts(self) -> dict[str, int]:
        return {name: len(o.survivors) for name, o in self.outcomes.items()}

    def top_arm_recall(self, k: int = 5) -> dict[str, float]:
        top = set(self.env.top_arms(k))
        return {
            name: len(top.intersection(o.survivors)) / k for name, o in self.outcomes.items()
        }

    def to_json_dict(self) -> dict:
        return {
            "config": {
                "numArms": self.config.num_arms,
                "budget": self.config.budget,
                "envKind": self.config.env_kind,
                "seed": self.config.seed,
                "epsilon": self.config.epsilon,
                "delta": self.config.delta,
                "egeQuotaCap": self.config.ege_quota_cap,
                "egeMeCap": self.config.ege_me_cap,
            },
            "armMeans": list(self.env.means),
            "outcomes": {
                name: {
                    "survivors": list(o.survivors),
                    "samplesUsed": o.samples_used,
                    "eliminatedFraction": o.eliminated_fraction(self.env.num_arms),
                    "trail": [list(point) for point in o.trail],
                }
                for name, o in sorted(self.outcomes.items())
            },
            "topArmRecall": self.top_arm_recall(),
        }


def compare_elimination(config: ComparisonConfig = ComparisonConfig()) -> ComparisonResult:
    """Run all three contenders on one environment, one budget each."""
    env = make_arm_env(config.num_arms, config.env_kind, config.seed)
    result = ComparisonResult(config=config, env=env)
    result.outcomes["median_elimination"] = me_run(
        env,
        SampleBudget(config.budget),
        seed=config.seed,
        epsilon=config.epsilon,
        delta=config.delta,
    )
    result.outcomes["exponential_gap"] = ege_run(
        env,
        SampleBudget(config.budget),
        seed=config.seed,
        delta=config.delta,
        quota_cap=config.ege_quota_cap,
        me_quota_cap=config.ege_me_cap,
    )
    result.outcomes["belief_sampler"] = abs_run(
        env,
        SampleBudget(config.budget),
        seed=config.seed,
        draws_per_arm=config.abs_draws_per_arm,
        lam=config.abs_lam,
        mode=config.abs_mode,
        percentile=config.abs_percentile,
        epsilon=config.abs_epsilon,
        mc_rows=config.abs_mc_rows,
    )
    return result
