"""Beta beliefs over span utility, updated once per batch epoch.

Each identity carries Beta(alpha, beta) pseudo-counts for "this span's
latency behavior is worth watching". Updates blend the batch-normalized
utility into the parameters with an exponential forgetting factor, so
stale evidence decays and the controller can track shifting behavior.

Two update modes exist because they trade concentration differently:

* ``verbatim_ewma``: alpha <- (1-lam)*alpha + lam*u and
  beta <- (1-lam)*beta + lam*(1-u). The parameter *sum* converges to 1,
  which keeps posteriors deliberately wide: sampling probabilities stay
  exploratory and never collapse, but confidence never accumulates
  either.
* ``discounted_count``: alpha <- (1-lam)*alpha + u and
  beta <- (1-lam)*beta + (1-u). The sum converges to 1/lam, i.e. a
  sliding evidence window of about 1/lam epochs, so posteriors actually
  concentrate and low-utility spans can be eliminated with confidence.

Identities absent from a batch are left untouched rather than decayed:
"we saw nothing" must not masquerade as "we saw nothing interesting".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .trace_model import SpanIdentity
from .utility import UtilityEstimate

PARAM_FLOOR = 1e-9
UPDATE_MODES = ("verbatim_ewma", "discounted_count")


class NormalizationOutOfRange(ValueError):
    pass


@dataclass
class BetaBelief:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("beta parameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def init_belief() -> BetaBelief:
    """Uninformed prior: Beta(1, 1), the uniform distribution."""
    return BetaBelief(1.0, 1.0)


def posterior_variance(b: BetaBelief) -> float:
    s = b.alpha + b.beta
    return (b.alpha * b.beta) / (s * s * (s + 1.0))


@dataclass
class BeliefStore:
    """All per-identity beliefs plus the update configuration.

    The store is mutated only by its owning controller loop; anything that
    reads concurrently (the Monte-Carlo sampler, report writers) should
    take a snapshot() instead.
    """

    lam: float = 0.3
    mode: str = "verbatim_ewma"
    epoch: int = 0
    beliefs: dict[SpanIdentity, BetaBelief] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.mode not in UPDATE_MODES:
            raise ValueError(f"unknown update mode {self.mode!r}")

    def snapshot(self) -> "BeliefStore":
        return BeliefStore(
            lam=self.lam,
            mode=self.mode,
            epoch=self.epoch,
            beliefs={k: BetaBelief(v.alpha, v.beta) for k, v in self.beliefs.items()},
        )


def update_epoch(store: BeliefStore, estimates: Iterable[UtilityEstimate]) -> BeliefStore:
    """Fold one batch of normalized utilities into the store (in place).

    New identities enter at the Beta(1, 1) prior and then receive this
    epoch's update like everyone else. Parameters are floored at 1e-9 so
    extreme lambda/utility combinations cannot drive them to zero.
    """
    lam = store.lam
    for est in estimates:
        u = est.normalized
        if not 0.0 <= u <= 1.0:
            raise NormalizationOutOfRange(
                f"{est.identity.label()}: normalized utility {u} outside [0, 1]"
            )
        b = store.beliefs.get(est.identity)
        if b is None:
            b = init_belief()
            store.beliefs[est.identity] = b
        if store.mode == "verbatim_ewma":
            b.alpha = (1.0 - lam) * b.alpha + lam * u
            b.beta = (1.0 - lam) * b.beta + lam * (1.0 - u)
        else:
            b.alpha = (1.0 - lam) * b.alpha + u
            b.beta = (1.0 - lam) * b.beta + (1.0 - u)
        b.alpha = max(b.alpha, PARAM_FLOOR)
        b.beta = max(b.beta, PARAM_FLOOR)
    store.epoch += 1
    return store


# --- snapshot wire format ----------------------------------------------------
#
# {"epoch": int, "lambda": float, "mode": str,
#  "beliefs": [{"service": ..., "operation": ..., "url": ...,
#               "alpha": float, "beta": float}, ...]}


def store_to_json_dict(store: BeliefStore) -> dict:
    return {
        "epoch": store.epoch,
        "lambda": store.lam,
        "mode": store.mode,
        "beliefs": [
            {
                "service": identity.service,
                "operation": identity.operation,
                "url": identity.url,
                "alpha": b.alpha,
                "beta": b.beta,
            }
            for identity, b in sorted(store.beliefs.items())
        ],
    }


def store_from_json_dict(obj: dict) -> BeliefStore:
    store = BeliefStore(lam=float(obj["lambda"]), mode=str(obj["mode"]), epoch=int(obj["epoch"]))
    for row in obj["beliefs"]:
        identity = SpanIdentity(row["service"], row["operation"], row.get("url", ""))
        store.beliefs[identity] = BetaBelief(float(row["alpha"]), float(row["beta"]))
    return store


def save_store(store: BeliefStore, path: str) -> None:
    with open(path, "w") as f:
        json.dump(store_to_json_dict(store), f, indent=2, sort_keys=True)
        f.write("\n")


def load_store(path: str) -> BeliefStore:
    with open(path) as f:
        return store_from_json_dict(json.load(f))
