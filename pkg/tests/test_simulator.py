"""Synthetic workload generation and the closed control loop."""
import dataclasses

import numpy as np
import pytest

from spanbandit import (
    CallSpec,
    CanaryAnomaly,
    ContentionAnomaly,
    ControllerConfig,
    InvalidTopology,
    OperationSpec,
    RandomDelayAnomaly,
    SamplingPolicy,
    SpanIdentity,
    TopologySpec,
    WorkloadSpec,
    decompose,
    generate_request,
    get_preset,
    latency_from_median_us,
    load_spec,
    run_closed_loop,
    save_spec,
    simulate_workload,
    with_seed,
)
from spanbandit.simulator import faulty_identities, request_rng

ROOT = SpanIdentity("web", "handle")
MID = SpanIdentity("svc", "mid")
LEAF = SpanIdentity("db", "find")
SIDE = SpanIdentity("cache", "get")


def _topology():
    return TopologySpec(
        root=ROOT,
        operations=(
            OperationSpec(ROOT, latency_from_median_us(900, 0.2),
                          calls=(CallSpec(MID), CallSpec(MID), CallSpec(SIDE, "parallel"))),
            OperationSpec(MID, latency_from_median_us(400, 0.3),
                          calls=(CallSpec(LEAF), CallSpec(LEAF))),
            OperationSpec(LEAF, latency_from_median_us(200, 0.5)),
            OperationSpec(SIDE, latency_from_median_us(80, 0.1)),
        ),
    )


def test_occurrence_counts_multiply_through_call_sites():
    counts = _topology().occurrence_counts()
    assert counts[ROOT] == 1
    assert counts[MID] == 2
    assert counts[LEAF] == 4
    assert counts[SIDE] == 1


def test_preset_occurrence_counts():
    rail = get_preset("rail").topology.occurrence_counts()
    assert sum(rail.values()) == 49
    assert rail[SpanIdentity("station", "lookup")] == 3
    assert rail[SpanIdentity("config", "get")] == 3
    media = get_preset("media").topology.occurrence_counts()
    assert sum(media.values()) == 39
    assert media[SpanIdentity("video-db", "find-batch")] == 2


def test_invalid_topologies_rejected():
    ops = _topology().operations
    with pytest.raises(InvalidTopology):
        TopologySpec(root=SpanIdentity("ghost", "op"), operations=ops)
    with pytest.raises(InvalidTopology):
        TopologySpec(root=ROOT, operations=ops + (ops[-1],))
    with pytest.raises(InvalidTopology):
        TopologySpec(
            root=ROOT,
            operations=(
                OperationSpec(ROOT, latency_from_median_us(100, 0.1),
                              calls=(CallSpec(SpanIdentity("nobody", "op")),)),
            ),
        )
    with pytest.raises(InvalidTopology):
        a, b = SpanIdentity("a", "op"), SpanIdentity("b", "op")
        TopologySpec(
            root=a,
            operations=(
                OperationSpec(a, latency_from_median_us(100, 0.1), calls=(CallSpec(b),)),
                OperationSpec(b, latency_from_median_us(100, 0.1), calls=(CallSpec(a),)),
            ),
        )
    with pytest.raises(InvalidTopology):
        CallSpec(LEAF, mode="fanout")
    with pytest.raises(InvalidTopology):
        latency_from_median_us(100, -0.5)


def test_latency_model_median():
    model = latency_from_median_us(700, 0.4)
    rng = np.random.default_rng(0)
    draws = np.array([model.draw(rng) for _ in range(20_000)])
    assert abs(np.median(draws) - 700) / 700 < 0.02


def test_full_policy_recovers_drawn_self_times():
    topo = _topology()
    out: dict[str, int] = {}
    trace = generate_request(
        topo, (), None, request_rng(3, 0), request_index=0, self_times_out=out
    )
    decomposed = {d.span_id: d for d in decompose(trace)}
    assert set(out) == set(decomposed)
    for span_id, drawn in out.items():
        assert decomposed[span_id].self_segment_us == drawn
    assert len(trace) == 8


def test_policy_does_not_perturb_latency_draws():
    topo = _topology()
    full = generate_request(topo, (), None, request_rng(11, 4), request_index=4)
    thin_policy = SamplingPolicy(
        epoch=1, epsilon=0.05, percentile=75.0,
        entries={MID: 0.3, LEAF: 0.05, SIDE: 0.05, ROOT: 1.0},
    )
    thin = generate_request(topo, (), thin_policy, request_rng(11, 4), request_index=4)
    assert thin.root.duration_us == full.root.duration_us
    full_keys = {(r.identity, r.start_us, r.duration_us) for r in full.preorder()}
    thin_keys = {(r.identity, r.start_us, r.duration_us) for r in thin.preorder()}
    assert thin_keys <= full_keys
    assert len(thin) <= len(full)


def test_thinned_traces_stay_valid_and_conserve_latency():
    topo = _topology()
    policy = SamplingPolicy(
        epoch=1, epsilon=0.05, percentile=75.0,
        entries={MID: 0.4, LEAF: 0.2, SIDE: 0.5, ROOT: 1.0},
    )
    for idx in range(300):
        t = generate_request(topo, (), policy, request_rng(29, idx), request_index=idx)
        assert t.root.identity == ROOT
        for d in decompose(t):
            assert d.duration_us == d.child_waiting_us + d.self_segment_us
            assert d.self_segment_us >= 0


def test_dropped_child_self_time_absorbs_into_ancestor():
    topo = _topology()
    zero = SamplingPolicy(
        epoch=1, epsilon=0.0, percentile=75.0,
        entries={MID: 0.0, LEAF: 0.0, SIDE: 0.0, ROOT: 1.0},
    )
    t = generate_request(topo, (), zero, request_rng(7, 0), request_index=0)
    assert len(t) == 1
    (d,) = decompose(t)
    assert d.self_segment_us == t.root.duration_us


def test_head_sampling_rate():
    topo = _topology()
    workload = WorkloadSpec(num_requests=3000, request_sampling_rate=0.3, rng_seed=17)
    traces, _ = simulate_workload(topo, (), workload)
    frac = len(traces) / workload.num_requests
    assert abs(frac - 0.3) < 0.03
    with pytest.raises(ValueError):
        WorkloadSpec(request_sampling_rate=0.0)
    with pytest.raises(ValueError):
        WorkloadSpec(request_sampling_rate=1.2)


def test_random_delay_ground_truth_and_activation_counts():
    topo = _topology()
    anomaly = RandomDelayAnomaly(target=LEAF, probability=1.0, delay_mean_us=5000.0)
    workload = WorkloadSpec(num_requests=50, rng_seed=23)
    traces, truth = simulate_workload(topo, (anomaly,), workload)
    assert truth.faulty == (LEAF,)
    label = f"random_delay:{LEAF.label()}"
    # probability 1.0 fires at every one of the 4 LEAF instances per request
    assert truth.activation_counts()[label] == 4 * len(traces)


def test_contention_window_and_faulty_identities():
    topo = _topology()
    anomaly = ContentionAnomaly(service="db", factor=50.0, window=(10, 20))
    workload = WorkloadSpec(num_requests=30, rng_seed=31)
    traces, truth = simulate_workload(topo, (anomaly,), workload)
    assert truth.faulty == (LEAF,)
    fired = set(truth.activations[f"contention:db"])
    assert fired == set(range(10, 20))
    assert faulty_identities(topo, (CanaryAnomaly(service="svc"),)) == (MID,)


def test_canary_routing_stamps_tags_and_slows_service():
    topo = _topology()
    always = CanaryAnomaly(service="db", fraction=1.0, delay_mean_us=4000.0, delay_std_us=1.0)
    never = dataclasses.replace(always, fraction=0.0)
    workload = WorkloadSpec(num_requests=40, rng_seed=41)
    canary_traces, _ = simulate_workload(topo, (always,), workload)
    stable_traces, _ = simulate_workload(topo, (never,), workload)
    for t in canary_traces:
        for rec in t.preorder():
            if rec.identity.service == "db":
                assert rec.tags["service.version"] == "canary"
    for t in stable_traces:
        for rec in t.preorder():
            if rec.identity.service == "db":
                assert rec.tags["service.version"] == "stable"

    def mean_leaf_self(traces):
        vals = [
            d.self_segment_us
            for t in traces
            for d in decompose(t)
            if d.identity == LEAF
        ]
        return float(np.mean(vals))

    assert mean_leaf_self(canary_traces) > mean_leaf_self(stable_traces) + 3000


def test_closed_loop_is_deterministic_up_to_timing():
    preset = get_preset("media")
    workload = dataclasses.replace(preset.workload, num_requests=10_000)
    controller = ControllerConfig(mc_rows=2000)

    def run():
        return run_closed_loop(preset.topology, preset.anomalies, workload, controller, num_epochs=4)

    r1, r2 = run(), run()
    for a, b in zip(r1.rows, r2.rows):
        assert dataclasses.replace(a, inference_ms=0.0) == dataclasses.replace(b, inference_ms=0.0)
    assert r1.policy.entries == r2.policy.entries
    assert r1.rows[-1].samples_seen == 4 * workload.batch_size


def test_closed_loop_learns_to_watch_the_fault():
    preset = get_preset("media")
    workload = dataclasses.replace(preset.workload, num_requests=100_000)
    controller = ControllerConfig(mc_rows=2000)
    result = run_closed_loop(preset.topology, preset.anomalies, workload, controller, num_epochs=8)
    assert result.rows[-1].faulty_probability > 0.9
    assert result.rows[-1].fraction_enabled < 0.6
    assert result.cumulative_fraction_enabled() <= 1.0


def test_with_seed_replaces_only_the_seed():
    base = WorkloadSpec(num_requests=77, request_sampling_rate=0.5, batch_size=10, rng_seed=1)
    other = with_seed(base, 99)
    assert other.rng_seed == 99
    assert (other.num_requests, other.request_sampling_rate, other.batch_size) == (77, 0.5, 10)
    assert base.rng_seed == 1


def test_spec_file_round_trip(tmp_path):
    preset = get_preset("media-canary")
    path = tmp_path / "spec.json"
    save_spec(preset.topology, preset.anomalies, preset.workload, str(path))
    topo, anomalies, workload = load_spec(str(path))
    assert topo == preset.topology
    assert anomalies == preset.anomalies
    assert workload == preset.workload
    # Identical generation from the reloaded document.
    t1 = generate_request(preset.topology, preset.anomalies, None, request_rng(5, 1), request_index=1)
    t2 = generate_request(topo, anomalies, None, request_rng(5, 1), request_index=1)
    assert [
        (r.identity, r.start_us, r.duration_us, tuple(sorted(r.tags.items())))
        for r in t1.preorder()
    ] == [
        (r.identity, r.start_us, r.duration_us, tuple(sorted(r.tags.items())))
        for r in t2.preorder()
    ]
