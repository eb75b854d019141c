from fractions import Fraction

import numpy as np
import pytest

from mwnc_app.analysis import WalkModel, complexity_bound, packet_loss_prob, point_process, single_barrier_moments
from mwnc_app.coopsched import InfeasiblePlanError, PlanningError, Topology
from mwnc_app.simulator import (
    CSV_COLUMNS, ConfigError, Metrics, ReceiverMetrics, SimConfig, build_plan, build_topology,
    prp_from_distance, resolve_speed, run,
)


def single_link(p):
    return Topology(prp=[[0.0, p], [p, 0.0]])


def test_config_validation(relay_topology):
    with pytest.raises(ConfigError):
        SimConfig(topology=relay_topology, protocol="tcp", V=0.5)
    with pytest.raises(ConfigError):
        SimConfig(topology=relay_topology, V=0.5, rho=0.5)
    with pytest.raises(ConfigError):
        SimConfig(topology=relay_topology)
    with pytest.raises(ConfigError):
        SimConfig(topology=relay_topology, rho=0.0)
    with pytest.raises(ConfigError):
        SimConfig(topology=relay_topology, protocol="rlnc", block_size=0)
    config = SimConfig(topology=relay_topology, V=0.57, slots=1000)
    assert config.V == Fraction(57, 100)
    assert config.warmup == 50


def test_perfect_channel():
    metrics = run(SimConfig(topology=single_link(1.0), W=4, V="1/2", slots=2000, debug=True))
    assert metrics.throughput_mean == pytest.approx(0.5, abs=0.01)
    assert metrics.delay_mean < 0.05
    assert metrics.loss == 0.0
    assert metrics.V == 0.5


def test_runs_are_reproducible(relay_topology):
    config = SimConfig(topology=relay_topology, protocol="mwncast", W=10, V=0.3, slots=1500, seed=4)
    assert run(config).to_row() == run(config).to_row()


@pytest.mark.timeout(300)
def test_cooperative_multicast_reaches_every_node(relay_topology):
    config = SimConfig(topology=relay_topology, protocol="mwncast", W=30, V=0.4, slots=20000, seed=3, debug=True)
    metrics = run(config)
    assert metrics.capacity == pytest.approx(0.6, abs=0.01)
    assert metrics.throughput_min >= 0.38
    assert metrics.loss <= 0.02
    assert set(metrics.receivers) == {1, 2, 3}


@pytest.mark.timeout(300)
def test_source_only_broadcast_is_limited_by_the_weak_node(relay_topology):
    metrics = run(SimConfig(topology=relay_topology, protocol="mwnc", W=10, V=0.5, slots=8000, seed=2))
    assert metrics.capacity == pytest.approx(0.4)
    assert metrics.receivers[3].loss > 0.1
    assert metrics.receivers[2].loss < 0.02


def test_rho_sets_the_window_speed(relay_topology):
    config = SimConfig(topology=relay_topology, protocol="mwnc", rho=0.5)
    plan = build_plan(config)
    assert resolve_speed(config, plan) == Fraction(1, 5)


def test_unreachable_node_makes_the_plan_infeasible():
    config = SimConfig(topology=Topology(prp=[[0.0, 0.0], [0.0, 0.0]]), V=0.5, slots=10)
    with pytest.raises(InfeasiblePlanError):
        run(config)


@pytest.mark.timeout(300)
def test_longer_windows_lose_less():
    losses = [
        run(SimConfig(topology=single_link(0.8), W=w, V=0.72, slots=20000, seed=5)).loss
        for w in (4, 12)
    ]
    assert losses[0] > losses[1]
    assert losses[0] > 0


@pytest.mark.timeout(300)
def test_block_baseline_delays_more_than_the_moving_window():
    link = single_link(0.8)
    window = run(SimConfig(topology=link, W=20, V=0.6, slots=20000, seed=6))
    block = run(SimConfig(topology=link, protocol="rlnc", block_size=20, slots=20000, seed=6))
    assert 0.7 <= block.throughput_mean <= 0.82
    assert window.delay_mean < block.delay_mean
    assert block.ops_per_packet > 0
    assert block.V is None


@pytest.mark.timeout(300)
def test_cooperative_block_baseline_runs(relay_topology):
    metrics = run(SimConfig(topology=relay_topology, protocol="coop-rlnc", block_size=10, slots=5000, seed=7,
                            debug=True))
    assert metrics.throughput_min > 0
    assert metrics.W == 10


def test_metrics_row_and_merge(relay_topology):
    config = SimConfig(topology=relay_topology, protocol="mwnc", W=10, V=0.3, slots=1000, seed=1)
    a = run(config)
    b = run(SimConfig(topology=relay_topology, protocol="mwnc", W=10, V=0.3, slots=1000, seed=2))
    assert tuple(a.to_row()) == CSV_COLUMNS
    pooled = a.merge(b)
    assert pooled.receivers[1].decoded == a.receivers[1].decoded + b.receivers[1].decoded
    assert pooled.receivers[1].slots == 2 * a.receivers[1].slots
    other = run(SimConfig(topology=relay_topology, protocol="mwnc", W=12, V=0.3, slots=500, seed=1))
    with pytest.raises(ValueError):
        a.merge(other)
    data = a.to_dict()
    assert len(data["receivers"]) == 3
    assert "capacity" in data


def test_receiver_metrics_without_samples():
    rec = ReceiverMetrics(node=1)
    assert (rec.throughput, rec.delay_mean, rec.loss, rec.ops_per_packet) == (0.0, 0.0, 0.0, 0.0)
    assert Metrics(protocol="mwnc", N=0, K=1, W=1, V=None, rho=None, seed=1, capacity=0.0).throughput_mean == 0.0


def test_prp_from_distance():
    values = prp_from_distance([0.0, 0.5, 1.0, 2.0])
    assert values[0] == 1.0
    assert values[2] == pytest.approx(np.exp(-1.0))
    assert np.all(np.diff(values) < 0)


def test_build_topology_generated_and_explicit():
    spec = {"n": 5, "radius": 1.5, "d0": 1.0, "alpha": 2.0, "seed": 3, "K": 2}
    topology = build_topology(spec)
    assert topology.prp.shape == (6, 6)
    assert topology.K == 2
    assert np.all(np.diag(topology.prp) == 0.0)
    assert np.allclose(topology.prp, topology.prp.T)
    assert np.array_equal(topology.prp, build_topology(spec).prp)
    explicit = build_topology({"prp": [[0.0, 0.5], [0.5, 0.0]], "K": 1})
    assert explicit.n == 1


@pytest.mark.parametrize("spec", [[], {"radius": 1.0}, {"n": 0}, {"n": 3, "radius": -1.0}])
def test_build_topology_rejects_bad_specs(spec):
    with pytest.raises(PlanningError):
        build_topology(spec)


def star(n, p):
    prp = np.zeros((n + 1, n + 1))
    prp[0, 1:] = p
    prp[1:, 0] = p
    return Topology(prp=prp)


@pytest.mark.slow
@pytest.mark.timeout(900)
def test_simulated_loss_follows_the_point_process():
    model = WalkModel(c_hat=0.8, v=0.72)
    compared = 0
    for w in (8, 12, 16, 20):
        simulated = run(SimConfig(topology=single_link(0.8), W=w, V=0.72, slots=200_000, seed=11)).loss
        if simulated < 1e-4:
            continue
        predicted = packet_loss_prob(point_process(w, model), model)
        assert predicted / 3 <= simulated <= 3 * predicted
        compared += 1
    assert compared >= 1


@pytest.mark.slow
@pytest.mark.timeout(900)
def test_decoding_cost_is_affine_in_the_window_and_under_the_bound():
    model = WalkModel(c_hat=0.8, v=0.6)
    ws = [10, 20, 40, 80]
    ops = []
    for w in ws:
        metrics = run(SimConfig(topology=single_link(0.8), W=w, V=0.6, slots=20_000, seed=12))
        assert metrics.ops_per_packet <= complexity_bound(w, model)
        ops.append(metrics.ops_per_packet)
    assert np.corrcoef(ws, ops)[0, 1] ** 2 >= 0.95
    block = run(SimConfig(topology=single_link(0.8), protocol="rlnc", block_size=40, slots=20_000, seed=12))
    assert block.ops_per_packet >= 5 * ops[ws.index(40)]


@pytest.mark.slow
@pytest.mark.timeout(900)
def test_simulated_delay_matches_the_model_with_a_long_window():
    scaled = []
    for v in (0.48, 0.6, 0.72):
        model = WalkModel(c_hat=0.8, v=v)
        d_bar = single_barrier_moments(model).d_bar
        metrics = run(SimConfig(topology=single_link(0.8), W=200, V=v, slots=40_000, seed=13))
        if v >= 0.6:
            assert metrics.delay_mean == pytest.approx(d_bar, rel=0.25)
        scaled.append(metrics.delay_mean * (1.0 - model.rho) ** 2)
    assert max(scaled) / min(scaled) <= 2.5


@pytest.mark.slow
@pytest.mark.timeout(900)
def test_window_throughput_holds_as_the_group_grows():
    window, block = [], []
    for n in (2, 8, 24):
        topology = star(n, 0.8)
        window.append(run(SimConfig(topology=topology, W=20, V=0.6, slots=10_000, seed=14)).throughput_mean)
        block.append(run(SimConfig(topology=topology, protocol="rlnc", block_size=20, slots=10_000,
                                   seed=14)).throughput_mean)
    assert max(window) / min(window) - 1.0 < 0.05
    assert block[-1] < block[0]


@pytest.mark.slow
@pytest.mark.timeout(1800)
@pytest.mark.parametrize("K", [2, 3])
def test_cooperative_window_beats_the_cooperative_block_baseline(K):
    topology = build_topology({"n": 30, "radius": 1.0, "d0": 1.0, "alpha": 2.0, "seed": 1, "K": K})
    window = run(SimConfig(topology=topology, protocol="mwncast", W=20, rho=0.95, slots=10_000, seed=15))
    block = run(SimConfig(topology=topology, protocol="coop-rlnc", block_size=20, slots=10_000, seed=15))
    assert window.throughput_mean >= 1.1 * block.throughput_mean
