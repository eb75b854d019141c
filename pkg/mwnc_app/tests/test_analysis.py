import logging
import math

import numpy as np
import pytest

from mwnc_app.analysis import (
    AnalysisError, DegenerateDriftError, NumericError, UnstableRegimeError, WalkModel, WalkStepper,
    absorption_probs, analyze_record, complexity_bound, conditional_exit_times, delay_scaling, exit_transform,
    find_theta0, mc_absorption, mc_walk, packet_loss_prob, point_process, single_barrier_moments, step_mgf,
    stopping_moments,
)
from mwnc_app.codec import CodecParams, DecoderState, PacketStore, encode

BASE = WalkModel(c_hat=0.8, v=0.6)
SLOW_DRIFT = WalkModel(c_hat=0.62, v=0.6)


def test_model_validation_and_derived_values():
    assert BASE.mu == pytest.approx(-0.2)
    assert BASE.sigma2 == pytest.approx(0.16)
    assert BASE.rho == pytest.approx(0.75)
    assert (BASE.d_l, BASE.d_r) == pytest.approx((0.4, 0.6))
    with pytest.raises(AnalysisError):
        WalkModel(c_hat=0.0, v=0.5)
    with pytest.raises(AnalysisError):
        WalkModel(c_hat=0.5, v=1.0)
    with pytest.raises(UnstableRegimeError):
        WalkModel(c_hat=0.5, v=0.6).require_stable()


def test_step_mgf_and_theta0():
    assert step_mgf(0.0, BASE) == pytest.approx(1.0)
    assert step_mgf(1.0, BASE) == pytest.approx(0.9007, abs=1e-4)
    theta0 = find_theta0(BASE)
    assert theta0 == pytest.approx(1.902, abs=2e-3)
    assert step_mgf(theta0, BASE) == pytest.approx(1.0, abs=1e-12)


def test_theta0_is_negative_for_positive_drift():
    model = WalkModel(c_hat=0.5, v=0.7)
    theta0 = find_theta0(model)
    assert theta0 < 0
    assert step_mgf(theta0, model) == pytest.approx(1.0, abs=1e-12)


def test_theta0_edge_cases():
    assert math.isinf(find_theta0(WalkModel(c_hat=1.0, v=0.5)))
    with pytest.raises(DegenerateDriftError):
        find_theta0(WalkModel(c_hat=0.6, v=0.6))


def test_absorption_probs_edge_cases():
    p_a, p_b = absorption_probs(3.0, 1.0, WalkModel(c_hat=0.6, v=0.6))
    assert (p_a, p_b) == pytest.approx((0.25, 0.75))
    assert absorption_probs(3.0, 1.0, WalkModel(c_hat=1.0, v=0.5)) == (0.0, 1.0)
    with pytest.raises(AnalysisError):
        absorption_probs(0.0, 1.0, BASE)


def test_absorption_probs_sum_to_one_and_fall_with_distance():
    previous = 1.0
    for A in (1.0, 2.0, 4.0, 8.0):
        p_a, p_b = absorption_probs(A, 2.0, BASE)
        assert p_a + p_b == pytest.approx(1.0)
        assert 0.0 < p_a < previous
        previous = p_a


@pytest.mark.timeout(300)
def test_absorption_probs_against_monte_carlo(rng):
    p_a, _ = absorption_probs(10.0, 10.0, SLOW_DRIFT)
    estimate = mc_absorption(SLOW_DRIFT, 10.0, 10.0, trials=4000, rng=rng)
    assert estimate.p_a == pytest.approx(p_a, abs=0.03)
    e_n, _ = stopping_moments(10.0, 10.0, SLOW_DRIFT)
    assert estimate.e_n == pytest.approx(e_n, rel=0.15)


def test_stopping_moments_satisfy_wald():
    for A, B in ((10.0, 10.0), (4.0, 1.2), (2.0, 6.0)):
        p_a, p_b = absorption_probs(A, B, SLOW_DRIFT)
        e_n, e_n2 = stopping_moments(A, B, SLOW_DRIFT)
        assert e_n == pytest.approx((A * p_a - B * p_b) / SLOW_DRIFT.mu, rel=5e-3)
        assert e_n2 >= e_n ** 2


def test_stopping_moments_without_drift():
    model = WalkModel(c_hat=0.6, v=0.6)
    e_n, e_n2 = stopping_moments(10.0, 10.0, model)
    assert e_n == pytest.approx(100.0 / 0.24)
    assert e_n2 == pytest.approx(100.0 * 500.0 / (3 * 0.24 ** 2))


def test_conditional_exit_times_average_back():
    A, B = 10.0, 10.0
    p_a, p_b = absorption_probs(A, B, SLOW_DRIFT)
    t_a, t_b = conditional_exit_times(A, B, SLOW_DRIFT)
    e_n, _ = stopping_moments(A, B, SLOW_DRIFT)
    assert p_a * t_a + p_b * t_b == pytest.approx(e_n, rel=5e-3)


def test_exit_transform_at_one_recovers_absorption():
    u, w = exit_transform(1.0 - 1e-9, 4.0, 2.0, BASE)
    p_a, p_b = absorption_probs(4.0, 2.0, BASE)
    assert u == pytest.approx(p_a, rel=1e-4)
    assert w == pytest.approx(p_b, rel=1e-4)


def test_exit_transform_on_a_perfect_channel():
    model = WalkModel(c_hat=1.0, v=0.5)
    u, w = exit_transform(0.9, 5.0, 1.0, model)
    assert u == 0.0
    assert w == pytest.approx(0.9 ** 2)


def test_single_barrier_moments():
    m = single_barrier_moments(BASE)
    assert (m.e_n, m.e_n2, m.d_bar) == pytest.approx((3.0, 21.0, 3.5))
    perfect = single_barrier_moments(WalkModel(c_hat=1.0, v=0.5))
    assert perfect.e_n == pytest.approx(1.0)
    with pytest.raises(UnstableRegimeError):
        single_barrier_moments(WalkModel(c_hat=0.5, v=0.6))


def test_delay_scaling_stays_bounded_near_capacity():
    values = [delay_scaling(WalkModel(c_hat=0.3 / rho, v=0.3)) for rho in (0.7, 0.8, 0.9, 0.95, 0.99)]
    assert max(values) / min(values) <= 2.0
    assert values[-1] == pytest.approx(0.7 / 0.6, rel=0.02)


def test_complexity_bound():
    assert complexity_bound(20, BASE) == pytest.approx(74.6)
    assert complexity_bound(40, BASE) - complexity_bound(20, BASE) == pytest.approx(72.0)


def test_point_process_structure():
    ppm = point_process(20, BASE)
    assert ppm.p_dd + ppm.p_dl == pytest.approx(1.0)
    assert ppm.p_ld + ppm.p_ll == pytest.approx(1.0)
    assert ppm.pi_d + ppm.pi_l == pytest.approx(1.0)
    assert ppm.t_dd > 0 and ppm.cycle > 0
    data = ppm.to_dict()
    assert set(data) == {"W", "transitions", "times", "stationary", "cycle"}
    with pytest.raises(AnalysisError):
        point_process(1, BASE)


def test_loss_probability_is_small_and_decays_geometrically():
    model = WalkModel(c_hat=0.8, v=0.72)
    assert packet_loss_prob(point_process(20, model), model) <= 1e-3
    ws = np.arange(4, 25, 2)
    losses = np.array([packet_loss_prob(point_process(int(w), model), model) for w in ws])
    assert np.all(losses > 0)
    assert np.all(np.diff(losses) < 0)
    assert np.corrcoef(ws, np.log(losses))[0, 1] <= -0.97


def test_analyze_record():
    record = analyze_record(0.8, 0.6, 20)
    assert record["theta0"] == pytest.approx(1.902, abs=2e-3)
    assert record["e_n"] == pytest.approx(3.0)
    assert record["d_bar"] == pytest.approx(3.5)
    assert record["complexity_bound"] == pytest.approx(74.6)
    assert record["point_process"]["W"] == 20
    with pytest.raises(UnstableRegimeError):
        analyze_record(0.5, 0.6, 20)


def test_walk_stepper_on_a_perfect_channel():
    stepper = WalkStepper("1/2")
    for _ in range(10):
        stepper.step(True)
    assert stepper.decoded == 5
    assert stepper.decode_slots == [1, 3, 5, 7, 9]
    assert stepper.delays == [0] * 5
    assert stepper.position == 0


def _track_decoder_with_stepper(seed, W, v, c_hat, slots):
    """
    Drive a decoder and a WalkStepper with the same receptions. Returns the
    number of slots compared; comparison stops at the first gap pivot, where
    the decoder holds a row the walk has no room for.
    """
    params = CodecParams(W=W, V=v)
    store = PacketStore(seed=seed)
    state = DecoderState(params)
    stepper = WalkStepper(params.V, params.W)
    rng = np.random.default_rng(seed)
    for t in range(1, slots + 1):
        heard = False
        if rng.random() < c_hat:
            before = len(state.collisions)
            state.ingest(encode(t, store, params, rng))
            heard = len(state.collisions) == before
        if state.gaps:
            return t - 1
        state.advance(t)
        stepper.step(heard)
        assert stepper.front == state.front
        assert stepper.decoded == state.decoded_count
        assert stepper.lost == state.G
        assert stepper.position == state.particle_position(t)
    return slots


def test_walk_stepper_tracks_the_decoder():
    compared = sum(_track_decoder_with_stepper(seed, 5, "3/5", 0.75, 400) for seed in range(10))
    assert compared >= 0.5 * 10 * 400


@pytest.mark.slow
@pytest.mark.timeout(600)
@pytest.mark.parametrize("W, v, c_hat", [(3, "1/2", 0.7), (8, "2/3", 0.8), (20, "9/10", 0.95)])
def test_walk_stepper_tracks_the_decoder_over_many_seeds(W, v, c_hat):
    seeds, slots = 100, 200
    compared = sum(_track_decoder_with_stepper(seed, W, v, c_hat, slots) for seed in range(seeds))
    assert compared >= 0.5 * seeds * slots


def test_walk_transition_frequencies_match_the_point_process(rng):
    W = 8
    stepper = WalkStepper(BASE.v, W)
    events = []
    for received in rng.random(200_000) < BASE.c_hat:
        decoded, lost = stepper.step(bool(received))
        if decoded:
            events.append("D")
        if lost:
            events.append("L")
    after_d = [b for a, b in zip(events, events[1:]) if a == "D"]
    ppm = point_process(W, BASE)
    assert after_d.count("D") / len(after_d) == pytest.approx(ppm.p_dd, abs=0.03)


@pytest.mark.timeout(300)
def test_transitions_after_a_decode_match_monte_carlo(rng):
    ppm = point_process(8, BASE)
    # a decode leaves the particle at d_R: 6.8 below the loss barrier, 1.2 above the decode one
    estimate = mc_absorption(BASE, 6.8, 1.2, trials=100_000, rng=rng)
    assert estimate.p_a == pytest.approx(ppm.p_dl, abs=0.03)
    assert estimate.p_b == pytest.approx(ppm.p_dd, abs=0.03)


@pytest.mark.timeout(300)
def test_transitions_after_a_loss_are_conservative(rng):
    ppm = point_process(8, BASE)
    # restart at W - 1 is 0.4 below the loss barrier; the lattice walk can only
    # cross it with overshoot, which the closed form leaves out
    estimate = mc_absorption(BASE, 0.39, 7.61, trials=100_000, rng=rng)
    assert estimate.p_a == pytest.approx(0.3225, abs=0.03)
    assert ppm.p_ll == pytest.approx(0.467, abs=0.01)
    assert ppm.p_ll > estimate.p_a
    assert ppm.p_ld == pytest.approx(1.0 - ppm.p_ll)


@pytest.mark.timeout(300)
def test_absorption_probs_short_barriers_against_monte_carlo(rng):
    _, p_b = absorption_probs(2.4, 0.6, BASE)
    estimate = mc_absorption(BASE, 2.4, 0.6, trials=200_000, rng=rng)
    assert p_b == pytest.approx(estimate.p_b, abs=0.03)


def test_stopping_moments_rejects_a_negative_variance(monkeypatch):
    monkeypatch.setattr("mwnc_app.analysis._derivatives_at_one", lambda fn, value, h=1e-4: (2.0, 1.0))
    with pytest.raises(NumericError):
        stopping_moments(4.0, 2.0, BASE)


def test_stopping_moments_clamps_rounding_noise(monkeypatch, caplog):
    monkeypatch.setattr(logging.getLogger("mwnc_app"), "propagate", True)
    monkeypatch.setattr("mwnc_app.analysis._derivatives_at_one", lambda fn, value, h=1e-4: (2.0, 2.0 - 1e-9))
    with caplog.at_level("WARNING", logger="mwnc_app.analysis"):
        e_n, e_n2 = stopping_moments(4.0, 2.0, BASE)
    assert (e_n, e_n2) == (2.0, 4.0)
    assert "clamped" in caplog.text


def test_mc_walk_decode_gaps_respect_wald_bounds(rng):
    estimate = mc_walk(BASE, 100_000, rng)
    lower = BASE.d_r / abs(BASE.mu)
    upper = (BASE.d_r + BASE.d_l) / abs(BASE.mu)
    assert lower - 0.1 <= estimate.e_n <= upper + 0.1
    assert estimate.cycles > 1000
    assert estimate.p_loss == 0.0


def test_mc_absorption_single_barrier_time(rng):
    estimate = mc_absorption(BASE, 50.0, 5.0, trials=3000, rng=rng)
    assert estimate.p_a < 0.01
    assert estimate.e_n == pytest.approx(5.0 / 0.2, rel=0.1)


def test_mc_walk_delay_stays_near_the_model_and_grows_with_load(rng):
    delays = []
    for v in (0.4, 0.56, 0.72):
        model = WalkModel(c_hat=0.8, v=v)
        estimate = mc_walk(model, 100_000, rng)
        assert estimate.delay <= 1.2 * single_barrier_moments(model).d_bar
        delays.append(estimate.delay)
    assert delays[0] < delays[1] < delays[2]


def test_mc_helpers_validate_inputs(rng):
    with pytest.raises(AnalysisError):
        mc_absorption(BASE, 1.0, 1.0, trials=0, rng=rng)
    with pytest.raises(AnalysisError):
        mc_walk(BASE, 0, rng)
