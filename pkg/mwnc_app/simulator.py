"""
Slotted simulation of MWNC, MWNCast and the block-RLNC baselines over
independent Bernoulli erasure links.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from .codec import CodecParams, DecoderState, PacketStore, as_rational, draw_coefficients, encode
from .gf256 import combine
from .coopsched import (
    DEFAULT_DELTA, InfeasiblePlanError, PlanningError, RelayPlan, Topology, draw_slot, select_relays,
    source_only_plan,
)
from .rlnc import BlockDecoder

logger = logging.getLogger(__name__)

PROTOCOLS = ("mwnc", "mwncast", "rlnc", "coop-rlnc")
WINDOW_PROTOCOLS = ("mwnc", "mwncast")
COOPERATIVE = ("mwncast", "coop-rlnc")
CSV_COLUMNS = (
    "protocol", "N", "K", "W", "V", "rho", "seed", "throughput_min", "throughput_mean",
    "delay_mean", "delay_max", "loss", "ops_per_packet",
)


class SimulationError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    protocol: str = "mwnc"
    W: int = 20
    V: Optional[Fraction] = None
    rho: Optional[float] = None
    block_size: int = 20
    slots: int = 100_000
    seed: int = 1
    payload_len: int = 0
    warmup_fraction: float = 0.05
    delta: float = DEFAULT_DELTA
    debug: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"Unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}.")
        if self.slots < 1:
            raise ConfigError("slots must be >= 1.")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1).")
        if self.protocol in WINDOW_PROTOCOLS:
            if (self.V is None) == (self.rho is None):
                raise ConfigError("Give exactly one of V and rho.")
            if self.rho is not None and not 0.0 < self.rho <= 1.0:
                raise ConfigError(f"rho must lie in (0, 1], got {self.rho}.")
            if self.W < 1:
                raise ConfigError("W must be >= 1.")
        elif self.block_size < 1:
            raise ConfigError("block_size must be >= 1.")
        if self.V is not None:
            object.__setattr__(self, "V", as_rational(self.V))

    @property
    def warmup(self) -> int:
        return int(self.slots * self.warmup_fraction)


@dataclass
class ReceiverMetrics:
    """Sums for one receiver; ratios are derived so records pool by addition."""
    node: int
    slots: int = 0
    decoded: int = 0
    delay_sum: float = 0.0
    delay_max: float = 0.0
    delayed: int = 0
    lost: int = 0
    eligible: int = 0
    ops: int = 0

    @property
    def throughput(self) -> float:
        return self.decoded / self.slots if self.slots else 0.0

    @property
    def delay_mean(self) -> float:
        return self.delay_sum / self.delayed if self.delayed else 0.0

    @property
    def loss(self) -> float:
        return self.lost / self.eligible if self.eligible else 0.0

    @property
    def ops_per_packet(self) -> float:
        return self.ops / self.decoded if self.decoded else 0.0

    def merge(self, other: "ReceiverMetrics") -> "ReceiverMetrics":
        return ReceiverMetrics(
            node=self.node,
            slots=self.slots + other.slots,
            decoded=self.decoded + other.decoded,
            delay_sum=self.delay_sum + other.delay_sum,
            delay_max=max(self.delay_max, other.delay_max),
            delayed=self.delayed + other.delayed,
            lost=self.lost + other.lost,
            eligible=self.eligible + other.eligible,
            ops=self.ops + other.ops,
        )

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "throughput": self.throughput,
            "delay_mean": self.delay_mean,
            "delay_max": self.delay_max,
            "loss": self.loss,
            "ops_per_packet": self.ops_per_packet,
            "decoded": self.decoded,
            "lost": self.lost,
        }


@dataclass
class Metrics:
    protocol: str
    N: int
    K: int
    W: int
    V: Optional[float]
    rho: Optional[float]
    seed: int
    capacity: float
    receivers: Dict[int, ReceiverMetrics] = field(default_factory=dict)

    @property
    def throughput_min(self) -> float:
        return min((r.throughput for r in self.receivers.values()), default=0.0)

    @property
    def throughput_mean(self) -> float:
        return float(np.mean([r.throughput for r in self.receivers.values()])) if self.receivers else 0.0

    @property
    def delay_mean(self) -> float:
        delayed = sum(r.delayed for r in self.receivers.values())
        return sum(r.delay_sum for r in self.receivers.values()) / delayed if delayed else 0.0

    @property
    def delay_max(self) -> float:
        return max((r.delay_max for r in self.receivers.values()), default=0.0)

    @property
    def loss(self) -> float:
        eligible = sum(r.eligible for r in self.receivers.values())
        return sum(r.lost for r in self.receivers.values()) / eligible if eligible else 0.0

    @property
    def ops_per_packet(self) -> float:
        decoded = sum(r.decoded for r in self.receivers.values())
        return sum(r.ops for r in self.receivers.values()) / decoded if decoded else 0.0

    def merge(self, other: "Metrics") -> "Metrics":
        if (self.protocol, self.N, self.K, self.W, self.V) != (other.protocol, other.N, other.K, other.W, other.V):
            raise ValueError("Only runs of the same configuration can be pooled.")
        pooled = dict(self.receivers)
        for node, rec in other.receivers.items():
            pooled[node] = pooled[node].merge(rec) if node in pooled else rec
        return replace(self, receivers=dict(sorted(pooled.items())))

    def to_row(self) -> dict:
        return {
            "protocol": self.protocol,
            "N": self.N,
            "K": self.K,
            "W": self.W,
            "V": self.V,
            "rho": self.rho,
            "seed": self.seed,
            "throughput_min": self.throughput_min,
            "throughput_mean": self.throughput_mean,
            "delay_mean": self.delay_mean,
            "delay_max": self.delay_max,
            "loss": self.loss,
            "ops_per_packet": self.ops_per_packet,
        }

    def to_dict(self) -> dict:
        data = self.to_row()
        data["capacity"] = self.capacity
        data["receivers"] = [r.to_dict() for r in self.receivers.values()]
        return data


def build_plan(config: SimConfig) -> RelayPlan:
    if config.protocol in COOPERATIVE:
        _, plan = select_relays(config.topology, config.delta)
    else:
        plan = source_only_plan(config.topology)
    if plan.capacity <= 0:
        raise InfeasiblePlanError("Some node cannot be reached at any positive rate.")
    return plan


def resolve_speed(config: SimConfig, plan: RelayPlan) -> Fraction:
    if config.V is not None:
        return config.V
    return as_rational(float(config.rho) * plan.capacity)


def _listener_choice(node: int, transmitters: List[int], prp: np.ndarray) -> int:
    best = transmitters[0]
    for tx in transmitters[1:]:
        if prp[tx, node] > prp[best, node]:
            best = tx
    return best


def _check_slot(t: int, transmitters: List[int], listened: Dict[int, int], K: int) -> None:
    if len(transmitters) > K:
        raise SimulationError(f"slot {t}: {len(transmitters)} transmitters on {K} channels.")
    overlap = set(transmitters) & set(listened)
    if overlap:
        raise SimulationError(f"slot {t}: nodes {sorted(overlap)} transmitted and received.")


def _record_decodes(rec: ReceiverMetrics, packets: Sequence[int], t: int, params: CodecParams,
                    first_measured: int) -> None:
    for packet in packets:
        if packet >= first_measured:
            delay = t - params.first_slot(packet)
            rec.delay_sum += delay
            rec.delay_max = max(rec.delay_max, delay)
            rec.delayed += 1
    rec.decoded += len(packets)


def run(config: SimConfig) -> Metrics:
    """
    One deterministic run. Each slot the scheduler draws a round, the source
    and that round's relays transmit, every other node hears exactly one
    transmitter, and every decoder closes the slot.
    """
    if config.protocol not in WINDOW_PROTOCOLS:
        return run_rlnc(config)
    topology = config.topology
    prp = topology.prp
    plan = build_plan(config)
    v = resolve_speed(config, plan)
    if not 0 < v <= 1:
        raise ConfigError(f"Window speed {v} is outside (0, 1].")
    params = CodecParams(W=config.W, V=v, payload_len=config.payload_len)
    seeds = np.random.SeedSequence(config.seed).spawn(3 + topology.n)
    sched_rng = np.random.default_rng(seeds[0])
    code_rng = np.random.default_rng(seeds[1])
    relay_rng = np.random.default_rng(seeds[2])
    channel = {j: np.random.default_rng(seeds[2 + j]) for j in topology.nodes}
    store = PacketStore(config.payload_len, seed=config.seed)
    states = {j: DecoderState(params, retain_payloads=False) for j in topology.nodes}
    relay_set = set(plan.relays)
    warmup = config.warmup
    records = {j: ReceiverMetrics(node=j) for j in topology.nodes}
    ops_at_warmup = {j: 0 for j in topology.nodes}
    first_measured = params.window_hi(warmup) + 1 if warmup else 1

    for t in range(1, config.slots + 1):
        index = draw_slot(plan, sched_rng)
        active = plan.rounds[index].relays if index is not None else ()
        symbols = {0: encode(t, store, params, code_rng)}
        for i in active:
            symbol = states[i].relay_recode(t, relay_rng)
            if symbol is not None:
                symbols[i] = symbol
        transmitters = sorted(symbols)
        listened: Dict[int, int] = {}
        for j in topology.nodes:
            if j in active:
                continue
            if j in relay_set:
                tx = 0
            else:
                tx = _listener_choice(j, transmitters, prp)
            listened[j] = tx
            if channel[j].random() < prp[tx, j]:
                event = states[j].ingest(symbols[tx])
                if event is not None and t > warmup:
                    _record_decodes(records[j], event.packets, t, params, first_measured)
        for j in topology.nodes:
            loss = states[j].advance(t)
            if loss is not None:
                records[j].lost += sum(1 for p in loss.packets if p >= first_measured)
                if loss.recovered and t > warmup:
                    _record_decodes(records[j], loss.recovered, t, params, first_measured)
        if config.debug:
            _check_slot(t, transmitters, listened, topology.K if config.protocol == "mwncast" else 1)
            for j, state in states.items():
                if not state.conservation_ok(t):
                    raise SimulationError(f"slot {t}: conservation broken at node {j}.")
        if t == warmup:
            ops_at_warmup = {j: states[j].op_count for j in topology.nodes}

    last_elapsed = params.window_hi(config.slots + 1) - params.W
    eligible = max(0, last_elapsed - first_measured + 1)
    measured = config.slots - warmup
    for j, rec in records.items():
        rec.slots = measured
        rec.eligible = eligible
        rec.ops = states[j].op_count - ops_at_warmup[j]
    logger.info("%s run: N=%d W=%d V=%s slots=%d done", config.protocol, topology.n, params.W, v, config.slots)
    return Metrics(
        protocol=config.protocol, N=topology.n, K=topology.K, W=params.W, V=float(v),
        rho=config.rho, seed=config.seed, capacity=plan.capacity, receivers=records,
    )


def run_rlnc(config: SimConfig) -> Metrics:
    """
    Block baseline: the source mixes the current block of B packets until
    every node holds B innovative symbols, then moves on (genie feedback).
    """
    topology = config.topology
    prp = topology.prp
    B = config.block_size
    plan = build_plan(config)
    seeds = np.random.SeedSequence(config.seed).spawn(3 + topology.n)
    sched_rng = np.random.default_rng(seeds[0])
    code_rng = np.random.default_rng(seeds[1])
    relay_rng = np.random.default_rng(seeds[2])
    channel = {j: np.random.default_rng(seeds[2 + j]) for j in topology.nodes}
    store = PacketStore(config.payload_len, seed=config.seed)
    decoders = {j: BlockDecoder(B, config.payload_len) for j in topology.nodes}
    relay_set = set(plan.relays) if config.protocol == "coop-rlnc" else set()
    warmup = config.warmup
    records = {j: ReceiverMetrics(node=j) for j in topology.nodes}
    ops_at_warmup = {j: 0 for j in topology.nodes}
    block, block_start = 0, 1
    done_at: Dict[int, int] = {}

    for t in range(1, config.slots + 1):
        index = draw_slot(plan, sched_rng) if relay_set else None
        active = plan.rounds[index].relays if index is not None else ()
        coeffs = draw_coefficients(code_rng, B)
        data = _mix_block(store, block, B, coeffs)
        symbols = {0: (coeffs, data)}
        for i in active:
            mixed = decoders[i].recode(relay_rng)
            if mixed is not None:
                symbols[i] = mixed
        transmitters = sorted(symbols)
        listened: Dict[int, int] = {}
        for j in topology.nodes:
            if j in active:
                continue
            tx = 0 if j in relay_set else _listener_choice(j, transmitters, prp)
            listened[j] = tx
            if j in done_at:
                continue
            if channel[j].random() < prp[tx, j]:
                decoders[j].ingest(*symbols[tx])
                if decoders[j].complete:
                    done_at[j] = t
                    if t > warmup:
                        rec = records[j]
                        rec.decoded += B
                        delay = t - block_start
                        rec.delay_sum += delay * B
                        rec.delayed += B
                        rec.delay_max = max(rec.delay_max, delay)
        if config.debug:
            _check_slot(t, transmitters, listened, topology.K if config.protocol == "coop-rlnc" else 1)
        if t == warmup:
            ops_at_warmup = {j: decoders[j].op_count for j in topology.nodes}
        if len(done_at) == topology.n:
            block += 1
            block_start = t + 1
            done_at.clear()
            for decoder in decoders.values():
                decoder.reset()

    measured = config.slots - warmup
    for j, rec in records.items():
        rec.slots = measured
        rec.ops = decoders[j].op_count - ops_at_warmup[j]
    logger.info("%s run: N=%d B=%d slots=%d done, %d blocks", config.protocol, topology.n, B, config.slots, block)
    return Metrics(
        protocol=config.protocol, N=topology.n, K=topology.K, W=B, V=None,
        rho=config.rho, seed=config.seed, capacity=plan.capacity, receivers=records,
    )


def _mix_block(store: PacketStore, block: int, B: int, coeffs: np.ndarray) -> np.ndarray:
    if store.payload_len == 0:
        return np.zeros(0, dtype=np.uint8)
    return combine(coeffs, store.block(block * B + 1, (block + 1) * B))


def prp_from_distance(d, d0: float = 1.0, alpha: float = 2.0):
    """Reception probability exp(-(d/d0)^alpha); 1 at distance 0."""
    return np.exp(-np.power(np.asarray(d, dtype=float) / d0, alpha))


def build_topology(spec: dict) -> Topology:
    """
    Topology from a spec dict: either an explicit {"prp": [[...]], "K": k}
    matrix, or {"n", "radius", "d0", "alpha", "seed", "K"} to drop n nodes
    uniformly in a disk around the source.
    """
    if not isinstance(spec, dict):
        raise PlanningError("Topology spec must be a JSON object.")
    if "prp" in spec:
        return Topology.from_dict(spec)
    try:
        n = int(spec["n"])
    except (KeyError, TypeError, ValueError):
        raise PlanningError('Topology spec needs either "prp" or an integer "n".') from None
    if n < 1:
        raise PlanningError(f"Node count must be >= 1, got {n}.")
    radius = float(spec.get("radius", 1.0))
    d0 = float(spec.get("d0", 1.0))
    alpha = float(spec.get("alpha", 2.0))
    if radius <= 0 or d0 <= 0 or alpha <= 0:
        raise PlanningError("radius, d0 and alpha must be positive.")
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    r = radius * np.sqrt(rng.random(n))
    angle = 2.0 * math.pi * rng.random(n)
    points = np.vstack([np.zeros((1, 2)), np.column_stack([r * np.cos(angle), r * np.sin(angle)])])
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    prp = prp_from_distance(dist, d0, alpha)
    np.fill_diagonal(prp, 0.0)
    return Topology(prp=prp, K=int(spec.get("K", 1)))
