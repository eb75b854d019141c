"""
Relay planning for cooperative multicast.

Node 0 is the source. A plan is a list of rounds; in round l the relays R_l
transmit on their own channels next to the source for a share phi_l of the
slots, and every receiver listens to its best transmitter R_l(j). The source
alone serves the remaining 1 - sum(phi) of the time.
"""
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

EPS = 1e-9
CONSERVATION_EPS = 1e-12
DEFAULT_DELTA = 1e-3
BRUTE_FORCE_LIMIT = 12


class PlanningError(ValueError):
    pass


class InfeasiblePlanError(PlanningError):
    pass


@dataclass(frozen=True, eq=False)
class Topology:
    prp: np.ndarray
    K: int = 1

    def __post_init__(self):
        prp = np.array(self.prp, dtype=float)
        if prp.ndim != 2 or prp.shape[0] != prp.shape[1] or prp.shape[0] < 2:
            raise PlanningError("prp must be a square matrix covering the source and at least one node.")
        if not np.all(np.isfinite(prp)) or prp.min() < 0.0 or prp.max() > 1.0:
            raise PlanningError("prp entries must lie in [0, 1].")
        if isinstance(self.K, bool) or int(self.K) != self.K or self.K < 1:
            raise PlanningError(f"K must be a positive integer, got {self.K}.")
        prp.setflags(write=False)
        object.__setattr__(self, "prp", prp)
        object.__setattr__(self, "K", int(self.K))

    @property
    def n(self) -> int:
        return self.prp.shape[0] - 1

    @property
    def nodes(self) -> Tuple[int, ...]:
        return tuple(range(1, self.n + 1))

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        if not isinstance(data, dict) or "prp" not in data:
            raise PlanningError('Topology needs a "prp" matrix.')
        try:
            return cls(prp=np.asarray(data["prp"], dtype=float), K=data.get("K", 1))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, PlanningError):
                raise
            raise PlanningError(f"Malformed prp matrix: {exc}") from exc

    def to_dict(self) -> dict:
        return {"K": self.K, "prp": self.prp.tolist()}

    def with_k(self, K: int) -> "Topology":
        return Topology(prp=self.prp, K=K)


def dump_topology(topology: Topology) -> str:
    return json.dumps(topology.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class CoverResult:
    relays: Tuple[int, ...]
    assignment: Dict[int, int]
    capacity: float


@dataclass(frozen=True)
class Round:
    relays: Tuple[int, ...]
    phi: float
    assignment: Dict[int, int]

    def to_dict(self) -> dict:
        return {
            "relays": list(self.relays),
            "phi": self.phi,
            "assignment": {str(j): tx for j, tx in sorted(self.assignment.items())},
        }


@dataclass(frozen=True)
class RelayPlan:
    relays: Tuple[int, ...]
    receivers: Tuple[int, ...]
    rounds: Tuple[Round, ...]
    capacity: float
    residual_time: Dict[int, float] = field(default_factory=dict)
    residual_demand: Dict[int, float] = field(default_factory=dict)

    @property
    def relay_share(self) -> float:
        return sum(r.phi for r in self.rounds)

    @property
    def source_share(self) -> float:
        return max(0.0, 1.0 - self.relay_share)

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "relays": list(self.relays),
            "receivers": list(self.receivers),
            "rounds": [r.to_dict() for r in self.rounds],
            "source_share": self.source_share,
        }


def _best_transmitter(j: int, transmitters: Iterable[int], prp: np.ndarray) -> int:
    best = 0
    for tx in sorted(transmitters):
        if prp[tx, j] > prp[best, j] + EPS:
            best = tx
    return best


def _coverage(relays: Sequence[int], receivers: Sequence[int], prp: np.ndarray) -> Tuple[Dict[int, int], float]:
    assignment = {j: _best_transmitter(j, relays, prp) for j in receivers}
    return assignment, float(sum(prp[assignment[j], j] for j in receivers))


def greedy_cover(candidates: Iterable[int], receivers: Iterable[int], prp: np.ndarray, K: int) -> CoverResult:
    """
    Adds relays one at a time, each time the candidate that raises the total
    capacity of the receivers the most, until K - 1 relays are chosen or no
    candidate helps. Equal gains go to the lowest node id.
    """
    prp = np.asarray(prp, dtype=float)
    pool = sorted(i for i in set(candidates) if i != 0)
    receivers = sorted(set(receivers))
    chosen: List[int] = []
    assignment = {j: 0 for j in receivers}
    while len(chosen) < K - 1:
        best, best_gain = None, EPS
        for i in pool:
            if i in chosen:
                continue
            gain = sum(max(0.0, prp[i, j] - prp[assignment[j], j]) for j in receivers if j != i)
            if gain > best_gain:
                best, best_gain = i, gain
        if best is None:
            break
        chosen.append(best)
        for j in receivers:
            if j != best and prp[best, j] > prp[assignment[j], j] + EPS:
                assignment[j] = best
    capacity = float(sum(prp[assignment[j], j] for j in receivers))
    return CoverResult(relays=tuple(chosen), assignment=assignment, capacity=capacity)


def brute_force_cover(candidates: Iterable[int], receivers: Iterable[int], prp: np.ndarray, K: int) -> CoverResult:
    """Exhaustive optimum over every relay subset of size at most K - 1."""
    prp = np.asarray(prp, dtype=float)
    pool = sorted(i for i in set(candidates) if i != 0)
    if len(pool) > BRUTE_FORCE_LIMIT:
        raise PlanningError(f"Enumeration is capped at {BRUTE_FORCE_LIMIT} candidates, got {len(pool)}.")
    receivers = sorted(set(receivers))
    best_relays: Tuple[int, ...] = ()
    best_assignment, best_capacity = _coverage((), receivers, prp)
    for size in range(1, min(K - 1, len(pool)) + 1):
        for subset in itertools.combinations(pool, size):
            assignment, capacity = _coverage(subset, receivers, prp)
            if capacity > best_capacity + EPS:
                best_relays, best_assignment, best_capacity = subset, assignment, capacity
    return CoverResult(relays=best_relays, assignment=best_assignment, capacity=best_capacity)


def greedy_ratio(K: int) -> float:
    k = K - 1
    if k < 1:
        return 1.0
    return 1.0 - (1.0 - 1.0 / k) ** k


def allocate_relay_time(relays: Iterable[int], receivers: Iterable[int], target: float,
                        topology: Topology) -> Optional[RelayPlan]:
    """
    Splits relay transmission time so that every receiver gets at least
    ``target`` packets per slot while every relay keeps enough listening time
    to receive ``target`` itself. Returns None when that is not possible.
    """
    prp = topology.prp
    relays = tuple(sorted(set(relays)))
    receivers = tuple(sorted(set(receivers)))
    time_left: Dict[int, float] = {}
    for i in relays:
        c0 = prp[0, i]
        time_left[i] = 1.0 - target / c0 if c0 > 0 else 0.0
    demand = {j: float(target) for j in receivers}
    rounds: List[Round] = []
    used = 0.0

    while used < 1.0 - CONSERVATION_EPS:
        pending = [j for j in receivers if demand[j] > EPS]
        available = [i for i in relays if time_left[i] > EPS]
        if not pending or not available:
            break
        cover = greedy_cover(available, pending, prp, topology.K)
        if not cover.relays:
            break
        assignment = {j: _best_transmitter(j, cover.relays, prp) for j in receivers}
        phi = min(
            min(time_left[i] for i in cover.relays),
            min((demand[j] / prp[assignment[j], j] for j in pending if prp[assignment[j], j] > 0), default=math.inf),
            1.0 - used,
        )
        if phi <= CONSERVATION_EPS:
            break
        for i in cover.relays:
            time_left[i] -= phi
        for j in pending:
            demand[j] -= phi * prp[assignment[j], j]
        used += phi
        rounds.append(Round(relays=cover.relays, phi=phi, assignment=assignment))
        logger.debug("target %.6f: round %d relays=%s phi=%.6f", target, len(rounds), cover.relays, phi)

    rest = max(0.0, 1.0 - used)
    for j in receivers:
        if demand[j] > rest * prp[0, j] + EPS:
            return None
    return RelayPlan(
        relays=relays,
        receivers=receivers,
        rounds=tuple(rounds),
        capacity=float(target),
        residual_time=time_left,
        residual_demand=demand,
    )


def _partition(topology: Topology, target: float) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    relays = tuple(j for j in topology.nodes if topology.prp[0, j] >= target - EPS)
    receivers = tuple(j for j in topology.nodes if topology.prp[0, j] < target - EPS)
    return relays, receivers


def select_relays(topology: Topology, delta: float = DEFAULT_DELTA) -> Tuple[float, RelayPlan]:
    """
    Binary search for the largest common rate C* that a relay plan can
    deliver to every node, to within ``delta``.
    """
    if not delta > 0:
        raise PlanningError(f"delta must be positive, got {delta}.")
    low, high = 0.0, 1.0
    relays, receivers = _partition(topology, 0.0)
    best = allocate_relay_time(relays, receivers, 0.0, topology)
    while high - low > delta:
        mid = (low + high) / 2.0
        relays, receivers = _partition(topology, mid)
        plan = allocate_relay_time(relays, receivers, mid, topology)
        if plan is not None:
            low, best = mid, plan
        else:
            high = mid
    logger.info("Relay plan: C*=%.6f with %d round(s), relays=%s", low, len(best.rounds), list(best.relays))
    return low, best


def source_only_plan(topology: Topology) -> RelayPlan:
    """Plain broadcast: no relay rounds, rate limited by the weakest link."""
    capacity = float(min(topology.prp[0, j] for j in topology.nodes))
    return RelayPlan(relays=(), receivers=topology.nodes, rounds=(), capacity=capacity)


def equivalent_capacity(plan: RelayPlan, topology: Topology) -> Dict[int, float]:
    prp = topology.prp
    result: Dict[int, float] = {}
    for i in plan.relays:
        busy = sum(r.phi for r in plan.rounds if i in r.relays)
        result[i] = (1.0 - busy) * prp[0, i]
    rest = plan.source_share
    for j in plan.receivers:
        served = sum(r.phi * prp[r.assignment.get(j, 0), j] for r in plan.rounds)
        result[j] = served + rest * prp[0, j]
    return dict(sorted(result.items()))


def round_for_draw(plan: RelayPlan, x: float) -> Optional[int]:
    """Index of the round whose cumulative share interval holds x, else None (source only)."""
    psi = 0.0
    for index, r in enumerate(plan.rounds):
        psi += r.phi
        if x < psi:
            return index
    return None


def draw_slot(plan: RelayPlan, rng: np.random.Generator) -> Optional[int]:
    return round_for_draw(plan, float(rng.random()))
