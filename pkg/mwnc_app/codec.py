"""
Moving window encoder and progressive decoder.

The source window at slot t spans packets [max(1, ceil(V t) - W + 1), ceil(V t)].
A receiver keeps one echelon row per seen-but-undecoded packet, keyed by its
pivot. Source symbols keep the pivots contiguous; relayed symbols may leave
gaps, so a window only decodes once every packet up to its head is seen.
"""
import logging
import math
import struct
from bisect import insort
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from . import gf256
from .gf256 import INV_TABLE, MUL_TABLE

logger = logging.getLogger(__name__)

MAX_DENOMINATOR = 10 ** 6
_HEADER = struct.Struct("<QQQ")

RationalLike = Union[Fraction, int, float, str]


class CodecError(ValueError):
    pass


def as_rational(value: RationalLike) -> Fraction:
    """
    Exact rational for a window speed. Floats go through their shortest repr,
    so 0.57 becomes 57/100 rather than the binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise CodecError(f"Window speed must be finite, got {value}.")
        return Fraction(repr(value)).limit_denominator(MAX_DENOMINATOR)
    try:
        return Fraction(value)
    except (TypeError, ValueError) as exc:
        raise CodecError(f"Cannot read {value!r} as a rational speed.") from exc


@dataclass(frozen=True)
class CodecParams:
    W: int
    V: Fraction
    payload_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "V", as_rational(self.V))
        if isinstance(self.W, bool) or int(self.W) != self.W or self.W < 1:
            raise CodecError(f"Window size must be a positive integer, got {self.W}.")
        object.__setattr__(self, "W", int(self.W))
        if not 0 < self.V <= 1:
            raise CodecError(f"Window speed must lie in (0, 1], got {self.V}.")
        if self.payload_len < 0:
            raise CodecError("payload_len must be >= 0.")

    def window_hi(self, t: int) -> int:
        return -((-self.V.numerator * t) // self.V.denominator)

    def window_lo(self, t: int) -> int:
        return max(1, self.window_hi(t) - self.W + 1)

    def first_slot(self, packet: int) -> int:
        """First slot whose window head reaches ``packet``."""
        return (packet - 1) * self.V.denominator // self.V.numerator + 1


def window_bounds(t: int, params: CodecParams) -> Tuple[int, int]:
    if t < 1:
        raise CodecError(f"Slots start at 1, got {t}.")
    return params.window_lo(t), params.window_hi(t)


@dataclass(eq=False)
class CodedSymbol:
    slot: int
    window_lo: int
    window_hi: int
    coefficients: np.ndarray
    payload: np.ndarray

    @property
    def span(self) -> int:
        return self.window_hi - self.window_lo + 1

    def validate(self, payload_len: Optional[int] = None) -> None:
        if self.window_lo < 1 or self.window_hi < self.window_lo:
            raise CodecError(f"Bad span [{self.window_lo}, {self.window_hi}].")
        if len(self.coefficients) != self.span:
            raise CodecError(
                f"Span [{self.window_lo}, {self.window_hi}] needs {self.span} coefficients, got {len(self.coefficients)}.")
        if payload_len is not None and len(self.payload) != payload_len:
            raise CodecError(f"Payload must be {payload_len} bytes, got {len(self.payload)}.")

    def to_bytes(self) -> bytes:
        return (_HEADER.pack(self.slot, self.window_lo, self.window_hi)
                + gf256.as_vector(self.coefficients).tobytes()
                + gf256.as_vector(self.payload).tobytes())

    @classmethod
    def from_bytes(cls, data: bytes, payload_len: int) -> "CodedSymbol":
        if len(data) < _HEADER.size:
            raise CodecError("Frame shorter than its header.")
        slot, lo, hi = _HEADER.unpack_from(data)
        span = hi - lo + 1
        if lo < 1 or span < 1 or len(data) != _HEADER.size + span + payload_len:
            raise CodecError(f"Frame of {len(data)} bytes does not match span [{lo}, {hi}] and payload {payload_len}.")
        body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size).copy()
        return cls(slot=slot, window_lo=lo, window_hi=hi, coefficients=body[:span], payload=body[span:])


class PacketStore:
    """
    Source packets 1, 2, ... Either an explicit list of payloads or random
    bytes derived deterministically from ``seed`` and the packet id.
    """

    def __init__(self, payload_len: int = 0, seed: int = 0, payloads: Optional[Sequence[bytes]] = None):
        self._explicit: Optional[Dict[int, np.ndarray]] = None
        if payloads is not None:
            self._explicit = {i + 1: gf256.as_vector(p) for i, p in enumerate(payloads)}
            lengths = {len(p) for p in self._explicit.values()}
            if len(lengths) > 1:
                raise CodecError("All packets must have the same length.")
            payload_len = lengths.pop() if lengths else payload_len
        self.payload_len = payload_len
        self.seed = seed
        self._empty = np.zeros(0, dtype=np.uint8)

    def __getitem__(self, packet: int) -> np.ndarray:
        if packet < 1:
            raise CodecError(f"Packet ids start at 1, got {packet}.")
        if self._explicit is not None:
            try:
                return self._explicit[packet]
            except KeyError:
                raise CodecError(f"Packet p{packet} is not available.") from None
        if self.payload_len == 0:
            return self._empty
        return np.random.default_rng((self.seed, packet)).integers(0, 256, self.payload_len, dtype=np.uint8)

    def block(self, lo: int, hi: int) -> np.ndarray:
        if self.payload_len == 0 and self._explicit is None:
            return np.zeros((hi - lo + 1, 0), dtype=np.uint8)
        return np.vstack([self[p] for p in range(lo, hi + 1)]).reshape(hi - lo + 1, self.payload_len)


def draw_coefficients(rng: np.random.Generator, size: int) -> np.ndarray:
    coeffs = rng.integers(0, 256, size=size, dtype=np.uint8)
    while not coeffs.any():
        coeffs = rng.integers(0, 256, size=size, dtype=np.uint8)
    return coeffs


def encode(t: int, packets: PacketStore, params: CodecParams, rng: np.random.Generator) -> CodedSymbol:
    lo, hi = window_bounds(t, params)
    coeffs = draw_coefficients(rng, hi - lo + 1)
    payload = gf256.combine(coeffs, packets.block(lo, hi))
    return CodedSymbol(slot=t, window_lo=lo, window_hi=hi, coefficients=coeffs, payload=payload)


@dataclass(frozen=True)
class DecodeEvent:
    slot: int
    packets: Tuple[int, ...]


@dataclass(frozen=True)
class LossEvent:
    """
    ``packets`` fell behind the window unseen. ``recovered`` are packets the
    surviving rows decoded once the loss cleared the gap in front of them.
    """
    slot: int
    packets: Tuple[int, ...]
    recovered: Tuple[int, ...] = ()


@dataclass
class _Row:
    pivot: int
    coefficients: np.ndarray
    payload: np.ndarray
    nnz: int

    @property
    def hi(self) -> int:
        return self.pivot + len(self.coefficients) - 1


@dataclass
class DecoderState:
    """
    Receiver-side knowledge. ``G``, ``I`` and ``D`` count lost packets,
    innovative symbols and discarded rows; ``op_count`` counts field
    multiply-adds spent on elimination, normalisation and back-substitution.
    ``collisions`` lists slots whose symbol reduced to zero although its span
    held an unseen packet; ``gaps`` lists slots whose new row was pivoted past
    an unseen packet.
    """
    params: CodecParams
    retain_payloads: bool = True
    rows: List[_Row] = field(default_factory=list)
    decoded: Dict[int, np.ndarray] = field(default_factory=dict)
    lost: Set[int] = field(default_factory=set)
    G: int = 0
    I: int = 0
    D: int = 0
    op_count: int = 0
    resolved: int = 0
    decoded_count: int = 0
    collisions: List[int] = field(default_factory=list)
    gaps: List[int] = field(default_factory=list)
    last_slot: int = 0
    _pivots: Dict[int, _Row] = field(default_factory=dict)
    _evicted: int = 0

    @property
    def front(self) -> int:
        """Packets accounted for: resolved ones plus one per stored row."""
        return self.resolved + len(self.rows)

    def is_seen(self, packet: int) -> bool:
        return packet <= self.resolved or packet in self._pivots

    def _covers(self, head: int) -> bool:
        return all(p in self._pivots for p in range(self.resolved + 1, head + 1))

    def ingest(self, symbol: CodedSymbol) -> Optional[DecodeEvent]:
        symbol.validate(self.params.payload_len)
        if symbol.slot < self.last_slot:
            raise CodecError(f"Slot {symbol.slot} arrived after slot {self.last_slot}.")
        self.last_slot = symbol.slot
        lo, hi = symbol.window_lo, symbol.window_hi
        if hi <= self.resolved:
            return None
        if lo > self.front + 1:
            raise CodecError(f"Symbol starts at p{lo} past the seen front p{self.front}; advance() was skipped.")
        reaches_unseen = any(not self.is_seen(p) for p in range(max(lo, self.resolved + 1), hi + 1))

        top = max([hi] + [row.hi for row in self.rows])
        work = np.zeros(top - lo + 1, dtype=np.uint8)
        work[:symbol.span] = gf256.as_vector(symbol.coefficients)
        payload = gf256.as_vector(symbol.payload).copy()

        pivot = None
        for col in range(lo, top + 1):
            a = int(work[col - lo])
            if a == 0:
                continue
            if col <= self.resolved:
                known = self.decoded.get(col)
                if known is None:
                    # lost, or pruned out of the ledger
                    return None
                work[col - lo] = 0
                payload ^= MUL_TABLE[a][known]
                self.op_count += 1
                continue
            row = self._pivots.get(col)
            if row is None:
                if pivot is None:
                    pivot = col
                continue
            off = col - lo
            work[off:off + len(row.coefficients)] ^= MUL_TABLE[a][row.coefficients]
            payload ^= MUL_TABLE[a][row.payload]
            self.op_count += row.nnz

        if pivot is None:
            if reaches_unseen:
                self.collisions.append(symbol.slot)
                logger.debug("slot %s: symbol reduced to zero with unseen packets in its span", symbol.slot)
            return None

        if any(not self.is_seen(p) for p in range(self.resolved + 1, pivot)):
            self.gaps.append(symbol.slot)
        rest = work[pivot - lo:]
        nz = np.flatnonzero(rest)
        coeffs = rest[:nz[-1] + 1]
        lead = int(coeffs[0])
        if lead != 1:
            factor = INV_TABLE[lead]
            coeffs = MUL_TABLE[factor][coeffs]
            payload = MUL_TABLE[factor][payload]
            self.op_count += int(nz.size)
        else:
            coeffs = coeffs.copy()
        row = _Row(pivot=pivot, coefficients=coeffs, payload=payload, nnz=int(nz.size))
        insort(self.rows, row, key=lambda r: r.pivot)
        self._pivots[pivot] = row
        self.I += 1

        head = self.params.window_hi(symbol.slot)
        if self._covers(head):
            return self._back_substitute(symbol.slot, head)
        return None

    def _back_substitute(self, slot: int, head: int) -> DecodeEvent:
        solved = [row for row in self.rows if row.pivot <= head]
        for row in reversed(solved):
            payload = row.payload.copy()
            for off in np.flatnonzero(row.coefficients[1:]) + 1:
                payload ^= MUL_TABLE[row.coefficients[off]][self.decoded[row.pivot + off]]
                self.op_count += 1
            self.decoded[row.pivot] = payload
            del self._pivots[row.pivot]
        packets = tuple(range(self.resolved + 1, head + 1))
        self.resolved = head
        self.decoded_count += len(packets)
        self.rows = [row for row in self.rows if row.pivot > head]
        return DecodeEvent(slot=slot, packets=packets)

    def advance(self, t: int) -> Optional[LossEvent]:
        """
        Close slot t. If a packet behind the next window's tail is still
        unseen, everything up to that tail is lost along with the rows
        pivoted there.
        """
        boundary = self.params.window_hi(t + 1) - self.params.W
        event = None
        if boundary > self.resolved and not self._covers(boundary):
            packets = tuple(range(self.resolved + 1, boundary + 1))
            dropped = [row for row in self.rows if row.pivot <= boundary]
            for row in dropped:
                del self._pivots[row.pivot]
            self.rows = [row for row in self.rows if row.pivot > boundary]
            self.lost.update(packets)
            self.G += len(packets)
            self.D += len(dropped)
            self.resolved = boundary
            recovered: Tuple[int, ...] = ()
            head = self.params.window_hi(t)
            if self.rows and head > self.resolved and self._covers(head):
                recovered = self._back_substitute(t, head).packets
            event = LossEvent(slot=t, packets=packets, recovered=recovered)
        if not self.retain_payloads:
            self._prune(boundary - self.params.W)
        return event

    def _prune(self, cutoff: int) -> None:
        stop = min(cutoff, self.resolved)
        for packet in range(self._evicted + 1, stop + 1):
            self.decoded.pop(packet, None)
            self.lost.discard(packet)
        self._evicted = max(self._evicted, stop)

    def particle_position(self, t: int) -> Fraction:
        return self.params.V * t - self.G - (self.I - self.D)

    def counters(self) -> Tuple[int, int, int, int, Tuple[int, ...]]:
        return self.G, self.I, self.D, self.op_count, tuple(row.nnz for row in self.rows)

    def conservation_ok(self, t: int) -> bool:
        """decoded + lost + in flight equals the packets that entered the window."""
        head = self.params.window_hi(t)
        in_flight = head - self.resolved
        return self.decoded_count + self.G + in_flight == head and self.resolved <= self.front <= head

    def relay_recode(self, t: int, rng: np.random.Generator) -> Optional[CodedSymbol]:
        """
        Random combination of the decoded packets inside the window of slot t
        and of the rows reaching into it. The span runs from the window tail,
        or the earliest row pivot if that is older, to the last involved
        packet. Returns None when nothing in the window is known.
        """
        lo, hi = window_bounds(t, self.params)
        plain = [p for p in range(max(lo, 1), min(hi, self.resolved) + 1) if p in self.decoded]
        rows = [row for row in self.rows if row.pivot <= hi and row.hi >= lo]
        if not plain and not rows:
            return None
        span_lo = min([lo] + [row.pivot for row in rows])
        span_hi = max(plain + [row.hi for row in rows])
        coeffs = draw_coefficients(rng, len(plain) + len(rows))
        vector = np.zeros(span_hi - span_lo + 1, dtype=np.uint8)
        payload = np.zeros(self.params.payload_len, dtype=np.uint8)
        for c, packet in zip(coeffs[:len(plain)], plain):
            vector[packet - span_lo] ^= c
            payload ^= MUL_TABLE[c][self.decoded[packet]]
        for c, row in zip(coeffs[len(plain):], rows):
            off = row.pivot - span_lo
            vector[off:off + len(row.coefficients)] ^= MUL_TABLE[c][row.coefficients]
            payload ^= MUL_TABLE[c][row.payload]
        if not vector.any():
            return None
        return CodedSymbol(slot=t, window_lo=span_lo, window_hi=span_hi, coefficients=vector, payload=payload)
