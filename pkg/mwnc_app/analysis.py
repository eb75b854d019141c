"""
Random-walk model of a receiver's seen front.

Each slot the particle moves by -d_L = V - 1 with probability C (an
innovative reception) or by +d_R = V otherwise. Decoding happens at the lower
barrier, packet loss at the upper one. Closed forms here are checked against
the Monte Carlo walks at the bottom of the module.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from .codec import CodecParams, as_rational

logger = logging.getLogger(__name__)

DRIFT_EPS = 1e-9
ROOT_TOL = 1e-12
DIFF_STEP = 1e-4
VARIANCE_SLACK = 1e-4


class AnalysisError(ValueError):
    pass


class UnstableRegimeError(AnalysisError):
    pass


class DegenerateDriftError(AnalysisError):
    pass


class NumericError(AnalysisError):
    pass


@dataclass(frozen=True)
class WalkModel:
    c_hat: float
    v: float

    def __post_init__(self):
        if not 0 < self.c_hat <= 1:
            raise AnalysisError(f"c_hat must lie in (0, 1], got {self.c_hat}.")
        if not 0 < self.v < 1:
            raise AnalysisError(f"v must lie in (0, 1), got {self.v}.")

    @property
    def d_l(self) -> float:
        return 1.0 - self.v

    @property
    def d_r(self) -> float:
        return self.v

    @property
    def mu(self) -> float:
        return self.v - self.c_hat

    @property
    def sigma2(self) -> float:
        return self.c_hat * (1.0 - self.c_hat)

    @property
    def rho(self) -> float:
        return self.v / self.c_hat

    def require_stable(self) -> None:
        if self.v >= self.c_hat:
            raise UnstableRegimeError(
                f"Unstable regime: v={self.v} must be below c_hat={self.c_hat}.")


@dataclass(frozen=True)
class DelayMoments:
    e_n: float
    e_n2: float

    @property
    def d_bar(self) -> float:
        return self.e_n2 / (2.0 * self.e_n)


@dataclass(frozen=True)
class PointProcessModel:
    W: int
    p_dd: float
    p_dl: float
    p_ld: float
    p_ll: float
    t_dd: float
    t_dl: float
    t_ld: float
    t_ll: float

    @property
    def pi_d(self) -> float:
        return self.p_ld / (self.p_dl + self.p_ld)

    @property
    def pi_l(self) -> float:
        return self.p_dl / (self.p_dl + self.p_ld)

    @property
    def cycle(self) -> float:
        return (self.pi_d * self.p_dl * self.t_dl + self.pi_l * self.p_ll * self.t_ll
                + self.pi_d * self.p_dd * self.t_dd + self.pi_l * self.p_ld * self.t_ld)

    def to_dict(self) -> dict:
        return {
            "W": self.W,
            "transitions": {"DD": self.p_dd, "DL": self.p_dl, "LD": self.p_ld, "LL": self.p_ll},
            "times": {"DD": self.t_dd, "DL": self.t_dl, "LD": self.t_ld, "LL": self.t_ll},
            "stationary": {"D": self.pi_d, "L": self.pi_l},
            "cycle": self.cycle,
        }


def step_mgf(theta: float, model: WalkModel) -> float:
    return model.c_hat * math.exp(-theta * model.d_l) + (1.0 - model.c_hat) * math.exp(theta * model.d_r)


def _mgf_minimiser(model: WalkModel) -> float:
    return math.log(model.c_hat * model.d_l / ((1.0 - model.c_hat) * model.d_r))


def _expand_until(fn: Callable[[float], float], start: float, step: float, limit: int = 200) -> float:
    x = start + step
    for _ in range(limit):
        if fn(x) > 0:
            return x
        step *= 2.0
        x = start + step
    raise NumericError(f"Could not bracket a root starting from {start} (last point tried {x}).")


def find_theta0(model: WalkModel) -> float:
    """Nonzero root of step_mgf(theta) = 1; +inf on a perfect channel."""
    if abs(model.mu) <= DRIFT_EPS:
        raise DegenerateDriftError(f"Drift {model.mu:.3g} is too close to zero for a tilted root.")
    if model.c_hat >= 1.0:
        return math.inf
    fn = lambda th: step_mgf(th, model) - 1.0
    lo = _mgf_minimiser(model)
    if model.mu < 0:
        hi = _expand_until(fn, lo, max(1.0, abs(lo)))
        a, b = lo, hi
    else:
        hi = _expand_until(fn, lo, -max(1.0, abs(lo)))
        a, b = hi, lo
    try:
        root = bisect(fn, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (ValueError, RuntimeError) as exc:
        raise NumericError(f"theta0 bisection failed on [{a}, {b}] for {model}: {exc}") from exc
    if abs(fn(root)) >= ROOT_TOL:
        raise NumericError(f"theta0={root} leaves residual {fn(root):.3g} for {model}.")
    return root


def _check_barriers(A: float, B: float) -> None:
    if not (A > 0 and B > 0):
        raise AnalysisError(f"Barrier distances must be positive, got A={A}, B={B}.")


def absorption_probs(A: float, B: float, model: WalkModel) -> Tuple[float, float]:
    """
    (P_A, P_B): chance of reaching the upper barrier at distance A before the
    lower one at distance B, overshoot ignored.
    """
    _check_barriers(A, B)
    try:
        theta0 = find_theta0(model)
    except DegenerateDriftError:
        p_a = B / (A + B)
        return p_a, 1.0 - p_a
    if math.isinf(theta0):
        return 0.0, 1.0
    # positive theta0 with the exponentials scaled by exp(-theta0 A)
    if theta0 > 0:
        ea = math.exp(-theta0 * A)
        num = (1.0 - math.exp(-theta0 * B)) * ea
        den = 1.0 - math.exp(-theta0 * (A + B))
    else:
        eb = math.exp(-theta0 * B)
        num = 1.0 - eb
        den = math.exp(theta0 * A) - eb
    p_a = num / den
    return p_a, 1.0 - p_a


def _mgf_roots(s: float, model: WalkModel) -> Tuple[float, float]:
    """The two real roots lambda1 < lambda2 of step_mgf(lambda) = 1/s."""
    target = 1.0 / s
    fn = lambda th: step_mgf(th, model) - target
    if model.c_hat >= 1.0:
        return -math.log(target) / model.d_l, math.inf
    mid = _mgf_minimiser(model)
    if fn(mid) >= 0:
        raise NumericError(f"step_mgf never reaches 1/s={target} (s={s}, {model}).")
    span = max(1.0, abs(mid))
    try:
        lo = _expand_until(fn, mid, -span)
        hi = _expand_until(fn, mid, span)
        lam1 = bisect(fn, lo, mid, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        lam2 = bisect(fn, mid, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (ValueError, RuntimeError) as exc:
        raise NumericError(f"Root bracketing failed at s={s} for {model}: {exc}") from exc
    return lam1, lam2


def exit_transform(s: float, A: float, B: float, model: WalkModel) -> Tuple[float, float]:
    """
    (E[s^N; exit at A], E[s^N; exit at -B]) for 0 < s < 1, from the two
    martingales s^n exp(lambda S_n) with overshoot neglected.
    """
    lam1, lam2 = _mgf_roots(s, model)
    b1 = math.exp(-lam1 * B)
    if math.isinf(lam2):
        return 0.0, 1.0 / b1
    b2 = math.exp(-lam2 * B)
    r = math.exp((lam1 - lam2) * A)
    denom = r * b2 - b1
    u = (b2 - b1) * math.exp(-lam2 * A) / denom
    w = (r - 1.0) / denom
    return u, w


def _derivatives_at_one(fn: Callable[[float], float], value_at_one: float, h: float = DIFF_STEP) -> Tuple[float, float]:
    """First and second derivatives at s=1 from the left, Richardson-extrapolated."""
    def d1(step):
        return (value_at_one - fn(1.0 - step)) / step

    def d2(step):
        return (value_at_one - 2.0 * fn(1.0 - step) + fn(1.0 - 2.0 * step)) / step ** 2

    first = 2.0 * d1(h / 2.0) - d1(h)
    second = 2.0 * d2(h / 2.0) - d2(h)
    return first, second


def stopping_moments(A: float, B: float, model: WalkModel) -> Tuple[float, float]:
    """(E[N], E[N^2]) of the two-barrier exit time."""
    _check_barriers(A, B)
    if abs(model.mu) <= DRIFT_EPS:
        s2 = model.sigma2
        return A * B / s2, A * B * (A * A + 3.0 * A * B + B * B) / (3.0 * s2 * s2)
    total = lambda s: sum(exit_transform(s, A, B, model))
    first, second = _derivatives_at_one(total, 1.0)
    e_n = first
    e_n2 = second + first
    if not (math.isfinite(e_n) and math.isfinite(e_n2)):
        raise NumericError(f"Non-finite moments for A={A}, B={B}, {model}.")
    deficit = e_n * e_n - e_n2
    if deficit > VARIANCE_SLACK * e_n * e_n:
        raise NumericError(f"Negative exit-time variance {-deficit:.3g} for A={A}, B={B}, {model}.")
    if deficit > 0:
        logger.warning("Exit-time variance off by %.3g below zero for A=%s, B=%s; clamped to 0.", deficit, A, B)
        e_n2 = e_n * e_n
    return e_n, e_n2


def conditional_exit_times(A: float, B: float, model: WalkModel) -> Tuple[float, float]:
    """Mean exit time given an exit at A, and given an exit at -B."""
    _check_barriers(A, B)
    p_a, p_b = absorption_probs(A, B, model)
    times = []
    for index, prob in ((0, p_a), (1, p_b)):
        if prob <= 1e-250:
            times.append(math.nan)
            continue
        log_part = lambda s, i=index: math.log(exit_transform(s, A, B, model)[i])
        first, _ = _derivatives_at_one(log_part, math.log(prob))
        times.append(first)
    return times[0], times[1]


def single_barrier_moments(model: WalkModel) -> DelayMoments:
    """Inter-decode time moments with the loss barrier removed."""
    model.require_stable()
    mu, d_r = model.mu, model.d_r
    e_n = -d_r / mu
    e_n2 = (d_r * d_r * mu - model.sigma2 * d_r) / mu ** 3
    return DelayMoments(e_n=e_n, e_n2=e_n2)


def delay_scaling(model: WalkModel) -> float:
    """Mean decoding delay times (1 - rho)^2; stays bounded as rho -> 1."""
    return single_barrier_moments(model).d_bar * (1.0 - model.rho) ** 2


def point_process(W: int, model: WalkModel) -> PointProcessModel:
    """
    Decode/loss transition structure. After a decode the particle sits at most
    d_R above the decode barrier; after a loss it restarts at W - 1.
    """
    model.require_stable()
    if W < 2:
        raise AnalysisError(f"The point process needs W >= 2, got {W}.")
    upper = W - model.v
    starts = {"D": model.d_r, "L": W - 1.0}
    probs: Dict[str, Tuple[float, float]] = {}
    times: Dict[str, Tuple[float, float]] = {}
    for state, x0 in starts.items():
        A, B = upper - x0, x0 + model.v
        if A <= 0:
            raise AnalysisError(f"Start {x0} is not below the loss barrier {upper}.")
        probs[state] = absorption_probs(A, B, model)
        times[state] = conditional_exit_times(A, B, model)
    p_dl, p_dd = probs["D"]
    p_ll, p_ld = probs["L"]
    t_dl, t_dd = times["D"]
    t_ll, t_ld = times["L"]
    return PointProcessModel(
        W=W, p_dd=p_dd, p_dl=p_dl, p_ld=p_ld, p_ll=p_ll,
        t_dd=t_dd, t_dl=0.0 if p_dl == 0 else t_dl,
        t_ld=t_ld, t_ll=0.0 if p_ll == 0 else t_ll,
    )


def packet_loss_prob(ppm: PointProcessModel, model: WalkModel) -> float:
    """Long-run fraction of packets that fall out of the window undecoded."""
    excess = ppm.t_dl - ppm.W / model.v
    if ppm.p_dl > 0 and excess < 0:
        logger.warning("T_DL - W/V = %.4g < 0 at W=%s, %s; clamped to 0.", excess, ppm.W, model)
        excess = 0.0
    numerator = ppm.pi_d * ppm.p_dl * excess + ppm.pi_l * ppm.p_ll * ppm.t_ll
    return max(0.0, numerator / ppm.cycle)


def complexity_bound(W: int, model: WalkModel) -> float:
    """Upper bound on field operations per decoded packet."""
    m = single_barrier_moments(model)
    slope = (m.e_n2 * model.v + 3.0 * m.e_n) / (2.0 * m.e_n)
    intercept = (m.e_n2 * model.v + m.e_n) / (2.0 * m.e_n)
    return slope * W + intercept


def analyze_record(c_hat: float, v: float, w: int) -> dict:
    """Every closed-form output for one (c_hat, v, W) triple."""
    model = WalkModel(c_hat=c_hat, v=v)
    model.require_stable()
    moments = single_barrier_moments(model)
    ppm = point_process(w, model)
    return {
        "c_hat": c_hat,
        "v": v,
        "w": w,
        "rho": model.rho,
        "mu": model.mu,
        "sigma2": model.sigma2,
        "theta0": find_theta0(model),
        "e_n": moments.e_n,
        "e_n2": moments.e_n2,
        "d_bar": moments.d_bar,
        "point_process": ppm.to_dict(),
        "p_loss": packet_loss_prob(ppm, model),
        "complexity_bound": complexity_bound(w, model),
    }


class WalkStepper:
    """
    Integer-exact particle: tracks the seen front against the window head,
    so S(t) = V t - front. A reception moves the front one packet when the
    head is ahead of it; a front that reaches the head decodes everything
    pending; a front left behind the next window's tail is bumped to it.
    """

    def __init__(self, v, W: Optional[int] = None):
        self.v = as_rational(v)
        self.W = W
        self._params = CodecParams(W=W or 1, V=self.v)
        self.t = 0
        self.front = 0
        self.resolved = 0
        self.decoded = 0
        self.lost = 0
        self.decode_slots: List[int] = []
        self.delays: List[int] = []

    @property
    def position(self) -> Fraction:
        return self.v * self.t - self.front

    def step(self, received: bool) -> Tuple[bool, bool]:
        """Advance one slot; returns (decoded, lost) for that slot."""
        self.t += 1
        head = self._params.window_hi(self.t)
        decoded = lost = False
        if received and head > self.front:
            self.front += 1
            if self.front == head:
                for packet in range(self.resolved + 1, self.front + 1):
                    self.delays.append(self.t - self._params.first_slot(packet))
                self.decoded += self.front - self.resolved
                self.resolved = self.front
                self.decode_slots.append(self.t)
                decoded = True
        if self.W is not None:
            boundary = self._params.window_hi(self.t + 1) - self.W
            if boundary > self.front:
                self.lost += boundary - self.resolved
                self.front = self.resolved = boundary
                lost = True
        return decoded, lost


@dataclass(frozen=True)
class AbsorptionEstimate:
    p_a: float
    p_b: float
    e_n: float
    e_n2: float
    se_p: float
    se_n: float
    trials: int


@dataclass(frozen=True)
class WalkEstimate:
    p_loss: float
    e_n: float
    e_n2: float
    delay: float
    se_p_loss: float
    se_n: float
    se_delay: float
    slots: int
    cycles: int = 0
    extra: Dict[str, float] = field(default_factory=dict)


def mc_absorption(model: WalkModel, A: float, B: float, trials: int, rng: np.random.Generator,
                  max_steps: int = 10 ** 7) -> AbsorptionEstimate:
    """Two-barrier walk from 0, all trials stepped together."""
    if trials < 1:
        raise AnalysisError("trials must be >= 1.")
    _check_barriers(A, B)
    pos = np.zeros(trials)
    steps = np.zeros(trials, dtype=np.int64)
    hit_a = np.zeros(trials, dtype=bool)
    alive = np.ones(trials, dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        down = rng.random(idx.size) < model.c_hat
        pos[idx] += np.where(down, -model.d_l, model.d_r)
        steps[idx] += 1
        up_hit = pos[idx] >= A
        low_hit = pos[idx] <= -B
        hit_a[idx[up_hit]] = True
        alive[idx[up_hit | low_hit]] = False
    p_a = float(hit_a.mean())
    n = steps.astype(float)
    return AbsorptionEstimate(
        p_a=p_a,
        p_b=1.0 - p_a,
        e_n=float(n.mean()),
        e_n2=float((n * n).mean()),
        se_p=math.sqrt(max(p_a * (1.0 - p_a), 0.0) / trials),
        se_n=float(n.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        trials=trials,
    )


def mc_walk(model: WalkModel, slots: int, rng: np.random.Generator, W: Optional[int] = None) -> WalkEstimate:
    """
    Reflected walk over ``slots`` slots with Bernoulli(c_hat) receptions.
    Without W only the decode barrier is active.
    """
    if slots < 1:
        raise AnalysisError("slots must be >= 1.")
    stepper = WalkStepper(model.v, W)
    receptions = rng.random(slots) < model.c_hat
    for received in receptions:
        stepper.step(bool(received))
    gaps = np.diff([0] + stepper.decode_slots).astype(float)
    entered = stepper.decoded + stepper.lost
    p_loss = stepper.lost / entered if entered else 0.0
    delays = np.asarray(stepper.delays, dtype=float)

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0

    return WalkEstimate(
        p_loss=p_loss,
        e_n=float(gaps.mean()) if gaps.size else math.nan,
        e_n2=float((gaps * gaps).mean()) if gaps.size else math.nan,
        delay=float(delays.mean()) if delays.size else math.nan,
        se_p_loss=math.sqrt(p_loss * (1.0 - p_loss) / entered) if entered else 0.0,
        se_n=se(gaps),
        se_delay=se(delays),
        slots=slots,
        cycles=int(gaps.size),
    )
