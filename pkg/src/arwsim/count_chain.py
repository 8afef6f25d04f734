"""Exact transition law and samplers for the reduced particle-count chain.

The state (x, y) tracks the total particle count and the active count on the
complete graph with n internal vertices and a wired boundary. One update
picks an active particle; it either falls asleep or walks until it settles
on an empty vertex or exits through the boundary, waking every sleeper it
visits. The resulting one-step outcome probabilities factor into products of
per-visit ratios, which this module evaluates exactly (in floating point)
and samples by sequential inverse CDF.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .streams import RandomStream

__all__ = [
    "ModelParams",
    "CountState",
    "StepKind",
    "StepOutcome",
    "IncrementLaw",
    "Trajectory",
    "AbsorbedStateError",
    "pi_tail",
    "increment_law",
    "sample_step",
    "run_until_absorbed",
    "hitting_sample",
    "stochastic_dominance_check",
]


class AbsorbedStateError(ValueError):
    """Raised when an operation needs at least one active particle."""


@dataclass(frozen=True)
class ModelParams:
    """System size and sleep rate, with the derived critical constants."""

    n_sites: int
    lam: float

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")

    @property
    def rho_c(self) -> float:
        return self.lam / (1.0 + self.lam)

    @property
    def shift_a(self) -> float:
        return math.sqrt(self.lam) / (1.0 + self.lam)

    @property
    def sleep_p(self) -> float:
        return self.lam / (1.0 + self.lam)

    def ell(self, x: float) -> float:
        """Critical line: active count at which the deviation S vanishes."""
        return (1.0 + self.lam) * x - self.lam * self.n_sites

    def s_of(self, x: float, y: float) -> float:
        return y - self.ell(x)


class CountState(NamedTuple):
    x: int
    y: int


def _check_state(params: ModelParams, state: CountState) -> CountState:
    x, y = state
    if not (0 <= y <= x <= params.n_sites):
        raise ValueError(f"invalid state {state!r} for n_sites={params.n_sites}")
    return CountState(int(x), int(y))


class StepKind(enum.Enum):
    SLEEP = "sleep"
    SETTLE = "settle"
    EXIT = "exit"


class StepOutcome(NamedTuple):
    """One outcome of a count-chain step; woken is the number of woken sleepers."""

    kind: StepKind
    woken: int = 0

    @property
    def dx(self) -> int:
        return -1 if self.kind is StepKind.EXIT else 0

    @property
    def dy(self) -> int:
        if self.kind is StepKind.SLEEP:
            return -1
        if self.kind is StepKind.SETTLE:
            return self.woken
        return self.woken - 1

    @staticmethod
    def sleep() -> "StepOutcome":
        return StepOutcome(StepKind.SLEEP, 0)

    @staticmethod
    def settle(woken: int) -> "StepOutcome":
        return StepOutcome(StepKind.SETTLE, woken)

    @staticmethod
    def exit(woken: int) -> "StepOutcome":
        return StepOutcome(StepKind.EXIT, woken)


def pi_tail(params: ModelParams, state: CountState, branch: int, k: int) -> float:
    """Exact tail probability of waking at least k sleepers on one branch.

    branch 0 is "the walker settles on an empty vertex" (dX = 0), branch -1
    is "the walker exits through the boundary" (dX = -1). The k = 0 settle
    tail carries the subtracted 1/((1+lam) n) correction for the walker's
    first jump. k may be x - y + 1, in which case the tail is exactly 0.
    """
    state = _check_state(params, state)
    if branch not in (0, -1):
        raise ValueError(f"branch must be 0 or -1, got {branch}")
    x, y = state
    n = params.n_sites
    m = x - y
    if not (0 <= k <= m + 1):
        raise ValueError(f"k={k} outside admissible range [0, {m + 1}] for state {state!r}")
    if k == m + 1:
        return 0.0
    inv1l = 1.0 / (1.0 + params.lam)
    base = inv1l * (n + 1.0) / n
    prod = 1.0
    for i in range(k):
        prod *= (m - i) / (n + 2.0 - y - i)
    if branch == -1:
        return base * prod / (n + 2.0 - x)
    tail = base * prod * (n + 1.0 - x) / (n + 2.0 - x)
    if k == 0:
        tail -= inv1l / n
    return tail


@dataclass(frozen=True, eq=False)
class IncrementLaw:
    """Full one-step outcome distribution from a state with y >= 1 actives.

    settle[k] and exit[k] are the probabilities of settling/exiting after
    waking exactly k sleepers, k = 0..x-y; sleep is the dY = -1 atom.
    """

    sleep: float
    settle: np.ndarray
    exit: np.ndarray
    state: CountState = field(compare=False, default=CountState(0, 0))

    @property
    def entries(self) -> dict[StepOutcome, float]:
        out = {StepOutcome.sleep(): self.sleep}
        for k, p in enumerate(self.settle):
            out[StepOutcome.settle(k)] = float(p)
        for k, p in enumerate(self.exit):
            out[StepOutcome.exit(k)] = float(p)
        return out

    def total(self) -> float:
        return float(self.sleep + self.settle.sum() + self.exit.sum())

    def outcomes(self) -> Iterator[tuple[StepOutcome, float]]:
        yield StepOutcome.sleep(), self.sleep
        for k in range(len(self.settle)):
            yield StepOutcome.settle(k), float(self.settle[k])
            yield StepOutcome.exit(k), float(self.exit[k])

    def delta_y_probs(self) -> tuple[np.ndarray, np.ndarray]:
        """Support and probabilities of dY (values -1..x-y)."""
        m = len(self.settle) - 1
        vals = np.arange(-1, m + 1)
        probs = np.zeros(m + 2)
        probs[0] = self.sleep + self.exit[0]
        for k in range(m + 1):
            probs[k + 1] += self.settle[k]
            if k + 1 <= m:
                probs[k + 1] += self.exit[k + 1]
        return vals, probs

    def delta_y_tails(self) -> np.ndarray:
        """tails[j] = P(dY >= j - 1), j = 0..m+1 (tails[0] = 1)."""
        _, probs = self.delta_y_probs()
        return np.cumsum(probs[::-1])[::-1]


def increment_law(params: ModelParams, state: CountState) -> IncrementLaw:
    """Exact outcome distribution at state; requires y >= 1."""
    state = _check_state(params, state)
    x, y = state
    if y == 0:
        raise AbsorbedStateError("absorbed state has no increment law")
    n = params.n_sites
    m = x - y
    inv1l = 1.0 / (1.0 + params.lam)
    base = inv1l * (n + 1.0) / n
    # cumulative products of the per-visit ratios, prods[k] = prod_{i<k}
    factors = (m - np.arange(m)) / (n + 2.0 - y - np.arange(m))
    prods = np.ones(m + 2)
    if m:
        prods[1 : m + 1] = np.cumprod(factors)
    prods[m + 1] = 0.0
    diffs = prods[:-1] - prods[1:]
    exit_p = diffs * (base / (n + 2.0 - x))
    settle_p = diffs * (base * (n + 1.0 - x) / (n + 2.0 - x))
    settle_p[0] -= inv1l / n
    return IncrementLaw(sleep=params.sleep_p, settle=settle_p, exit=exit_p, state=state)


def sample_step(params: ModelParams, state: CountState, stream: RandomStream) -> tuple[CountState, StepOutcome]:
    """Draw one step by sequential inverse CDF; deterministic given the stream.

    Outcomes are consumed in the order Sleep, Exit(0), Settle(0), Exit(1),
    Settle(1), ... with the tail products expanded one factor at a time.
    """
    state = _check_state(params, state)
    x, y = state
    if y == 0:
        raise AbsorbedStateError("absorbed state has no increment law")
    n = params.n_sites
    m = x - y
    inv1l = 1.0 / (1.0 + params.lam)
    base = inv1l * (n + 1.0) / n
    exit_w = base / (n + 2.0 - x)
    settle_w = base * (n + 1.0 - x) / (n + 2.0 - x)
    u = stream.random()
    if u < params.sleep_p:
        out = StepOutcome.sleep()
        return CountState(x, y - 1), out
    u -= params.sleep_p
    pk = 1.0
    k = 0
    while True:
        pk1 = pk * (m - k) / (n + 2.0 - y - k) if k < m else 0.0
        d = pk - pk1
        ek = d * exit_w
        if u < ek:
            out = StepOutcome.exit(k)
            return CountState(x - 1, y + k - 1), out
        u -= ek
        sk = d * settle_w
        if k == 0:
            sk -= inv1l / n
        if u < sk or k >= m:
            out = StepOutcome.settle(k)
            return CountState(x, y + k), out
        u -= sk
        pk = pk1
        k += 1


@dataclass
class Trajectory:
    """A recorded (t, x, y) path of the count chain.

    t_plus is the absorption time when the path reached y = 0, else None and
    truncated is set. tau maps each requested density level rho to the first
    step with x <= rho * n (None if never reached).
    """

    params: ModelParams
    x: np.ndarray
    y: np.ndarray
    t_plus: int | None
    truncated: bool
    tau: dict[float, int | None]

    def __len__(self) -> int:
        return len(self.x)

    @property
    def s(self) -> np.ndarray:
        p = self.params
        return self.y - ((1.0 + p.lam) * self.x - p.lam * p.n_sites)


def run_until_absorbed(
    params: ModelParams,
    start: CountState,
    stream: RandomStream,
    max_steps: int,
    rho_levels: tuple[float, ...] = (),
) -> Trajectory:
    """Simulate from start until y = 0, recording every state.

    Stops at max_steps with the truncation flag set instead of silently
    cutting the path short.
    """
    start = _check_state(params, start)
    n = params.n_sites
    x_buf = np.empty(max_steps + 1, dtype=np.int32)
    y_buf = np.empty(max_steps + 1, dtype=np.int32)
    rho_x = np.array([math.floor(r * n) for r in rho_levels], dtype=np.int64)
    tau_buf = np.empty(len(rho_levels), dtype=np.int64)
    steps, absorbed = _kernels.cc_trajectory(
        n, params.lam, start.x, start.y, max_steps, stream.kernel_state,
        x_buf, y_buf, rho_x, tau_buf,
    )
    tau = {r: (int(t) if t >= 0 else None) for r, t in zip(rho_levels, tau_buf)}
    return Trajectory(
        params=params,
        x=x_buf[: steps + 1].copy(),
        y=y_buf[: steps + 1].copy(),
        t_plus=int(steps) if absorbed else None,
        truncated=not absorbed,
        tau=tau,
    )


def hitting_sample(params: ModelParams, start: CountState, stream: RandomStream, max_steps: int) -> tuple[int, int, bool]:
    """Final particle count at absorption, without recording the path.

    Returns (final_x, steps, absorbed); absorbed is False when max_steps was
    reached first.
    """
    start = _check_state(params, start)
    fx, steps, absorbed = _kernels.cc_hit(
        params.n_sites, params.lam, start.x, start.y, max_steps, stream.kernel_state
    )
    return int(fx), int(steps), bool(absorbed)


def stochastic_dominance_check(law_hi: IncrementLaw, law_lo: IncrementLaw, tol: float = 1e-12) -> bool:
    """True iff the dY law of law_hi dominates that of law_lo (ties allowed).

    Both laws are projected to their dY marginals and compared through the
    upper tail CDFs on the union of supports.
    """
    vals_hi, probs_hi = law_hi.delta_y_probs()
    vals_lo, probs_lo = law_lo.delta_y_probs()
    top = max(vals_hi[-1], vals_lo[-1])

    def tail(vals, probs, t):
        return float(probs[vals >= t].sum())

    for t in range(-1, top + 1):
        if tail(vals_hi, probs_hi, t) < tail(vals_lo, probs_lo, t) - tol:
            return False
    return True
