"""Closed-form conditional moments of the deviation process.

S = y - ((1+lam) x - lam n) measures the distance of the count chain from
the critical line. The one-step conditional mean and second moment of dS,
and the moment generating function of the downward displacement of the
active count, all reduce to closed forms through the falling-factorial sum
identities; each function here returns the closed form and is tested to
match full outcome enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .count_chain import CountState, IncrementLaw, ModelParams, StepKind, Trajectory, increment_law

__all__ = [
    "DeviationFrame",
    "eps_n_bracket",
    "default_eps_n",
    "delta_s_table",
    "drift_exact",
    "drift_enumerated",
    "second_moment_exact",
    "second_moment_enumerated",
    "mgf_exact",
    "mgf_expansion",
    "supermartingale_margin",
    "deviation_scan",
]


def eps_n_bracket(params: ModelParams) -> tuple[float, float]:
    """Admissible bracket [sqrt((log n)+ / n), min(1 - rho_c, 1/100)].

    The bracket is empty below n ~ 1.2e5; callers then fall back on the
    lower endpoint, which is the scale every desk-size check uses anyway.
    """
    n = params.n_sites
    lo = math.sqrt(max(math.log(n), 0.0) / n)
    hi = min(1.0 - params.rho_c, 0.01)
    return lo, hi


def default_eps_n(params: ModelParams) -> float:
    """Default band scale: the lower bracket endpoint sqrt((log n)+ / n)."""
    return eps_n_bracket(params)[0]


@dataclass(frozen=True)
class DeviationFrame:
    """The affine critical line and the band scale eps_n around it."""

    params: ModelParams
    eps_n: float = field(default=0.0)

    def __post_init__(self):
        if self.eps_n <= 0.0:
            object.__setattr__(self, "eps_n", default_eps_n(self.params))

    def ell_at(self, x: float) -> float:
        return self.params.ell(x)

    def s_of(self, state: CountState) -> float:
        return self.params.s_of(state[0], state[1])


def delta_s_table(params: ModelParams, law: IncrementLaw) -> tuple[np.ndarray, np.ndarray]:
    """(dS values, probabilities) over the outcome law; dS = dY - (1+lam) dX."""
    vals = []
    probs = []
    for outcome, p in law.outcomes():
        if outcome.kind is StepKind.SLEEP:
            ds = -1.0
        elif outcome.kind is StepKind.SETTLE:
            ds = float(outcome.woken)
        else:
            ds = params.lam + outcome.woken
        vals.append(ds)
        probs.append(p)
    return np.array(vals), np.array(probs)


def drift_enumerated(params: ModelParams, state: CountState) -> float:
    vals, probs = delta_s_table(params, increment_law(params, state))
    return float(vals @ probs)


def drift_exact(params: ModelParams, state: CountState) -> float:
    """Conditional mean of dS in closed form (exact at every state)."""
    law = increment_law(params, state)  # validates the state and y >= 1
    x, y = law.state
    n = params.n_sites
    lam = params.lam
    c = (n + 1.0) / n / (1.0 + lam)
    s = params.s_of(x, y)
    return (
        -lam / (1.0 + lam)
        + lam * c / (n + 2.0 - x)
        + c * (-s + lam * (n - x)) / (n + 3.0 - x)
    )


def second_moment_enumerated(params: ModelParams, state: CountState) -> float:
    vals, probs = delta_s_table(params, increment_law(params, state))
    return float((vals * vals) @ probs)


def second_moment_exact(params: ModelParams, state: CountState) -> float:
    """Conditional second moment of dS: the five-term closed form."""
    law = increment_law(params, state)
    x, y = law.state
    n = params.n_sites
    lam = params.lam
    c = (n + 1.0) / n / (1.0 + lam)
    w = float(x - y)  # equals -S + lam (n - x)
    return (
        lam / (1.0 + lam)
        + lam * lam * c / (n + 2.0 - x)
        + 2.0 * lam * c / (n + 2.0 - x) * w / (n + 3.0 - x)
        + 2.0 * c * w * (n + 3.0 - y) / ((n + 3.0 - x) * (n + 4.0 - x))
        - c * w / (n + 3.0 - x)
    )


def _downstep_law(law: IncrementLaw) -> tuple[np.ndarray, np.ndarray]:
    """Law of Z' = -dY (the downward displacement of the active count)."""
    vals, probs = law.delta_y_probs()
    return -vals.astype(float), probs


def mgf_exact(params: ModelParams, state: CountState, theta: float) -> float:
    """E[exp(theta Z')] with Z' = -dY, by direct summation over the law."""
    if abs(theta) > 0.5:
        raise ValueError(f"|theta| must be <= 0.5, got {theta}")
    zvals, probs = _downstep_law(increment_law(params, state))
    mask = probs > 0.0
    return float(np.exp(theta * zvals[mask]) @ probs[mask])


def mgf_expansion(params: ModelParams, state: CountState, theta: float) -> float:
    """Two-term expansion of the Z' moment generating function in theta.

    Unavailable at x = n where the (x - y)/(n - x) terms are singular; the
    exact value from mgf_exact still exists there.
    """
    if abs(theta) > 0.5:
        raise ValueError(f"|theta| must be <= 0.5, got {theta}")
    law = increment_law(params, state)
    x, y = law.state
    n = params.n_sites
    if x == n:
        raise ValueError("expansion unavailable at x = n (singular ratio); use mgf_exact")
    lam = params.lam
    ratio = (x - y) / (n - x) / (1.0 + lam)
    slp = lam / (1.0 + lam)
    quad = 0.5 * slp - 0.5 * ratio + (x - y) * (n - y) / ((n - x) ** 2) / (1.0 + lam)
    return 1.0 + theta * (slp - ratio) + theta * theta * quad


def supermartingale_margin(params: ModelParams, state: CountState, h: float, eps_n: float) -> float:
    """margin = 1 - E[exp(-h eps_n dS)], exact via the increment law.

    Nonnegative margins certify the exponential supermartingale used for
    lower-deviation bounds on the band -2 eps_n n <= S <= -eps_n n.
    """
    vals, probs = delta_s_table(params, increment_law(params, state))
    mask = probs > 0.0
    return 1.0 - float(np.exp(-h * eps_n * vals[mask]) @ probs[mask])


def deviation_scan(trajectory: Trajectory, frame: DeviationFrame, t_max: int | None = None) -> dict:
    """Extrema of S over the trajectory (optionally truncated at t_max)."""
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    p = frame.params
    x = trajectory.x if t_max is None else trajectory.x[: t_max + 1]
    y = trajectory.y if t_max is None else trajectory.y[: t_max + 1]
    s = y - ((1.0 + p.lam) * x.astype(float) - p.lam * p.n_sites)
    i_min = int(np.argmin(s))
    i_max = int(np.argmax(s))
    return {
        "min_s": float(s[i_min]),
        "max_s": float(s[i_max]),
        "argmin_t": i_min,
        "argmax_t": i_max,
    }
