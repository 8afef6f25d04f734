"""Mean-reverting rescaling of the deviation process and its OU reference.

Around the critical window the deviation S, viewed every n steps and scaled
by sqrt(lam n), behaves like the stationary Ornstein-Uhlenbeck process
dR = -R ds + sqrt(2) dB. This module builds the rescaled paths, simulates
the OU reference by Euler-Maruyama, and compares first-passage behaviour at
the two window levels whose crossing times separate by powers of n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter
from scipy.stats import ks_2samp

from . import _kernels
from .count_chain import ModelParams, Trajectory
from .streams import RandomStream

__all__ = [
    "CriticalConstants",
    "RescaledPath",
    "critical_constants",
    "rescale_trajectory",
    "ou_simulate",
    "ou_first_passage",
    "first_passage_compare",
    "window_moment_regression",
]


class CriticalConstants(NamedTuple):
    rho_c: float
    a: float


def critical_constants(lam: float) -> CriticalConstants:
    """Critical density lam/(1+lam) and window shift sqrt(lam)/(1+lam)."""
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError(f"lam must be positive and finite, got {lam}")
    return CriticalConstants(lam / (1.0 + lam), math.sqrt(lam) / (1.0 + lam))


@dataclass(frozen=True)
class RescaledPath:
    """S(t0 + s n)/sqrt(lam n) sampled on the rescaled grid s = 0, 1/n, ..."""

    s: np.ndarray
    r: np.ndarray
    t0: int
    in_window: bool  # anchor count was within the expected critical window
    empty: bool      # no increments were available after t0

    def __len__(self) -> int:
        return len(self.r)


def rescale_trajectory(
    params: ModelParams,
    trajectory: Trajectory,
    t0: int,
    duration: float | None = None,
) -> RescaledPath:
    """Rescaled deviation path started at step t0 of a recorded trajectory.

    duration limits the path to that many rescaled time units. The in_window
    flag records whether the anchor count sat at rho_c n + Theta(sqrt(n log n));
    a zero-length remainder sets the empty flag instead of failing.
    """
    if not 0 <= t0 < len(trajectory):
        raise ValueError(f"t0={t0} outside the trajectory range [0, {len(trajectory)})")
    n = params.n_sites
    lam = params.lam
    stop = len(trajectory)
    if duration is not None:
        stop = min(stop, t0 + int(duration * n) + 1)
    s_vals = trajectory.s[t0:stop] / math.sqrt(lam * n)
    logn = max(math.log(n), 1.0)
    x_hat = (trajectory.x[t0] - params.rho_c * n) / math.sqrt(n * logn)
    a = critical_constants(lam).a
    in_window = 0.1 * a <= x_hat <= 10.0 * a
    return RescaledPath(
        s=np.arange(len(s_vals)) / n,
        r=np.asarray(s_vals, dtype=float),
        t0=t0,
        in_window=bool(in_window),
        empty=len(s_vals) <= 1,
    )


def _ou_increments(n_steps: int, dt: float, stream: RandomStream) -> np.ndarray:
    return math.sqrt(2.0 * dt) * stream.generator.standard_normal(n_steps)


def ou_simulate(horizon: float, dt: float, stream: RandomStream, r0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama path of dR = -R ds + sqrt(2) dB on [0, horizon].

    Returns (times, path) including the initial point. The recursion
    R_{i+1} = (1 - dt) R_i + sqrt(2 dt) xi_i is an AR(1) filter, so the whole
    path is generated by lfilter in one pass.
    """
    if dt > 1e-2:
        raise ValueError(f"dt must be <= 1e-2, got {dt}")
    n_steps = int(round(horizon / dt))
    noise = _ou_increments(n_steps, dt, stream)
    a1 = 1.0 - dt
    zi = np.array([a1 * r0])
    path, _ = lfilter([1.0], [1.0, -a1], noise, zi=zi)
    times = np.arange(n_steps + 1) * dt
    return times, np.concatenate([[r0], path])


def ou_first_passage(
    level: float,
    horizon: float,
    dt: float,
    stream: RandomStream,
    r0: float = 0.0,
    chunk: int = 65536,
) -> tuple[float, bool]:
    """First time the OU path drops to <= level; (time, censored).

    level must be <= r0 (down-crossings); censored passages report the
    horizon as their time.
    """
    if dt > 1e-2:
        raise ValueError(f"dt must be <= 1e-2, got {dt}")
    if level > r0:
        raise ValueError(f"level {level} above the start {r0}; only down-crossings are supported")
    if r0 <= level:
        return 0.0, False
    n_steps = int(round(horizon / dt))
    a1 = 1.0 - dt
    r = r0
    done = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        noise = _ou_increments(m, dt, stream)
        seg, _ = lfilter([1.0], [1.0, -a1], noise, zi=np.array([a1 * r]))
        hits = np.nonzero(seg <= level)[0]
        if len(hits):
            return (done + int(hits[0]) + 1) * dt, False
        r = seg[-1]
        done += m
    return horizon, True


def _window_start(params: ModelParams, b: float) -> tuple[int, int]:
    """Integer chain state on the critical line at window position b.

    The active count is floored so the starting deviation satisfies
    -1 < S <= 0 (a level-0 passage is then immediate).
    """
    n = params.n_sites
    x0 = round(params.rho_c * n + b * math.sqrt(n * math.log(n)))
    y0 = math.floor(params.ell(x0))
    y0 = min(max(y0, 1), x0)
    return x0, y0


def first_passage_compare(
    params: ModelParams,
    level_multiplier: float,
    samples: int,
    stream: RandomStream,
    epsilon: float = 0.3,
    horizon: float = 30.0,
    dt: float = 1e-3,
) -> dict:
    """Chain-vs-OU first-passage comparison at the two window levels.

    The slow level starts the chain at rho_c n + (a + epsilon) sqrt(n log n)
    and watches for S to drop by (1+lam)(a+epsilon) sqrt(n log n) (the
    crossing that ends stabilisation there); the fast level uses a - epsilon.
    level_multiplier scales both passage depths (0 makes passage immediate).
    Chain times are reported in units of n steps; censored passages count at
    the horizon. Returns medians, the slow/fast median ratio, and per-level
    chain-vs-OU Kolmogorov-Smirnov statistics.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = params.n_sites
    lam = params.lam
    a = critical_constants(lam).a
    logn = math.log(n)
    max_steps = int(round(horizon * n))
    out: dict = {"levels": {}, "medians": {}, "ks_statistic": {}}
    for name, b in (("slow", a + epsilon), ("fast", a - epsilon)):
        m_level = (1.0 + lam) * b * math.sqrt(logn) / math.sqrt(lam)
        depth = level_multiplier * m_level
        s_level = -depth * math.sqrt(lam * n)
        x0, y0 = _window_start(params, b)
        chain_times = np.empty(samples)
        chain_censored = np.zeros(samples, dtype=bool)
        ou_times = np.empty(samples)
        ou_censored = np.zeros(samples, dtype=bool)
        for i, sub in enumerate(stream.split(2 * samples)):
            j = i // 2
            if i % 2 == 0:
                steps, code = _kernels.cc_first_passage(
                    n, lam, x0, y0, s_level, max_steps, sub.kernel_state
                )
                chain_times[j] = steps / n
                chain_censored[j] = code == 2
            else:
                t, cens = ou_first_passage(-depth, horizon, dt, sub)
                ou_times[j] = t
                ou_censored[j] = cens
        ks = float(ks_2samp(chain_times, ou_times, method="asymp").statistic) if samples > 1 else float("nan")
        out["levels"][name] = {
            "window_position": b,
            "depth": depth,
            "chain_times": chain_times,
            "chain_censored": chain_censored,
            "ou_times": ou_times,
            "ou_censored": ou_censored,
        }
        out["medians"][name] = {
            "chain": float(np.median(chain_times)),
            "ou": float(np.median(ou_times)),
        }
        out["ks_statistic"][name] = ks
    fast_med = out["medians"]["fast"]["chain"]
    slow_med = out["medians"]["slow"]["chain"]
    out["median_ratio"] = slow_med / fast_med if fast_med > 0 else float("inf")
    if level_multiplier == 0.0:
        out["median_ratio"] = 1.0
    out["all_censored"] = bool(
        all(out["levels"][nm]["chain_censored"].all() for nm in out["levels"])
    )
    return out


def window_moment_regression(
    params: ModelParams,
    x_hat: float,
    total_steps: int,
    stream: RandomStream,
    x_hat_floor: float | None = None,
    s_gate: float | None = None,
) -> dict:
    """Rescaled drift and variance coefficients from in-window trajectories.

    Accumulates the sufficient statistics of dS on S over total_steps chain
    steps and returns the OLS slope scaled by n (drift coefficient, -1 in
    the limit) and the residual variance scaled by 1/lam (variance
    coefficient, 2 in the limit). The trajectory restarts on the critical
    line whenever it absorbs or drifts below x_hat_floor (default
    0.7 x_hat), and steps with |S| > s_gate (default 2.5 sqrt(lam n)) are
    excluded: the limiting coefficients describe the chain inside the
    critical window, and the approach to absorption would otherwise leak
    out-of-window states into the fit.
    """
    n = params.n_sites
    x0, y0 = _window_start(params, x_hat)
    if x_hat_floor is None:
        x_hat_floor = 0.7 * x_hat
    if s_gate is None:
        s_gate = 2.5 * math.sqrt(params.lam * n)
    x_floor = params.rho_c * n + x_hat_floor * math.sqrt(n * math.log(n))
    sums = np.zeros(6)
    done = 0
    while done < total_steps:
        took = _kernels.cc_window_moments(
            n, params.lam, x0, y0, x_floor, s_gate, total_steps - done,
            stream.kernel_state, sums,
        )
        if took == 0:
            raise ValueError("start state lies outside its own window floor")
        done += took
    cnt, s1, s2, d1, sd, d2 = sums
    var_s = s2 / cnt - (s1 / cnt) ** 2
    cov_sd = sd / cnt - (s1 / cnt) * (d1 / cnt)
    slope = cov_sd / var_s
    var_ds = d2 / cnt - (d1 / cnt) ** 2
    resid_var = var_ds - slope * slope * var_s
    return {
        "drift_coefficient": slope * n,
        "variance_coefficient": resid_var / params.lam,
        "steps": int(cnt),
    }
