"""Coarse-grained band geometry, exponential tilts, and resistance formulas.

The deviation of the active count from the critical window is tracked on
bands of width 2 n^{3/8}. Within a band the chain's downward displacement is
bounded by an i.i.d.-increment walk anchored at a reference state; its
interval-exit probabilities define a nearest-neighbour birth-and-death chain
whose hitting probabilities reduce to ratios of effective resistances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .count_chain import CountState, IncrementLaw, ModelParams, increment_law
from .streams import RandomStream
from . import _kernels

__all__ = [
    "BandSpec",
    "BirthDeathChain",
    "band_parameters",
    "band_anchor_law",
    "theta_star",
    "tilt_root",
    "exit_probability_exact",
    "band_up_exit_probability",
    "band_up_exit_max",
    "build_band_chain",
    "birth_death_resistance",
    "hitting_probability",
    "hitting_probability_solve",
    "absorption_window_estimate",
    "large_jump_bound",
]

MAX_INTERVAL_POINTS = 10**6
SUPPORT_QUANTILE = 1.0 - 1e-15


@dataclass(frozen=True)
class BandSpec:
    """Geometry of one coarse-grained band.

    The anchor pair (x_anchor, y_star) is the integer chain state at which
    the stochastic bound on the in-band increments is evaluated. delta_k is
    computed from the unrounded anchor values, where the definition
    (x - y*)/(n - y*) - rho_c coincides with its leading-order form exactly;
    rounding y* would reintroduce an O(1/n) offset.
    """

    k: int
    width_scale: float  # n^{3/8}
    interval: tuple[float, float]
    z_star: float
    y_star: int
    y_star_real: float
    x_anchor: int
    x_anchor_real: float
    x_hat: float
    delta_k: float
    k_minus: int
    k_plus: int
    jump_cut: float  # log^2 n, the large-jump threshold
    barred: bool


def band_parameters(params: ModelParams, k: int, x_hat: float, barred: bool = False) -> BandSpec:
    """Populate the band geometry for index k at window position x_hat.

    Unbarred bands use the centre offset (k + 3/2) and the anchor x itself;
    barred bands use (k - 3/2) and the shifted anchor x - log^2 n.
    """
    n = params.n_sites
    lam = params.lam
    logn = math.log(n)
    width = n**0.375
    sqrt_nlogn = math.sqrt(n * logn) if logn > 0 else 0.0
    x_real = params.rho_c * n + x_hat * sqrt_nlogn
    if barred:
        x_real -= logn**2
        x_hat_eff = (x_real - params.rho_c * n) / sqrt_nlogn if sqrt_nlogn else 0.0
        z = (k - 1.5) * width
    else:
        x_hat_eff = x_hat
        z = (k + 1.5) * width
    y_real = (1.0 + lam) * x_hat_eff * sqrt_nlogn - z
    y_star = math.floor(y_real)
    x_anchor = round(x_real)
    if not 0 <= y_star <= x_anchor:
        raise ValueError(
            f"band k={k} has y_star={y_star} outside [0, {x_anchor}]; not meaningful at n={n}"
        )
    delta = (x_real - y_real) / (n - y_real) - params.rho_c
    k_minus = math.floor(n**0.125)
    k_plus = math.floor((1.0 + lam) * x_hat_eff * n**0.125 * math.sqrt(logn))
    return BandSpec(
        k=k,
        width_scale=width,
        interval=((k - 1) * width, (k + 1) * width),
        z_star=z,
        y_star=y_star,
        y_star_real=y_real,
        x_anchor=x_anchor,
        x_anchor_real=x_real,
        x_hat=x_hat,
        delta_k=delta,
        k_minus=k_minus,
        k_plus=k_plus,
        jump_cut=logn**2,
        barred=barred,
    )


def band_anchor_law(params: ModelParams, band: BandSpec) -> IncrementLaw:
    return increment_law(params, CountState(band.x_anchor, band.y_star))


def _walk_increments(law: IncrementLaw) -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of the walk increment U = -dY (up-steps +1)."""
    dy_vals, dy_probs = law.delta_y_probs()
    return -dy_vals.astype(float), dy_probs


def tilt_root(values: np.ndarray, probs: np.ndarray, prediction: float, tol: float = 1e-12) -> float:
    """Nontrivial root of E[exp(theta U)] = 1 for the increment law (values, probs).

    Brackets around the predicted root (excluding a 1e-3 relative
    neighbourhood of the trivial root theta = 0), expanding geometrically
    until the sign changes.
    """
    mask = probs > 0.0
    vals = values[mask]
    p = probs[mask]
    drift = float(vals @ p)
    if drift == 0.0:
        raise ValueError("zero drift: theta = 0 is the only root of the tilt equation")
    if prediction == 0.0:
        raise ValueError("prediction must be nonzero to separate the roots")

    def g(theta):
        return float(np.exp(theta * vals) @ p) - 1.0

    lo_scale, hi_scale = 0.5, 1.5
    for _ in range(60):
        a = prediction * lo_scale
        b = prediction * hi_scale
        ga, gb = g(a), g(b)
        if ga == 0.0:
            return a
        if gb == 0.0:
            return b
        if (ga < 0.0) != (gb < 0.0):
            root = float(brentq(g, min(a, b), max(a, b), xtol=1e-16, rtol=8.9e-16))
            if abs(g(root)) > tol:
                raise RuntimeError(f"tilt root residual {g(root):.2e} exceeds {tol}")
            return root
        lo_scale = max(lo_scale / 2.0, 1e-3)
        hi_scale *= 2.0
        if lo_scale <= 1e-3 and hi_scale > 1e6:
            break
    raise ValueError("drift too small to separate roots")


def theta_star(params: ModelParams, band: BandSpec) -> float:
    """Tilt rate making exp(theta* Z') a martingale for the band's anchor law.

    Satisfies |E[exp(theta* U)] - 1| <= 1e-12 and tracks the leading-order
    value (1+lam)/lam * delta_k.
    """
    values, probs = _walk_increments(band_anchor_law(params, band))
    prediction = (1.0 + params.lam) / params.lam * band.delta_k
    return tilt_root(values, probs, prediction)


def _truncate_support(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop the tail beyond the 1 - 1e-15 quantile of the downward jumps,
    reassigning the cut mass to the largest retained jump."""
    order = np.argsort(values)[::-1]  # +1 first, then increasingly negative
    v = values[order]
    p = probs[order].copy()
    cum = np.cumsum(p)
    keep = int(np.searchsorted(cum, SUPPORT_QUANTILE)) + 1
    keep = min(keep, len(v))
    v = v[:keep]
    p = p[:keep]
    p[-1] += max(0.0, 1.0 - p.sum())
    return v, p


def exit_probability_exact(law: IncrementLaw, interval: tuple[float, float], start: int) -> float:
    """Up-exit probability of the i.i.d.-increment walk from an open interval.

    The walk has increments U = -dY under the given law (up-steps of size 1,
    geometric-tailed downward jumps) and is absorbed on leaving (lo, hi);
    returns P[exit at or above hi | start]. Solved exactly on the interval's
    integer lattice.
    """
    lo, hi = interval
    if hi - lo > MAX_INTERVAL_POINTS:
        raise ValueError(f"interval of width {hi - lo:.3g} exceeds {MAX_INTERVAL_POINTS} lattice points")
    if start >= hi:
        return 1.0
    if start <= lo:
        return 0.0
    values, probs = _truncate_support(*_walk_increments(law))
    z_min = math.floor(lo) + 1
    z_max = math.ceil(hi) - 1
    zs = np.arange(z_min, z_max + 1)
    size = len(zs)
    a_mat = np.eye(size)
    b = np.zeros(size)
    for u, p in zip(values, probs):
        if p == 0.0:
            continue
        dest = zs + int(u)
        inside = (dest >= z_min) & (dest <= z_max)
        rows = np.arange(size)[inside]
        a_mat[rows, dest[inside] - z_min] -= p
        up = dest >= hi
        b[np.arange(size)[up]] += p
    u_vec = np.linalg.solve(a_mat, b)
    return float(u_vec[start - z_min])


def band_up_exit_probability(params: ModelParams, band: BandSpec, start: int | None = None) -> float:
    """f_k from the band's centre start (default: the nearest lattice point
    to k n^{3/8})."""
    if start is None:
        start = round(band.k * band.width_scale)
    return exit_probability_exact(band_anchor_law(params, band), band.interval, start)


def band_up_exit_max(params: ModelParams, band: BandSpec) -> float:
    """Max up-exit probability over the start window k n^{3/8} +- 2 log^2 n.

    Starts outside the open interval are clamped to its interior (the window
    only fits inside the band for n beyond desk scale); the exit probability
    is monotone in the start, so the sweep's max sits at the top endpoint.
    """
    law = band_anchor_law(params, band)
    center = band.k * band.width_scale
    m = band.jump_cut
    lo = max(math.floor(center - 2 * m), math.floor(band.interval[0]) + 1)
    hi = min(math.ceil(center + 2 * m), math.ceil(band.interval[1]) - 1)
    if lo > hi:
        raise ValueError("start window does not intersect the band interior")
    stride = 1 if 4 * m + 1 <= 1e3 else max(1, int(m / 10))
    best = 0.0
    for start in range(lo, hi + 1, stride):
        best = max(best, exit_probability_exact(law, band.interval, start))
    return max(best, exit_probability_exact(law, band.interval, hi))


@dataclass(frozen=True)
class BirthDeathChain:
    """Nearest-neighbour chain on {k_min - 1, ..., k_max + 1} with absorbing
    endpoints; g[i] is the up-probability at state k_min + i."""

    g: np.ndarray
    k_min: int

    def __post_init__(self):
        if ((self.g <= 0.0) | (self.g >= 1.0)).any():
            raise ValueError("up-probabilities must lie strictly in (0, 1)")

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.g) - 1

    def up_probability(self, k: int) -> float:
        return float(self.g[k - self.k_min])


def build_band_chain(params: ModelParams, x_hat: float, barred: bool = False) -> tuple[BirthDeathChain, list[BandSpec]]:
    """Birth-and-death chain with g_k taken from the bands' exact exit
    probabilities, for k = -k_minus up to k_plus.

    The top one or two band indices place the anchor active count below 1
    (the active count is about to vanish there); those bands carry no
    anchor law, so the chain is truncated at the last index with a valid
    anchor. At desk scale this shaves the largest-resistance edges and so
    slightly overstates the upward hitting probability.
    """
    probe = band_parameters(params, 0, x_hat, barred)
    bands = []
    for k in range(-probe.k_minus, probe.k_plus + 1):
        try:
            band = band_parameters(params, k, x_hat, barred)
        except ValueError:
            break
        if band.y_star < 1:
            break
        bands.append(band)
    if len(bands) < 2:
        raise ValueError(f"no usable band range at n={params.n_sites}, x_hat={x_hat}")
    g = np.array([band_up_exit_probability(params, b) for b in bands])
    return BirthDeathChain(g=g, k_min=-probe.k_minus), bands


def birth_death_resistance(chain: BirthDeathChain) -> np.ndarray:
    """Edge resistances r(k, k+1) = prod_{j<=k} (1-g_j)/g_j, k from k_min - 1
    to k_max, evaluated in log space; index i holds r(k_min - 1 + i, ...)."""
    logs = np.log1p(-chain.g) - np.log(chain.g)
    out = np.empty(len(chain.g) + 1)
    out[0] = 1.0  # empty product for the edge leaving the lower boundary
    out[1:] = np.exp(np.cumsum(logs))
    return out


def hitting_probability(chain: BirthDeathChain, start: int) -> float:
    """P[hit k_max + 1 before k_min - 1 | start], as a resistance ratio.

    Computed through log-space cumulative sums so that the astronomically
    unbalanced products near the chain ends cannot overflow.
    """
    if not chain.k_min - 1 < start < chain.k_max + 1:
        raise ValueError(f"start {start} not strictly inside the boundaries")
    logs = np.log1p(-chain.g) - np.log(chain.g)
    log_r = np.concatenate([[0.0], np.cumsum(logs)])  # log r(k_min-1+i, ...)
    top = log_r.max()
    weights = np.exp(log_r - top)
    num = weights[: start - chain.k_min + 1].sum()
    den = weights.sum()
    return float(num / den)


def hitting_probability_solve(chain: BirthDeathChain, start: int) -> float:
    """Same hitting probability through the first-step linear system."""
    if not chain.k_min - 1 < start < chain.k_max + 1:
        raise ValueError(f"start {start} not strictly inside the boundaries")
    size = len(chain.g)
    a_mat = np.eye(size)
    b = np.zeros(size)
    for i, gk in enumerate(chain.g):
        if i + 1 < size:
            a_mat[i, i + 1] -= gk
        else:
            b[i] += gk  # upper boundary value 1
        if i - 1 >= 0:
            a_mat[i, i - 1] -= 1.0 - gk
    h = np.linalg.solve(a_mat, b)
    return float(h[start - chain.k_min])


def absorption_window_estimate(params: ModelParams, x_hat: float) -> float:
    """Predicted absorption probability scale at window position x_hat > 0:
    x_hat sqrt(log n) n^{-(1+lam)^2 x_hat^2 / (2 lam)} (unit constant).

    The exponent equals -1/2 exactly at x_hat = sqrt(lam)/(1+lam), which is
    where the stabilisation probability crosses the n^{-1/2} phase boundary.
    """
    if x_hat <= 0.0:
        raise ValueError(f"x_hat must be positive, got {x_hat}")
    n = params.n_sites
    logn = math.log(n)
    expo = -((1.0 + params.lam) ** 2) * x_hat**2 / (2.0 * params.lam) * logn
    return x_hat * math.sqrt(logn) * math.exp(expo)


def large_jump_bound(params: ModelParams, state: CountState, m_cut: float) -> tuple[float, float]:
    """(exact P[dY > m_cut], geometric bound C (x/(n+2))^{floor(m_cut)+1}).

    The bound constant is (n+1)/((1+lam) n), from bounding every per-visit
    ratio in the tail product by x/(n+2).
    """
    from .count_chain import pi_tail

    x, y = state
    n = params.n_sites
    j = math.floor(m_cut) + 1  # P(dY > m_cut) = P(dY >= j)
    if j > x - y:
        exact = 0.0
    else:
        exact = pi_tail(params, state, 0, j) + pi_tail(params, state, -1, min(j + 1, x - y + 1))
    bound = (n + 1.0) / n / (1.0 + params.lam) * (x / (n + 2.0)) ** j
    return exact, bound


def tilted_walk_exit_mc(
    law: IncrementLaw,
    interval: tuple[float, float],
    start: int,
    theta: float,
    n_runs: int,
    stream: RandomStream,
) -> float:
    """Monte Carlo mean of exp(theta (Z_T - start)) for the stopped i.i.d. walk.

    Optional stopping at the interval exit keeps the tilted walk a
    martingale, so the mean is 1 up to sampling error.
    """
    values, probs = _truncate_support(*_walk_increments(law))
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    z_final = np.empty(n_runs)
    _kernels.iid_walk_exits(
        values, cdf, float(interval[0]), float(interval[1]), start, n_runs,
        stream.kernel_state, z_final,
    )
    return float(np.exp(theta * (z_final - start)).mean())
