"""Exact stationary distribution and closed-form sum identities.

The stationary particle-count distribution equals the hitting law of X at
the first time Y = 0 when the count chain starts from (n, n). Since X never
increases, the absorbing-chain system decomposes into x-slices: occupation
mass inside slice x is solved from a substochastic linear system, absorbed
mass (at y = 0) is deposited into mu_x, and boundary-exit mass is pushed to
slice x - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import solve_upper_hessenberg
from .count_chain import CountState, ModelParams, increment_law

__all__ = [
    "StationaryDist",
    "stationary_exact",
    "sum_identity_first",
    "sum_identity_second",
    "sum_identity_exp",
    "total_variation",
]

DEFAULT_N_CAP = 300
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class StationaryDist:
    """Probability mass over final particle counts 0..n."""

    mass: np.ndarray

    def __post_init__(self):
        m = self.mass
        if (m < -1e-12).any():
            raise ValueError("stationary mass has negative entries")
        if abs(m.sum() - 1.0) > 1e-10:
            raise ValueError(f"stationary mass sums to {m.sum()!r}, not 1")

    @property
    def n_sites(self) -> int:
        return len(self.mass) - 1

    def mean(self) -> float:
        return float(np.arange(len(self.mass)) @ self.mass)

    def sd(self) -> float:
        k = np.arange(len(self.mass))
        mu = self.mean()
        return float(math.sqrt(max((k - mu) ** 2 @ self.mass, 0.0)))

    def window_mass(self, lo: float, hi: float) -> float:
        k = np.arange(len(self.mass))
        return float(self.mass[(k >= lo) & (k <= hi)].sum())


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def stationary_exact(params: ModelParams, n_cap: int = DEFAULT_N_CAP, structured: bool = False) -> StationaryDist:
    """Hitting distribution of X at Y = 0 from (n, n), solved slice by slice.

    structured switches the within-slice solves from dense LAPACK to an
    O(size^2) Hessenberg elimination (the only downward move inside a slice
    is dY = -1); both give the same result to solver precision.
    """
    n = params.n_sites
    if n > n_cap:
        raise ValueError(f"n_sites={n} exceeds the exact-solver cap {n_cap}")
    mu = np.zeros(n + 1)
    incoming = np.zeros(n + 1)  # mass entering the current slice at y = 0..x
    incoming[n] = 1.0
    sleep_p = params.sleep_p
    for x in range(n, 0, -1):
        inc = incoming[: x + 1]
        mu[x] += inc[0]
        m_vec = inc[1:].copy()
        if m_vec.sum() == 0.0:
            incoming = np.zeros(x)
            continue
        size = x  # rows/cols indexed r = y - 1, y = 1..x
        q_mat = np.zeros((size, size))
        e_mat = np.zeros((size, x))  # exit mass to slice x-1 at y' = 0..x-1
        for y in range(1, x + 1):
            law = increment_law(params, CountState(x, y))
            r = y - 1
            if r >= 1:
                q_mat[r, r - 1] = sleep_p
            q_mat[r, r:] += law.settle
            e_mat[r, r:] += law.exit
        a_mat = np.eye(size) - q_mat.T
        if structured:
            v = solve_upper_hessenberg(np.ascontiguousarray(a_mat[::-1, ::-1]), m_vec[::-1])[::-1]
        else:
            v = np.linalg.solve(a_mat, m_vec)
        residual = float(np.abs(a_mat @ v - m_vec).max())
        if residual > RESIDUAL_TOL * max(1.0, float(np.abs(m_vec).max())):
            raise RuntimeError(f"slice x={x} solve residual {residual:.3e} exceeds {RESIDUAL_TOL}")
        mu[x] += v[0] * sleep_p
        incoming = v @ e_mat
    mu[0] += incoming[0] if len(incoming) else 0.0
    return StationaryDist(mass=mu)


def _ratio_terms(n: int, m: int) -> np.ndarray:
    """terms[l-1] = n(n-1)...(n-l+1) / (m(m-1)...(m-l+1)) for l = 1..n."""
    ell = np.arange(n)
    return np.cumprod((n - ell) / (m - ell))


def _check_nm(n: int, m: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m <= n:
        raise ValueError(f"m must exceed n, got n={n}, m={m}")


def sum_identity_first(n: int, m: int) -> tuple[float, float]:
    """Direct summation of the falling-factorial ratio series vs n/(m-n+1)."""
    _check_nm(n, m)
    lhs = float(_ratio_terms(n, m).sum())
    rhs = n / (m - n + 1.0)
    return lhs, rhs


def sum_identity_second(n: int, m: int) -> tuple[float, float]:
    """Weighted summation (factor l) vs n(m+1)/((m-n+1)(m-n+2))."""
    _check_nm(n, m)
    terms = _ratio_terms(n, m)
    lhs = float((np.arange(1, n + 1) * terms).sum())
    rhs = n * (m + 1.0) / ((m - n + 1.0) * (m - n + 2.0))
    return lhs, rhs


def sum_identity_exp(n: int, m: int, theta: float) -> tuple[float, float, float]:
    """Exponentially tilted summation vs its first-order-in-theta expansion.

    Returns (lhs, first_order_rhs, residual); the residual is O(theta^2) as
    long as exp(-theta) n/m stays away from 1 (enforced at 0.9).
    """
    _check_nm(n, m)
    if math.exp(-theta) * n / m > 0.9:
        raise ValueError(f"exp(-theta) n/m = {math.exp(-theta) * n / m:.4f} exceeds 0.9")
    terms = _ratio_terms(n, m)
    lhs = float((np.exp(-theta * np.arange(1, n + 1)) * terms).sum())
    first, _ = sum_identity_first(n, m)
    second, _ = sum_identity_second(n, m)
    first_order = first - theta * second
    return lhs, first_order, lhs - first_order
