"""Independent exact oracle for the one-step outcome law.

Enumerates the walk-until-settle update directly in exact rational
arithmetic: a chosen active particle walks on the complete graph, waking
sleepers, until it reaches an empty vertex or the boundary. Only the counts
(sleeping, active, empty) of the non-current vertices matter by symmetry,
and repeated visits to active vertices renormalise away as a geometric
series. No product formula from the implementation is reused here.
"""

from fractions import Fraction
from functools import lru_cache


@lru_cache(maxsize=None)
def _from_active(s: int, e: int) -> tuple:
    """Outcome law for a walker standing on an active-type vertex.

    Pool excluding the current vertex: s sleepers, e empties (+ boundary).
    Visits to active vertices return to an identical state, so transition
    probabilities are conditioned on leaving the active set. Returns a tuple
    of (woken_more, kind, probability), kind in {"settle", "exit"}.
    """
    denom = Fraction(s + e + 1)
    out = [(0, "exit", 1 / denom), (0, "settle", Fraction(e) / denom)]
    if s > 0:
        for woken, kind, p in _from_active(s - 1, e):
            out.append((woken + 1, kind, Fraction(s) / denom * p))
    return tuple(out)


def one_step_law(n: int, lam: Fraction, x: int, y: int) -> dict:
    """Exact outcome distribution from a configuration with counts (x, y).

    Returns {("sleep", 0) | ("settle", k) | ("exit", k): Fraction}.
    """
    assert 1 <= y <= x <= n
    lam = Fraction(lam)
    law: dict = {("sleep", 0): lam / (1 + lam)}
    move_w = 1 / (1 + lam)
    s0, a0, e0 = x - y, y - 1, n - x

    def add(key, p):
        law[key] = law.get(key, Fraction(0)) + p

    # first jump leaves the vacated origin: n targets, boundary included
    add(("exit", 0), move_w * Fraction(1, n))
    add(("settle", 0), move_w * Fraction(e0, n))
    if a0 > 0:
        for woken, kind, p in _from_active(s0, e0 + 1):
            add((kind, woken), move_w * Fraction(a0, n) * p)
    if s0 > 0:
        for woken, kind, p in _from_active(s0 - 1, e0 + 1):
            add((kind, woken + 1), move_w * Fraction(s0, n) * p)
    assert sum(law.values()) == 1
    return law
