"""Microscopic simulators: the single-occupancy chain and the driven chain.

Two levels of resolution over the same particle system:

* the single-occupancy chain moves one chosen active particle per update,
  walking it until it settles on an empty vertex or exits; it reduces
  exactly to the (x, y) count chain and serves as its independent oracle;
* the driven chain adds a particle at a uniform vertex and stabilises with
  the multi-occupancy dynamics (single jumps, failed sleeps on shared
  sites), sampling the stationary particle-count distribution.

Site encoding in both: 0 empty, -1 sleeping, k >= 1 active particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .count_chain import AbsorbedStateError, CountState, ModelParams, StepOutcome
from .streams import RandomStream

__all__ = [
    "MicroConfig",
    "DrivenSample",
    "eta_step",
    "stabilize_driven",
    "driven_chain_run",
    "count_projection",
    "eta_outcome_frequencies",
]

STABILIZE_CAP = 10**9


@dataclass
class MicroConfig:
    """Per-vertex particle states; wraps an int64 site array."""

    sites: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "MicroConfig":
        return cls(np.zeros(n, dtype=np.int64))

    @classmethod
    def all_active(cls, n: int) -> "MicroConfig":
        return cls(np.ones(n, dtype=np.int64))

    @classmethod
    def all_sleeping(cls, n: int) -> "MicroConfig":
        return cls(np.full(n, -1, dtype=np.int64))

    @classmethod
    def from_counts(cls, n: int, x: int, y: int) -> "MicroConfig":
        """Canonical single-occupancy layout: y actives then x - y sleepers."""
        if not 0 <= y <= x <= n:
            raise ValueError(f"invalid counts ({x}, {y}) for n={n}")
        sites = np.zeros(n, dtype=np.int64)
        sites[:y] = 1
        sites[y:x] = -1
        return cls(sites)

    def copy(self) -> "MicroConfig":
        return MicroConfig(self.sites.copy())

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def particle_count(self) -> int:
        s = self.sites
        return int((s == -1).sum() + s[s > 0].sum())

    @property
    def active_count(self) -> int:
        s = self.sites
        return int(s[s > 0].sum())

    @property
    def is_stable(self) -> bool:
        return bool((self.sites <= 0).all())

    @property
    def single_occupancy(self) -> bool:
        return bool((self.sites <= 1).all())


@dataclass(frozen=True)
class DrivenSample:
    step_index: int
    particle_count: int
    avalanche_steps: int


def count_projection(config: MicroConfig) -> CountState:
    """(x, y) counts of a single-occupancy configuration."""
    if not config.single_occupancy:
        raise ValueError("projection undefined for multi-occupancy configurations")
    s = config.sites
    x = int((s != 0).sum())
    y = int((s == 1).sum())
    return CountState(x, y)


def eta_step(params: ModelParams, config: MicroConfig, stream: RandomStream) -> tuple[MicroConfig, StepOutcome]:
    """One walk-until-settle update of the single-occupancy chain.

    Picks a uniform active site; the particle sleeps with probability
    lam/(1+lam) and otherwise walks on the complete graph (uniform over the
    other n vertices per jump, origin vacated at the start of the move),
    waking the sleepers it visits, until it reaches an empty vertex or the
    boundary.
    """
    if config.n_sites != params.n_sites:
        raise ValueError("config size does not match params.n_sites")
    if not config.single_occupancy:
        raise ValueError("eta_step requires a single-occupancy configuration")
    if config.active_count == 0:
        raise AbsorbedStateError("no active particle to move")
    new = config.copy()
    code, woken = _kernels.eta_step_kernel(params.n_sites, params.lam, new.sites, stream.kernel_state)
    if code == _kernels.ETA_SLEEP:
        outcome = StepOutcome.sleep()
    elif code == _kernels.ETA_SETTLE:
        outcome = StepOutcome.settle(int(woken))
    else:
        outcome = StepOutcome.exit(int(woken))
    return new, outcome


def eta_outcome_frequencies(
    params: ModelParams, state: CountState, n_samples: int, stream: RandomStream
) -> dict[StepOutcome, int]:
    """Tally n_samples one-step outcomes from the canonical (x, y) config."""
    x, y = state
    if y < 1:
        raise AbsorbedStateError("no active particle to move")
    sleep_cnt, settle_cnt, exit_cnt = _kernels.eta_outcome_counts(
        params.n_sites, params.lam, x, y, n_samples, stream.kernel_state
    )
    counts: dict[StepOutcome, int] = {StepOutcome.sleep(): int(sleep_cnt)}
    for k in range(x - y + 1):
        counts[StepOutcome.settle(k)] = int(settle_cnt[k])
        counts[StepOutcome.exit(k)] = int(exit_cnt[k])
    return counts


def stabilize_driven(
    params: ModelParams,
    config: MicroConfig,
    addition_site: int,
    stream: RandomStream,
    priority: bool = False,
) -> tuple[MicroConfig, int]:
    """Add one active particle at addition_site and stabilise.

    A sleeper at the addition site is activated, so the site briefly hosts
    two active particles. Updates then repeatedly act on a uniformly chosen
    active particle (sleep attempt, no-op on shared sites, else one uniform
    jump with removal at the boundary) until no active particle remains.
    The priority flag switches to fixed lowest-site-first selection, kept
    only for testing that the stable law does not depend on the selection
    rule. Returns the stable configuration and the number of micro-updates.
    """
    n = params.n_sites
    if config.n_sites != n:
        raise ValueError("config size does not match params.n_sites")
    if not config.is_stable:
        raise ValueError("stabilize_driven requires a stable starting configuration")
    if not 0 <= addition_site < n:
        raise ValueError(f"addition_site {addition_site} outside [0, {n})")
    new = config.copy()
    if new.sites[addition_site] == -1:
        new.sites[addition_site] = 2
        y0 = 2
    else:
        new.sites[addition_site] = 1
        y0 = 1
    updates, _exits, truncated = _kernels.stabilize_kernel(
        n, params.lam, new.sites, y0, priority, STABILIZE_CAP, stream.kernel_state
    )
    if truncated:
        raise RuntimeError(f"stabilisation exceeded {STABILIZE_CAP} micro-updates")
    return new, int(updates)


def driven_chain_run(
    params: ModelParams,
    initial: MicroConfig,
    steps: int,
    stream: RandomStream,
) -> list[DrivenSample]:
    """Run the driven chain for `steps` additions at uniform random sites."""
    n = params.n_sites
    if initial.n_sites != n:
        raise ValueError("config size does not match params.n_sites")
    if not initial.is_stable:
        raise ValueError("driven_chain_run requires a stable starting configuration")
    if steps == 0:
        return []
    sites = initial.sites.copy()
    counts = np.empty(steps, dtype=np.int64)
    av = np.empty(steps, dtype=np.int64)
    done, truncated = _kernels.driven_run_kernel(
        n, params.lam, sites, steps, STABILIZE_CAP, stream.kernel_state, counts, av
    )
    if truncated:
        raise RuntimeError(f"stabilisation exceeded {STABILIZE_CAP} micro-updates at addition {done}")
    return [DrivenSample(i, int(counts[i]), int(av[i])) for i in range(steps)]


def driven_counts(
    params: ModelParams,
    steps: int,
    burn_in: int,
    stream: RandomStream,
) -> np.ndarray:
    """Particle counts from a driven run, dropping burn_in initial additions.

    The chain starts from the stabilisation of the all-active configuration.
    """
    n = params.n_sites
    sites = np.ones(n, dtype=np.int64)
    _upd, _exits, truncated = _kernels.stabilize_kernel(
        n, params.lam, sites, n, False, STABILIZE_CAP, stream.kernel_state
    )
    if truncated:
        raise RuntimeError("initial stabilisation exceeded the update cap")
    total = burn_in + steps
    counts = np.empty(total, dtype=np.int64)
    av = np.empty(total, dtype=np.int64)
    done, truncated = _kernels.driven_run_kernel(
        n, params.lam, sites, total, STABILIZE_CAP, stream.kernel_state, counts, av
    )
    if truncated:
        raise RuntimeError(f"stabilisation exceeded the update cap at addition {done}")
    return counts[burn_in:]
