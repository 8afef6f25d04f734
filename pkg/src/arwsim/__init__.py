"""Activated random walk on the complete graph: simulators and exact numerics.

The package is organised around the reduced particle-count chain (x, y):

* :mod:`arwsim.count_chain` -- exact one-step law and trajectory samplers;
* :mod:`arwsim.micro_dynamics` -- microscopic single-occupancy and driven
  simulators that the count chain is checked against;
* :mod:`arwsim.exact_solver` -- stationary distribution by slice-wise
  absorbing-chain linear algebra, plus closed-form sum identities;
* :mod:`arwsim.moments` -- conditional drift / second moment / MGF of the
  deviation process in closed form;
* :mod:`arwsim.coarse_grain` -- band geometry, exponential tilts, interval
  exits, and birth-and-death resistance formulas;
* :mod:`arwsim.scaling` -- Ornstein-Uhlenbeck rescaling and first-passage
  comparisons;
* :mod:`arwsim.cli` -- the reproducible experiment driver.
"""

from .count_chain import (
    AbsorbedStateError,
    CountState,
    IncrementLaw,
    ModelParams,
    StepKind,
    StepOutcome,
    Trajectory,
    hitting_sample,
    increment_law,
    pi_tail,
    run_until_absorbed,
    sample_step,
    stochastic_dominance_check,
)
from .exact_solver import StationaryDist, stationary_exact, total_variation
from .scaling import critical_constants
from .streams import RandomStream

__version__ = "0.1.0"

__all__ = [
    "AbsorbedStateError",
    "CountState",
    "IncrementLaw",
    "ModelParams",
    "RandomStream",
    "StationaryDist",
    "StepKind",
    "StepOutcome",
    "Trajectory",
    "critical_constants",
    "hitting_sample",
    "increment_law",
    "pi_tail",
    "run_until_absorbed",
    "sample_step",
    "stationary_exact",
    "stochastic_dominance_check",
    "total_variation",
    "__version__",
]
