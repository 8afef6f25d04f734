import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arwsim import (
    AbsorbedStateError,
    CountState,
    ModelParams,
    RandomStream,
    StepKind,
    StepOutcome,
    increment_law,
    pi_tail,
    run_until_absorbed,
    sample_step,
    stochastic_dominance_check,
)
from walk_oracle import one_step_law


def law_as_dict(params, state):
    return increment_law(params, state).entries


class TestPiTail:
    def test_exit_tail_two_sites(self):
        p = ModelParams(2, 1.0)
        assert pi_tail(p, CountState(1, 1), -1, 0) == pytest.approx(0.25, abs=1e-15)
        # closed product: (1/2)(3/2)(1/3)
        assert pi_tail(p, CountState(1, 1), -1, 0) == pytest.approx(0.5 * 1.5 / 3, abs=1e-15)

    def test_settle_tail_two_sites(self):
        p = ModelParams(2, 1.0)
        # (1/2)(3/2)(2/3) - 1/4
        assert pi_tail(p, CountState(1, 1), 0, 0) == pytest.approx(0.25, abs=1e-15)

    def test_tail_beyond_max_wake_count_is_zero(self):
        p = ModelParams(7, 0.3)
        for x, y in [(5, 2), (7, 7), (3, 1)]:
            assert pi_tail(p, CountState(x, y), 0, x - y + 1) == 0.0
            assert pi_tail(p, CountState(x, y), -1, x - y + 1) == 0.0

    def test_tails_non_increasing_in_k(self):
        p = ModelParams(25, 2.5)
        for x, y in [(20, 5), (25, 1), (10, 10)]:
            for branch in (0, -1):
                tails = [pi_tail(p, CountState(x, y), branch, k) for k in range(x - y + 2)]
                assert all(a >= b - 1e-15 for a, b in zip(tails, tails[1:]))

    def test_rejects_bad_inputs(self):
        p = ModelParams(5, 1.0)
        with pytest.raises(ValueError):
            pi_tail(p, CountState(6, 1), 0, 0)
        with pytest.raises(ValueError):
            pi_tail(p, CountState(3, 1), 0, 4)
        with pytest.raises(ValueError):
            pi_tail(p, CountState(3, 1), 2, 0)


class TestIncrementLaw:
    def test_two_sites_full_law(self):
        p = ModelParams(2, 1.0)
        law = law_as_dict(p, CountState(2, 1))
        assert law[StepOutcome.sleep()] == pytest.approx(0.5, abs=1e-15)
        assert law[StepOutcome.exit(0)] == pytest.approx(0.25, abs=1e-15)
        assert law[StepOutcome.exit(1)] == pytest.approx(0.125, abs=1e-15)
        assert law[StepOutcome.settle(0)] == pytest.approx(0.0, abs=1e-15)
        assert law[StepOutcome.settle(1)] == pytest.approx(0.125, abs=1e-15)

    def test_single_site_always_exits_on_move(self):
        p = ModelParams(1, 1.0)
        law = law_as_dict(p, CountState(1, 1))
        assert law[StepOutcome.sleep()] == pytest.approx(0.5, abs=1e-15)
        assert law[StepOutcome.exit(0)] == pytest.approx(0.5, abs=1e-15)
        assert law[StepOutcome.settle(0)] == pytest.approx(0.0, abs=1e-15)

    def test_two_sites_single_particle(self):
        p = ModelParams(2, 1.0)
        law = law_as_dict(p, CountState(1, 1))
        assert law[StepOutcome.sleep()] == pytest.approx(0.5, abs=1e-15)
        assert law[StepOutcome.exit(0)] == pytest.approx(0.25, abs=1e-15)
        assert law[StepOutcome.settle(0)] == pytest.approx(0.25, abs=1e-15)

    def test_absorbed_state_has_no_law(self):
        p = ModelParams(3, 1.0)
        with pytest.raises(AbsorbedStateError):
            increment_law(p, CountState(2, 0))

    @pytest.mark.parametrize("lam", [Fraction(1, 2), Fraction(1), Fraction(3)])
    def test_matches_exact_walk_enumeration(self, lam):
        # independent oracle: direct rational enumeration of the micro walk
        for n in range(1, 6):
            p = ModelParams(n, float(lam))
            for x in range(1, n + 1):
                for y in range(1, x + 1):
                    oracle = one_step_law(n, lam, x, y)
                    law = law_as_dict(p, CountState(x, y))
                    for outcome, prob in law.items():
                        want = float(oracle.get((outcome.kind.value, outcome.woken), Fraction(0)))
                        assert prob == pytest.approx(want, abs=5e-15), (n, x, y, outcome)

    def test_normalization_identity(self):
        for lam in (0.1, 1.0, 10.0):
            p = ModelParams(120, lam)
            sleep = lam / (1 + lam)
            for x in range(1, 121):
                for y in range(1, x + 1):
                    st_ = CountState(x, y)
                    total = pi_tail(p, st_, 0, 0) + pi_tail(p, st_, -1, 0) + sleep
                    assert abs(total - 1.0) <= 1e-12

    @given(
        n=st.integers(1, 40),
        lam=st.floats(0.05, 20.0, allow_nan=False),
        data=st.data(),
    )
    @settings(max_examples=150, deadline=None)
    def test_law_is_a_probability_distribution(self, n, lam, data):
        x = data.draw(st.integers(1, n))
        y = data.draw(st.integers(1, x))
        law = increment_law(ModelParams(n, lam), CountState(x, y))
        assert law.total() == pytest.approx(1.0, abs=1e-12)
        assert law.sleep >= 0
        assert (law.settle >= -1e-15).all()
        assert (law.exit >= -1e-15).all()


class TestSampling:
    def test_reproducible_given_stream(self):
        p = ModelParams(30, 0.8)
        outs1 = []
        stream = RandomStream.from_seed(123)
        state = CountState(20, 10)
        for _ in range(50):
            state, out = sample_step(p, state, stream)
            outs1.append((state, out))
        stream = RandomStream.from_seed(123)
        state = CountState(20, 10)
        for i in range(50):
            state, out = sample_step(p, state, stream)
            assert (state, out) == outs1[i]

    def test_sleep_frequency_single_site(self):
        p = ModelParams(1, 1.0)
        stream = RandomStream.from_seed(7)
        sleeps = 0
        trials = 10**6
        for _ in range(trials):
            _, out = sample_step(p, CountState(1, 1), stream)
            sleeps += out.kind is StepKind.SLEEP
        assert sleeps / trials == pytest.approx(0.5, abs=2e-3)

    def test_outcome_deltas_consistent(self):
        p = ModelParams(12, 1.3)
        stream = RandomStream.from_seed(99)
        state = CountState(10, 1)
        for _ in range(2000):
            new, out = sample_step(p, state, stream)
            assert new.x == state.x + out.dx
            assert new.y == state.y + out.dy
            state = new if new.y >= 1 else CountState(10, 1)

    def test_absorbed_state_rejected(self):
        p = ModelParams(4, 1.0)
        with pytest.raises(AbsorbedStateError):
            sample_step(p, CountState(3, 0), RandomStream.from_seed(1))

    def test_sequential_sampler_matches_exact_law(self):
        # pins the Sleep, Exit(0), Settle(0), Exit(1), ... consumption order
        p = ModelParams(15, 0.7)
        state = CountState(12, 5)
        law = increment_law(p, state).entries
        stream = RandomStream.from_seed(271828)
        trials = 2 * 10**5
        counts: dict = {}
        for _ in range(trials):
            _, out = sample_step(p, state, stream)
            counts[out] = counts.get(out, 0) + 1
        tv = 0.5 * sum(abs(counts.get(o, 0) / trials - prob) for o, prob in law.items())
        assert tv <= 0.01
        for out in counts:
            assert law[out] > 0.0


class TestRunUntilAbsorbed:
    def test_single_site_absorbs_in_one_step(self):
        p = ModelParams(1, 1.0)
        for seed in range(30):
            traj = run_until_absorbed(p, CountState(1, 1), RandomStream.from_seed(seed), 100)
            assert traj.t_plus == 1
            assert traj.y[-1] == 0
            assert traj.x[-1] in (0, 1)

    def test_already_absorbed_start(self):
        p = ModelParams(5, 2.0)
        traj = run_until_absorbed(p, CountState(3, 0), RandomStream.from_seed(0), 100)
        assert traj.t_plus == 0
        assert len(traj) == 1
        assert not traj.truncated

    def test_truncation_is_flagged(self):
        p = ModelParams(200, 1.0)
        traj = run_until_absorbed(p, CountState(200, 200), RandomStream.from_seed(3), 10)
        assert traj.truncated
        assert traj.t_plus is None
        assert len(traj) == 11

    def test_records_first_passage_levels(self):
        p = ModelParams(100, 1.0)
        traj = run_until_absorbed(
            p, CountState(100, 100), RandomStream.from_seed(11), 10**6, rho_levels=(0.9, 0.2)
        )
        t9 = traj.tau[0.9]
        assert t9 is not None and traj.x[t9] <= 90 < traj.x[t9 - 1]
        if traj.tau[0.2] is not None:
            assert traj.x[traj.tau[0.2]] <= 20

    def test_x_never_increases_and_y_steps_down_by_one(self):
        p = ModelParams(80, 0.5)
        traj = run_until_absorbed(p, CountState(80, 80), RandomStream.from_seed(21), 10**6)
        dx = np.diff(traj.x)
        assert ((dx == 0) | (dx == -1)).all()
        dy = np.diff(traj.y)
        assert (dy >= -1).all()


class TestStochasticDominance:
    def test_law_dominates_itself(self):
        p = ModelParams(10, 1.0)
        law = increment_law(p, CountState(7, 3))
        assert stochastic_dominance_check(law, law)

    def test_decreasing_in_y_increasing_in_x(self):
        # every adjacent pair at n = 100, plus a low-rate spot check
        for n, lam in [(100, 1.0), (40, 0.3)]:
            p = ModelParams(n, lam)
            laws = {}
            for x in range(1, n + 1):
                for y in range(1, x + 1):
                    laws[(x, y)] = increment_law(p, CountState(x, y))
            for (x, y), here in laws.items():
                if (x, y + 1) in laws:
                    assert stochastic_dominance_check(here, laws[(x, y + 1)]), (x, y)
                if (x + 1, y) in laws:
                    assert stochastic_dominance_check(laws[(x + 1, y)], here), (x, y)

    def test_detects_violation(self):
        p = ModelParams(30, 1.0)
        lo = increment_law(p, CountState(10, 5))
        hi = increment_law(p, CountState(20, 5))
        assert not stochastic_dominance_check(lo, hi)


class TestModelParams:
    def test_derived_constants(self):
        p = ModelParams(10, 4.0)
        assert p.rho_c == pytest.approx(0.8)
        assert p.shift_a == pytest.approx(0.4)
        assert p.ell(10) == pytest.approx(5 * 10 - 4 * 10)  # (1+lam) x - lam n

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            ModelParams(0, 1.0)
        with pytest.raises(ValueError):
            ModelParams(5, 0.0)
        with pytest.raises(ValueError):
            ModelParams(5, math.inf)
