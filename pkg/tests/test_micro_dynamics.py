import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from arwsim import AbsorbedStateError, CountState, ModelParams, RandomStream, increment_law
from arwsim.exact_solver import stationary_exact, total_variation
from arwsim.micro_dynamics import (
    MicroConfig,
    count_projection,
    driven_chain_run,
    driven_counts,
    eta_outcome_frequencies,
    eta_step,
    stabilize_driven,
)
from arwsim._kernels import stabilize_kernel


class TestCountProjection:
    def test_basic_layouts(self):
        assert count_projection(MicroConfig.empty(4)) == CountState(0, 0)
        assert count_projection(MicroConfig.all_sleeping(4)) == CountState(4, 0)
        cfg = MicroConfig(np.array([1, -1, 0], dtype=np.int64))
        assert count_projection(cfg) == CountState(2, 1)

    def test_multi_occupancy_rejected(self):
        cfg = MicroConfig(np.array([2, 0], dtype=np.int64))
        with pytest.raises(ValueError):
            count_projection(cfg)


class TestEtaStep:
    def test_single_site_law(self):
        p = ModelParams(1, 1.0)
        stream = RandomStream.from_seed(42)
        counts = {"sleep": 0, "exit": 0}
        trials = 40000
        for _ in range(trials):
            _, out = eta_step(p, MicroConfig.from_counts(1, 1, 1), stream)
            counts[out.kind.value] += 1
        assert counts["sleep"] / trials == pytest.approx(0.5, abs=0.01)
        assert counts["exit"] / trials == pytest.approx(0.5, abs=0.01)

    def test_requires_active_particle(self):
        p = ModelParams(3, 1.0)
        with pytest.raises(AbsorbedStateError):
            eta_step(p, MicroConfig.all_sleeping(3), RandomStream.from_seed(0))

    def test_outcome_matches_config_change(self):
        p = ModelParams(6, 0.7)
        stream = RandomStream.from_seed(5)
        cfg = MicroConfig.from_counts(6, 5, 3)
        for _ in range(500):
            x0, y0 = count_projection(cfg)
            new, out = eta_step(p, cfg, stream)
            x1, y1 = count_projection(new)
            assert (x1 - x0, y1 - y0) == (out.dx, out.dy)
            cfg = new if y1 >= 1 else MicroConfig.from_counts(6, 5, 3)

    def test_first_jump_boundary_exit_rate(self):
        # with a lone particle the only route out is the first jump straight
        # to the boundary, so P(exit) = 1/((1+lam) n) exactly
        n, lam = 5, 1.0
        p = ModelParams(n, lam)
        trials = 10**5
        freqs = eta_outcome_frequencies(p, CountState(1, 1), trials, RandomStream.from_seed(8))
        from arwsim import StepOutcome

        want = 1 / ((1 + lam) * n)
        got = freqs[StepOutcome.exit(0)] / trials
        assert got == pytest.approx(want, abs=4 * math.sqrt(want / trials))

    def test_one_step_law_matches_count_chain(self):
        # module-boundary oracle at a mixed state
        p = ModelParams(4, 1.0)
        state = CountState(3, 2)
        trials = 10**6
        freqs = eta_outcome_frequencies(p, state, trials, RandomStream.from_seed(13))
        law = increment_law(p, state).entries
        for outcome, prob in law.items():
            se = math.sqrt(prob * (1 - prob) / trials)
            if prob == 0.0:
                assert freqs.get(outcome, 0) == 0
            else:
                assert abs(freqs[outcome] / trials - prob) <= 4 * se, outcome


class TestExchangeability:
    def test_stable_occupancy_uniform_from_symmetric_start(self):
        # the all-active start is permutation invariant, so the stable
        # configuration must occupy every site equally often; this catches
        # any site-index bias in the particle selection or the walk
        n = 6
        p = ModelParams(n, 1.0)
        stream = RandomStream.from_seed(17)
        occupancy = np.zeros(n)
        runs = 5000
        for _ in range(runs):
            cfg = MicroConfig.all_active(n)
            while cfg.active_count > 0:
                cfg, _ = eta_step(p, cfg, stream)
            occupancy += cfg.sites != 0
        freq = occupancy / occupancy.sum()
        assert np.abs(freq - 1 / n).max() < 0.015


class TestStabilizeDriven:
    def test_single_site_addition(self):
        p = ModelParams(1, 1.0)
        stream = RandomStream.from_seed(23)
        stays = 0
        trials = 40000
        for _ in range(trials):
            cfg, _ = stabilize_driven(p, MicroConfig.empty(1), 0, stream)
            assert cfg.is_stable
            stays += cfg.particle_count
        assert stays / trials == pytest.approx(0.5, abs=0.01)

    def test_addition_to_empty_config_involves_one_particle(self):
        p = ModelParams(8, 2.0)
        stream = RandomStream.from_seed(29)
        for site in range(8):
            cfg, updates = stabilize_driven(p, MicroConfig.empty(8), site, stream)
            assert cfg.particle_count in (0, 1)
            assert updates >= 1

    def test_rejects_unstable_start(self):
        p = ModelParams(3, 1.0)
        with pytest.raises(ValueError):
            stabilize_driven(p, MicroConfig.all_active(3), 0, RandomStream.from_seed(0))

    def test_particle_count_changes_only_by_exits(self):
        p = ModelParams(10, 1.0)
        stream = RandomStream.from_seed(31)
        cfg = MicroConfig.all_sleeping(10)
        for step in range(200):
            before = cfg.particle_count
            site = step % 10
            cfg, _ = stabilize_driven(p, cfg, site, stream)
            assert cfg.particle_count <= before + 1

    def test_selection_rule_invariance(self):
        # uniform vs fixed-priority particle selection give the same
        # stationary count law (the stable law is order-independent)
        n = 6
        p = ModelParams(n, 1.0)
        adds = 10**5
        hists = []
        for priority, seed in ((False, 101), (True, 202)):
            stream = RandomStream.from_seed(seed)
            sites = np.ones(n, dtype=np.int64)
            stabilize_kernel(n, p.lam, sites, n, priority, 10**9, stream.kernel_state)
            counts = np.empty(adds, dtype=np.int64)
            thin = 20
            kept = []
            for a in range(adds):
                t = int(stream.generator.integers(n))
                if sites[t] == -1:
                    sites[t] = 2
                    y0 = 2
                else:
                    sites[t] += 1
                    y0 = int(sites[t])
                stabilize_kernel(n, p.lam, sites, y0, priority, 10**9, stream.kernel_state)
                counts[a] = (sites == -1).sum()
                if a % thin == 0:
                    kept.append(counts[a])
            hists.append(np.bincount(np.array(kept), minlength=n + 1))
        table = np.array(hists)
        table = table[:, table.sum(axis=0) > 0]
        _, pval, _, _ = chi2_contingency(table)
        assert pval > 0.01, f"selection rules disagree (p={pval:.4f})"


class TestDrivenChainRun:
    def test_zero_steps(self):
        p = ModelParams(4, 1.0)
        assert driven_chain_run(p, MicroConfig.empty(4), 0, RandomStream.from_seed(0)) == []

    def test_single_site_stationary_law(self):
        p = ModelParams(1, 1.0)
        counts = driven_counts(p, 10**5, 100, RandomStream.from_seed(37))
        assert (counts == 1).mean() == pytest.approx(0.5, abs=0.01)

    def test_samples_report_bookkeeping(self):
        p = ModelParams(12, 0.9)
        samples = driven_chain_run(p, MicroConfig.all_sleeping(12), 300, RandomStream.from_seed(41))
        assert len(samples) == 300
        assert [s.step_index for s in samples] == list(range(300))
        prev = 12
        for s in samples:
            assert 0 <= s.particle_count <= 12
            assert s.particle_count <= prev + 1
            assert s.avalanche_steps >= 1
            prev = s.particle_count

    def test_matches_exact_stationary_distribution(self):
        n = 12
        p = ModelParams(n, 1.0)
        counts = driven_counts(p, 3 * 10**5, 10 * n, RandomStream.from_seed(43))
        hist = np.bincount(counts, minlength=n + 1) / len(counts)
        mu = stationary_exact(p).mass
        assert total_variation(hist, mu) <= 0.01
