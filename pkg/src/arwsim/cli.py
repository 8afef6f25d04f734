"""Reproducible experiment driver.

Subcommands: stationary, trajectory, identities, drift-scan, coarse-grain,
ou-compare, suite. All randomness derives from (seed, trial) through
splittable seed sequences, trials are merged in index order, and outputs
are byte-identical for identical config + seed regardless of --threads.
Exit codes: 0 pass, 1 check failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import coarse_grain as cg
from . import exact_solver, moments, scaling
from .count_chain import CountState, ModelParams, hitting_sample, increment_law, run_until_absorbed
from .micro_dynamics import driven_counts, eta_outcome_frequencies
from .reports import config_hash, dump_json, write_csv, write_json
from .streams import RandomStream

__all__ = ["ExperimentConfig", "WindowReport", "run_stationary_sampling", "run_suite", "main"]

SUITES = ("identities", "oracles", "drift", "coarse_grain", "scaling", "stationary")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_sites: int = 100
    lam: float = 1.0
    seed: int = 20250809
    trials: int = 100
    burn_in: int = -1  # -1: mode-dependent default (10 n for driven runs)
    samples: int = 10000
    threads: int = 1
    mode: str = "hitting"
    epsilon_window: float = 0.1
    deviation_constant: float = 6.0
    out_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        if self.n_sites < 1:
            raise ConfigError(f"n must be >= 1, got {self.n_sites}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.mode not in ("hitting", "driven", "exact"):
            raise ConfigError(f"mode must be hitting/driven/exact, got {self.mode}")
        return self

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.n_sites, self.lam)

    @property
    def effective_burn_in(self) -> int:
        return 10 * self.n_sites if self.burn_in < 0 else self.burn_in

    def record(self) -> dict:
        """Identity of the experiment: everything except execution-only
        settings (threads, output directory), which must not change results."""
        d = asdict(self)
        d.pop("threads")
        d.pop("out_dir")
        return d

    def hash(self) -> str:
        return config_hash(self.record())

    def provenance(self) -> tuple[str, int]:
        return self.hash(), self.seed


@dataclass(frozen=True)
class WindowReport:
    """Shift statistics of the stationary count.

    in_window_fraction uses the shift window a +- epsilon around
    rho_c n + a sqrt(n log n); in_deviation_fraction uses the coarser
    concentration window rho_c n +- A sqrt(n log n) with A = the
    configured deviation constant.
    """

    mean_count: float
    sd_count: float
    shift_estimate: float
    in_window_fraction: float
    in_deviation_fraction: float
    n_samples: int
    truncated: int
    mode: str

    def as_dict(self) -> dict:
        return asdict(self)


def _window_bounds(params: ModelParams, epsilon: float) -> tuple[float, float]:
    n = params.n_sites
    scale = math.sqrt(n * max(math.log(n), 0.0))
    a = params.shift_a
    return params.rho_c * n + (a - epsilon) * scale, params.rho_c * n + (a + epsilon) * scale


def _report_from_samples(cfg: ExperimentConfig, counts: np.ndarray, truncated: int) -> WindowReport:
    params = cfg.params
    n = params.n_sites
    scale = math.sqrt(n * max(math.log(n), 0.0))
    lo, hi = _window_bounds(params, cfg.epsilon_window)
    dev = cfg.deviation_constant * scale
    mean = float(counts.mean())
    return WindowReport(
        mean_count=mean,
        sd_count=float(counts.std(ddof=1)) if len(counts) > 1 else 0.0,
        shift_estimate=(mean - params.rho_c * n) / scale if scale else float("nan"),
        in_window_fraction=float(((counts >= lo) & (counts <= hi)).mean()),
        in_deviation_fraction=float(
            ((counts >= params.rho_c * n - dev) & (counts <= params.rho_c * n + dev)).mean()
        ),
        n_samples=len(counts),
        truncated=truncated,
        mode=cfg.mode,
    )


def _parallel_trials(cfg: ExperimentConfig, worker, n_trials: int, key: int = 0) -> list:
    """Run worker(trial, stream) over trials; results in trial order."""
    def job(i):
        return worker(i, RandomStream.from_seed(cfg.seed, key, i))

    if cfg.threads == 1:
        return [job(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(job, range(n_trials)))


def run_stationary_sampling(cfg: ExperimentConfig) -> tuple[WindowReport, list[tuple]]:
    """Window statistics plus per-sample CSV rows for the configured mode.

    hitting: one absorption run from (n, n) per trial (exact in law);
    driven: one long addition run, correlated samples after burn-in;
    exact: no sampling, statistics straight from the solved distribution.
    """
    cfg.validate()
    params = cfg.params
    n = params.n_sites
    h, seed = cfg.provenance()
    if cfg.mode == "exact":
        dist = exact_solver.stationary_exact(params, n_cap=max(n, exact_solver.DEFAULT_N_CAP))
        k = np.arange(n + 1)
        lo, hi = _window_bounds(params, cfg.epsilon_window)
        scale = math.sqrt(n * max(math.log(n), 0.0))
        dev = cfg.deviation_constant * scale
        report = WindowReport(
            mean_count=dist.mean(),
            sd_count=dist.sd(),
            shift_estimate=(dist.mean() - params.rho_c * n) / scale if scale else float("nan"),
            in_window_fraction=dist.window_mass(lo, hi),
            in_deviation_fraction=dist.window_mass(params.rho_c * n - dev, params.rho_c * n + dev),
            n_samples=0,
            truncated=0,
            mode="exact",
        )
        rows = [(h, seed, 0, int(ki), float(mk)) for ki, mk in zip(k, dist.mass)]
        return report, rows
    if cfg.mode == "hitting":
        max_steps = int(2 * (1.0 + cfg.lam) * n * n) + 1000

        def worker(i, stream):
            return hitting_sample(params, CountState(n, n), stream, max_steps)

        results = _parallel_trials(cfg, worker, cfg.trials)
        counts = np.array([r[0] for r in results])
        truncated = sum(0 if r[2] else 1 for r in results)
        rows = [
            (h, seed, i, int(fx), int(steps), int(not absorbed))
            for i, (fx, steps, absorbed) in enumerate(results)
        ]
        return _report_from_samples(cfg, counts, truncated), rows
    # driven
    stream = RandomStream.from_seed(cfg.seed, 0, 0)
    counts = driven_counts(params, cfg.samples, cfg.effective_burn_in, stream)
    rows = [(h, seed, i, int(c)) for i, c in enumerate(counts)]
    return _report_from_samples(cfg, counts.astype(float), 0), rows


def _cmd_stationary(cfg: ExperimentConfig) -> int:
    report, rows = run_stationary_sampling(cfg)
    out = Path(cfg.out_dir)
    if cfg.mode == "exact":
        write_csv(out / "stationary.csv", ["config_hash", "seed", "trial", "k", "mu_k"], rows)
    elif cfg.mode == "hitting":
        write_csv(
            out / "stationary.csv",
            ["config_hash", "seed", "trial", "final_count", "steps", "truncated"],
            rows,
        )
    else:
        write_csv(out / "stationary.csv", ["config_hash", "seed", "trial", "count"], rows)
    write_json(out / "stationary_summary.json", {"config": cfg.record(), "report": report.as_dict()})
    print(dump_json(report.as_dict()), end="")
    return 0


def _cmd_trajectory(cfg: ExperimentConfig) -> int:
    cfg.validate()
    params = cfg.params
    n = params.n_sites
    max_steps = int((1.0 + cfg.lam) * n * n) + 1000
    eps = moments.default_eps_n(params)
    rho = params.rho_c - eps
    frame = moments.DeviationFrame(params)

    def worker(i, stream):
        traj = run_until_absorbed(params, CountState(n, n), stream, max_steps, rho_levels=(rho,))
        t_cut = traj.tau[rho]
        scan = moments.deviation_scan(traj, frame, t_max=t_cut)
        return {
            "trial": i,
            "t_plus": traj.t_plus if traj.t_plus is not None else -1,
            "truncated": int(traj.truncated),
            "final_count": int(traj.x[-1]),
            "tau_rho": t_cut if t_cut is not None else -1,
            **scan,
        }

    results = _parallel_trials(cfg, worker, cfg.trials)
    h, seed = cfg.provenance()
    rows = [
        (h, seed, r["trial"], r["t_plus"], r["truncated"], r["final_count"],
         r["tau_rho"], r["min_s"], r["max_s"], r["argmin_t"], r["argmax_t"])
        for r in results
    ]
    out = Path(cfg.out_dir)
    write_csv(
        out / "trajectory.csv",
        ["config_hash", "seed", "trial", "t_plus", "truncated", "final_count",
         "tau_rho", "min_s", "max_s", "argmin_t", "argmax_t"],
        rows,
    )
    summary = {
        "config": cfg.record(),
        "rho_level": rho,
        "mean_t_plus": float(np.mean([r["t_plus"] for r in results])),
        "truncated": int(sum(r["truncated"] for r in results)),
        "min_s_overall": float(min(r["min_s"] for r in results)),
    }
    write_json(out / "trajectory_summary.json", summary)
    print(dump_json(summary), end="")
    return 0


def _cmd_drift_scan(cfg: ExperimentConfig) -> int:
    cfg.validate()
    params = cfg.params
    n = params.n_sites
    scale = math.sqrt(n * max(math.log(n), 0.0))
    xs = sorted({int(round(params.rho_c * n + b * scale)) for b in np.linspace(0.0, 1.0, 11)})
    rows = []
    h, seed = cfg.provenance()
    for x in xs:
        if not 1 <= x <= n:
            continue
        for off in (-2, -1, 0, 1, 2):
            y = int(round(params.ell(x))) + off
            if not 1 <= y <= x:
                continue
            st = CountState(x, y)
            rows.append((h, seed, 0, x, y, "drift", moments.drift_exact(params, st)))
            rows.append((h, seed, 0, x, y, "second_moment", moments.second_moment_exact(params, st)))
    out = Path(cfg.out_dir)
    write_csv(out / "drift_scan.csv", ["config_hash", "seed", "trial", "x", "y", "quantity", "value"], rows)
    print(f"wrote {len(rows)} rows to {out / 'drift_scan.csv'}")
    return 0


def _cmd_coarse_grain(cfg: ExperimentConfig) -> int:
    cfg.validate()
    params = cfg.params
    x_hat = params.shift_a
    chain, bands = cg.build_band_chain(params, x_hat)
    res = cg.birth_death_resistance(chain)
    h, seed = cfg.provenance()
    rows = []
    for i, band in enumerate(bands):
        try:
            th = cg.theta_star(params, band)
        except ValueError:
            th = float("nan")
        rows.append(
            (h, seed, 0, band.k, band.delta_k, th, chain.g[i], float(res[i + 1]))
        )
    start = 0
    hit_ratio = cg.hitting_probability(chain, start)
    hit_solve = cg.hitting_probability_solve(chain, start)
    out = Path(cfg.out_dir)
    write_csv(
        out / "coarse_grain.csv",
        ["config_hash", "seed", "trial", "k", "delta_k", "theta_star", "f_k", "r_k"],
        rows,
    )
    summary = {
        "config": cfg.record(),
        "x_hat": x_hat,
        "k_range": [chain.k_min, chain.k_max],
        "hitting_probability": hit_ratio,
        "hitting_probability_solve": hit_solve,
        "absorption_window_estimate": cg.absorption_window_estimate(params, x_hat),
    }
    write_json(out / "coarse_grain_summary.json", summary)
    print(dump_json(summary), end="")
    return 0


def _cmd_ou_compare(cfg: ExperimentConfig) -> int:
    cfg.validate()
    params = cfg.params
    stream = RandomStream.from_seed(cfg.seed, 3)
    res = scaling.first_passage_compare(
        params, 1.0, cfg.trials, stream, epsilon=cfg.epsilon_window, dt=1e-3
    )
    h, seed = cfg.provenance()
    rows = []
    for name, level in res["levels"].items():
        for i in range(cfg.trials):
            rows.append((h, seed, i, name, "chain", level["chain_times"][i], int(level["chain_censored"][i])))
            rows.append((h, seed, i, name, "ou", level["ou_times"][i], int(level["ou_censored"][i])))
    out = Path(cfg.out_dir)
    write_csv(
        out / "ou_compare.csv",
        ["config_hash", "seed", "trial", "level", "process", "time", "censored"],
        rows,
    )
    summary = {
        "config": cfg.record(),
        "medians": res["medians"],
        "median_ratio": res["median_ratio"],
        "ks_statistic": res["ks_statistic"],
        "all_censored": res["all_censored"],
    }
    write_json(out / "ou_compare_summary.json", summary)
    print(dump_json(summary), end="")
    return 0


def _cmd_identities(cfg: ExperimentConfig) -> int:
    code, summary = run_suite(cfg, "identities")
    out = Path(cfg.out_dir)
    write_json(out / "identities.json", summary)
    print(dump_json(summary), end="")
    return code


# ---------------------------------------------------------------------------
# Check suites
# ---------------------------------------------------------------------------

def _check(name, value, threshold, ok) -> dict:
    return {"name": name, "value": value, "threshold": threshold, "passed": bool(ok)}


def _suite_identities(cfg: ExperimentConfig) -> list[dict]:
    checks = []
    lam_grid = sorted({cfg.lam, 0.1, 1.0, 10.0})
    n_id = min(cfg.n_sites, 200)
    worst = 0.0
    for lam in lam_grid:
        p = ModelParams(n_id, lam)
        for x in range(1, n_id + 1):
            for y in range(1, x + 1):
                st = CountState(x, y)
                from .count_chain import pi_tail

                total = pi_tail(p, st, 0, 0) + pi_tail(p, st, -1, 0) + lam / (1 + lam)
                worst = max(worst, abs(total - 1.0))
    checks.append(_check("normalization", worst, 1e-12, worst <= 1e-12))
    worst1 = worst2 = 0.0
    for nn in range(1, 61):
        for mm in range(nn + 1, 201, 7):
            l1, r1 = exact_solver.sum_identity_first(nn, mm)
            l2, r2 = exact_solver.sum_identity_second(nn, mm)
            worst1 = max(worst1, abs(l1 - r1))
            worst2 = max(worst2, abs(l2 - r2))
    checks.append(_check("sum_identity_first", worst1, 1e-12, worst1 <= 1e-12))
    checks.append(_check("sum_identity_second", worst2, 1e-12, worst2 <= 1e-12))
    n_mom = min(cfg.n_sites, 40)
    worst_d = worst_m = 0.0
    p = ModelParams(n_mom, cfg.lam)
    for x in range(1, n_mom + 1):
        for y in range(1, x + 1):
            st = CountState(x, y)
            worst_d = max(worst_d, abs(moments.drift_exact(p, st) - moments.drift_enumerated(p, st)))
            worst_m = max(
                worst_m, abs(moments.second_moment_exact(p, st) - moments.second_moment_enumerated(p, st))
            )
    checks.append(_check("drift_closed_form", worst_d, 1e-12, worst_d <= 1e-12))
    checks.append(_check("second_moment_closed_form", worst_m, 1e-12, worst_m <= 1e-12))
    return checks


def _suite_oracles(cfg: ExperimentConfig) -> list[dict]:
    checks = []
    n = min(cfg.n_sites, 6)
    p = ModelParams(n, cfg.lam)
    n_samples = 200_000
    worst_tv = 0.0
    t = 0
    for x in range(1, n + 1):
        for y in range(1, x + 1):
            st = CountState(x, y)
            stream = RandomStream.from_seed(cfg.seed, 10, t)
            t += 1
            freqs = eta_outcome_frequencies(p, st, n_samples, stream)
            law = increment_law(p, st).entries
            tv = 0.5 * sum(abs(freqs.get(o, 0) / n_samples - pe) for o, pe in law.items())
            worst_tv = max(worst_tv, tv)
    checks.append(_check("micro_vs_count_law_tv", worst_tv, 0.01, worst_tv <= 0.01))
    n_drv = min(cfg.n_sites, 10)
    p_drv = ModelParams(n_drv, cfg.lam)
    counts = driven_counts(p_drv, 100_000, 10 * n_drv, RandomStream.from_seed(cfg.seed, 11))
    hist = np.bincount(counts, minlength=n_drv + 1) / len(counts)
    mu = exact_solver.stationary_exact(p_drv).mass
    tv = exact_solver.total_variation(hist, mu)
    checks.append(_check("driven_vs_exact_tv", tv, 0.02, tv <= 0.02))
    return checks


def _suite_drift(cfg: ExperimentConfig) -> list[dict]:
    checks = []
    n = max(cfg.n_sites, 500)
    p = ModelParams(n, cfg.lam)
    ok_sign = True
    for x in range(int(0.2 * n), int(0.95 * n), max(1, n // 40)):
        for s_target in (4 * cfg.lam + 3, 4 * cfg.lam + 10, 0.05 * n):
            y = int(round(p.ell(x) + s_target))
            if not 1 <= y <= x:
                continue
            if p.s_of(x, y) <= 4 * cfg.lam + 2:
                continue
            if moments.drift_exact(p, CountState(x, y)) >= 0.0:
                ok_sign = False
    checks.append(_check("drift_negative_above_band", float(ok_sign), 1.0, ok_sign))
    eps = moments.default_eps_n(p)
    margins = []
    h = 0.01
    for x in range(int(p.rho_c * n) + int(0.3 * eps * n), int(p.rho_c * n + 3 * eps * n), max(1, int(0.2 * eps * n))):
        for frac in (1.0, 1.5, 2.0):
            y = int(round(p.ell(x) - frac * eps * n))
            if not 1 <= y <= x:
                continue
            s = p.s_of(x, y)
            if not -2 * eps * n <= s <= -eps * n:
                continue
            margins.append(moments.supermartingale_margin(p, CountState(x, y), h, eps))
    min_margin = min(margins) if margins else float("nan")
    checks.append(_check("supermartingale_margin_on_band", min_margin, 0.0, min_margin >= 0.0))
    return checks


def _suite_coarse_grain(cfg: ExperimentConfig) -> list[dict]:
    checks = []
    p = ModelParams(max(cfg.n_sites, 10**4), cfg.lam)
    worst_ratio = 0.0
    for k in range(1, 6):
        band = cg.band_parameters(p, k, 0.65 * (p.shift_a / 0.5))
        th = cg.theta_star(p, band)
        pred = (1 + p.lam) / p.lam * band.delta_k
        worst_ratio = max(worst_ratio, abs(th / pred - 1.0))
    checks.append(_check("theta_star_leading_order", worst_ratio, 0.2, worst_ratio <= 0.2))
    worst_f = 0.0
    for k in range(0, 6):
        band = cg.band_parameters(p, k, p.shift_a)
        f = cg.band_up_exit_probability(p, band)
        pred = math.exp((k + 1.5) / (p.lam * p.n_sites**0.25))
        worst_f = max(worst_f, abs((1 - f) / f / pred - 1.0))
    checks.append(_check("exit_ratio_estimate", worst_f, 0.1, worst_f <= 0.1))
    chain, _ = cg.build_band_chain(p, p.shift_a / 2)
    worst_h = 0.0
    for start in range(chain.k_min, chain.k_max + 1):
        worst_h = max(
            worst_h, abs(cg.hitting_probability(chain, start) - cg.hitting_probability_solve(chain, start))
        )
    checks.append(_check("hitting_resistance_vs_solve", worst_h, 1e-10, worst_h <= 1e-10))
    return checks


def _suite_scaling(cfg: ExperimentConfig) -> list[dict]:
    checks = []
    stream = RandomStream.from_seed(cfg.seed, 20)
    _, path = scaling.ou_simulate(2e4, 1e-3, stream)
    seg = path[5000:]
    var = float(seg.var())
    checks.append(_check("ou_stationary_variance", var, 0.02, abs(var - 1.0) <= 0.02))
    mean = float(seg.mean())
    checks.append(_check("ou_stationary_mean", mean, 0.02, abs(mean) <= 0.02))
    p = ModelParams(max(cfg.n_sites, 20000), cfg.lam)
    reg = scaling.window_moment_regression(p, p.shift_a, 3 * 10**7, RandomStream.from_seed(cfg.seed, 21))
    drift_ok = -1.3 <= reg["drift_coefficient"] <= -0.7
    var_ok = 1.5 <= reg["variance_coefficient"] <= 2.5
    checks.append(_check("rescaled_drift_coefficient", reg["drift_coefficient"], [-1.3, -0.7], drift_ok))
    checks.append(_check("rescaled_variance_coefficient", reg["variance_coefficient"], [1.5, 2.5], var_ok))
    res = scaling.first_passage_compare(
        p, 1.0, min(cfg.trials, 40), RandomStream.from_seed(cfg.seed, 22), epsilon=0.3, horizon=20.0
    )
    ratio = res["median_ratio"]
    checks.append(_check("passage_median_ratio", ratio, 5.0, ratio >= 5.0))
    return checks


def _suite_stationary(cfg: ExperimentConfig) -> list[dict]:
    checks = []
    p1 = ModelParams(1, cfg.lam)
    mu1 = exact_solver.stationary_exact(p1).mass
    err1 = max(abs(mu1[0] - 1 / (1 + cfg.lam)), abs(mu1[1] - cfg.lam / (1 + cfg.lam)))
    checks.append(_check("n1_exact", err1, 1e-14, err1 <= 1e-14))
    n = min(max(cfg.n_sites, 2), exact_solver.DEFAULT_N_CAP)
    p = ModelParams(n, cfg.lam)
    dist = exact_solver.stationary_exact(p)
    mass_err = abs(float(dist.mass.sum()) - 1.0)
    checks.append(_check("mass_normalised", mass_err, 1e-10, mass_err <= 1e-10))
    dist2 = exact_solver.stationary_exact(p, structured=True)
    agree = float(np.abs(dist.mass - dist2.mass).max())
    checks.append(_check("dense_vs_structured", agree, 1e-9, agree <= 1e-9))
    n_h = min(cfg.n_sites, 20)
    p_h = ModelParams(n_h, cfg.lam)
    mu = exact_solver.stationary_exact(p_h).mass
    trials = min(cfg.trials * 100, 20000)

    def worker(i, stream):
        return hitting_sample(p_h, CountState(n_h, n_h), stream, 10**7)[0]

    finals = np.array(_parallel_trials(cfg, worker, trials, key=30))
    hist = np.bincount(finals, minlength=n_h + 1) / len(finals)
    tv = exact_solver.total_variation(hist, mu)
    checks.append(_check("hitting_vs_exact_tv", tv, 0.02, tv <= 0.02))
    return checks


def run_suite(cfg: ExperimentConfig, suite_name: str) -> tuple[int, dict]:
    """Run a named check suite; returns (exit_code, JSON-ready summary)."""
    cfg.validate()
    if suite_name not in SUITES:
        raise ConfigError(f"unknown suite {suite_name!r}; choose from {', '.join(SUITES)}")
    runner = {
        "identities": _suite_identities,
        "oracles": _suite_oracles,
        "drift": _suite_drift,
        "coarse_grain": _suite_coarse_grain,
        "scaling": _suite_scaling,
        "stationary": _suite_stationary,
    }[suite_name]
    checks = runner(cfg)
    passed = all(c["passed"] for c in checks)
    summary = {
        "suite": suite_name,
        "config": cfg.record(),
        "config_hash": cfg.hash(),
        "checks": checks,
        "passed": passed,
    }
    return (0 if passed else 1), summary


def _cmd_suite(cfg: ExperimentConfig, suite_name: str) -> int:
    code, summary = run_suite(cfg, suite_name)
    out = Path(cfg.out_dir)
    write_json(out / f"suite_{suite_name}.json", summary)
    print(dump_json(summary), end="")
    return code


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

_FLAG_FIELDS = {
    "n": ("n_sites", int),
    "lambda": ("lam", float),
    "seed": ("seed", int),
    "trials": ("trials", int),
    "burn_in": ("burn_in", int),
    "samples": ("samples", int),
    "threads": ("threads", int),
    "mode": ("mode", str),
    "out": ("out_dir", str),
    "epsilon": ("epsilon_window", float),
    "dev_const": ("deviation_constant", float),
}


def _read_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if key == "lambda_":
            key = "lambda"
        if key not in _FLAG_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key.strip()!r}")
        field_name, cast = _FLAG_FIELDS[key]
        try:
            values[field_name] = cast(val.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arwsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("stationary", "trajectory", "identities", "drift-scan", "coarse-grain", "ou-compare"):
        sp = sub.add_parser(name)
        _add_common(sp)
    sp = sub.add_parser("suite")
    sp.add_argument("suite_name", choices=SUITES)
    _add_common(sp)
    return parser


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", default=None, help="flat key = value file; flags override")
    sp.add_argument("--n", dest="n", type=int, default=None)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--mode", choices=("hitting", "driven", "exact"), default=None)
    sp.add_argument("--out", dest="out", default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--dev-const", dest="dev_const", type=float, default=None)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        values.update(_read_config_file(args.config))
    arg_map = {
        "n_sites": args.n,
        "lam": args.lam,
        "seed": args.seed,
        "trials": args.trials,
        "burn_in": args.burn_in,
        "samples": args.samples,
        "threads": args.threads,
        "mode": args.mode,
        "out_dir": args.out,
        "epsilon_window": args.epsilon,
        "deviation_constant": args.dev_const,
    }
    for field_name, val in arg_map.items():
        if val is not None:
            values[field_name] = val
    return ExperimentConfig(**values).validate()


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "stationary":
            return _cmd_stationary(cfg)
        if args.command == "trajectory":
            return _cmd_trajectory(cfg)
        if args.command == "identities":
            return _cmd_identities(cfg)
        if args.command == "drift-scan":
            return _cmd_drift_scan(cfg)
        if args.command == "coarse-grain":
            return _cmd_coarse_grain(cfg)
        if args.command == "ou-compare":
            return _cmd_ou_compare(cfg)
        if args.command == "suite":
            return _cmd_suite(cfg, args.suite_name)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
