import pytest

from arwsim import CountState, ModelParams, RandomStream, hitting_sample


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full acceptance-criterion checks")


@pytest.fixture(scope="session")
def hitting_runs_10k():
    """500 absorption runs from (n, n) at n = 10^4, lam = 1 (shared by the
    concentration and shift acceptance checks)."""
    from concurrent.futures import ThreadPoolExecutor

    params = ModelParams(10**4, 1.0)
    n = params.n_sites
    max_steps = int(2 * (1 + params.lam) * n * n)

    def run(trial):
        stream = RandomStream.from_seed(1729, 4, trial)
        return hitting_sample(params, CountState(n, n), stream, max_steps)

    with ThreadPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(run, range(500)))
    assert all(absorbed for _, _, absorbed in results)
    return params, [fx for fx, _, _ in results]


def check_line(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    assert passed, f"{name}: {detail}"
