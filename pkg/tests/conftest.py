import numpy as np
import pytest

from gammacal.data import Dataset


@pytest.fixture
def numpy_backend(monkeypatch):
    monkeypatch.setenv("GAMMA_CAL_DISABLE_NUMBA", "1")


def confounded_data(n=800, p=3, seed=0, effect=1.0, with_w=False):
    """Logistic treatment, linear outcome, no hidden confounding."""
    g = np.random.default_rng(seed)
    X = g.uniform(-1, 1, size=(n, p))
    e = 1.0 / (1.0 + np.exp(-(X @ np.linspace(0.3, 0.8, p))))
    t = (g.random(n) < e).astype(np.int64)
    y = effect * t + X.sum(axis=1) + g.normal(0, 0.5, n)
    w = None
    if with_w:
        w = np.column_stack([X[:, 0] + g.normal(0, 0.2, n), g.normal(0, 1, n)])
    return Dataset(X, t, y, w)


@pytest.fixture(scope="session")
def acceptance_log(request):
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def log(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
