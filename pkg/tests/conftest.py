import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reluiqc.lti import lurye_plant, realize_first_order_bank

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

RNN_GRID = [
    ["-0.13/(z-0.98)", "0.21/(z-0.92)", 1, 0],
    ["-0.3/(z-0.97)", "-0.1/(z-0.91)", 0, 1],
    [1, 0, 0, 0],
]


def rnn_plant():
    return realize_first_order_bank(RNN_GRID, (2, 2), (2, 1), ("w", "d"), ("v", "e"))


@pytest.fixture(scope="session")
def rnn():
    return rnn_plant()


def random_plant(rng, nx=None, m=None, n_d=None, n_e=None, rho=0.95, open_loop=False):
    """Stable plant with D11 = 0; ``open_loop`` also zeroes B1 and D21."""
    nx = nx or int(rng.integers(1, 7))
    m = m or int(rng.integers(1, 4))
    n_d = n_d or int(rng.integers(1, 3))
    n_e = n_e or int(rng.integers(1, 3))
    A = rng.standard_normal((nx, nx))
    A *= rng.uniform(0.3, rho) / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
    B1 = np.zeros((nx, m)) if open_loop else rng.standard_normal((nx, m)) * 0.5
    D21 = np.zeros((n_e, m)) if open_loop else rng.standard_normal((n_e, m)) * 0.5
    return lurye_plant(
        A, B1, rng.standard_normal((nx, n_d)), rng.standard_normal((m, nx)) * 0.5,
        rng.standard_normal((n_e, nx)), np.zeros((m, m)), rng.standard_normal((m, n_d)) * 0.5,
        D21, rng.standard_normal((n_e, n_d)) * 0.5,
    )


ACCEPTANCE_LINES = []


def acceptance_line(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
