import numpy as np
import pytest


def floyd_warshall(W):
    """Dense all-pairs shortest paths; ``W`` holds edge lengths, 0 = no edge."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    D = np.where(W > 0, W, np.inf)
    np.fill_diagonal(D, 0.0)
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    return D


def brute_heat_kernel(X, eps, tau=9.0, self_loops=True):
    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2)
    W = np.where(d2 <= tau * eps, np.exp(-d2 / eps), 0.0)
    np.fill_diagonal(W, 1.0 if self_loops else 0.0)
    return W


def random_rotation(rng, r):
    Q, R = np.linalg.qr(rng.standard_normal((r, r)))
    return Q * np.sign(np.diag(R))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
