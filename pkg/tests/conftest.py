import numpy as np
import pytest

from jointlca.data import CrossCovarianceSet


def random_orthonormal(p, r, rng):
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    return q


def exact_ccset(dims, d, rng, weights="fidelity"):
    """Cross-covariances ``V_i diag(d_i * d_j) V_j^T`` with random orthonormal ``V_i``.

    ``d`` is (I, r). Returns (ccset, loadings).
    """
    d = np.asarray(d, dtype=float)
    v = [random_orthonormal(p, d.shape[1], rng) for p in dims]
    blocks = {
        (i, j): (v[i] * (d[i] * d[j])) @ v[j].T
        for i in range(len(dims)) for j in range(i + 1, len(dims))
    }
    return CrossCovarianceSet.from_blocks(blocks, dims, weights), v


def random_ccset(dims, rng, weights="fidelity"):
    blocks = {
        (i, j): rng.standard_normal((dims[i], dims[j]))
        for i in range(len(dims)) for j in range(i + 1, len(dims))
    }
    return CrossCovarianceSet.from_blocks(blocks, dims, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run regardless of capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
