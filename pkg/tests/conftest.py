import itertools

import numpy as np
import pytest

from greedymc.linalg import Instance, SparseWeight


def normal_equations_fit(A, y, support):
    """Oracle: explicit Gram inversion, independent of the QR/update paths."""
    As = A[:, list(support)]
    x = np.linalg.inv(As.T @ As) @ (As.T @ y)
    r = y - As @ x
    return x, float(r @ r) / (2 * A.shape[0])


def oracle_energy(inst, support):
    return normal_equations_fit(inst.A, inst.y, sorted(support))[1]


def neighbor_energies(inst, support):
    """All pair-flip neighbours by brute force: {(i_out, j_in): energy}."""
    support = set(int(i) for i in support)
    out = {}
    for i in sorted(support):
        for j in range(inst.N):
            if j in support:
                continue
            out[(i, j)] = oracle_energy(inst, (support - {i}) | {j})
    return out


def enumerate_supports(inst, k):
    """Global minimum over all K-subsets: (energy, support)."""
    return min((oracle_energy(inst, s), s) for s in itertools.combinations(range(inst.N), k))


def random_instance(rng, M, N, noise=1.0):
    return Instance(rng.standard_normal((M, N)) / np.sqrt(N), noise * rng.standard_normal(M))


def planted_instance(rng, M, N, K):
    A = rng.standard_normal((M, N)) / np.sqrt(N)
    support = np.sort(rng.choice(N, K, replace=False))
    x0 = np.zeros(N)
    x0[support] = rng.standard_normal(K) * np.sqrt(N / K)
    return Instance(A, A @ x0), x0, SparseWeight.from_indices(support, N)


def random_weight(rng, N, K):
    return SparseWeight.from_indices(rng.choice(N, K, replace=False), N)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""

    def check(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    def skip(name, reason):
        _VERDICTS.append(f"SKIP {name}: {reason}")
        pytest.skip(reason)

    check.skip = skip
    return check


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
