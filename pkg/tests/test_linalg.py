import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (
    normal_equations_fit,
    oracle_energy,
    planted_instance,
    random_instance,
    random_weight,
)
from greedymc.errors import DimensionMismatch, IndexNotActive, IndexNotInactive, InvalidParams
from greedymc.linalg import (
    Instance,
    SparseWeight,
    commit_pair_flip,
    energy,
    energy_after_pair_flip,
    factor_init,
    fit_least_squares,
)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


class TestSparseWeight:
    def test_zero_popcount_rejected(self):
        with pytest.raises(InvalidParams):
            SparseWeight(np.zeros(5, dtype=bool))

    def test_partition(self):
        c = SparseWeight.from_indices([4, 1], 6)
        assert c.K == 2
        assert c.ones.tolist() == [1, 4]
        assert sorted(c.ones.tolist() + c.zeros.tolist()) == list(range(6))

    def test_bad_indices(self):
        with pytest.raises(InvalidParams):
            SparseWeight.from_indices([0, 0], 3)
        with pytest.raises(InvalidParams):
            SparseWeight.from_indices([3], 3)


class TestInstance:
    def test_immutable(self, rng):
        inst = random_instance(rng, 3, 4)
        with pytest.raises(ValueError):
            inst.A[0, 0] = 1.0

    def test_shape_checks(self):
        with pytest.raises(DimensionMismatch):
            Instance(np.ones((3, 2)), np.ones(2))
        with pytest.raises(InvalidParams):
            Instance(np.array([[np.nan]]), np.ones(1))


class TestFit:
    def test_exact_single_column(self, rng):
        inst0 = random_instance(rng, 5, 7)
        inst = Instance(inst0.A, 2 * inst0.A[:, 3])
        fit = fit_least_squares(inst, SparseWeight.from_indices([3], 7))
        assert fit.coefficients == pytest.approx([2.0], abs=1e-12)
        assert fit.energy <= 1e-28

    def test_orthogonal_response(self, rng):
        A = rng.standard_normal((6, 10))
        S = [1, 4]
        Q, _ = np.linalg.qr(A[:, S], mode="complete")
        y = Q[:, 2:] @ rng.standard_normal(4)
        inst = Instance(A, y)
        fit = fit_least_squares(inst, SparseWeight.from_indices(S, 10))
        assert np.max(np.abs(fit.coefficients)) < 1e-12
        assert fit.energy == pytest.approx(y @ y / 12, rel=1e-12)

    def test_against_normal_equations(self, rng):
        inst = random_instance(rng, 6, 10)
        c = random_weight(rng, 10, 3)
        fit = fit_least_squares(inst, c)
        x, e = normal_equations_fit(inst.A, inst.y, c.ones)
        np.testing.assert_allclose(fit.coefficients, x, rtol=0, atol=1e-10)
        assert abs(fit.energy - e) <= 1e-10
        assert not fit.rank_deficient

    def test_square_system(self, rng):
        inst = random_instance(rng, 5, 8)
        assert energy(inst, SparseWeight.from_indices([0, 2, 3, 5, 7], 8)) <= 1e-20

    def test_planted_support_and_wrong_support(self, rng):
        inst, x0, c0 = planted_instance(rng, 8, 12, 3)
        assert energy(inst, c0) <= 1e-20
        wrong = SparseWeight.from_indices([i for i in range(12) if i not in c0.ones][:3], 12)
        e = energy(inst, wrong)
        assert e > 0
        assert rel(e, oracle_energy(inst, wrong.ones)) < 1e-10

    def test_rank_deficient_min_norm(self, rng):
        A = rng.standard_normal((6, 5))
        A[:, 3] = A[:, 1]
        y = 3 * A[:, 1] + A[:, 0]
        fit = fit_least_squares(Instance(A, y), SparseWeight.from_indices([0, 1, 3], 5))
        assert fit.rank_deficient and fit.rank == 2
        # minimum norm splits the duplicated coefficient evenly
        np.testing.assert_allclose(fit.coefficients, [1.0, 1.5, 1.5], atol=1e-10)
        assert fit.energy <= 1e-24

    def test_errors(self, rng):
        inst = random_instance(rng, 3, 6)
        with pytest.raises(DimensionMismatch):
            fit_least_squares(inst, SparseWeight.from_indices([0], 5))
        with pytest.raises(InvalidParams):
            fit_least_squares(inst, SparseWeight.from_indices([0, 1, 2, 3], 6))


class TestFactorState:
    def test_matches_energy(self, rng):
        for _ in range(10):
            inst = random_instance(rng, 20, 40)
            c = random_weight(rng, 40, 8)
            fs = factor_init(inst, c)
            assert rel(fs.energy, energy(inst, c)) <= 1e-12
            assert rel(fs.energy, oracle_energy(inst, c.ones)) <= 1e-10

    def test_single_column_gram(self, rng):
        inst = random_instance(rng, 4, 6)
        fs = factor_init(inst, SparseWeight.from_indices([2], 6))
        a = inst.A[:, 2]
        assert 1.0 / fs.gram_inverse[0, 0] == pytest.approx(a @ a, rel=1e-14)

    def test_duplicate_column_flip(self, rng):
        A = rng.standard_normal((10, 8))
        A[:, 6] = A[:, 2]
        inst = Instance(A, rng.standard_normal(10))
        fs = factor_init(inst, SparseWeight.from_indices([0, 2, 4], 8))
        e0 = fs.energy
        assert abs(energy_after_pair_flip(fs, 2, 6) - e0) <= 1e-12
        commit_pair_flip(fs, 2, 6)
        assert abs(fs.energy - e0) <= 1e-12
        assert fs.weight() == SparseWeight.from_indices([0, 4, 6], 8)

    def test_flip_and_back(self, rng):
        inst = random_instance(rng, 15, 30)
        c = random_weight(rng, 30, 5)
        fs = factor_init(inst, c)
        e0 = fs.energy
        i, j = int(c.ones[2]), int(c.zeros[7])
        fs.commit_pair_flip(i, j)
        fs.commit_pair_flip(j, i)
        assert abs(fs.energy - e0) <= 1e-10

    def test_prediction_does_not_mutate(self, rng):
        inst = random_instance(rng, 15, 30)
        fs = factor_init(inst, random_weight(rng, 30, 5))
        before = (fs.active.copy(), fs.energy)
        fs.energy_after_pair_flip(int(fs.active[0]), int(fs.inactive[0]))
        assert np.array_equal(before[0], fs.active) and before[1] == fs.energy

    def test_prediction_matches_naive(self, rng):
        inst = random_instance(rng, 50, 100)
        fs = factor_init(inst, random_weight(rng, 100, 20))
        worst = 0.0
        for _ in range(300):
            i, j = int(rng.choice(fs.active)), int(rng.choice(fs.inactive))
            pred = fs.energy_after_pair_flip(i, j)
            bits = fs.bits.copy()
            bits[i], bits[j] = False, True
            worst = max(worst, rel(pred, oracle_energy(inst, np.flatnonzero(bits))))
        assert worst <= 1e-8

    def test_commit_matches_fresh_factor(self, rng):
        inst = random_instance(rng, 20, 40)
        fs = factor_init(inst, random_weight(rng, 40, 6))
        i, j = int(fs.active[3]), int(fs.inactive[5])
        pred = fs.energy_after_pair_flip(i, j)
        fs.commit_pair_flip(i, j)
        fresh = factor_init(inst, fs.weight())
        assert abs(fs.energy - fresh.energy) <= 1e-10 * max(1.0, fresh.energy)
        assert abs(fs.energy - pred) <= 1e-10 * max(1.0, pred)

    def test_chain_of_commits(self, rng):
        inst = random_instance(rng, 30, 60)
        fs = factor_init(inst, random_weight(rng, 60, 10))
        for _ in range(500):
            fs.commit_pair_flip(int(rng.choice(fs.active)), int(rng.choice(fs.inactive)))
        fresh = factor_init(inst, fs.weight())
        assert rel(fs.energy, fresh.energy) <= 1e-8
        np.testing.assert_allclose(
            fs.gram_inverse, np.linalg.inv(inst.A[:, fs.active].T @ inst.A[:, fs.active]),
            rtol=1e-8, atol=1e-10)

    def test_membership_errors(self, rng):
        inst = random_instance(rng, 5, 8)
        fs = factor_init(inst, SparseWeight.from_indices([0, 1], 8))
        with pytest.raises(IndexNotActive):
            fs.energy_after_pair_flip(2, 3)
        with pytest.raises(IndexNotInactive):
            fs.energy_after_pair_flip(0, 1)
        with pytest.raises(IndexNotInactive):
            fs.commit_pair_flip(0, 99)

    def test_rank_deficient_state_escapes(self, rng):
        A = rng.standard_normal((8, 6))
        A[:, 1] = A[:, 0]
        inst = Instance(A, rng.standard_normal(8))
        fs = factor_init(inst, SparseWeight.from_indices([0, 1, 2], 6))
        assert fs.rank_deficient
        assert rel(fs.energy, energy(inst, fs.weight())) < 1e-12
        pred = fs.energy_after_pair_flip(1, 4)
        fs.commit_pair_flip(1, 4)
        assert not fs.rank_deficient
        assert rel(fs.energy, oracle_energy(inst, [0, 2, 4])) < 1e-10
        assert rel(pred, fs.energy) < 1e-10

    def test_entering_column_in_span(self, rng):
        # column 5 equals column 0 + column 1: swapping 2 for 5 is a dependent insertion
        A = rng.standard_normal((8, 6))
        A[:, 5] = A[:, 0] + A[:, 1]
        inst = Instance(A, rng.standard_normal(8))
        fs = factor_init(inst, SparseWeight.from_indices([0, 1, 2], 6))
        pred = fs.energy_after_pair_flip(2, 5)
        assert rel(pred, energy(inst, SparseWeight.from_indices([0, 1], 6))) < 1e-8
        fs.commit_pair_flip(2, 5)
        assert fs.rank_deficient
        assert rel(fs.energy, energy(inst, fs.weight())) < 1e-10


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, M=st.integers(2, 12), extra=st.integers(1, 10), data=st.data())
def test_residual_orthogonality(seed, M, extra, data):
    rng = np.random.default_rng(seed)
    N = M + extra
    K = data.draw(st.integers(1, M))
    inst = random_instance(rng, M, N)
    c = random_weight(rng, N, K)
    fit = fit_least_squares(inst, c)
    As = inst.A[:, c.ones]
    assert fit.energy >= 0
    assert np.max(np.abs(As.T @ fit.residual)) <= 1e-8 * max(1.0, np.max(np.abs(As.T @ inst.y)))


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_column_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 10, 16)
    c = random_weight(rng, 16, 5)
    perm = rng.permutation(16)
    permuted = Instance(inst.A[:, perm], inst.y)
    inv = np.argsort(perm)
    c2 = SparseWeight.from_indices(inv[c.ones], 16)
    assert abs(energy(inst, c) - energy(permuted, c2)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=seeds, k=st.integers(1, 7))
def test_nested_support_monotone(seed, k):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 8, 14)
    big = rng.choice(14, 8, replace=False)
    small = big[:k]
    assert energy(inst, SparseWeight.from_indices(big, 14)) <= \
        energy(inst, SparseWeight.from_indices(small, 14)) + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=seeds, steps=st.integers(1, 300))
def test_incremental_equals_naive(seed, steps):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(4, 25))
    N = M + int(rng.integers(1, 25))
    K = int(rng.integers(1, M + 1))
    inst = random_instance(rng, M, N)
    fs = factor_init(inst, random_weight(rng, N, K))
    for _ in range(steps):
        i, j = int(rng.choice(fs.active)), int(rng.choice(fs.inactive))
        pred = fs.energy_after_pair_flip(i, j)
        fs.commit_pair_flip(i, j)
        naive = energy(inst, fs.weight())
        assert abs(pred - naive) <= 1e-8 * max(1.0, naive)
        assert abs(fs.energy - naive) <= 1e-8 * max(1.0, naive)
