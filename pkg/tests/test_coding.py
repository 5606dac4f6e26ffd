import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rlncbp.coding import (
    CodedBatch,
    InconsistentSystemError,
    batch_from_csv,
    batch_to_csv,
    encode,
    exact_solve,
    make_batch,
    mean_check_degree,
    preprocess,
    random_coding_matrix,
    rank,
    solution_set,
)
from rlncbp.gf import get_field


def test_random_matrix_binary_mean():
    A = random_coding_matrix(1000, 1000, get_field(2), np.random.default_rng(0))
    assert abs(A.mean() - 0.5) < 0.002


def test_random_matrix_chi_square():
    A = random_coding_matrix(1000, 1000, get_field(16), np.random.default_rng(1))
    counts = np.bincount(A.ravel(), minlength=16)
    assert stats.chisquare(counts).pvalue > 0.01


def test_random_matrix_deterministic():
    f = get_field(8)
    a = random_coding_matrix(5, 7, f, np.random.default_rng(42))
    b = random_coding_matrix(5, 7, f, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_encode_examples():
    f16 = get_field(16)
    x = np.array([3, 9, 15, 0])
    assert np.array_equal(encode(np.eye(4, dtype=np.uint8), x, f16), x)
    assert encode([[1, 1]], [1, 1], get_field(2)).tolist() == [0]
    assert encode([[2, 3]], [1, 1], get_field(4)).tolist() == [1]
    with pytest.raises(ValueError):
        encode([[1, 2, 3]], [1, 1], f16)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_encode_linear(p, L, N, seed):
    f = get_field(1 << p)
    rng = np.random.default_rng(seed)
    A = random_coding_matrix(L, N, f, rng)
    x1, x2 = rng.integers(0, f.q, (2, N))
    assert np.array_equal(encode(A, x1 ^ x2, f), encode(A, x1, f) ^ encode(A, x2, f))


def test_rank_examples():
    f = get_field(8)
    assert rank(np.eye(5, dtype=np.uint8), f) == 5
    A = np.array([[1, 2, 3], [4, 5, 6]], dtype=np.uint8)
    assert rank(np.vstack([A, A[:1]]), f) == rank(A, f) == 2
    x = np.array([1, 7, 3, 0, 5])
    assert exact_solve(np.eye(5, dtype=np.uint8), x, f).tolist() == x.tolist()


def test_rank_deficiency_probability_gf8():
    f = get_field(8)
    expected = 1 - math.prod(1 - 8.0**-k for k in range(1, 21))
    assert expected == pytest.approx(0.1406, abs=1e-4)
    rng = np.random.default_rng(3)
    n = 4000
    deficient = sum(rank(random_coding_matrix(20, 20, f, rng), f) < 20 for _ in range(n))
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(deficient / n - expected) < 3 * sigma


def test_exact_solve_random_full_rank():
    rng = np.random.default_rng(4)
    for q in (2, 8, 16, 256):
        f = get_field(q)
        for _ in range(30):
            A = random_coding_matrix(9, 6, f, rng)
            x = rng.integers(0, q, 6)
            sol = exact_solve(A, encode(A, x, f), f)
            if rank(A, f) == 6:
                assert sol.tolist() == x.tolist()
            else:
                assert sol is None


def test_inconsistent_system_raises():
    f = get_field(4)
    with pytest.raises(InconsistentSystemError):
        exact_solve([[1, 1], [1, 1]], [0, 1], f)


def test_preprocess_worked_example():
    f = get_field(2)
    b = preprocess(CodedBatch(f, [[1, 1, 1], [0, 1, 1]], [1, 0]))
    assert b.A_pre.tolist() == [[1, 0, 0], [0, 1, 1]]
    assert b.y_pre.tolist() == [1, 0]
    assert b.non_innovative == 0


def test_preprocess_full_rank_is_identity():
    rng = np.random.default_rng(5)
    for q in (2, 4, 16):
        f = get_field(q)
        done = 0
        while done < 20:
            A = random_coding_matrix(6, 6, f, rng)
            if rank(A, f) < 6:
                continue
            x = rng.integers(0, q, 6)
            b = preprocess(make_batch(A, x, f))
            assert np.array_equal(b.A_pre, np.eye(6))
            assert b.y_pre.tolist() == x.tolist()
            done += 1


def test_preprocess_drops_dependent_rows():
    f = get_field(8)
    rng = np.random.default_rng(6)
    A = random_coding_matrix(3, 5, f, rng)
    A = np.vstack([A, A[0] ^ f.mul_arr(3, A[1])])
    b = preprocess(make_batch(A, rng.integers(0, 8, 5), f))
    assert b.A_pre.shape[0] == rank(A, f) == 3
    assert b.non_innovative == 1


@pytest.mark.parametrize("q", [2, 4])
def test_preprocess_solution_sets_exhaustive(q):
    f = get_field(q)
    rng = np.random.default_rng(7 + q)
    for _ in range(100):
        N = int(rng.integers(1, 5))
        L = int(rng.integers(0, 6))
        A = random_coding_matrix(L, N, f, rng)
        if rng.random() < 0.5:
            y = encode(A, rng.integers(0, q, N), f)
        else:
            y = rng.integers(0, q, L)
        truth = solution_set(A, y, f)
        try:
            b = preprocess(CodedBatch(f, A, y))
        except InconsistentSystemError:
            assert truth == set()
            continue
        assert b.A_pre.shape[0] == rank(A, f) <= min(L, N)
        assert solution_set(b.A_pre, b.y_pre, f) == truth


@pytest.mark.parametrize("q", [2, 4, 8, 16])
def test_preprocess_reduces_density(q):
    f = get_field(q)
    rng = np.random.default_rng(8)
    before, after = [], []
    for _ in range(50):
        A = random_coding_matrix(14, 20, f, rng)
        b = preprocess(make_batch(A, rng.integers(0, q, 20), f))
        before.append(mean_check_degree(A))
        after.append(mean_check_degree(b.A_pre))
    assert np.mean(after) < np.mean(before)
    if q >= 4:
        assert all(a < bb for a, bb in zip(after, before))


def test_collision_probability_small():
    # Pr{A z = 0} = q^-L for any fixed nonzero z
    rng = np.random.default_rng(9)
    f = get_field(4)
    z = np.array([0, 3, 1])
    n = 20_000
    hits = sum(not encode(random_coding_matrix(2, 3, f, rng), z, f).any() for _ in range(n))
    p = 4.0**-2
    assert abs(hits / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_batch_csv_roundtrip():
    f = get_field(16)
    rng = np.random.default_rng(10)
    b = make_batch(random_coding_matrix(4, 6, f, rng), rng.integers(0, 16, 6), f)
    back = batch_from_csv(batch_to_csv(b))
    assert back.field == f
    assert np.array_equal(back.A, b.A) and np.array_equal(back.y, b.y)


def test_batch_validation():
    with pytest.raises(ValueError):
        CodedBatch(get_field(4), [[1, 5]], [0])
    with pytest.raises(ValueError):
        CodedBatch(get_field(4), [[1, 2]], [0, 1])
