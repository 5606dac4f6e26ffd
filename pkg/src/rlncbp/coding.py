"""Random linear network encoding and coding-matrix preprocessing."""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .gf import FieldSpec, get_field

__all__ = [
    "CodedBatch",
    "InconsistentSystemError",
    "random_coding_matrix",
    "encode",
    "make_batch",
    "row_echelon",
    "rank",
    "exact_solve",
    "preprocess",
    "solution_set",
    "mean_check_degree",
    "batch_to_csv",
    "batch_from_csv",
]


class InconsistentSystemError(ValueError):
    """``A x = y`` has no solution; never happens for genuinely encoded data."""


@dataclass(frozen=True, eq=False)
class CodedBatch:
    """Coding matrix, received symbols and (after :func:`preprocess`) their reduced form."""

    field: FieldSpec
    A: np.ndarray
    y: np.ndarray
    A_pre: np.ndarray | None = None
    y_pre: np.ndarray | None = None
    non_innovative: int = 0
    pivots: tuple = field(default=())

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.uint8)
        y = np.asarray(self.y, dtype=np.uint8)
        if A.ndim != 2 or y.shape != (A.shape[0],):
            raise ValueError(f"shape mismatch: A {A.shape}, y {y.shape}")
        if A.size and A.max() >= self.field.q or y.size and y.max() >= self.field.q:
            raise ValueError("entries outside the field")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        if (self.A_pre is None) != (self.y_pre is None):
            raise ValueError("A_pre and y_pre must be given together")
        if self.A_pre is not None:
            Ap = np.asarray(self.A_pre, dtype=np.uint8).reshape(-1, A.shape[1])
            yp = np.asarray(self.y_pre, dtype=np.uint8)
            if yp.shape != (Ap.shape[0],):
                raise ValueError(f"shape mismatch: A_pre {Ap.shape}, y_pre {yp.shape}")
            object.__setattr__(self, "A_pre", Ap)
            object.__setattr__(self, "y_pre", yp)

    @property
    def L(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def is_preprocessed(self) -> bool:
        return self.A_pre is not None


def random_coding_matrix(L: int, N: int, field: FieldSpec, rng) -> np.ndarray:
    """i.i.d. uniform coefficients over the field, shape ``(L, N)``."""
    if L < 0 or N < 1:
        raise ValueError("need L >= 0 and N >= 1")
    return rng.integers(0, field.q, size=(L, N), dtype=np.uint8)


def encode(A, x_hat, field: FieldSpec) -> np.ndarray:
    """Coded symbols ``y_l = sum_n a_ln x_n`` over the field."""
    A = np.asarray(A)
    x_hat = np.asarray(x_hat)
    if A.ndim != 2 or x_hat.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: A {A.shape}, x {x_hat.shape}")
    return field.matvec(A, x_hat)


def make_batch(A, x_hat, field: FieldSpec) -> CodedBatch:
    return CodedBatch(field, A, encode(A, x_hat, field))


def row_echelon(A, y, field: FieldSpec):
    """Forward Gaussian elimination with unit pivots.

    Pivot choice is the first nonzero entry from the top.  Returns
    ``(R, r, pivots)`` where ``R`` has ``rank`` rows (zero rows dropped),
    ``r`` is ``y`` under the same row operations and ``pivots`` lists the
    pivot column of each row.
    """
    M = np.array(A, dtype=np.uint8, copy=True)
    b = np.array(y, dtype=np.uint8, copy=True)
    mt, it = field.mul_table, field.inv_table
    L, N = M.shape
    r = 0
    pivots = []
    for c in range(N):
        if r == L:
            break
        nz = np.flatnonzero(M[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            M[[r, p]] = M[[p, r]]
            b[[r, p]] = b[[p, r]]
        s = it[M[r, c]]
        M[r] = mt[s, M[r]]
        b[r] = mt[s, b[r]]
        below = r + 1 + np.flatnonzero(M[r + 1:, c])
        if below.size:
            f = M[below, c]
            M[below] ^= mt[f[:, None], M[r][None, :]]
            b[below] ^= mt[f, b[r]]
        pivots.append(c)
        r += 1
    if np.any(b[r:]):
        raise InconsistentSystemError("a zero row of A carries a nonzero coded symbol")
    return M[:r], b[:r], tuple(pivots)


def rank(A, field: FieldSpec) -> int:
    A = np.asarray(A, dtype=np.uint8)
    return len(row_echelon(A, np.zeros(A.shape[0], np.uint8), field)[2])


def _back_eliminate(R, b, field: FieldSpec):
    # For j = 0..L'-2 clear column N-1-j above row L'-1-j using that row.
    # Rows below the pivot row are never touched, so the echelon zeros stay.
    mt, it = field.mul_table, field.inv_table
    Lp, N = R.shape
    for j in range(Lp - 1):
        r, c = Lp - 1 - j, N - 1 - j
        piv = R[r, c]
        if piv == 0:
            # no usable entry in this row; column left as is
            continue
        above = np.flatnonzero(R[:r, c])
        if above.size == 0:
            continue
        f = mt[R[above, c], it[piv]]
        R[above] ^= mt[f[:, None], R[r][None, :]]
        b[above] ^= mt[f, b[r]]
    return R, b


def preprocess(batch: CodedBatch) -> CodedBatch:
    """Reduce ``(A, y)`` to a sparser system with the same solution set.

    Gaussian elimination first yields an ``L' x N`` row-echelon matrix
    (``L' = rank(A)``; dependent rows are dropped and counted as
    non-innovative).  Then, from the last column backwards, each column
    ``N-1-j`` is cleared above row ``L'-1-j``.  A full-rank square system
    ends up as the identity with the solution in ``y_pre``.
    """
    R, b, piv = row_echelon(batch.A, batch.y, batch.field)
    R, b = _back_eliminate(R, b, batch.field)
    return replace(batch, A_pre=R, y_pre=b, non_innovative=batch.L - R.shape[0], pivots=piv)


def exact_solve(A, y, field: FieldSpec):
    """Unique solution of ``A x = y``, or ``None`` when ``rank(A) < N``."""
    A = np.asarray(A, dtype=np.uint8)
    R, b, piv = row_echelon(A, y, field)
    if len(piv) < A.shape[1]:
        return None
    # full column rank: echelon pivots sit on the diagonal of the top block
    x = np.zeros(A.shape[1], dtype=np.uint8)
    mt = field.mul_table
    for r in range(A.shape[1] - 1, -1, -1):
        acc = b[r]
        for c in range(r + 1, A.shape[1]):
            acc ^= mt[R[r, c], x[c]]
        x[r] = acc
    return x


def solution_set(A, y, field: FieldSpec) -> set:
    """Brute-force ``{x : A x = y}`` (small ``N`` and ``q`` only)."""
    A = np.asarray(A, dtype=np.intp)
    N = A.shape[1]
    if N * field.p > 20:
        raise ValueError("solution-set enumeration limited to q^N <= 2^20")
    grid = np.stack(np.unravel_index(np.arange(field.q**N), (field.q,) * N), axis=1)
    if A.shape[0] == 0:
        return {tuple(g) for g in grid.tolist()}
    lhs = np.bitwise_xor.reduce(field.mul_table[A[None, :, :], grid[:, None, :]], axis=2)
    ok = np.all(lhs == np.asarray(y)[None, :], axis=1)
    return {tuple(g) for g in grid[ok].tolist()}


def mean_check_degree(A) -> float:
    A = np.asarray(A)
    if A.shape[0] == 0:
        return 0.0
    return float(np.count_nonzero(A, axis=1).mean())


def batch_to_csv(batch: CodedBatch) -> str:
    """Debug trace: one line per coded symbol, ``a_1,...,a_N,y``."""
    buf = io.StringIO()
    buf.write(f"# q={batch.field.q} poly={batch.field.poly:#x} L={batch.L} N={batch.N}\n")
    for row, yl in zip(batch.A.tolist(), batch.y.tolist()):
        buf.write(",".join(map(str, row + [yl])) + "\n")
    return buf.getvalue()


def batch_from_csv(text: str) -> CodedBatch:
    lines = text.splitlines()
    meta = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
    f = get_field(int(meta["q"]), int(meta["poly"], 16))
    rows = [list(map(int, ln.split(","))) for ln in lines[1:] if ln.strip()]
    N = int(meta["N"])
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), N + 1)
    return CodedBatch(f, arr[:, :N], arr[:, N])
