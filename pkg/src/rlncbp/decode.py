"""Correlation-aware belief-propagation decoder and the brute-force MAP oracle.

The factor graph has one variable node per source and one check node per
row of the preprocessed coding matrix ``A'``.  Messages are length-``q``
vectors over field values.  A check's outgoing message to variable ``n``
weighs each neighbour's incoming belief by the correlation pmf of the
integer difference between the neighbour's value and the candidate value of
``x_n`` (after mapping both back to the source alphabet).

The parallel schedule is used: every check reads only variable messages of
the previous iteration and vice versa.
"""
from __future__ import annotations

import itertools
import logging
import weakref
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .coding import CodedBatch, InconsistentSystemError, preprocess, row_echelon
from .gf import FieldSpec
from .model import AlphabetMap, ChainPmf, CorrelationGraph, ExplicitPmf, MAX_EXPLICIT_BITS

log = logging.getLogger(__name__)

__all__ = [
    "FactorGraph",
    "MessageSet",
    "DecodeResult",
    "build_factor_graph",
    "init_messages",
    "var_update",
    "check_update",
    "tentative_decision",
    "decode_bp",
    "decode_map_exact",
    "xor_convolution",
    "wht",
    "check_update_naive",
    "check_update_dp",
    "check_update_hadamard",
    "expected_value_fallback",
]


# --------------------------------------------------------------------------
# transforms


def wht(v) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along the last axis."""
    v = np.array(v, dtype=float, copy=True)
    q = v.shape[-1]
    if q & (q - 1):
        raise ValueError("length must be a power of two")
    h = 1
    while h < q:
        v = v.reshape(v.shape[:-1] + (q // (2 * h), 2, h))
        a, b = v[..., 0, :], v[..., 1, :]
        v = np.stack([a + b, a - b], axis=-2).reshape(v.shape[:-3] + (q,))
        h *= 2
    return v


def xor_convolution(u, v) -> np.ndarray:
    """``(u * v)(a) = sum_b u(b) v(a XOR b)`` via the Hadamard transform."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("operands must have the same length")
    return wht(wht(u) * wht(v)) / u.shape[-1]


def xor_convolution_naive(u, v) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    q = u.size
    idx = np.arange(q)
    return np.array([np.dot(u, v[a ^ idx]) for a in range(q)])


# --------------------------------------------------------------------------
# graph and messages


@dataclass(frozen=True, eq=False)
class FactorGraph:
    field: FieldSpec
    N: int
    chk_ptr: np.ndarray
    edge_var: np.ndarray
    edge_coef: np.ndarray
    target: np.ndarray
    var_ptr: np.ndarray
    var_edge: np.ndarray
    corr_idx: np.ndarray
    corr_w: np.ndarray
    priors: np.ndarray
    support: np.ndarray
    A: np.ndarray  # preprocessed matrix the graph was built from
    y: np.ndarray

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def n_checks(self) -> int:
        return self.chk_ptr.size - 1

    @property
    def n_edges(self) -> int:
        return self.edge_var.size

    def check_neighbours(self, l: int) -> np.ndarray:
        """Variables of check ``l`` (``N(l)``)."""
        return self.edge_var[self.chk_ptr[l]:self.chk_ptr[l + 1]]

    def var_neighbours(self, n: int) -> np.ndarray:
        """Checks containing variable ``n`` (``L(n)``)."""
        edges = self.var_edge[self.var_ptr[n]:self.var_ptr[n + 1]]
        return np.searchsorted(self.chk_ptr, edges, side="right") - 1

    def check_weights(self, l: int):
        """Per-check correlation inputs ``(mask[j, k], W[j, k, v, a])``."""
        vars_ = self.check_neighbours(l)
        cidx = self.corr_idx[vars_[:, None], vars_[None, :]]
        d, q = vars_.size, self.q
        W = np.zeros((d, d, q, q))
        mask = cidx >= 0
        W[mask] = self.corr_w[cidx[mask]]
        return mask, W


@dataclass
class MessageSet:
    qmsg: np.ndarray  # (E, q) variable -> check, rows sum to 1
    rmsg: np.ndarray  # (E, q) check -> variable, rows scaled to max 1


@dataclass
class DecodeResult:
    x_hat_star: np.ndarray
    converged: bool
    iterations: int
    fallback_used: bool
    diagnostics: dict = field(default_factory=dict)


_CORR_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _correlation_tables(corr: CorrelationGraph | None, N: int, amap: AlphabetMap):
    # tables depend only on the graph and the map; graphs only ever grow, so
    # the edge count tells whether a cached entry is stale
    if corr is not None:
        key = (amap.alphabet, amap.forward, amap.field.q, amap.field.poly, len(corr), N)
        hit = _CORR_CACHE.get(corr, {}).get(key)
        if hit is not None:
            return hit
    out = _build_correlation_tables(corr, N, amap)
    if corr is not None:
        _CORR_CACHE.setdefault(corr, {})[key] = out
    return out


def _build_correlation_tables(corr: CorrelationGraph | None, N: int, amap: AlphabetMap):
    q = amap.field.q
    corr_idx = np.full((N, N), -1, dtype=np.int64)
    tabs = []
    if corr is not None:
        if corr.N != N:
            raise ValueError(f"correlation graph has {corr.N} nodes, expected {N}")
        ints = amap.int_of_field
        ok = amap.support
        diff = np.where(ok[:, None] & ok[None, :], ints[:, None] - ints[None, :], 0)
        both = ok[:, None] & ok[None, :]
        for i, j, _ in corr.edges:
            for a, b in ((i, j), (j, i)):
                g = corr.noise(a, b)  # pmf of X_a - X_b
                corr_idx[a, b] = len(tabs)
                tabs.append(np.where(both, g(diff), 0.0))
    corr_w = np.stack(tabs) if tabs else np.zeros((1, q, q))
    corr_idx.setflags(write=False)
    corr_w.setflags(write=False)
    return corr_idx, corr_w


def build_factor_graph(batch: CodedBatch, corr: CorrelationGraph | None, priors=None,
                       amap: AlphabetMap | None = None) -> FactorGraph:
    """Factor graph of a preprocessed batch.

    ``priors`` is an ``(N, q)`` array over field values; ``None`` means
    uniform over the image of the alphabet.  ``amap`` defaults to the
    identity map of the whole field.
    """
    if not batch.is_preprocessed:
        raise ValueError("batch must be preprocessed first")
    fld = batch.field
    q, N = fld.q, batch.N
    amap = amap or AlphabetMap.identity(fld)
    if amap.field != fld:
        raise ValueError("alphabet map and batch use different fields")
    if priors is None:
        priors = np.broadcast_to(amap.support / amap.support.sum(), (N, q))
    priors = np.array(priors, dtype=float)
    if priors.shape != (N, q):
        raise ValueError(f"priors must have shape {(N, q)}, got {priors.shape}")
    if np.any(priors < 0) or np.any(priors.sum(axis=1) <= 0):
        raise ValueError("priors must be nonnegative with positive mass")
    priors = priors / priors.sum(axis=1, keepdims=True)
    A, y = batch.A_pre, batch.y_pre
    rows, cols = np.nonzero(A)
    if np.any(np.bincount(rows, minlength=A.shape[0]) == 0):
        raise ValueError("every check needs at least one neighbour")
    chk_ptr = np.zeros(A.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=A.shape[0]), out=chk_ptr[1:])
    edge_var = cols.astype(np.int64)
    edge_coef = A[rows, cols].astype(np.int64)
    order = np.argsort(edge_var, kind="stable")
    var_ptr = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(edge_var, minlength=N), out=var_ptr[1:])
    corr_idx, corr_w = _correlation_tables(corr, N, amap)
    return FactorGraph(
        field=fld, N=N, chk_ptr=chk_ptr, edge_var=edge_var, edge_coef=edge_coef,
        target=y.astype(np.int64), var_ptr=var_ptr, var_edge=order.astype(np.int64),
        corr_idx=corr_idx, corr_w=corr_w, priors=priors, support=priors > 0,
        A=A, y=y,
    )


def init_messages(g: FactorGraph) -> MessageSet:
    """Variable messages start at the priors, check messages at all-ones."""
    return MessageSet(g.priors[g.edge_var].copy(), np.ones((g.n_edges, g.q)))


def _tables(g: FactorGraph):
    return g.field.mul_table.astype(np.int64), g.field.inv_table.astype(np.int64)


def check_update(ms: MessageSet, g: FactorGraph, backend: str | None = None) -> int:
    """Recompute all check-to-variable messages in place; returns reset count."""
    check_phase, _ = _kernels.get_kernels(backend)
    mul, inv = _tables(g)
    out = np.empty_like(ms.rmsg)
    resets = check_phase(g.chk_ptr, g.edge_var, g.edge_coef, g.target, ms.qmsg, g.corr_idx,
                         g.corr_w, g.support, mul, inv, out)
    ms.rmsg = out
    return int(resets)


def var_update(ms: MessageSet, g: FactorGraph, use_prior: bool = True,
               backend: str | None = None) -> int:
    """Recompute all variable-to-check messages in place; returns reset count."""
    _, var_phase = _kernels.get_kernels(backend)
    out = np.empty_like(ms.qmsg)
    resets = var_phase(g.var_ptr, g.var_edge, ms.rmsg, g.priors, g.support, bool(use_prior), out)
    ms.qmsg = out
    return int(resets)


def beliefs(ms: MessageSet, g: FactorGraph, use_prior: bool = True) -> np.ndarray:
    """Unnormalised log-domain beliefs ``(N, q)``; ``-inf`` marks impossible values."""
    with np.errstate(divide="ignore"):
        lr = np.log(ms.rmsg)
        b = np.zeros((g.N, g.q))
        np.add.at(b, g.edge_var, lr)
        if use_prior:
            b = b + np.log(g.priors)
        else:
            # values outside the alphabet stay impossible; isolated variables use the prior
            isolated = np.diff(g.var_ptr) == 0
            b = b + np.where(isolated[:, None], np.log(g.priors), np.log(g.support))
    return b


def tentative_decision(ms: MessageSet, g: FactorGraph, use_prior: bool = True) -> np.ndarray:
    """Per-variable argmax of the belief; ties go to the smallest field value."""
    b = beliefs(ms, g, use_prior)
    return np.argmax(b, axis=1).astype(np.uint8)


def expected_value_fallback(priors, amap: AlphabetMap) -> np.ndarray:
    """Integer-domain prior mean, rounded half up, mapped into the field.

    A mean that rounds to a symbol outside the alphabet is replaced by the
    nearest alphabet symbol (smaller one on ties).
    """
    priors = np.asarray(priors, dtype=float)
    sup = amap.support
    ints = np.where(sup, amap.int_of_field, 0).astype(float)
    mean = (priors * ints).sum(axis=1) / priors.sum(axis=1)
    rounded = np.floor(mean + 0.5).astype(np.int64)
    alpha = np.array(sorted(amap.alphabet))
    pick = alpha[np.argmin(np.abs(alpha[None, :] - rounded[:, None]), axis=1)]
    return amap.to_field(pick).astype(np.uint8)


def decode_bp(batch: CodedBatch, corr: CorrelationGraph | None = None, priors=None,
              k_max: int = 100, *, amap: AlphabetMap | None = None, use_prior: bool = True,
              backend: str | None = None) -> DecodeResult:
    """Iterative message-passing decoding of one coded batch.

    Each iteration runs the check phase on the previous variable messages,
    takes a tentative decision and stops if it satisfies ``A' x = y'``;
    otherwise the variable phase runs.  After ``k_max`` iterations the
    prior-mean fallback is returned.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not batch.is_preprocessed:
        batch = preprocess(batch)
    amap = amap or AlphabetMap.identity(batch.field)
    g = build_factor_graph(batch, corr, priors, amap)
    diag = {"r_resets": 0, "q_resets": 0, "checks": g.n_checks, "edges": g.n_edges}
    if g.n_checks == 0:
        return DecodeResult(expected_value_fallback(g.priors, amap), False, 0, True, diag)
    fld = batch.field
    ms = init_messages(g)
    for it in range(1, k_max + 1):
        diag["r_resets"] += check_update(ms, g, backend)
        x = tentative_decision(ms, g, use_prior)
        if np.array_equal(fld.matvec(g.A, x), g.y):
            return DecodeResult(x, True, it, False, diag)
        diag["q_resets"] += var_update(ms, g, use_prior, backend)
    diag["unsatisfied"] = int(np.count_nonzero(fld.matvec(g.A, x) != g.y))
    return DecodeResult(expected_value_fallback(g.priors, amap), False, k_max, True, diag)


# --------------------------------------------------------------------------
# per-check reference implementations (used by tests and the benchmark)


def _mu(msgs, mask, W, j, k, a):
    """Weighted incoming message of neighbour ``j`` for target ``k`` at value ``a``."""
    return msgs[j] * W[j, k, :, a] if mask[j, k] else msgs[j]


def check_update_naive(field: FieldSpec, coefs, target, msgs, mask, W) -> np.ndarray:
    """All outgoing messages of one check by explicit enumeration (``q^(d-1)`` terms)."""
    coefs = np.asarray(coefs)
    d, q = msgs.shape
    mt = field.mul_table
    out = np.zeros((d, q))
    for k in range(d):
        others = [j for j in range(d) if j != k]
        for a in range(q):
            mus = [_mu(msgs, mask, W, j, k, a) for j in others]
            tot = 0.0
            for cfg in itertools.product(range(q), repeat=len(others)):
                s = mt[coefs[k], a]
                w = 1.0
                for j, v, mu in zip(others, cfg, mus):
                    s ^= mt[coefs[j], v]
                    w *= mu[v]
                if s == target:
                    tot += w
            out[k, a] = tot
    return out


def _permuted(field, c, m):
    """pmf of ``c x`` given the pmf ``m`` of ``x``."""
    u = np.zeros_like(m)
    u[field.mul_table[c]] = m
    return u


def check_update_dp(field: FieldSpec, coefs, target, msgs, mask, W) -> np.ndarray:
    """Same messages by forward/backward partial sums with direct XOR convolution."""
    coefs = np.asarray(coefs)
    d, q = msgs.shape
    mt = field.mul_table
    delta = np.zeros(q)
    delta[0] = 1.0
    out = np.zeros((d, q))
    for k in range(d):
        for a in range(q):
            us = [_permuted(field, coefs[j], _mu(msgs, mask, W, j, k, a)) for j in range(d)]
            fwd = [delta]
            for j in range(k):
                fwd.append(xor_convolution_naive(fwd[-1], us[j]))
            bwd = delta
            for j in range(d - 1, k, -1):
                bwd = xor_convolution_naive(bwd, us[j])
            tot = xor_convolution_naive(fwd[-1], bwd)
            out[k, a] = tot[target ^ mt[coefs[k], a]]
    return out


def check_update_hadamard(field: FieldSpec, coefs, target, msgs, mask=None, W=None) -> np.ndarray:
    """Transform-domain leave-one-out product; valid only without correlation."""
    if mask is not None and np.any(mask):
        raise ValueError("the plain transform path requires a-independent messages")
    coefs = np.asarray(coefs)
    d, q = msgs.shape
    mt = field.mul_table
    U = wht(np.stack([_permuted(field, coefs[j], msgs[j]) for j in range(d)]))
    out = np.zeros((d, q))
    for k in range(d):
        P = np.prod(np.delete(U, k, axis=0), axis=0)
        conv = wht(P) / q
        out[k] = conv[target ^ mt[coefs[k], np.arange(q)]]
    return out


# --------------------------------------------------------------------------
# exact MAP oracle


def _rref(A, y, field: FieldSpec):
    R, r, piv = row_echelon(A, y, field)
    mt = field.mul_table
    for i in range(len(piv) - 1, -1, -1):
        c = piv[i]
        above = np.flatnonzero(R[:i, c])
        if above.size:
            f = R[above, c]
            R[above] ^= mt[f[:, None], R[i][None, :]]
            r[above] ^= mt[f, r[i]]
    return R, r, list(piv)


def _solution_space(A, y, field: FieldSpec) -> np.ndarray:
    """All solutions of ``A x = y`` in lexicographic order, shape ``(K, N)``."""
    A = np.asarray(A, dtype=np.uint8)
    N = A.shape[1]
    if A.shape[0] == 0:
        R, r, piv = np.zeros((0, N), np.uint8), np.zeros(0, np.uint8), []
    else:
        R, r, piv = _rref(A, y, field)
    free = [c for c in range(N) if c not in piv]
    if len(free) * field.p > MAX_EXPLICIT_BITS:
        raise ValueError("solution space too large to enumerate")
    combos = np.stack(np.unravel_index(np.arange(field.q ** len(free)), (field.q,) * len(free)),
                      axis=1).astype(np.uint8) if free else np.zeros((1, 0), np.uint8)
    X = np.zeros((combos.shape[0], N), dtype=np.uint8)
    X[:, free] = combos
    mt = field.mul_table
    for i, c in enumerate(piv):
        acc = np.full(combos.shape[0], r[i], dtype=np.uint8)
        for f in free:
            if R[i, f]:
                acc ^= mt[R[i, f], X[:, f]]
        X[:, c] = acc
    order = np.lexsort(X.T[::-1])
    return X[order]


def _log_pmf(f, idx) -> np.ndarray:
    """``log f`` at alphabet-index configurations ``idx`` (K, N); -1 marks unmapped."""
    bad = np.any(idx < 0, axis=1)
    safe = np.where(idx < 0, 0, idx)
    with np.errstate(divide="ignore"):
        if isinstance(f, ExplicitPmf):
            lp = np.log(f.table[tuple(safe.T)])
        elif isinstance(f, ChainPmf):
            lp = np.log(f.initial[safe[:, 0]])
            for n in range(1, f.N):
                lp = lp + np.log(f.kernel[safe[:, n - 1], safe[:, n]])
        else:
            raise TypeError(f"unsupported pmf type {type(f).__name__}")
    return np.where(bad, -np.inf, lp)


_TIE_LOG_TOL = 1e-12


def decode_map_exact(batch: CodedBatch, joint_pmf, amap: AlphabetMap | None = None) -> np.ndarray:
    """MAP estimate by enumerating every configuration consistent with ``A x = y``.

    ``joint_pmf`` lives on the source alphabet; ``amap`` (identity by default)
    takes it into the field.  Ties (equal probabilities up to a relative
    1e-12) go to the lexicographically smallest field vector.
    """
    fld = batch.field
    if batch.N * fld.p > MAX_EXPLICIT_BITS:
        raise ValueError("exact MAP decoding limited to q^N <= 2^24")
    amap = amap or AlphabetMap(tuple(joint_pmf.alphabet), fld)
    if tuple(joint_pmf.alphabet) != amap.alphabet:
        raise ValueError("pmf alphabet differs from the map's alphabet")
    if joint_pmf.N != batch.N:
        raise ValueError("pmf and batch disagree on N")
    X = _solution_space(batch.A, batch.y, fld)
    if X.shape[0] == 0:
        raise InconsistentSystemError("no configuration satisfies A x = y")
    pos = np.full(fld.q, -1, dtype=np.int64)
    pos[list(amap.forward)] = np.arange(amap.size)
    lp = _log_pmf(joint_pmf, pos[X])
    best = lp.max()
    if not np.isfinite(best):
        raise InconsistentSystemError("every consistent configuration has zero probability")
    # values equal up to round-off count as ties; X is in lexicographic order
    return X[int(np.flatnonzero(lp >= best - _TIE_LOG_TOL)[0])]
