"""Hot loops of the BP decoder: check phase and variable phase.

Each phase exists twice, as a numba kernel and as a vectorised numpy
version with identical semantics.  The numba path is used unless the
environment variable ``RLNCBP_DISABLE_NUMBA`` is set to a non-empty value
other than ``0`` (or numba cannot be imported).

Edge-indexed layout shared by both backends (``E`` edges, ``q`` values):

* ``chk_ptr``   (L'+1,)  CSR pointers of checks into the edge list
* ``edge_var``  (E,)     variable of each edge
* ``edge_coef`` (E,)     nonzero coefficient ``a'_{ln}`` of each edge
* ``target``    (L',)    reduced coded symbol of each check
* ``var_ptr``, ``var_edge``  CSR of edges grouped by variable
* ``corr_idx``  (N, N)   index into ``corr_w`` or -1 when uncorrelated
* ``corr_w``    (M, q, q) ``corr_w[m, v, a] = g(int(v) - int(a))``
* ``support``   (N, q)   field values that carry prior mass
"""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

MSG_FLOOR = 1e-30


def _numba_wanted() -> bool:
    flag = os.environ.get("RLNCBP_DISABLE_NUMBA", "")
    return flag in ("", "0")


try:  # pragma: no cover - exercised implicitly
    import numba as _nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _nb = None
    HAVE_NUMBA = False


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and _numba_wanted() else "numpy"


@lru_cache(maxsize=None)
def hadamard_signs(q: int) -> np.ndarray:
    """``H[k, s] = (-1)^popcount(k & s)`` as float64."""
    k = np.arange(q)
    bits = np.bitwise_and(k[:, None], k[None, :])
    pc = np.zeros_like(bits)
    while np.any(bits):
        pc += bits & 1
        bits >>= 1
    H = np.where(pc % 2 == 0, 1.0, -1.0)
    H.setflags(write=False)
    return H


# --------------------------------------------------------------------------
# numpy backend


def check_phase_numpy(chk_ptr, edge_var, edge_coef, target, qmsg, corr_idx, corr_w,
                      support, mul, inv, out):
    q = qmsg.shape[1]
    H = hadamard_signs(q)
    s_idx = np.arange(q)
    resets = 0
    for l in range(chk_ptr.size - 1):
        e0, e1 = chk_ptr[l], chk_ptr[l + 1]
        d = e1 - e0
        vars_ = edge_var[e0:e1]
        coefs = edge_coef[e0:e1]
        # u_j(s) = mu_j(c_j^{-1} s): pmf of c_j x_j
        src = mul[inv[coefs][:, None], s_idx[None, :]]  # (d, q) value x with c_j x = s
        msgs = qmsg[e0:e1]
        U = np.take_along_axis(msgs, src, axis=1) @ H
        pre = np.ones((d + 1, q))
        suf = np.ones((d + 1, q))
        pre[1:] = np.cumprod(U, axis=0)
        suf[:-1] = np.cumprod(U[::-1], axis=0)[::-1]
        t = target[l]
        cidx = corr_idx[vars_[:, None], vars_[None, :]]  # (j, k): neighbour j vs target k
        for k in range(d):
            e = e0 + k
            c = coefs[k]
            s_of_a = t ^ mul[c, s_idx]
            corr_j = [j for j in range(d) if j != k and cidx[j, k] >= 0]
            if not corr_j:
                conv = (pre[k] * suf[k + 1]) @ H / q
                r = conv[s_of_a]
            else:
                base = np.ones(q)
                for j in range(d):
                    if j != k and cidx[j, k] < 0:
                        base = base * U[j]
                cj = np.array(corr_j)
                # T[j, a, s] = corr_w[m_j, src_j[s], a] * msg_j[src_j[s]]
                W = corr_w[cidx[cj, k]]  # (nc, q_v, q_a)
                sv = src[cj]  # (nc, q_s)
                T = np.take_along_axis(W, sv[:, :, None], axis=1)  # (nc, q_s, q_a)
                T = T * np.take_along_axis(msgs[cj], sv, axis=1)[:, :, None]
                TH = np.einsum("jsa,sk->jak", T, H)
                prod = np.prod(TH, axis=0) * base[None, :]  # (q_a, q_k)
                r = np.einsum("ak,ak->a", prod, H[:, s_of_a].T) / q
                r = np.where(support[vars_[k]], r, 0.0)
            r = np.maximum(r, 0.0)
            mx = r.max()
            if mx > 0.0:
                out[e] = r / mx
            else:
                out[e] = 1.0
                resets += 1
    return resets


def var_phase_numpy(var_ptr, var_edge, rmsg, priors, support, use_prior, out):
    q = rmsg.shape[1]
    resets = 0
    for n in range(var_ptr.size - 1):
        edges = var_edge[var_ptr[n]:var_ptr[n + 1]]
        d = edges.size
        if d == 0:
            continue
        R = rmsg[edges]
        pre = np.ones((d + 1, q))
        suf = np.ones((d + 1, q))
        for i in range(d):
            pre[i + 1] = pre[i] * R[i]
            pre[i + 1] /= max(pre[i + 1].max(), 1e-300)
        for i in range(d - 1, -1, -1):
            suf[i] = suf[i + 1] * R[i]
            suf[i] /= max(suf[i].max(), 1e-300)
        loo = pre[:-1] * suf[1:]
        if use_prior or d == 1:
            # a degree-1 variable has an empty product and falls back on its prior
            loo = loo * priors[n][None, :]
        mask = support[n]
        tot = np.where(mask, loo, 0.0).sum(axis=1)
        bad = tot <= 0.0
        if bad.any():
            loo[bad] = priors[n]
            resets += int(bad.sum())
        loo = loo / loo.max(axis=1, keepdims=True)
        loo = np.where(mask, np.maximum(loo, MSG_FLOOR), 0.0)
        out[edges] = loo / loo.sum(axis=1, keepdims=True)
    return resets


# --------------------------------------------------------------------------
# numba backend

if HAVE_NUMBA:

    @_nb.njit(cache=True)
    def _wht(v):
        n = v.shape[0]
        h = 1
        while h < n:
            for i in range(0, n, 2 * h):
                for j in range(i, i + h):
                    x = v[j]
                    y = v[j + h]
                    v[j] = x + y
                    v[j + h] = x - y
            h *= 2

    @_nb.njit(cache=True)
    def check_phase_numba(chk_ptr, edge_var, edge_coef, target, qmsg, corr_idx, corr_w,
                          support, mul, inv, out):
        q = qmsg.shape[1]
        L = chk_ptr.shape[0] - 1
        resets = 0
        tmp = np.empty(q)
        prod = np.empty(q)
        base = np.empty(q)
        for l in range(L):
            e0 = chk_ptr[l]
            d = chk_ptr[l + 1] - e0
            U = np.empty((d, q))
            for k in range(d):
                c = edge_coef[e0 + k]
                for x in range(q):
                    U[k, mul[c, x]] = qmsg[e0 + k, x]
                _wht(U[k])
            pre = np.ones((d + 1, q))
            suf = np.ones((d + 1, q))
            for k in range(d):
                for s in range(q):
                    pre[k + 1, s] = pre[k, s] * U[k, s]
            for k in range(d - 1, -1, -1):
                for s in range(q):
                    suf[k, s] = suf[k + 1, s] * U[k, s]
            t = target[l]
            for k in range(d):
                e = e0 + k
                n = edge_var[e]
                c = edge_coef[e]
                ncorr = 0
                for j in range(d):
                    if j != k and corr_idx[edge_var[e0 + j], n] >= 0:
                        ncorr += 1
                if ncorr == 0:
                    for s in range(q):
                        prod[s] = pre[k, s] * suf[k + 1, s]
                    _wht(prod)
                    for a in range(q):
                        v = prod[t ^ mul[c, a]] / q
                        out[e, a] = v if v > 0.0 else 0.0
                else:
                    for s in range(q):
                        base[s] = 1.0
                    for j in range(d):
                        if j != k and corr_idx[edge_var[e0 + j], n] < 0:
                            for s in range(q):
                                base[s] *= U[j, s]
                    for a in range(q):
                        if not support[n, a]:
                            out[e, a] = 0.0
                            continue
                        for s in range(q):
                            prod[s] = base[s]
                        for j in range(d):
                            if j == k:
                                continue
                            m = corr_idx[edge_var[e0 + j], n]
                            if m < 0:
                                continue
                            cj = edge_coef[e0 + j]
                            for x in range(q):
                                tmp[mul[cj, x]] = corr_w[m, x, a] * qmsg[e0 + j, x]
                            _wht(tmp)
                            for s in range(q):
                                prod[s] *= tmp[s]
                        # one entry of the inverse transform
                        _wht(prod)
                        v = prod[t ^ mul[c, a]] / q
                        out[e, a] = v if v > 0.0 else 0.0
                mx = 0.0
                for a in range(q):
                    if out[e, a] > mx:
                        mx = out[e, a]
                if mx > 0.0:
                    for a in range(q):
                        out[e, a] /= mx
                else:
                    for a in range(q):
                        out[e, a] = 1.0
                    resets += 1
        return resets

    @_nb.njit(cache=True)
    def var_phase_numba(var_ptr, var_edge, rmsg, priors, support, use_prior, out):
        q = rmsg.shape[1]
        N = var_ptr.shape[0] - 1
        resets = 0
        acc = np.empty(q)
        for n in range(N):
            p0 = var_ptr[n]
            d = var_ptr[n + 1] - p0
            for i in range(d):
                e = var_edge[p0 + i]
                if use_prior or d == 1:
                    for a in range(q):
                        acc[a] = priors[n, a]
                else:
                    for a in range(q):
                        acc[a] = 1.0
                for j in range(d):
                    if j == i:
                        continue
                    e2 = var_edge[p0 + j]
                    mx = 0.0
                    for a in range(q):
                        acc[a] *= rmsg[e2, a]
                        if acc[a] > mx:
                            mx = acc[a]
                    if mx > 0.0:
                        for a in range(q):
                            acc[a] /= mx
                tot = 0.0
                for a in range(q):
                    if support[n, a]:
                        tot += acc[a]
                if tot <= 0.0:
                    for a in range(q):
                        acc[a] = priors[n, a]
                    resets += 1
                mx = 0.0
                for a in range(q):
                    if acc[a] > mx:
                        mx = acc[a]
                tot = 0.0
                for a in range(q):
                    if support[n, a]:
                        v = acc[a] / mx
                        acc[a] = v if v > MSG_FLOOR else MSG_FLOOR
                        tot += acc[a]
                    else:
                        acc[a] = 0.0
                for a in range(q):
                    out[e, a] = acc[a] / tot
        return resets

else:  # pragma: no cover
    check_phase_numba = None
    var_phase_numba = None


def get_kernels(backend: str | None = None):
    """``(check_phase, var_phase)`` for the requested backend."""
    backend = backend or default_backend()
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return check_phase_numba, var_phase_numba
    if backend == "numpy":
        return check_phase_numpy, var_phase_numpy
    raise ValueError(f"unknown backend {backend!r}")
