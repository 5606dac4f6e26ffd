"""Source statistics: alphabets, field mappings, joint pmfs and correlation noise.

Integer source symbols live in an ordered alphabet; :class:`AlphabetMap`
sends them bijectively into GF(q).  Joint pmfs are either an explicit table
over alphabet indices (small problems only) or a first-order chain given by
an initial pmf and a transition kernel.  Pairwise correlation is carried by
the pmf of the integer difference ``X_i - X_j`` on each edge of a
:class:`CorrelationGraph`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .gf import FieldSpec

log = logging.getLogger(__name__)

__all__ = [
    "AlphabetMap",
    "ExplicitPmf",
    "ChainPmf",
    "LiftedPmf",
    "EdgePmf",
    "CorrelationGraph",
    "GaussianSensorModel",
    "QuadratureError",
    "map_to_field",
    "map_from_field",
    "lift_pmf",
    "entropy_bits",
    "laplacian_noise_pmf",
    "chain_laplacian_model",
    "gaussian_sensor_model",
    "quantize",
    "quantizer_edges",
    "sample_sources",
    "marginal_pmf_from_gaussian",
    "pairwise_noise_from_gaussian",
    "sensor_correlation_graph",
    "MAX_EXPLICIT_BITS",
]

# explicit q^N tables are only built below this many bits of joint state
MAX_EXPLICIT_BITS = 24


class QuadratureError(RuntimeError):
    pass


def entropy_bits(pmf) -> float:
    p = np.asarray(pmf, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


# --------------------------------------------------------------------------
# alphabet <-> field


@dataclass(frozen=True, eq=False)
class AlphabetMap:
    """Bijection between an integer alphabet and a subset of GF(q).

    ``forward[k]`` is the field value of ``alphabet[k]``.  When not given, a
    contiguous-offset map ``x -> x - min(alphabet)`` is used if it fits in the
    field, otherwise symbols are numbered by rank.
    """

    alphabet: tuple
    field: FieldSpec
    forward: tuple | None = None
    int_of_field: np.ndarray = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        alpha = tuple(int(a) for a in self.alphabet)
        if len(set(alpha)) != len(alpha):
            raise ValueError("alphabet symbols must be distinct")
        q = self.field.q
        if len(alpha) > q:
            raise ValueError(f"alphabet of size {len(alpha)} does not fit in GF({q})")
        if self.forward is None:
            lo = min(alpha)
            if max(alpha) - lo < q:
                fwd = tuple(a - lo for a in alpha)
            else:
                order = sorted(alpha)
                fwd = tuple(order.index(a) for a in alpha)
        else:
            fwd = tuple(int(v) for v in self.forward)
        if len(fwd) != len(alpha) or len(set(fwd)) != len(fwd) or not all(0 <= v < q for v in fwd):
            raise ValueError("forward map must be an injection into the field")
        inv = np.full(q, np.iinfo(np.int64).min, dtype=np.int64)
        inv[list(fwd)] = alpha
        inv.setflags(write=False)
        object.__setattr__(self, "alphabet", alpha)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "int_of_field", inv)
        object.__setattr__(self, "_index", {a: k for k, a in enumerate(alpha)})

    @classmethod
    def identity(cls, field: FieldSpec, size: int | None = None) -> "AlphabetMap":
        """Alphabet ``{0, .., size-1}`` mapped onto the same field integers."""
        size = field.q if size is None else size
        return cls(tuple(range(size)), field)

    @property
    def size(self) -> int:
        return len(self.alphabet)

    @property
    def support(self) -> np.ndarray:
        """Boolean mask over the field marking the image of the alphabet."""
        mask = np.zeros(self.field.q, dtype=bool)
        mask[list(self.forward)] = True
        return mask

    def index_of(self, x) -> np.ndarray:
        """Alphabet position of each symbol in ``x``."""
        x = np.asarray(x)
        try:
            return np.vectorize(self._index.__getitem__, otypes=[np.int64])(x)
        except KeyError as e:
            raise ValueError(f"symbol {e.args[0]} is not in the alphabet") from None

    def to_field(self, x) -> np.ndarray:
        return np.asarray(self.forward, dtype=np.int64)[self.index_of(x)]

    def from_field(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64)
        if np.any((v < 0) | (v >= self.field.q)):
            raise ValueError("value outside the field")
        out = self.int_of_field[v]
        if np.any(out == np.iinfo(np.int64).min):
            raise ValueError("field value has no preimage in the alphabet")
        return out


def map_to_field(x, m: AlphabetMap):
    out = m.to_field(x)
    return int(out) if out.ndim == 0 else out


def map_from_field(v, m: AlphabetMap):
    out = m.from_field(v)
    return int(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# joint pmfs


def _check_pmf(p, what, tol=1e-12):
    if np.any(p < 0):
        raise ValueError(f"{what} has negative mass")
    s = p.sum(axis=-1)
    if np.any(np.abs(s - 1.0) > tol):
        raise ValueError(f"{what} does not sum to 1 (off by {np.max(np.abs(s - 1.0)):.3g})")


@dataclass(frozen=True, eq=False)
class ExplicitPmf:
    """Full table over alphabet indices, ``table.shape == (k,) * N``."""

    table: np.ndarray
    alphabet: tuple

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        k = len(self.alphabet)
        if t.ndim < 1 or any(s != k for s in t.shape):
            raise ValueError(f"table shape {t.shape} inconsistent with alphabet size {k}")
        if t.ndim * math.log2(max(k, 2)) > MAX_EXPLICIT_BITS:
            raise ValueError("explicit tables are limited to 2^24 entries")
        _check_pmf(t.ravel(), "joint table")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "alphabet", tuple(int(a) for a in self.alphabet))

    @property
    def N(self) -> int:
        return self.table.ndim

    def marginal(self, n: int) -> np.ndarray:
        axes = tuple(i for i in range(self.N) if i != n)
        return self.table.sum(axis=axes)

    def marginals(self) -> np.ndarray:
        return np.stack([self.marginal(n) for n in range(self.N)])

    def entropy(self) -> float:
        return entropy_bits(self.table)

    def to_explicit(self) -> "ExplicitPmf":
        return self

    def flat(self) -> np.ndarray:
        """Masses in lexicographic order of alphabet-index tuples."""
        return self.table.ravel()

    def sample(self, rng, size: int) -> np.ndarray:
        """Alphabet-index vectors, shape (size, N)."""
        flat = rng.choice(self.table.size, size=size, p=self.flat())
        return np.stack(np.unravel_index(flat, self.table.shape), axis=1)


@dataclass(frozen=True, eq=False)
class ChainPmf:
    """``f(x) = initial[x_1] * prod_i kernel[x_{i-1}, x_i]`` over alphabet indices."""

    initial: np.ndarray
    kernel: np.ndarray
    N: int
    alphabet: tuple

    def __post_init__(self):
        init = np.asarray(self.initial, dtype=float).copy()
        ker = np.asarray(self.kernel, dtype=float).copy()
        k = len(self.alphabet)
        if init.shape != (k,) or ker.shape != (k, k):
            raise ValueError("initial/kernel shapes do not match the alphabet")
        if self.N < 1:
            raise ValueError("need at least one source")
        _check_pmf(init, "initial pmf")
        _check_pmf(ker, "conditional kernel")
        init.setflags(write=False)
        ker.setflags(write=False)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "kernel", ker)
        object.__setattr__(self, "alphabet", tuple(int(a) for a in self.alphabet))

    def marginals(self) -> np.ndarray:
        out = np.empty((self.N, len(self.alphabet)))
        v = self.initial
        for n in range(self.N):
            out[n] = v
            v = v @ self.kernel
        return out

    def marginal(self, n: int) -> np.ndarray:
        return self.marginals()[n]

    def to_explicit(self) -> ExplicitPmf:
        k = len(self.alphabet)
        if self.N * math.log2(max(k, 2)) > MAX_EXPLICIT_BITS:
            raise ValueError("chain too large to materialise")
        t = self.initial.copy()
        for _ in range(self.N - 1):
            t = t[..., None] * self.kernel.reshape((1,) * (t.ndim - 1) + self.kernel.shape)
        return ExplicitPmf(t, self.alphabet)

    def sample(self, rng, size: int) -> np.ndarray:
        k = len(self.alphabet)
        out = np.empty((size, self.N), dtype=np.int64)
        cdf0 = np.cumsum(self.initial)
        cdfk = np.cumsum(self.kernel, axis=1)
        u = rng.random((size, self.N))
        out[:, 0] = np.minimum(np.searchsorted(cdf0, u[:, 0], side="right"), k - 1)
        for n in range(1, self.N):
            rows = cdfk[out[:, n - 1]]
            out[:, n] = np.minimum((rows <= u[:, n, None]).sum(axis=1), k - 1)
        return out


class LiftedPmf(NamedTuple):
    marginals: np.ndarray  # (N, q)
    joint: ExplicitPmf | ChainPmf  # over field values 0..q-1


def lift_pmf(f: ExplicitPmf | ChainPmf, m: AlphabetMap) -> LiftedPmf:
    """Re-express ``f`` over GF(q): mass at mapped points, zero elsewhere."""
    if tuple(f.alphabet) != m.alphabet:
        raise ValueError("pmf alphabet differs from the map's alphabet")
    q = m.field.q
    fwd = np.asarray(m.forward)
    margs = np.zeros((f.N, q))
    margs[:, fwd] = f.marginals()
    if isinstance(f, ChainPmf):
        init = np.zeros(q)
        init[fwd] = f.initial
        # unreachable states get a self-loop so every row stays a pmf
        ker = np.eye(q)
        ker[np.ix_(fwd, np.arange(q))] = 0.0
        ker[np.ix_(fwd, fwd)] = f.kernel
        joint = ChainPmf(init, ker, f.N, tuple(range(q)))
    else:
        t = np.zeros((q,) * f.N)
        t[np.ix_(*([fwd] * f.N))] = f.table
        joint = ExplicitPmf(t, tuple(range(q)))
    return LiftedPmf(margs, joint)


# --------------------------------------------------------------------------
# correlation noise


@dataclass(frozen=True, eq=False)
class EdgePmf:
    """pmf over integer differences ``w``; ``masses[k]`` is ``P(W = offset + k)``."""

    offset: int
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).copy()
        if m.ndim != 1 or m.size == 0:
            raise ValueError("masses must be a non-empty vector")
        if np.any(m < 0):
            raise ValueError("negative mass")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError(f"edge pmf sums to {m.sum():.12g}")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "offset", int(self.offset))

    @property
    def support(self) -> tuple[int, int]:
        return self.offset, self.offset + self.masses.size - 1

    def __call__(self, w):
        w = np.asarray(w, dtype=np.int64)
        k = w - self.offset
        ok = (k >= 0) & (k < self.masses.size)
        out = np.where(ok, self.masses[np.clip(k, 0, self.masses.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def reversed(self) -> "EdgePmf":
        """pmf of ``-W``."""
        return EdgePmf(-self.support[1], self.masses[::-1])


def laplacian_noise_pmf(p_m: float, support_radius: int | None = None) -> EdgePmf:
    """Zero-mean discrete Laplacian ``(1-p)/(1+p) * p^|w|``.

    With ``support_radius`` the pmf is truncated to ``|w| <= radius`` and
    renormalised.  Without it the support is cut where the remaining tail
    mass drops below 1e-17 and no renormalisation is applied.
    """
    if not 0.0 < p_m < 1.0:
        raise ValueError(f"Laplacian parameter must lie in (0, 1), got {p_m}")
    c = (1.0 - p_m) / (1.0 + p_m)
    if support_radius is None:
        # two-sided tail beyond r is 2 p^(r+1) / (1 + p)
        r = max(0, math.ceil(math.log(1e-17 * (1 + p_m) / 2) / math.log(p_m)))
        w = np.arange(-r, r + 1)
        masses = c * p_m ** np.abs(w)
    else:
        r = int(support_radius)
        if r < 0:
            raise ValueError("support radius must be non-negative")
        w = np.arange(-r, r + 1)
        masses = c * p_m ** np.abs(w)
        masses = masses / masses.sum()
    return EdgePmf(-r, masses)


class CorrelationGraph:
    """Undirected graph over ``N`` sources; each edge ``(i, j)``, ``i < j``,
    carries the pmf of ``X_i - X_j``."""

    def __init__(self, N: int, edges=(), alphabet=None):
        self.N = int(N)
        self._edges: dict[tuple[int, int], EdgePmf] = {}
        self._span = None if alphabet is None else max(alphabet) - min(alphabet)
        for i, j, g in edges:
            self.add_edge(i, j, g)

    def add_edge(self, i: int, j: int, g: EdgePmf):
        i, j = int(i), int(j)
        if not (0 <= i < self.N and 0 <= j < self.N) or i == j:
            raise ValueError(f"bad edge ({i}, {j}) for {self.N} nodes")
        if i > j:
            i, j, g = j, i, g.reversed()
        if (i, j) in self._edges:
            raise ValueError(f"duplicate edge ({i}, {j})")
        if self._span is not None:
            lo, hi = g.support
            if lo < -self._span or hi > self._span:
                raise ValueError(f"edge pmf support [{lo}, {hi}] exceeds the feasible differences")
        self._edges[(i, j)] = g

    @property
    def edges(self) -> list[tuple[int, int, EdgePmf]]:
        return [(i, j, g) for (i, j), g in sorted(self._edges.items())]

    def __len__(self):
        return len(self._edges)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edges

    def noise(self, i: int, j: int) -> EdgePmf:
        """pmf of ``X_i - X_j`` (either orientation)."""
        if i < j:
            return self._edges[(i, j)]
        return self._edges[(j, i)].reversed()

    def adjacency(self) -> np.ndarray:
        C = np.zeros((self.N, self.N), dtype=bool)
        for i, j in self._edges:
            C[i, j] = C[j, i] = True
        return C


# --------------------------------------------------------------------------
# chain Laplacian source


def chain_laplacian_model(N: int, p: float, q: int) -> ChainPmf:
    """First-order chain over ``{0..q-1}`` with truncated Laplacian steps.

    ``X_1`` is uniform; ``f(x_i | x_{i-1})`` is proportional to
    ``p^|x_i - x_{i-1}|`` and normalised over the alphabet.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if q < 2 or N < 1:
        raise ValueError("need q >= 2 and N >= 1")
    x = np.arange(q)
    w = (1.0 - p) / (1.0 + p) * p ** np.abs(x[:, None] - x[None, :]).astype(float)
    ker = w / w.sum(axis=1, keepdims=True)
    return ChainPmf(np.full(q, 1.0 / q), ker, N, tuple(range(q)))


# --------------------------------------------------------------------------
# Gaussian sensor field


@dataclass(frozen=True, eq=False)
class GaussianSensorModel:
    positions: np.ndarray
    beta: float
    covariance: np.ndarray
    n_bits: int = 3
    clip: float = 4.0
    chol: np.ndarray = field(default=None, repr=False)
    jitter: float = 0.0

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def levels(self) -> int:
        return 1 << self.n_bits

    @property
    def alphabet(self) -> tuple:
        return tuple(range(self.levels))


def correlation_from_positions(positions, beta: float) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
    return np.exp(-beta * d)


def gaussian_sensor_model(N: int, beta: float, rng_seed=None, *, n_bits: int = 3,
                          clip: float = 4.0, positions=None) -> GaussianSensorModel:
    """Sensors placed uniformly in the unit square with ``rho_ij = exp(-beta d_ij)``."""
    if N < 2:
        raise ValueError("need at least two sensors")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if positions is None:
        rng = np.random.default_rng(rng_seed)
        positions = rng.random((N, 2))
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (N, 2):
        raise ValueError("positions must have shape (N, 2)")
    sigma = correlation_from_positions(positions, beta)
    sigma = (sigma + sigma.T) / 2
    np.fill_diagonal(sigma, 1.0)
    jitter = 0.0
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        jitter = 1e-10
        log.warning("covariance not positive definite; adding %g to the diagonal", jitter)
        try:
            chol = np.linalg.cholesky(sigma + jitter * np.eye(N))
        except np.linalg.LinAlgError as e:
            raise ValueError("covariance is not positive definite even after jitter") from e
    for a in (positions, sigma, chol):
        a.setflags(write=False)
    return GaussianSensorModel(positions, float(beta), sigma, int(n_bits), float(clip), chol, jitter)


def quantizer_edges(n_bits: int, clip: float = 4.0, *, open_ends: bool = True) -> np.ndarray:
    """Bin edges of the uniform quantizer; outer edges are infinite when clamping."""
    e = np.linspace(-clip, clip, (1 << n_bits) + 1)
    if open_ends:
        e[0], e[-1] = -np.inf, np.inf
    return e


def quantize(s, n_bits: int, clip: float = 4.0):
    """Uniform quantizer with ``2^n_bits`` bins over ``[-clip, clip]``, clamped."""
    s = np.asarray(s, dtype=float)
    levels = 1 << n_bits
    width = 2.0 * clip / levels
    idx = np.floor((s + clip) / width).astype(np.int64)
    out = np.clip(idx, 0, levels - 1)
    return int(out) if out.ndim == 0 else out


def sample_sources(model: GaussianSensorModel, rng, size: int | None = None) -> np.ndarray:
    """Quantised symbol vector(s) drawn from the sensor model."""
    n = 1 if size is None else size
    z = rng.standard_normal((n, model.N))
    s = z @ model.chol.T
    x = quantize(s, model.n_bits, model.clip)
    return x[0] if size is None else x


def marginal_pmf_from_gaussian(model: GaussianSensorModel, i: int = 0) -> np.ndarray:
    """Bin probabilities of the quantised ``i``-th sensor."""
    sd = math.sqrt(model.covariance[i, i])
    e = quantizer_edges(model.n_bits, model.clip) / sd
    return np.diff(special.ndtr(e))


def _cell_probabilities(rho: float, n_bits: int, clip: float, rel_tol: float = 1e-6) -> np.ndarray:
    """``P[a, b] = P(Q[S_i] = a, Q[S_j] = b)`` for unit-variance normals with correlation ``rho``.

    The inner integral over ``s_j`` is the conditional normal cdf, so each row
    reduces to an adaptive one-dimensional quadrature over the ``s_i`` cell.
    """
    e = quantizer_edges(n_bits, clip)
    k = e.size - 1
    if rho >= 1.0 - 1e-12:
        return np.diag(np.diff(special.ndtr(e)))
    sig = math.sqrt(1.0 - rho * rho)
    P = np.empty((k, k))
    fin = e[1:-1]
    for a in range(k):
        lo, hi = e[a], e[a + 1]

        def row(s):
            c = special.ndtr((e - rho * s) / sig)
            return np.exp(-0.5 * s * s) / math.sqrt(2 * math.pi) * np.diff(c)

        # the integrand changes fastest where rho*s crosses a bin edge
        a_lo = lo if np.isfinite(lo) else min(-clip - 10.0, hi - 10.0)
        a_hi = hi if np.isfinite(hi) else max(clip + 10.0, lo + 10.0)
        pts = fin / rho if rho > 0 else np.empty(0)
        pts = pts[(pts > a_lo) & (pts < a_hi)]
        val, err = integrate.quad_vec(row, a_lo, a_hi, epsabs=1e-13, epsrel=rel_tol,
                                      points=pts if pts.size else None, limit=2000)
        if not np.all(np.isfinite(val)) or err > max(rel_tol * val.sum(), 1e-12):
            raise QuadratureError(
                f"cell quadrature did not converge for rho={rho}, row {a}: "
                f"estimate={val.sum():.6g}, error={err:.3g}")
        P[a] = val
    # the truncated outer tails (|s| > clip + 10 sd) carry < 1e-23 mass
    return P


def pairwise_noise_from_gaussian(model: GaussianSensorModel, i: int, j: int,
                                 rel_tol: float = 1e-6) -> EdgePmf:
    """pmf of ``Q[S_i] - Q[S_j]`` by integrating the bivariate normal over cells."""
    if i == j:
        raise ValueError("noise pmf needs two distinct sensors")
    sd_i = math.sqrt(model.covariance[i, i])
    sd_j = math.sqrt(model.covariance[j, j])
    rho = float(model.covariance[i, j] / (sd_i * sd_j))
    if abs(sd_i - 1.0) > 1e-12 or abs(sd_j - 1.0) > 1e-12:
        raise ValueError("sensor model must have unit variances")
    P = _cell_probabilities(rho, model.n_bits, model.clip, rel_tol)
    k = P.shape[0]
    g = np.array([np.trace(P, offset=-w) for w in range(-(k - 1), k)])
    total = g.sum()
    if abs(total - 1.0) > 1e-6:
        raise QuadratureError(f"difference pmf sums to {total:.9f} before renormalisation")
    return EdgePmf(-(k - 1), g / total)


def sensor_correlation_graph(model: GaussianSensorModel, min_rho: float = 0.0) -> CorrelationGraph:
    """Fully connected (above ``min_rho``) graph with quadrature edge pmfs."""
    G = CorrelationGraph(model.N, alphabet=model.alphabet)
    for i in range(model.N):
        for j in range(i + 1, model.N):
            if model.covariance[i, j] > min_rho:
                G.add_edge(i, j, pairwise_noise_from_gaussian(model, i, j))
    return G
