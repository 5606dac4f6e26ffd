import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlncbp.gf import get_field
from rlncbp.model import (
    AlphabetMap,
    ChainPmf,
    CorrelationGraph,
    EdgePmf,
    ExplicitPmf,
    chain_laplacian_model,
    entropy_bits,
    gaussian_sensor_model,
    laplacian_noise_pmf,
    lift_pmf,
    map_from_field,
    map_to_field,
    marginal_pmf_from_gaussian,
    pairwise_noise_from_gaussian,
    quantize,
    quantizer_edges,
    sample_sources,
)


# --- alphabet maps ---------------------------------------------------------

def test_identity_map():
    m = AlphabetMap.identity(get_field(8))
    assert map_to_field(3, m) == 3
    assert map_from_field(3, m) == 3


def test_offset_map():
    m = AlphabetMap(tuple(range(-4, 4)), get_field(8))
    assert map_to_field(-4, m) == 0
    assert map_to_field(3, m) == 7
    xs = np.arange(-4, 4)
    assert np.array_equal(m.from_field(m.to_field(xs)), xs)


def test_map_domain_errors():
    m = AlphabetMap((0, 1, 2), get_field(4))
    with pytest.raises(ValueError):
        map_to_field(5, m)
    with pytest.raises(ValueError):
        map_from_field(3, m)
    with pytest.raises(ValueError):
        AlphabetMap(tuple(range(5)), get_field(4))
    with pytest.raises(ValueError):
        AlphabetMap((0, 1), get_field(4), forward=(2, 2))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=1, max_size=16, unique=True), st.integers(4, 8))
def test_map_roundtrip(alpha, p):
    m = AlphabetMap(tuple(alpha), get_field(1 << p))
    v = m.to_field(alpha)
    assert len(set(v.tolist())) == len(alpha)
    assert np.array_equal(m.from_field(v), alpha)


# --- lifting ---------------------------------------------------------------

def test_lift_identity_same_table():
    rng = np.random.default_rng(0)
    t = rng.random((4, 4))
    f = ExplicitPmf(t / t.sum(), tuple(range(4)))
    lifted = lift_pmf(f, AlphabetMap.identity(get_field(4)))
    assert np.allclose(lifted.joint.table, f.table)


def test_lift_support_and_entropy():
    k, q = 4, 8
    f = ExplicitPmf(np.full((k, k), 1 / k**2), tuple(range(k)))
    m = AlphabetMap(tuple(range(k)), get_field(q))
    lifted = lift_pmf(f, m)
    assert np.count_nonzero(lifted.marginals[0]) == 4
    assert lifted.joint.table.sum() == pytest.approx(1.0, abs=1e-15)
    assert entropy_bits(lifted.joint.table) == pytest.approx(2 * math.log2(k), abs=1e-12)


def test_lift_chain_preserves_marginals_and_mass():
    f = chain_laplacian_model(3, 0.3, 4)
    m = AlphabetMap((0, 1, 2, 3), get_field(16), forward=(5, 9, 2, 14))
    lifted = lift_pmf(f, m)
    ex = lifted.joint.to_explicit()
    assert ex.table.sum() == pytest.approx(1.0, abs=1e-12)
    assert entropy_bits(ex.table) == pytest.approx(f.to_explicit().entropy(), abs=1e-12)
    assert np.allclose(lifted.marginals[:, [5, 9, 2, 14]], f.marginals())
    assert np.allclose(ex.marginals(), lifted.marginals)


# --- Laplacian noise -------------------------------------------------------

def test_laplacian_untruncated_center():
    g = laplacian_noise_pmf(0.5)
    assert g(0) == pytest.approx(1 / 3, abs=1e-15)
    assert g.masses.sum() == pytest.approx(1.0, abs=1e-15)


def test_laplacian_radius_one():
    g = laplacian_noise_pmf(0.5, 1)
    raw = np.array([1 / 6, 1 / 3, 1 / 6])  # untruncated masses at -1, 0, 1
    expected = raw / raw.sum()
    assert expected.tolist() == pytest.approx([0.25, 0.5, 0.25])
    assert g(np.array([-1, 0, 1])) == pytest.approx(expected, abs=1e-15)
    assert g(2) == 0.0


@pytest.mark.parametrize("p", [0.05, 0.3, 0.9])
def test_laplacian_symmetric_unimodal(p):
    g = laplacian_noise_pmf(p, 10)
    w = np.arange(-12, 13)
    assert np.array_equal(g(w), g(-w))
    assert np.all(np.diff(g(np.arange(0, 12))) <= 0)


def test_laplacian_bad_parameter():
    for p in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            laplacian_noise_pmf(p)


def test_edge_pmf_reverse():
    g = EdgePmf(-1, [0.2, 0.5, 0.3])
    r = g.reversed()
    assert r(1) == 0.2 and r(-1) == 0.3


def test_correlation_graph_orientation_and_checks():
    g = EdgePmf(-1, [0.2, 0.5, 0.3])
    G = CorrelationGraph(3, [(2, 0, g)], alphabet=range(4))
    # stored as X_0 - X_2, i.e. reversed
    assert G.noise(0, 2)(1) == pytest.approx(0.2)
    assert G.noise(2, 0)(1) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        G.add_edge(0, 2, g)
    with pytest.raises(ValueError):
        G.add_edge(1, 1, g)
    with pytest.raises(ValueError):
        CorrelationGraph(2, [(0, 1, laplacian_noise_pmf(0.5, 6))], alphabet=range(4))
    assert G.adjacency()[0, 2] and G.adjacency()[2, 0]


# --- chain Laplacian -------------------------------------------------------

def test_chain_binary_conditional():
    f = chain_laplacian_model(3, 0.5, 2)
    assert np.allclose(f.kernel[0], [2 / 3, 1 / 3])


@pytest.mark.parametrize("q", [2, 4, 8, 32])
@pytest.mark.parametrize("p", [0.05, 0.5, 0.95])
def test_chain_rows_normalised_and_symmetric(q, p):
    f = chain_laplacian_model(5, p, q)
    assert np.allclose(f.kernel.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(f.kernel, f.kernel[::-1, ::-1])
    assert np.allclose(f.initial, 1 / q)


def test_chain_small_p_limit():
    f = chain_laplacian_model(2, 1e-6, 8)
    assert np.all(np.abs(np.diag(f.kernel) - 1.0) < 1e-5)


def test_chain_bad_params():
    with pytest.raises(ValueError):
        chain_laplacian_model(3, 1.0, 4)
    with pytest.raises(ValueError):
        chain_laplacian_model(3, 0.5, 1)


def test_chain_explicit_matches_product():
    f = chain_laplacian_model(3, 0.3, 3)
    t = f.to_explicit().table
    for x in itertools.product(range(3), repeat=3):
        expected = f.initial[x[0]] * f.kernel[x[0], x[1]] * f.kernel[x[1], x[2]]
        assert t[x] == pytest.approx(expected, rel=1e-14)


def test_chain_sampler_matches_marginals():
    f = chain_laplacian_model(4, 0.25, 4)
    x = f.sample(np.random.default_rng(1), 200_000)
    emp = np.stack([np.bincount(x[:, n], minlength=4) / len(x) for n in range(4)])
    assert np.allclose(emp, f.marginals(), atol=0.005)
    pair = np.zeros((4, 4))
    np.add.at(pair, (x[:, 1], x[:, 2]), 1)
    pair /= len(x)
    assert np.allclose(pair, f.marginals()[1][:, None] * f.kernel, atol=0.005)


def test_explicit_rejects_bad_tables():
    with pytest.raises(ValueError):
        ExplicitPmf(np.full((2, 2), 0.3), (0, 1))
    with pytest.raises(ValueError):
        ExplicitPmf(np.full((2, 3), 1 / 6), (0, 1))
    with pytest.raises(ValueError):
        ChainPmf([0.5, 0.5], [[0.5, 0.6], [0.5, 0.5]], 2, (0, 1))


# --- Gaussian sensors ------------------------------------------------------

def test_sensor_correlation_basics():
    m = gaussian_sensor_model(2, 0.1, positions=[[0.0, 0.0], [1.0, 0.0]])
    assert m.covariance[0, 0] == 1.0
    assert m.covariance[0, 1] == pytest.approx(0.904837418, abs=1e-9)
    m0 = gaussian_sensor_model(2, 0.1, positions=[[0.3, 0.3], [0.3, 0.3]])
    assert m0.covariance[0, 1] == 1.0
    assert m0.jitter == 1e-10


def test_sensor_determinism():
    a = gaussian_sensor_model(20, 0.05, 7)
    b = gaussian_sensor_model(20, 0.05, 7)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.covariance, b.covariance)
    assert np.allclose(a.covariance, a.covariance.T)


@pytest.mark.parametrize("beta,interval", [
    (0.01, (0.9898, 0.9997)),
    (0.05, (0.9502, 0.9986)),
    (0.1, (0.9027, 0.9972)),
    (0.2, (0.8153, 0.9943)),
])
def test_reported_correlation_intervals_are_feasible(beta, interval):
    # reported ranges must come from distances inside the unit square
    lo, hi = interval
    d_max = -math.log(lo) / beta
    d_min = -math.log(hi) / beta
    assert 0.0 < d_min < d_max <= math.sqrt(2)
    # and from one layout: max distance ~1.02, min distance ~0.03
    assert d_max == pytest.approx(1.02, abs=0.01)
    assert d_min == pytest.approx(0.029, abs=0.005)
    m = gaussian_sensor_model(20, beta, 3)
    off = m.covariance[~np.eye(20, dtype=bool)]
    assert off.min() >= math.exp(-beta * math.sqrt(2)) and off.max() <= 1.0


def test_quantizer():
    e = quantizer_edges(3, 4.0, open_ends=False)
    centers = (e[:-1] + e[1:]) / 2
    assert quantize(centers, 3).tolist() == list(range(8))
    assert quantize(-10.0, 3) == 0
    assert quantize(10.0, 3) == 7


def test_sample_sources_correlation():
    m = gaussian_sensor_model(3, 0.5, 11)
    rng = np.random.default_rng(5)
    s = rng.standard_normal((100_000, 3)) @ m.chol.T
    emp = np.corrcoef(s.T)
    assert np.allclose(emp, m.covariance, atol=0.01)
    x = sample_sources(m, np.random.default_rng(5), 10)
    assert x.shape == (10, 3) and x.min() >= 0 and x.max() <= 7
    assert np.array_equal(x, sample_sources(m, np.random.default_rng(5), 10))


def _two_sensor(rho, n_bits=3):
    d = -math.log(rho) if rho > 0 else None
    if d is None:
        return gaussian_sensor_model(2, 1.0, positions=[[0, 0], [0, 0]], n_bits=n_bits)
    return gaussian_sensor_model(2, 1.0, positions=[[0, 0], [d, 0]], n_bits=n_bits)


def test_noise_independent_case_is_cross_correlation():
    m = _two_sensor(0.5)
    # override the correlation to exactly zero with a custom covariance
    from dataclasses import replace
    m0 = replace(m, covariance=np.eye(2), chol=np.eye(2))
    g = pairwise_noise_from_gaussian(m0, 0, 1)
    f = marginal_pmf_from_gaussian(m0, 0)
    expected = np.correlate(f, f, mode="full")  # sum_x f(x) f(x - w)
    assert np.allclose(g.masses, expected, atol=1e-9)


def test_noise_degenerate_limit():
    m = gaussian_sensor_model(2, 1.0, positions=[[0, 0], [1e-7, 0]], n_bits=4)
    g = pairwise_noise_from_gaussian(m, 0, 1)
    assert g(0) > 0.99


@pytest.mark.parametrize("rho", [0.3, 0.9, 0.995])
def test_noise_matches_monte_carlo(rho):
    m = _two_sensor(rho)
    g = pairwise_noise_from_gaussian(m, 0, 1)
    n = 1_000_000
    x = sample_sources(m, np.random.default_rng(int(rho * 1000)), n)
    w = x[:, 0] - x[:, 1]
    counts = np.bincount(w + 7, minlength=15)
    emp = counts / n
    sigma = np.sqrt(g.masses * (1 - g.masses) / n)
    assert np.all(np.abs(emp - g.masses) <= 3 * sigma + 1e-7)


def test_marginal_sums_to_one():
    m = _two_sensor(0.7, n_bits=4)
    f = marginal_pmf_from_gaussian(m, 1)
    assert f.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(f, f[::-1])
