import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from loopforge import fixtures, loops
from loopforge import graph as G
from loopforge.stats import chi_square

from conftest import within

TRI = np.arange(3)  # the triangle's three inner edges
K4 = np.arange(6)


def test_cycle_basis_triangle():
    b = loops.cycle_basis(G.triangle(), TRI)
    assert b.h == 1
    assert len(b.cycles[0]) == 3


def test_cycle_basis_tree():
    g = G.path(6)
    assert loops.cycle_basis(g).h == 0


def test_cycle_basis_k4():
    b = loops.cycle_basis(G.complete(4), K4)
    assert b.h == 3


@pytest.mark.parametrize("g", [G.grid(3, 3), G.complete(4), G.parallel_pair(), G.box(1, 2)])
def test_cycle_basis_invariants(g):
    b = loops.cycle_basis(g)
    assert b.h == g.m - g.n + 1
    for chord, cyc in zip(b.chords, b.cycles):
        assert np.sum(np.isin(cyc, b.chords)) == 1 and chord in cyc
        assert loops.is_even(g, np.isin(np.arange(g.m), cyc))[0]


def test_cycle_basis_multiple_components():
    g = G.grid(3, 3)
    # two disjoint squares' worth of edges: top-left and bottom-right blocks
    sq = [e for e, (u, v) in enumerate(g.edges.tolist()) if {u, v} <= {0, 1, 3, 4} or {u, v} <= {4, 5, 7, 8}]
    sub = [e for e in sq if 4 not in g.edges[e]]
    b = loops.cycle_basis(g, sub)
    assert b.h == 0
    b = loops.cycle_basis(g, sq)
    assert b.h == 2


def test_even_subgraph_triangle_frequencies(rng):
    b = loops.cycle_basis(G.triangle(), TRI)
    draws = loops.sample_even_subgraph(b, rng, 100_000)
    full = draws[:, :3].all(axis=1)
    assert np.all(full | ~draws.any(axis=1))
    assert within(full.mean(), 0.5, np.sqrt(0.25 / len(full)))


def test_even_subgraph_tree_is_empty(rng):
    b = loops.cycle_basis(G.path(5))
    assert not loops.sample_even_subgraph(b, rng, 100).any()


def test_even_subgraph_k4_uniform(rng):
    g = G.complete(4)
    b = loops.cycle_basis(g, K4)
    enum = loops.enumerate_even_subgraphs(g, K4)
    assert len(enum) == 8
    draws = loops.sample_even_subgraph(b, rng, 100_000)
    keys = [frozenset(np.flatnonzero(d).tolist()) for d in draws]
    assert set(keys) == set(enum)
    freq = np.array([keys.count(k) for k in enum]) / len(keys)
    assert np.all(np.abs(freq - 1 / 8) <= 3 * np.sqrt(1 / 8 * 7 / 8 / len(keys)))


@pytest.mark.parametrize("g, subset", [
    (G.triangle(), None),
    (G.complete(4), K4),
    (G.grid(2, 2), None),
    (G.parallel_pair(), None),
    (G.grid(3, 3), [e for e, (u, v) in enumerate(G.grid(3, 3).edges.tolist()) if u < 9 and v < 9]),
])
def test_enumeration_oracle_uniform(g, subset, rng):
    ids = loops._edge_ids(g, subset)
    assert len(ids) <= 12
    b = loops.cycle_basis(g, subset)
    enum = loops.enumerate_even_subgraphs(g, subset)
    assert len(enum) == 2**b.h
    draws = loops.sample_even_subgraph(b, rng, 100_000)
    pos = {k: i for i, k in enumerate(enum)}
    counts = np.bincount([pos[frozenset(np.flatnonzero(d).tolist())] for d in draws], minlength=len(enum))
    _, p = chi_square(counts, np.ones(len(enum)))
    assert p > 0.01


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), keep=st.floats(0.3, 1.0))
def test_even_subgraph_always_even(seed, keep):
    g = G.grid(4, 3)
    r = np.random.default_rng(seed)
    mask = r.random(g.m) < keep
    b = loops.cycle_basis(g, mask)
    draws = loops.sample_even_subgraph(b, r, 50)
    assert np.all(loops.is_even(g, draws))
    assert np.all(draws <= mask)


def state(g, parity=None):
    return loops.CrossingState(np.ones(g.m, dtype=bool),
                               np.zeros(g.m, dtype=np.uint8) if parity is None else parity)


def test_switch_cycle_triangle():
    g = G.triangle()
    s = loops.switch_cycle(state(g), TRI)
    assert s.parity[:3].tolist() == [1, 1, 1]
    assert np.array_equal(loops.switch_cycle(s, TRI).parity, state(g).parity)
    assert np.array_equal(loops.switch_cycle(s, []).parity, s.parity)


def test_switch_cycle_rejects_closed_edges():
    g = G.triangle()
    s = loops.CrossingState(np.array([1, 1, 0, 1, 1, 1], dtype=bool), np.zeros(6, dtype=np.uint8))
    with pytest.raises(loops.CycleLeavesOpenSet):
        loops.switch_cycle(s, TRI)


def test_switch_cycle_counts_change_parity_only_on_cycle():
    g = G.triangle()
    s = loops.CrossingState(np.ones(6, dtype=bool), np.array([0, 1, 1, 0, 0, 0], dtype=np.uint8),
                            np.array([2, 3, 1, 0, 4, 0]))
    out = loops.switch_cycle(s, TRI)
    assert np.array_equal(out.counts % 2, out.parity)
    assert out.counts[3:].tolist() == [0, 4, 0]


@pytest.mark.parametrize("g, subset", [(G.triangle(), TRI), (G.complete(4), K4)])
def test_switching_leaves_uniform_law_invariant(g, subset, rng):
    b = loops.cycle_basis(g, subset)
    draws = loops.sample_even_subgraph(b, rng, 50_000)
    cyc = b.cycles[-1]
    flipped = draws.copy()
    flipped[:, cyc] ^= True
    table = np.array([np.bincount(loops.even_subgraph_index(b, d), minlength=2**b.h)
                      for d in (draws, flipped)])
    from loopforge.stats import chi_square_homogeneity
    assert chi_square_homogeneity(table)[1] > 0.01


def test_conditioned_poisson_odd_m1(rng):
    pmf = loops.conditioned_poisson_pmf(1.0, "odd")
    assert pmf[1] == pytest.approx(1 / np.sinh(1.0))
    assert pmf[1] == pytest.approx(0.8509, abs=5e-5)
    n = loops.conditioned_poisson(1.0, "odd", rng, 100_000)
    p = 1 / np.sinh(1.0)
    assert within((n == 1).mean(), p, np.sqrt(p * (1 - p) / len(n)))
    assert np.all(n % 2 == 1)


def test_conditioned_poisson_zero_mean():
    r = np.random.default_rng(0)
    assert np.all(loops.conditioned_poisson(0.0, "even", r, 100) == 0)
    with pytest.raises(loops.OddWithZeroMean):
        loops.conditioned_poisson(0.0, "odd", r, 10)


@pytest.mark.parametrize("m", [0.0, 0.5, 1.0, 3.0])
def test_even_minus_odd(m, rng):
    pmf = loops.conditioned_poisson_pmf(m, "none")
    k = np.arange(len(pmf))
    assert np.sum(np.where(k % 2 == 0, pmf, -pmf)) == pytest.approx(np.exp(-2 * m), abs=1e-12)
    if m == 1.0:
        assert np.exp(-2 * m) == pytest.approx(0.13534, abs=5e-6)
    n = rng.poisson(m, 100_000)
    sgn = np.where(n % 2 == 0, 1.0, -1.0)
    assert within(sgn.mean(), np.exp(-2 * m), sgn.std() / np.sqrt(len(sgn)) + 1e-12)


@pytest.mark.parametrize("m, parity, ref", [
    (1.0, "even", np.exp(-1) * np.cosh(1)),
    (1.0, "odd", np.exp(-1) * np.sinh(1)),
    (2.5, "none", 1.0),
])
def test_parity_normalizer(m, parity, ref):
    assert loops.parity_normalizer(m, parity) == pytest.approx(ref)


def test_conditioned_poisson_tv(rng):
    draws = loops.conditioned_poisson(2.0, "even", rng, 1_000_000)
    emp = np.bincount(draws) / len(draws)
    assert loops.tv_distance(emp, loops.conditioned_poisson_pmf(2.0, "even")) <= 0.005


def test_crossing_pmf_support_and_normalization():
    pmf = loops.crossing_pmf_discrete(3, 5, 0.9, 0.8, 0.05)
    assert len(pmf) == 4  # t > min(A, B) carries no mass
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    big = loops.crossing_pmf_discrete(10_000, 10_000, 0.9999, 0.9999, 1e-4)
    assert np.isfinite(big).all() and big.sum() == pytest.approx(1.0, abs=1e-12)


def test_crossing_pmf_single_visits():
    pxx, pyy, pxy = 0.7, 0.6, 0.2
    pmf = loops.crossing_pmf_discrete(1, 1, pxx, pyy, pxy)
    # one jump pair, two crossings: weight pxy^2 / (pxx pyy 2!)
    assert pmf[1] / pmf[0] == pytest.approx(pxy**2 / (pxx * pyy * 2))


def test_crossing_pmf_matches_direct_formula():
    A, B, pxx, pyy, pxy = 7, 4, 0.8, 0.85, 0.1
    t = np.arange(5)
    w = np.exp(-t * np.log(pxx * pyy) + 2 * t * np.log(pxy)
               - gammaln(2 * t + 1) - gammaln(A - t + 1) - gammaln(B - t + 1))
    np.testing.assert_allclose(loops.crossing_pmf_discrete(A, B, pxx, pyy, pxy), w / w.sum(), rtol=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_crossing_pmf_invalid(p):
    with pytest.raises(loops.InvalidProbability):
        loops.crossing_pmf_discrete(2, 2, p, 0.5, 0.1)


def test_crossing_pmf_K_limit():
    ref = lambda K: loops.conditioned_poisson_pmf(1.0, "even", kmax=2 * K)
    tv = [loops.tv_distance(loops.crossing_pmf_limit(K, 1, 1, 1), ref(K)) for K in (10, 100, 1000)]
    assert tv[0] > tv[1] > tv[2]
    assert tv[2] <= 0.02


def ring():
    g, ray = fixtures.annulus(4, 2)
    return g, ray


def test_annulus_ring_fixture():
    g, ray = ring()
    assert g.n == 12 and g.m == 12 and len(ray) == 1
    b = loops.cycle_basis(g)
    assert b.h == 1 and loops.has_odd_winding(b, ray)


def test_winding_single_cycle_all_ones():
    g, ray = ring()
    assert loops.winding_parity(np.ones(g.m, dtype=np.uint8), ray, np.arange(g.m)) == 1


def test_winding_cluster_off_the_ray():
    g, ray = ring()
    cluster = np.setdiff1d(np.arange(g.m), ray)
    assert loops.winding_parity(np.ones(g.m, dtype=np.uint8), ray, cluster) == 0
    assert not loops.has_odd_winding(loops.cycle_basis(g, cluster), ray)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
@pytest.mark.parametrize("size", [4, 6])
def test_winding_flips_with_odd_cycles(size, seed):
    g, ray = fixtures.annulus(size, 2)
    r = np.random.default_rng(seed)
    b = loops.cycle_basis(g)
    p = loops.sample_even_subgraph(b, r)
    s = loops.CrossingState(np.ones(g.m, dtype=bool), p.astype(np.uint8))
    w = loops.winding_parity(s.parity, ray, np.arange(g.m))
    for cyc in b.cycles:
        t = loops.switch_cycle(s, cyc)
        odd = loops.ray_crossings(cyc, ray) % 2
        assert loops.winding_parity(t.parity, ray, np.arange(g.m)) == w ^ odd
