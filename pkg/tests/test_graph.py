import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopforge import graph as G


def single_vertex(killing=0.0):
    # boundary 0 - v=1 - boundary 2
    return G.make_graph(3, [(0, 1), (1, 2)], [1.0, 1.0], (0, 2), [0.0, killing, 0.0])


def random_graph(seed, n=6, extra=5):
    r = np.random.default_rng(seed)
    edges = [(i, int(r.integers(0, i))) for i in range(1, n)]
    for _ in range(extra):
        u, v = r.choice(n, 2, replace=False)
        edges.append((int(u), int(v)))
    res = r.uniform(0.2, 3.0, len(edges))
    return G.make_graph(n, edges, res, (0,), r.uniform(0, 0.3, n) * (r.random(n) < 0.5))


def test_path_fixture_shape():
    g = G.path(4)
    assert list(g.interior) == [1, 2]
    assert g.m == 3


def test_wired_grid_is_valid():
    g = G.grid(3, 3)
    assert len(g.interior) == 9
    assert g.boundary == {9}
    # corners carry two parallel edges to the wire
    assert np.sum(np.all(g.edges == [0, 9], axis=1)) == 2


@pytest.mark.parametrize("build, err", [
    (lambda: G.make_graph(1, [], [], (), [0.0]), G.NoKillingNoBoundary),
    (lambda: G.make_graph(4, [(0, 1), (2, 3)], [1, 1], (0,)), G.DisconnectedGraph),
    (lambda: G.make_graph(2, [(0, 1)], [0.0], (0,)), G.NonpositiveResistance),
    (lambda: G.make_graph(2, [(0, 1)], [-1.0], (0,)), G.NonpositiveResistance),
    (lambda: G.make_graph(2, [(0, 1)], [np.inf], (0,)), G.NonpositiveResistance),
])
def test_build_errors(build, err):
    with pytest.raises(err):
        build()


def test_single_vertex_with_killing_is_valid():
    g = G.make_graph(1, [], [], (), [1.0])
    assert G.green(g).G[0, 0] == pytest.approx(1.0)


def test_green_path():
    op = G.green(G.path(4))
    np.testing.assert_allclose(op.G, np.array([[2, 1], [1, 2]]) / 3, atol=1e-12)
    assert op.value(1, 2) == pytest.approx(1 / 3)


@pytest.mark.parametrize("killing, expected", [(0.0, 0.5), (1.0, 1 / 3)])
def test_green_single_vertex(killing, expected):
    assert G.green(single_vertex(killing)).G[0, 0] == pytest.approx(expected)


@pytest.mark.parametrize("g", [G.path(4), G.grid(3, 3), G.triangle(), G.complete(4),
                               G.parallel_pair(), G.refined(G.grid(3, 3), 2), G.box(2),
                               G.grid(3, 3, "free", killing=0.2)])
def test_green_inverts_laplacian(g):
    op = G.green(g)
    L = g.laplacian()[np.ix_(op.free, op.free)]
    np.testing.assert_allclose(op.G @ L, np.eye(len(op.free)), atol=1e-10)
    np.testing.assert_allclose(op.chol @ op.chol.T, op.G, atol=1e-10)
    assert np.all(np.diag(op.G) > 0)


def test_green_block_matches_full_inverse():
    g = G.grid(3, 3)
    pins = (3, 5)
    op = G.dirichlet_green(g, pins)
    vs = [0, 4, 8]
    pos = {int(v): i for i, v in enumerate(op.free)}
    idx = [pos[v] for v in vs]
    np.testing.assert_allclose(G.green_block(g, pins, vs), op.G[np.ix_(idx, idx)], atol=1e-12)


@pytest.mark.parametrize("g, x, y, c", [
    (G.path(4), 1, 2, 1.0),
    (G.parallel_pair(), 0, 1, 2.0),
    (G.separated_pair(), 0, 2, 0.0),
])
def test_effective_conductance(g, x, y, c):
    assert G.effective_conductance(g, x, y) == pytest.approx(c, abs=1e-12)


def test_effective_conductance_same_vertex():
    with pytest.raises(G.SameVertex):
        G.effective_conductance(G.path(4), 1, 1)


def test_harmonic_extension_path():
    # 2 phi(y) = phi(x) + 0 with phi(x) = 1
    phi = G.harmonic_extension(G.path(4), {1: 1.0})
    np.testing.assert_allclose(phi, [0, 1, 0.5, 0], atol=1e-12)


def test_harmonic_extension_trivial_cases():
    g = G.grid(3, 3)
    pins = {int(v): float(v) for v in g.interior}
    np.testing.assert_allclose(G.harmonic_extension(g, pins)[g.interior], g.interior)
    np.testing.assert_allclose(G.harmonic_extension(g, {4: 0.0}), 0.0)


def test_harmonic_extension_mean_value_property():
    g = G.grid(3, 3, killing=0.0)
    phi = G.harmonic_extension(g, {4: 2.0, 0: -1.0})
    L = g.laplacian()
    free = G.free_vertices(g, (4, 0))
    np.testing.assert_allclose((L @ phi)[free], 0.0, atol=1e-12)


@pytest.mark.parametrize("g, x, y, a, b, m", [
    (G.path(4), 1, 2, 1.0, 1.0, 1.0),
    (G.path(4), 1, 2, 0.0, 1.0, 0.0),
    (G.parallel_pair(), 0, 1, 1.0, 1.0, 2.0),
])
def test_two_point_mass(g, x, y, a, b, m):
    assert G.two_point_mass(g, x, y, a, b) == pytest.approx(m)
    assert G.two_point_mass_green(G.green(g), x, y, a, b) == pytest.approx(m)


@pytest.mark.parametrize("seed", range(20))
def test_mass_routes_agree(seed):
    g = random_graph(seed)
    op = G.green(g)
    x, y = 1, 2
    assert G.two_point_mass(g, x, y, 1.3, 0.7) == pytest.approx(
        G.two_point_mass_green(op, x, y, 1.3, 0.7), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), e=st.integers(0, 9), scale=st.floats(0.1, 0.99))
def test_conductances_symmetric_and_escape_monotone(seed, e, scale):
    g = random_graph(seed)
    c = G.effective_conductance(g, 1, 3)
    assert c == pytest.approx(G.effective_conductance(g, 3, 1), abs=1e-12)
    res = np.array(g.resistance)
    res[e] *= scale
    h = G.make_graph(g.n, g.edges, res, g.boundary, g.killing)
    # escape conductance from x with y grounded obeys Rayleigh monotonicity
    esc = 1.0 / G.green_block(g, (3,), [1])[0, 0]
    assert 1.0 / G.green_block(h, (3,), [1])[0, 0] >= esc - 1e-12


@pytest.mark.parametrize("R", [10.0, 1.0, 0.1])
def test_transfer_conductance_drops_with_leakage(R):
    # x=1 - w=2 - y=3 with w leaking to the ground through R: c = 1 / (2 + 1/R)
    g = G.make_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (2, 0)], [1, 1, 1, 1, R], (0,))
    assert G.effective_conductance(g, 1, 3) == pytest.approx(1.0 / (2.0 + 1.0 / R))


def test_refined_preserves_green_at_original_vertices():
    g = G.grid(3, 3)
    fine = G.refined(g, 4)
    assert fine.n == g.n + 3 * g.m
    np.testing.assert_allclose(G.green_block(fine, (), [0, 4, 8]), G.green_block(g, (), [0, 4, 8]),
                               atol=1e-10)
    assert len(G.sub_vertices(g, 4, 0)) == 3


def test_json_round_trip(tmp_path):
    doc = {"vertices": ["d", "x", "y"], "edges": [{"u": "d", "v": "x", "R": 2.0},
                                                   {"u": "x", "v": "y"}],
           "boundary": ["d"], "killing": {"y": 0.5}}
    p = tmp_path / "g.json"
    p.write_text(json.dumps(doc))
    g = G.load_graph(p)
    assert g.labels == ("d", "x", "y")
    assert g.killing[2] == 0.5
    again = G.build_graph(g.to_json())
    np.testing.assert_allclose(again.laplacian(), g.laplacian())


def test_box_wired_vertex_last():
    g = G.box(1, 3)
    assert g.n == 28 and g.boundary == {27}
    o = G.index_of(g, (0, 0, 0))
    assert len(g.incident(o)) == 6
    # every vertex has degree 6 once the wire edges are counted
    assert np.all(np.bincount(g.edges[g.edges[:, 1] != 27].ravel(), minlength=27)
                  + np.bincount(g.edges[g.edges[:, 1] == 27, 0], minlength=27) == 6)
