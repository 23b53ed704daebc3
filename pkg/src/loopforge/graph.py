"""Cable graphs as electrical networks.

A cable graph is stored at vertex resolution: every edge is a segment with a
resistance ``R`` (its length), the boundary vertices carry a Dirichlet zero,
and vertices may carry a killing rate.  All linear algebra is dense.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping

import numpy as np
from scipy import linalg


class GraphError(ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class NoKillingNoBoundary(GraphError):
    pass


class NonpositiveResistance(GraphError):
    pass


class SameVertex(GraphError):
    pass


class SingularLaplacian(GraphError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CableGraph:
    """Weighted multigraph with Dirichlet boundary and vertex killing.

    Vertices are indexed ``0..n-1``; ``labels`` keeps the user-facing ids.
    Parallel edges are kept as separate rows of ``edges``.
    """

    n: int
    edges: np.ndarray  # (m, 2) int
    resistance: np.ndarray  # (m,)
    boundary: frozenset
    killing: np.ndarray  # (n,)
    labels: tuple = ()
    coords: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def conductance(self) -> np.ndarray:
        return 1.0 / self.resistance

    @property
    def interior(self) -> np.ndarray:
        return np.array([v for v in range(self.n) if v not in self.boundary], dtype=int)

    def index(self, label: Hashable) -> int:
        return self.labels.index(label)

    def incident(self, v: int) -> np.ndarray:
        return np.flatnonzero((self.edges[:, 0] == v) | (self.edges[:, 1] == v))

    def other(self, e: int, v: int) -> int:
        u, w = self.edges[e]
        return int(w if u == v else u)

    def laplacian(self) -> np.ndarray:
        """Full ``n x n`` weighted Laplacian; killing rates sit on the diagonal."""
        L = np.zeros((self.n, self.n))
        c = self.conductance
        u, v = self.edges[:, 0], self.edges[:, 1]
        np.add.at(L, (u, v), -c)
        np.add.at(L, (v, u), -c)
        np.add.at(L, (u, u), c)
        np.add.at(L, (v, v), c)
        L[np.diag_indices(self.n)] += self.killing
        return L

    def total_conductance(self) -> np.ndarray:
        """Holding rate of the vertex walk: incident conductance plus killing."""
        out = self.killing.astype(float).copy()
        np.add.at(out, self.edges[:, 0], self.conductance)
        np.add.at(out, self.edges[:, 1], self.conductance)
        return out

    def to_json(self) -> dict:
        lab = list(self.labels) if self.labels else list(range(self.n))
        return {
            "vertices": lab,
            "edges": [
                {"u": lab[u], "v": lab[v], "R": float(r)}
                for (u, v), r in zip(self.edges.tolist(), self.resistance)
            ],
            "boundary": [lab[b] for b in sorted(self.boundary)],
            "killing": {str(lab[i]): float(k) for i, k in enumerate(self.killing) if k > 0},
        }


def _components(n: int, edges: np.ndarray) -> int:
    adj = [[] for _ in range(n)]
    for u, v in edges.tolist():
        adj[u].append(v)
        adj[v].append(u)
    seen = np.zeros(n, dtype=bool)
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return count


def make_graph(n, edges, resistance, boundary=(), killing=None, labels=None, coords=None) -> CableGraph:
    """Validate and freeze a graph given in index form."""
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    resistance = np.asarray(resistance, dtype=float).reshape(-1)
    if len(resistance) != len(edges):
        raise GraphError("one resistance per edge required")
    if np.any(~np.isfinite(resistance)) or np.any(resistance <= 0):
        raise NonpositiveResistance("resistances must be finite and > 0")
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise GraphError("edge endpoint out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise GraphError("self-loops are not cable edges")
    killing = np.zeros(n) if killing is None else np.asarray(killing, dtype=float).copy()
    if killing.shape != (n,) or np.any(killing < 0):
        raise GraphError("killing rates must be a nonnegative per-vertex array")
    boundary = frozenset(int(b) for b in boundary)
    if n == 0 or _components(n, edges) != 1:
        raise DisconnectedGraph("graph must be connected")
    if not boundary and not np.any(killing > 0):
        raise NoKillingNoBoundary("need a boundary vertex or positive killing")
    labels = tuple(labels) if labels is not None else tuple(range(n))
    return CableGraph(
        n=n,
        edges=_readonly(edges.copy()),
        resistance=_readonly(resistance.copy()),
        boundary=boundary,
        killing=_readonly(killing),
        labels=labels,
        coords=dict(coords or {}),
    )


def build_graph(spec: Mapping) -> CableGraph:
    """Build from the JSON document form.

    ``{"vertices": [...], "edges": [{"u":..,"v":..,"R":..}], "boundary": [...],
    "killing": {id: rate}}``
    """
    vertices = list(spec["vertices"])
    pos = {v: i for i, v in enumerate(vertices)}
    if len(pos) != len(vertices):
        raise GraphError("duplicate vertex ids")
    # JSON object keys are strings, so killing ids are matched by str() as well
    spos = {str(v): i for i, v in enumerate(vertices)}

    def lookup(v):
        if v in pos:
            return pos[v]
        if str(v) in spos:
            return spos[str(v)]
        raise GraphError(f"unknown vertex {v!r}")

    edges, res = [], []
    for e in spec.get("edges", []):
        edges.append((lookup(e["u"]), lookup(e["v"])))
        res.append(e.get("R", 1.0))
    killing = np.zeros(len(vertices))
    for v, k in (spec.get("killing") or {}).items():
        killing[lookup(v)] = k
    boundary = [lookup(b) for b in spec.get("boundary", [])]
    return make_graph(len(vertices), edges, res, boundary, killing, labels=vertices)


def load_graph(path: str | Path) -> CableGraph:
    return build_graph(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- generators


def path(n: int, R: float = 1.0) -> CableGraph:
    """Path on ``n`` vertices whose two end vertices are boundary."""
    if n < 3:
        raise GraphError("path needs at least 3 vertices")
    edges = [(i, i + 1) for i in range(n - 1)]
    return make_graph(n, edges, [R] * len(edges), boundary=(0, n - 1))


def grid(w: int, h: int, boundary: str = "wired", R: float = 1.0, killing: float = 0.0) -> CableGraph:
    """``w x h`` grid; vertex ``(i, j)`` has index ``i * w + j``.

    ``wired``: one extra vertex (index ``w*h``) absorbs every missing lattice
    neighbour of the outer ring, so corners get two parallel edges to it.
    ``free``: no boundary; a positive uniform ``killing`` is then required.
    """
    edges, coords = [], {}
    for i in range(h):
        for j in range(w):
            v = i * w + j
            coords[v] = (float(j), float(i))
            if j + 1 < w:
                edges.append((v, v + 1))
            if i + 1 < h:
                edges.append((v, v + w))
    n = w * h
    kill = np.full(n, float(killing))
    bnd: tuple = ()
    if boundary == "wired":
        wire = n
        for i in range(h):
            for j in range(w):
                missing = (i == 0) + (i == h - 1) + (j == 0) + (j == w - 1)
                edges.extend([(i * w + j, wire)] * missing)
        n += 1
        kill = np.append(kill, 0.0)
        bnd = (wire,)
    elif boundary != "free":
        raise GraphError(f"unknown boundary mode {boundary!r}")
    return make_graph(n, edges, [R] * len(edges), bnd, kill, coords=coords)


def box(L: int, d: int = 3, R: float = 1.0) -> CableGraph:
    """Wired box ``[-L, L]^d``: the outside of the box is collapsed to one vertex.

    The origin is vertex ``index_of(box, (0,)*d)``; the wired vertex is last.
    """
    side = 2 * L + 1
    shape = (side,) * d
    n = side**d
    coords = {}
    edges = []
    for idx in np.ndindex(*shape):
        v = int(np.ravel_multi_index(idx, shape))
        coords[v] = tuple(int(i) - L for i in idx)
        for k in range(d):
            if idx[k] + 1 < side:
                nb = list(idx)
                nb[k] += 1
                edges.append((v, int(np.ravel_multi_index(nb, shape))))
            if idx[k] == 0:
                edges.append((v, n))
            if idx[k] == side - 1:
                edges.append((v, n))
    return make_graph(n + 1, edges, [R] * len(edges), (n,), coords=coords)


def index_of(g: CableGraph, coord: tuple) -> int:
    for v, c in g.coords.items():
        if tuple(c) == tuple(coord):
            return v
    raise GraphError(f"no vertex at {coord}")


def triangle(R: float = 1.0) -> CableGraph:
    """Triangle 0-1-2, each corner wired to the boundary vertex 3."""
    edges = [(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3)]
    return make_graph(4, edges, [R] * 6, (3,))


def parallel_pair(R: float = 1.0) -> CableGraph:
    """x=0, y=1 joined by two parallel edges; each also wired to boundary 2."""
    edges = [(0, 1), (0, 1), (0, 2), (1, 2)]
    return make_graph(3, edges, [R] * 4, (2,))


def separated_pair(R: float = 1.0) -> CableGraph:
    """x=0 and y=2 joined only through the boundary vertex 1."""
    return make_graph(3, [(0, 1), (1, 2)], [R, R], (1,))


def complete(k: int, R: float = 1.0) -> CableGraph:
    """``K_k`` with every vertex wired to an extra boundary vertex ``k``."""
    edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges += [(i, k) for i in range(k)]
    return make_graph(k + 1, edges, [R] * len(edges), (k,))


def refined(g: CableGraph, K: int) -> CableGraph:
    """Split every edge into ``K`` sub-edges of resistance ``R/K``.

    Original vertices keep their indices; the ``K-1`` new vertices of edge
    ``e`` are appended in order from ``edges[e, 0]`` towards ``edges[e, 1]``.
    """
    if K < 1:
        raise GraphError("K must be >= 1")
    if K == 1:
        return g
    n = g.n
    edges, res = [], []
    coords = dict(g.coords)
    for e, ((u, v), r) in enumerate(zip(g.edges.tolist(), g.resistance)):
        chain = [u] + list(range(n, n + K - 1)) + [v]
        if u in g.coords and v in g.coords:
            cu, cv = np.asarray(g.coords[u], float), np.asarray(g.coords[v], float)
            for s, w in enumerate(chain[1:-1], start=1):
                coords[w] = tuple(cu + (cv - cu) * s / K)
        n += K - 1
        for a, b in zip(chain[:-1], chain[1:]):
            edges.append((a, b))
            res.append(r / K)
    killing = np.concatenate([g.killing, np.zeros(n - g.n)])
    labels = tuple(g.labels) + tuple(("sub", i) for i in range(g.n, n))
    return make_graph(n, edges, res, g.boundary, killing, labels=labels, coords=coords)


def sub_vertices(g: CableGraph, K: int, e: int) -> list[int]:
    """Indices that ``refined(g, K)`` inserts on edge ``e``."""
    start = g.n + e * (K - 1)
    return list(range(start, start + K - 1))


# ------------------------------------------------------------- linear algebra


@dataclass(frozen=True, eq=False)
class GreenOperator:
    """Dirichlet Green's function on the free vertices of a graph.

    ``free`` lists the vertices where the field is random; ``G`` is the inverse
    of the Laplacian restricted to them and ``chol`` its lower Cholesky factor.
    """

    n: int
    free: np.ndarray
    G: np.ndarray
    chol: np.ndarray

    def value(self, u: int, v: int) -> float:
        pos = {int(w): i for i, w in enumerate(self.free)}
        return float(self.G[pos[u], pos[v]])

    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.free] = np.diag(self.G)
        return out


def free_vertices(g: CableGraph, pinned: Iterable[int] = ()) -> np.ndarray:
    fixed = set(g.boundary) | {int(p) for p in pinned}
    return np.array([v for v in range(g.n) if v not in fixed], dtype=int)


def _green_on(g: CableGraph, free: np.ndarray) -> GreenOperator:
    L = g.laplacian()[np.ix_(free, free)]
    try:
        c = linalg.cholesky(L, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularLaplacian(str(exc)) from exc
    G = linalg.cho_solve((c, True), np.eye(len(free)))
    G = 0.5 * (G + G.T)
    try:
        chol = linalg.cholesky(G, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularLaplacian(str(exc)) from exc
    return GreenOperator(n=g.n, free=_readonly(free), G=_readonly(G), chol=_readonly(chol))


def green(g: CableGraph) -> GreenOperator:
    """Green's function of the graph: inverse of the interior Laplacian."""
    return _green_on(g, free_vertices(g))


def dirichlet_green(g: CableGraph, pinned: Iterable[int]) -> GreenOperator:
    """Green's function of ``G`` minus ``pinned`` (pinned vertices become Dirichlet)."""
    return _green_on(g, free_vertices(g, pinned))


def harmonic_extension(g: CableGraph, pinned: Mapping[int, float]) -> np.ndarray:
    """Harmonic function with the pinned values and zero on the rest of the boundary.

    Pinning a boundary vertex overrides its Dirichlet zero.
    """
    if not pinned:
        raise GraphError("pinned set must be nonempty")
    values = np.zeros(g.n)
    for v, val in pinned.items():
        values[int(v)] = val
    free = free_vertices(g, pinned)
    if len(free) == 0:
        return values
    L = g.laplacian()
    fixed = np.array([v for v in range(g.n) if v not in set(free.tolist())], dtype=int)
    rhs = -L[np.ix_(free, fixed)] @ values[fixed]
    values[free] = linalg.solve(L[np.ix_(free, free)], rhs, assume_a="pos")
    return values


def effective_conductance(g: CableGraph, x: int, y: int) -> float:
    """Effective conductance between ``x`` and ``y`` with the rest of the boundary grounded.

    Off-diagonal magnitude of the Schur complement of the Laplacian onto
    ``{x, y}``.  Either endpoint may be a boundary vertex, which is then
    released from its Dirichlet condition.  Returns 0 when every route between
    ``x`` and ``y`` runs through the grounded boundary.
    """
    x, y = int(x), int(y)
    if x == y:
        raise SameVertex("x and y must differ")
    L = g.laplacian()
    P = np.array([x, y])
    U = free_vertices(g, (x, y))
    S = L[np.ix_(P, P)]
    if len(U):
        S = S - L[np.ix_(P, U)] @ linalg.solve(L[np.ix_(U, U)], L[np.ix_(U, P)], assume_a="pos")
    return max(0.0, float(-S[0, 1]))


def two_point_mass(g: CableGraph, x: int, y: int, a: float, b: float) -> float:
    """Poisson mean of the excursions joining x and y: ``a*b*c_eff(x, y)``."""
    if a < 0 or b < 0:
        raise GraphError("roots must be nonnegative")
    return a * b * effective_conductance(g, x, y)


def two_point_mass_green(op: GreenOperator, x: int, y: int, a: float, b: float) -> float:
    """Same quantity through the 2x2 Green submatrix: ``ab G(x,y)/det``."""
    if x == y:
        raise SameVertex("x and y must differ")
    gxx, gyy, gxy = op.value(x, x), op.value(y, y), op.value(x, y)
    return a * b * gxy / (gxx * gyy - gxy * gxy)


def green_block(g: CableGraph, pinned: Iterable[int], vertices: Iterable[int]) -> np.ndarray:
    """Entries ``G_U(u, v)`` for ``u, v`` in ``vertices``, where ``U`` excludes the pins.

    Solves only for the requested columns, for graphs too large to invert.
    """
    free = free_vertices(g, pinned)
    pos = {int(w): i for i, w in enumerate(free)}
    cols = [pos[int(v)] for v in vertices]
    L = g.laplacian()[np.ix_(free, free)]
    try:
        c = linalg.cho_factor(L, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularLaplacian(str(exc)) from exc
    rhs = np.zeros((len(free), len(cols)))
    rhs[cols, np.arange(len(cols))] = 1.0
    sol = linalg.cho_solve(c, rhs)
    block = sol[cols]
    return 0.5 * (block + block.T)
