"""Crossing parities: cycle spaces, even subgraphs and parity-conditioned counts."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .graph import CableGraph


class CycleLeavesOpenSet(ValueError):
    pass


class OddWithZeroMean(ValueError):
    pass


class InvalidProbability(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CycleBasis:
    """Fundamental cycles of a spanning forest of an edge subset.

    ``cycles[i]`` is an array of edge ids containing exactly one non-tree edge,
    ``chords[i]``.  ``matrix`` is the ``(h, m)`` 0/1 incidence of the cycles.
    """

    m: int
    edges: np.ndarray
    tree: np.ndarray
    chords: np.ndarray
    cycles: tuple
    matrix: np.ndarray

    @property
    def h(self) -> int:
        return len(self.cycles)


def _edge_ids(g: CableGraph, subset) -> np.ndarray:
    """Edge ids from ``None`` (all edges), a boolean mask, or an id array."""
    if subset is None:
        return np.arange(g.m)
    subset = np.asarray(subset)
    if subset.dtype == bool:
        return np.flatnonzero(subset)
    return np.sort(subset.astype(int))


def cycle_basis(g: CableGraph, subset=None) -> CycleBasis:
    """BFS forest from the lowest vertex id of each component of ``subset``.

    ``subset`` is a boolean edge mask or an array of edge ids (default: all
    edges).  Parallel edges and multiple components are handled.
    """
    m = g.m
    ids = _edge_ids(g, subset)
    adj: dict[int, list] = {}
    for e in ids.tolist():
        u, v = g.edges[e]
        adj.setdefault(int(u), []).append((int(v), e))
        adj.setdefault(int(v), []).append((int(u), e))
    parent: dict[int, tuple] = {}
    depth: dict[int, int] = {}
    tree = set()
    for root in sorted(adj):
        if root in depth:
            continue
        depth[root] = 0
        parent[root] = (None, None)
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w, e in adj[u]:
                if w not in depth:
                    depth[w] = depth[u] + 1
                    parent[w] = (u, e)
                    tree.add(e)
                    queue.append(w)
    chords = [e for e in ids.tolist() if e not in tree]
    cycles = []
    mat = np.zeros((len(chords), m), dtype=np.uint8)
    for i, e in enumerate(chords):
        u, v = (int(t) for t in g.edges[e])
        cyc = [e]
        while u != v:
            if depth[u] >= depth[v]:
                u, pe = parent[u]
            else:
                v, pe = parent[v]
            cyc.append(pe)
        cyc = np.array(sorted(cyc))
        cycles.append(cyc)
        mat[i, cyc] = 1
    return CycleBasis(m, ids, np.array(sorted(tree), dtype=int), np.array(chords, dtype=int),
                      tuple(cycles), mat)


def is_even(g: CableGraph, mask: np.ndarray, exempt=()) -> np.ndarray:
    """Whether every vertex outside ``exempt`` has even degree in ``mask``.

    Works on one mask ``(m,)`` or a batch ``(r, m)``.
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=np.int64))
    deg = np.zeros((len(mask), g.n), dtype=np.int64)
    np.add.at(deg.T, g.edges[:, 0], mask.T)
    np.add.at(deg.T, g.edges[:, 1], mask.T)
    keep = np.ones(g.n, dtype=bool)
    keep[list(exempt)] = False
    return np.all(deg[:, keep] % 2 == 0, axis=1)


def sample_even_subgraph(basis: CycleBasis, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform even subgraph: XOR of the fundamental cycles picked by fair coins."""
    r = 1 if size is None else size
    coins = rng.integers(0, 2, size=(r, basis.h), dtype=np.uint8)
    out = (coins.astype(np.int64) @ basis.matrix) % 2
    out = out.astype(bool)
    return out[0] if size is None else out


def even_subgraph_index(basis: CycleBasis, parity: np.ndarray) -> np.ndarray:
    """Coordinates of even subgraphs in the basis, as integers in ``[0, 2^h)``.

    An even subgraph is the XOR of the cycles whose chords it contains.
    """
    parity = np.atleast_2d(parity)
    bits = parity[:, basis.chords].astype(np.int64)
    return bits @ (1 << np.arange(basis.h, dtype=np.int64))


def enumerate_even_subgraphs(g: CableGraph, subset=None) -> list[frozenset]:
    """Brute-force list of even subgraphs (edge-id sets) of a small edge set."""
    ids = _edge_ids(g, subset)
    if len(ids) > 20:
        raise ValueError("enumeration limited to 20 edges")
    found = []
    for bits in itertools.product((0, 1), repeat=len(ids)):
        mask = np.zeros(g.m, dtype=bool)
        mask[ids[np.array(bits, dtype=bool)]] = True
        if is_even(g, mask)[0]:
            found.append(frozenset(np.flatnonzero(mask).tolist()))
    return found


@dataclass(frozen=True, eq=False)
class CrossingState:
    """Per-edge parities (or counts) of crossings on top of an open-edge set."""

    open: np.ndarray
    parity: np.ndarray
    counts: np.ndarray | None = None

    @property
    def resolution(self) -> str:
        return "counts" if self.counts is not None else "parity"


def switch_cycle(state: CrossingState, cycle) -> CrossingState:
    """Flip the crossing parity on the edges of ``cycle`` (an involution)."""
    cycle = np.asarray(cycle, dtype=int)
    if cycle.size and not np.all(state.open[cycle]):
        raise CycleLeavesOpenSet("cycle uses a closed edge")
    parity = state.parity.astype(np.uint8)
    # parallel copies of the same edge id cancel, as they should under XOR
    np.bitwise_xor.at(parity, cycle, 1)
    counts = None
    if state.counts is not None:
        counts = state.counts.copy()
        flip = np.zeros_like(parity)
        np.bitwise_xor.at(flip, cycle, 1)
        counts = counts + np.where(flip == 1, np.where(counts % 2 == 1, -1, 1), 0)
    return replace(state, parity=parity, counts=counts)


# ------------------------------------------------------------------ Poisson


def _poisson_support(m: float) -> np.ndarray:
    kmax = int(m + 12.0 * np.sqrt(m) + 40)
    return np.arange(kmax + 1)


def conditioned_poisson_pmf(m: float, parity: str = "none", kmax: int | None = None) -> np.ndarray:
    """Pmf of Poisson(m) restricted to a parity class, on ``0..kmax``."""
    if m < 0:
        raise ValueError("mean must be nonnegative")
    if parity == "odd" and m == 0:
        raise OddWithZeroMean("odd count needs a positive mean")
    k = _poisson_support(m) if kmax is None else np.arange(kmax + 1)
    if m == 0:
        p = (k == 0).astype(float)
    else:
        p = np.exp(k * np.log(m) - m - gammaln(k + 1))
    if parity == "even":
        p = np.where(k % 2 == 0, p, 0.0)
    elif parity == "odd":
        p = np.where(k % 2 == 1, p, 0.0)
    elif parity != "none":
        raise ValueError(f"unknown parity {parity!r}")
    return p / p.sum()


def conditioned_poisson(m: float, parity: str, rng: np.random.Generator, size: int | None = None):
    """Exact draw from Poisson(m) restricted to ``parity`` (inverse cdf)."""
    if parity == "none":
        return rng.poisson(m, size=size)
    cdf = np.cumsum(conditioned_poisson_pmf(m, parity))
    cdf[-1] = 1.0
    u = rng.random(size)
    out = np.searchsorted(cdf, u, side="right")
    return int(out) if size is None else out


def parity_normalizer(m: float, parity: str) -> float:
    """P[Poisson(m) in the parity class]: ``e^-m cosh m`` or ``e^-m sinh m``."""
    if parity == "even":
        return 0.5 * (1.0 + np.exp(-2.0 * m))
    if parity == "odd":
        return 0.5 * (1.0 - np.exp(-2.0 * m))
    return 1.0


# --------------------------------------------------------- discrete crossings


def crossing_pmf_discrete(A: int, B: int, p_xx: float, p_yy: float, p_xy: float) -> np.ndarray:
    """Pmf of the number ``t`` of x-y jump pairs given ``A`` visits to x and ``B`` to y.

    Weight of ``t`` is ``p_xx^-t p_yy^-t p_xy^2t / ((2t)! (A-t)! (B-t)!)``,
    evaluated in log space.  Support is ``0..min(A, B)``.
    """
    for p in (p_xx, p_yy, p_xy):
        if not 0.0 < p < 1.0:
            raise InvalidProbability(f"probability {p} outside (0, 1)")
    if A < 0 or B < 0:
        raise ValueError("visit counts must be nonnegative")
    t = np.arange(min(A, B) + 1)
    logw = (-t * np.log(p_xx) - t * np.log(p_yy) + 2 * t * np.log(p_xy)
            - gammaln(2 * t + 1) - gammaln(A - t + 1) - gammaln(B - t + 1))
    w = np.exp(logw - logw.max())
    return w / w.sum()


def crossing_pmf_limit(K: int, a: float, b: float, alpha: float) -> np.ndarray:
    """Law of ``2t`` crossings at mesh ``K`` as a pmf over crossing counts."""
    A, B = int(np.floor(a * a * K)), int(np.floor(b * b * K))
    p_xy = alpha / K
    p_xx = p_yy = 1.0 - p_xy
    pt = crossing_pmf_discrete(A, B, p_xx, p_yy, p_xy)
    out = np.zeros(2 * len(pt) - 1)
    out[::2] = pt
    return out


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    n = max(len(p), len(q))
    pp = np.zeros(n)
    qq = np.zeros(n)
    pp[: len(p)] = p
    qq[: len(q)] = q
    return 0.5 * float(np.abs(pp - qq).sum())


# ------------------------------------------------------------------ winding


def ray_crossings(cycle, ray) -> int:
    """Number of edges of ``cycle`` crossed by the dual ray."""
    ray = set(int(e) for e in ray)
    return sum(1 for e in np.asarray(cycle).tolist() if e in ray)


def winding_parity(parity: np.ndarray, ray, cluster_edges) -> int:
    """Sum mod 2 of crossing parities over cluster edges cut by the ray."""
    cl = set(int(e) for e in np.asarray(cluster_edges).tolist())
    return int(sum(int(parity[e]) for e in ray if int(e) in cl) % 2)


def has_odd_winding(basis: CycleBasis, ray) -> bool:
    """Whether the cycle space contains a cycle crossing the ray an odd number of times.

    The crossing count mod 2 is linear on the cycle space, so it suffices to
    inspect the basis.
    """
    return any(ray_crossings(c, ray) % 2 == 1 for c in basis.cycles)
