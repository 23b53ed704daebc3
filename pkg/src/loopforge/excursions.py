"""Poisson ensembles of conditioned random-walk excursions.

Walks are the vertex trace of cable-graph Brownian motion: the jump chain
moves along edge ``e`` with probability ``c_e / c_v`` and holds an
``Exp(c_v)`` time at ``v``, where ``c_v`` is incident conductance plus
killing.  Conditioning on a hitting event is a Doob h-transform, which only
changes the jump probabilities.

Occupation in units of the squared field is ``OCCUPATION_FACTOR`` times the
holding time.  The x-to-x ensemble at root ``a`` has intensity
``INTENSITY_FACTOR * a^2`` times the walk-level excursion mass.  Both
constants are fixed by matching the mean ``a^2 phi(z)^2`` and the variance
``4 a^2 phi(z)^2 G_0(z, z)`` of the occupation at ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import CableGraph, GraphError, harmonic_extension
from .loops import conditioned_poisson

INTENSITY_FACTOR = 0.5
OCCUPATION_FACTOR = 2.0


class ZeroMass(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ExcursionPath:
    """Vertex sequence with holding times; the endpoints carry 0."""

    vertices: np.ndarray
    local_times: np.ndarray
    edges: np.ndarray

    @property
    def source(self) -> int:
        return int(self.vertices[0])

    @property
    def target(self) -> int:
        return int(self.vertices[-1])


@dataclass(eq=False)
class ExcursionEnsemble:
    paths: list
    local_time: np.ndarray
    traversals: np.ndarray

    @property
    def occupation(self) -> np.ndarray:
        return OCCUPATION_FACTOR * self.local_time

    @classmethod
    def empty(cls, g: CableGraph) -> "ExcursionEnsemble":
        return cls([], np.zeros(g.n), np.zeros(g.m, dtype=np.int64))

    def add(self, path: ExcursionPath) -> None:
        self.paths.append(path)
        np.add.at(self.local_time, path.vertices, path.local_times)
        np.add.at(self.traversals, path.edges, 1)


class WalkKernel:
    """Padded jump tables for vectorized walks.

    Row ``v`` lists the edges out of ``v`` with cumulative jump probabilities;
    the extra column leads to the cemetery state ``n`` (killing).  With ``h``
    given, jumps are reweighted by ``h`` at the far end and the cemetery is
    dropped, which realizes the h-transform.  Walks stop on entering ``stop``.
    """

    def __init__(self, g: CableGraph, stop, h: np.ndarray | None = None):
        self.g = g
        n = g.n
        self.rate = g.total_conductance()
        self.stop = np.zeros(n + 1, dtype=bool)
        self.stop[list(stop)] = True
        self.stop[n] = True
        c = g.conductance
        rows = [[] for _ in range(n)]
        for e, (u, v) in enumerate(g.edges.tolist()):
            rows[u].append((v, e))
            rows[v].append((u, e))
        width = 1 + max((len(rows[v]) for v in range(n) if not self.stop[v]), default=0)
        self.nbr = np.full((n, width), n, dtype=np.int64)
        self.eid = np.full((n, width), -1, dtype=np.int64)
        self.cum = np.ones((n, width))
        for v in range(n):
            if self.stop[v]:
                continue
            targets = [w for w, _ in rows[v]] + [n]
            eids = [e for _, e in rows[v]] + [-1]
            w = np.array([c[e] for _, e in rows[v]] + [g.killing[v]])
            if h is not None:
                w = w * np.append(h[[t for t, _ in rows[v]]], 0.0)
            if w.sum() <= 0:
                continue  # h vanishes here, so the h-walk never visits v
            k = len(targets)
            self.nbr[v, :k] = targets
            self.eid[v, :k] = eids
            self.cum[v, :k] = np.cumsum(w) / w.sum()
            self.cum[v, k - 1:] = 1.0

    def step(self, v: np.ndarray, rng: np.random.Generator):
        u = rng.random(len(v))
        k = (self.cum[v] < u[:, None]).sum(axis=1)
        return self.nbr[v, k], self.eid[v, k]


@dataclass(frozen=True, eq=False)
class FirstStep:
    """Distribution of the first edge out of a source, and its total weight."""

    edges: np.ndarray
    targets: np.ndarray
    cum: np.ndarray
    mass: float

    def draw(self, rng: np.random.Generator, size: int):
        k = np.searchsorted(self.cum, rng.random(size), side="right")
        return self.targets[k], self.edges[k]


def first_step(g: CableGraph, source: int, h: np.ndarray) -> FirstStep:
    eids = g.incident(source)
    targets = np.array([g.other(e, source) for e in eids], dtype=np.int64)
    w = g.conductance[eids] * h[targets]
    keep = w > 0
    eids, targets, w = eids[keep], targets[keep], w[keep]
    mass = float(w.sum())
    cum = np.cumsum(w) / mass if mass > 0 else np.ones(0)
    if len(cum):
        cum[-1] = 1.0
    return FirstStep(eids, targets, cum, mass)


def hitting_profile(g: CableGraph, target: int, avoid) -> np.ndarray:
    """``P_w[hit target before avoid, the boundary, or killing]``."""
    pins = {int(target): 1.0}
    for v in avoid:
        pins[int(v)] = 0.0
    return harmonic_extension(g, pins)


def run_walkers(kernel: WalkKernel, start: np.ndarray, owner: np.ndarray, column: np.ndarray,
                out: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Advance every walker to a stop vertex, adding holding times into ``out``.

    ``column[v]`` is the output column tracking vertex ``v`` (or -1);
    ``out[owner, column]`` accumulates raw holding time.  Returns step counts.
    """
    v = np.asarray(start, dtype=np.int64)
    who = np.arange(len(v))
    own = np.asarray(owner, dtype=np.int64)
    steps = np.zeros(len(v), dtype=np.int64)
    live = ~kernel.stop[v]
    v, who, own = v[live], who[live], own[live]
    while len(v):
        hold = rng.exponential(1.0, len(v)) / kernel.rate[v]
        col = column[v]
        t = col >= 0
        np.add.at(out, (own[t], col[t]), hold[t])
        v, _ = kernel.step(v, rng)
        steps[who] += 1
        live = ~kernel.stop[v]
        v, who, own = v[live], who[live], own[live]
    return steps


def _walk_path(kernel: WalkKernel, source: int, w: int, e0: int, rng) -> ExcursionPath:
    verts, times, edges = [source], [0.0], [e0]
    v = int(w)
    while not kernel.stop[v]:
        verts.append(v)
        times.append(rng.exponential(1.0) / kernel.rate[v])
        nv, ne = kernel.step(np.array([v]), rng)
        v, e = int(nv[0]), int(ne[0])
        edges.append(e)
    verts.append(v)
    times.append(0.0)
    return ExcursionPath(np.array(verts), np.array(times), np.array(edges))


class XYSampler:
    """Excursions from ``x`` conditioned to reach ``y`` first."""

    def __init__(self, g: CableGraph, x: int, y: int):
        if x == y:
            raise GraphError("x and y must differ")
        self.g, self.x, self.y = g, int(x), int(y)
        self.h = hitting_profile(g, y, [x])
        self.first = first_step(g, x, self.h)
        if self.first.mass <= 0:
            raise ZeroMass("x and y are separated by the boundary")
        self.kernel = WalkKernel(g, set(g.boundary) | {self.x, self.y}, self.h)

    @property
    def mass(self) -> float:
        """Walk-level excursion mass; equals the effective conductance."""
        return self.first.mass

    def path(self, rng: np.random.Generator) -> ExcursionPath:
        w, e = self.first.draw(rng, 1)
        return _walk_path(self.kernel, self.x, int(w[0]), int(e[0]), rng)


class ReturnSampler:
    """Excursions from ``x`` back to ``x`` that avoid ``avoid`` and the boundary."""

    def __init__(self, g: CableGraph, x: int, avoid=()):
        self.g, self.x = g, int(x)
        self.avoid = tuple(int(v) for v in avoid)
        self.h = hitting_profile(g, x, self.avoid)
        self.first = first_step(g, x, self.h)
        self.kernel = WalkKernel(g, set(g.boundary) | {self.x} | set(self.avoid), self.h)

    def intensity(self, a: float) -> float:
        """Mean number of excursions that leave ``x`` by a full mesh step."""
        return INTENSITY_FACTOR * a * a * self.first.mass

    def path(self, rng: np.random.Generator) -> ExcursionPath:
        w, e = self.first.draw(rng, 1)
        return _walk_path(self.kernel, self.x, int(w[0]), int(e[0]), rng)


def sample_xy_excursion(g: CableGraph, x: int, y: int, rng: np.random.Generator) -> ExcursionPath:
    return XYSampler(g, x, y).path(rng)


def sample_xy_ensemble(g: CableGraph, x: int, y: int, m: float, parity: str,
                       rng: np.random.Generator) -> ExcursionEnsemble:
    s = XYSampler(g, x, y)
    ens = ExcursionEnsemble.empty(g)
    for _ in range(int(conditioned_poisson(m, parity, rng))):
        ens.add(s.path(rng))
    return ens


def sample_xx_ensemble(g: CableGraph, x: int, y, a: float, rng: np.random.Generator) -> ExcursionEnsemble:
    """Return excursions from ``x`` avoiding ``y`` (``None`` for no extra avoidance)."""
    avoid = () if y is None else (y,)
    s = ReturnSampler(g, x, avoid)
    ens = ExcursionEnsemble.empty(g)
    if a == 0:
        return ens
    for _ in range(int(rng.poisson(s.intensity(a)))):
        ens.add(s.path(rng))
    return ens


def boundary_excursion_to_infinity(g: CableGraph, x: int, rng: np.random.Generator) -> ExcursionPath:
    """Excursion from ``x`` to the wired boundary vertex."""
    if len(g.boundary) != 1:
        raise GraphError("expected a single wired boundary vertex")
    (d,) = g.boundary
    return sample_xy_excursion(g, x, d, rng)


def edge_open_given_no_crossing(lam_u, lam_v, R) -> np.ndarray:
    """Probability that an uncrossed edge is zero-free given endpoint occupations."""
    return -np.expm1(-np.sqrt(np.asarray(lam_u, float) * np.asarray(lam_v, float)) / R)


@dataclass(eq=False)
class OverlaySampler:
    """Batch sampler of excursion occupations at tracked vertices.

    Combines return ensembles at ``x`` (root ``a``) and ``y`` (root ``b``) with
    a parity-conditioned Poisson number of x-to-y excursions of mean ``m``.
    Setting a root to ``None`` drops that ensemble.
    """

    g: CableGraph
    x: int
    y: int
    tracked: np.ndarray
    a: float | None
    b: float | None
    xy: XYSampler = field(init=False)
    ret_x: ReturnSampler | None = field(init=False)
    ret_y: ReturnSampler | None = field(init=False)

    def __post_init__(self):
        self.tracked = np.asarray(self.tracked, dtype=np.int64)
        self.column = np.full(self.g.n + 1, -1, dtype=np.int64)
        self.column[self.tracked] = np.arange(len(self.tracked))
        self.xy = XYSampler(self.g, self.x, self.y)
        self.ret_x = ReturnSampler(self.g, self.x, (self.y,)) if self.a else None
        self.ret_y = ReturnSampler(self.g, self.y, (self.x,)) if self.b else None

    def sample(self, n_xy: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Occupations ``(r, k)`` given the per-replica x-y excursion counts."""
        r = len(n_xy)
        out = np.zeros((r, len(self.tracked)))
        groups = []
        if self.ret_x is not None:
            groups.append((self.ret_x, rng.poisson(self.ret_x.intensity(self.a), r)))
        if self.ret_y is not None:
            groups.append((self.ret_y, rng.poisson(self.ret_y.intensity(self.b), r)))
        groups.append((self.xy, np.asarray(n_xy, dtype=np.int64)))
        for s, counts in groups:
            owner = np.repeat(np.arange(r), counts)
            start, _ = s.first.draw(rng, len(owner))
            run_walkers(s.kernel, start, owner, self.column, out, rng)
        return OCCUPATION_FACTOR * out
