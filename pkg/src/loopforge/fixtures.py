"""Named graph fixtures with their default marked vertices."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graph as G


class UnknownFixture(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class Fixture:
    name: str
    graph: G.CableGraph
    x: int
    y: int
    ray: tuple = ()
    meta: dict = field(default_factory=dict)


def annulus(size: int = 6, hole: int = 2, killing: float = 0.002,
            radial: float = 1000.0) -> tuple[G.CableGraph, tuple]:
    """``size x size`` grid minus a centred ``hole x hole`` block, free boundary, uniform killing.

    Edges joining two concentric rings (by distance to the outer border) get
    resistance ``radial``; ring edges get 1.  Returns the graph and the edge
    ids cut by the dual ray that leaves the hole to the right between the two
    middle rows.  Weakly coupled rings and light killing make clusters that
    surround the hole, and pairs of them, common; a wired outer border pins
    the field near zero and almost none appear.
    """
    lo = (size - hole) // 2
    hi = lo + hole
    cells = [(i, j) for i in range(size) for j in range(size)
             if not (lo <= i < hi and lo <= j < hi)]
    idx = {c: k for k, c in enumerate(cells)}
    def ring(c):
        return min(c[0], c[1], size - 1 - c[0], size - 1 - c[1])

    edges, res, ray = [], [], []
    for (i, j), k in idx.items():
        for di, dj in ((0, 1), (1, 0)):
            nb = (i + di, j + dj)
            if nb in idx:
                if di == 1 and i == size // 2 - 1 and j >= hi:
                    ray.append(len(edges))
                edges.append((k, idx[nb]))
                res.append(1.0 if ring((i, j)) == ring(nb) else radial)
    coords = {k: (float(j), float(i)) for (i, j), k in idx.items()}
    n = len(cells)
    g = G.make_graph(n, edges, res, (), np.full(n, killing), coords=coords)
    return g, tuple(ray)


def load(name: str) -> Fixture:
    """Resolve a fixture id or a path to a JSON graph document."""
    if name == "path4":
        return Fixture(name, G.path(4), 1, 2)
    if name == "grid2":
        return Fixture(name, G.grid(2, 2), 0, 3)
    if name == "grid3":
        return Fixture(name, G.grid(3, 3), 3, 5)
    if name == "triangle":
        return Fixture(name, G.triangle(), 0, 1)
    if name == "k4":
        return Fixture(name, G.complete(4), 0, 1)
    if name == "parallel":
        return Fixture(name, G.parallel_pair(), 0, 1)
    if name == "annulus6":
        g, ray = annulus(6, 2)
        return Fixture(name, g, 0, 1, ray)
    m = re.fullmatch(r"box3d-(\d+)", name)
    if m:
        g = G.box(int(m.group(1)), 3)
        origin = G.index_of(g, (0, 0, 0))
        return Fixture(name, g, origin, g.n - 1)
    p = Path(name)
    if p.suffix == ".json" and p.exists():
        g = G.load_graph(p)
        inner = g.interior
        if len(inner) < 2:
            raise UnknownFixture(f"{name}: need two interior vertices")
        return Fixture(p.stem, g, int(inner[0]), int(inner[1]))
    raise UnknownFixture(name)


def near(g: G.CableGraph, center: int, radius: float) -> np.ndarray:
    """Vertices within Euclidean ``radius`` of ``center`` (by coordinates)."""
    c = np.asarray(g.coords[center], float)
    return np.array(sorted(v for v, p in g.coords.items()
                           if 0 < np.linalg.norm(np.asarray(p, float) - c) <= radius + 1e-9))
