"""Vertex-resolution Gaussian free field with Lupu's edge openness."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .graph import (
    CableGraph,
    GreenOperator,
    dirichlet_green,
    free_vertices,
    harmonic_extension,
    two_point_mass,
)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Signed vertex values (boundary entries are 0) and optional openness bits.

    ``values`` has shape ``(n,)`` for one realization or ``(r, n)`` for a batch;
    ``open`` follows with ``(m,)`` or ``(r, m)``.
    """

    values: np.ndarray
    open: np.ndarray | None = None
    seed: object = None

    @property
    def occupation(self) -> np.ndarray:
        return self.values**2


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    labels: np.ndarray
    count: int

    def same(self, u: int, v: int) -> bool:
        return bool(self.labels[u] == self.labels[v])

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def sample_field(op: GreenOperator, rng: np.random.Generator, size: int | None = None) -> FieldSample:
    """Centered Gaussian vector with covariance ``op.G`` on the free vertices."""
    r = 1 if size is None else size
    z = rng.standard_normal((r, len(op.free)))
    vals = np.zeros((r, op.n))
    vals[:, op.free] = z @ op.chol.T
    return FieldSample(vals[0] if size is None else vals)


class PinnedField:
    """Sampler of ``Gamma_0 + Phi`` for a fixed set of pinned vertices.

    ``Gamma_0`` vanishes on the pins and on the unpinned boundary.  ``Phi`` is
    linear in the pin values, so one unit profile per pin is cached.  Pins may
    sit on boundary vertices.
    """

    def __init__(self, g: CableGraph, pins: Sequence[int]):
        self.g = g
        self.pins = tuple(int(p) for p in pins)
        if not self.pins:
            raise ValueError("at least one pin required")
        self.free = free_vertices(g, self.pins)
        self.op = dirichlet_green(g, self.pins) if len(self.free) else None
        self.profiles = np.array(
            [harmonic_extension(g, {q: float(q == p) for q in self.pins}) for p in self.pins]
        )

    def harmonic(self, pin_values) -> np.ndarray:
        """``Phi`` for pin values of shape ``(k,)`` or ``(r, k)``."""
        return np.asarray(pin_values, dtype=float) @ self.profiles

    def sample(self, pin_values, rng: np.random.Generator) -> np.ndarray:
        """Fields of shape ``(r, n)`` for pin values of shape ``(r, k)``."""
        pv = np.atleast_2d(np.asarray(pin_values, dtype=float))
        out = self.harmonic(pv)
        if self.op is not None:
            z = rng.standard_normal((len(pv), len(self.free)))
            out[:, self.free] += z @ self.op.chol.T
        return out


def condition_on_values(g: CableGraph, pins: Mapping[int, float], rng: np.random.Generator,
                        size: int | None = None) -> FieldSample:
    """Field conditioned on prescribed values at the pinned vertices."""
    sampler = PinnedField(g, list(pins))
    vals = np.tile([pins[p] for p in sampler.pins], (1 if size is None else size, 1))
    out = sampler.sample(vals, rng)
    return FieldSample(out[0] if size is None else out)


def open_probability(gu, gv, R) -> np.ndarray:
    """Probability that a Brownian bridge of duration R from gu to gv has no zero."""
    prod = np.asarray(gu, dtype=float) * np.asarray(gv, dtype=float)
    return np.where(prod > 0, -np.expm1(-2.0 * np.maximum(prod, 0.0) / R), 0.0)


def lupu_open(gu, gv, R, rng: np.random.Generator) -> np.ndarray:
    p = open_probability(gu, gv, R)
    return rng.random(np.shape(p)) < p


def open_edges(g: CableGraph, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Lupu openness bits for a batch of fields, shape ``(r, m)``."""
    values = np.atleast_2d(values)
    return lupu_open(values[:, g.edges[:, 0]], values[:, g.edges[:, 1]], g.resistance, rng)


def with_openness(g: CableGraph, field: FieldSample, rng: np.random.Generator) -> FieldSample:
    op = open_edges(g, field.values, rng)
    return FieldSample(field.values, op[0] if field.values.ndim == 1 else op, field.seed)


def batch_labels(g: CableGraph, open_mask: np.ndarray) -> np.ndarray:
    """Cluster labels for a batch of openness masks, shape ``(r, n)``.

    All replicas go into one block-diagonal graph so a single call labels the
    whole batch.  Labels are unique across replicas.
    """
    open_mask = np.atleast_2d(open_mask)
    r = len(open_mask)
    rep, e = np.nonzero(open_mask)
    u = g.edges[e, 0] + rep * g.n
    v = g.edges[e, 1] + rep * g.n
    N = r * g.n
    adj = sparse.coo_matrix((np.ones(len(u), dtype=np.int8), (u, v)), shape=(N, N))
    _, labels = connected_components(adj, directed=False)
    return labels.reshape(r, g.n)


def connected(g: CableGraph, open_mask: np.ndarray, x: int, y: int) -> np.ndarray:
    lab = batch_labels(g, open_mask)
    return lab[:, x] == lab[:, y]


def clusters(g: CableGraph, field: FieldSample) -> ClusterPartition:
    """Sign clusters of one field: components of the open-edge graph."""
    if field.open is None:
        raise ValueError("openness bits not populated")
    lab = batch_labels(g, field.open)[0]
    _, lab = np.unique(lab, return_inverse=True)
    return ClusterPartition(lab, int(lab.max()) + 1)


def p_same_sign(m: float) -> float:
    return float(1.0 / (1.0 + np.exp(-2.0 * m)))


def p_connect_given_occupations(m: float) -> float:
    return float(np.tanh(m))


def p_connect_given_signed(m: float) -> float:
    return float(-np.expm1(-2.0 * m))


def draw_same_sign(m: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Sign of ``gamma(y)`` relative to ``gamma(x)`` given both absolute values."""
    return np.where(rng.random(size) < p_same_sign(m), 1.0, -1.0)


class TwoPointSampler:
    """Field given ``|gamma(x)| = a`` and ``|gamma(y)| = b`` with free signs.

    The relative sign is drawn from its exact law, then the field is
    Gaussian-conditioned on the signed values.  ``gamma(x)`` is taken positive;
    the global sign flip leaves every occupation functional unchanged.
    """

    def __init__(self, g: CableGraph, x: int, y: int, a: float, b: float):
        self.g, self.x, self.y, self.a, self.b = g, int(x), int(y), float(a), float(b)
        self.m = two_point_mass(g, x, y, a, b)
        self.pinned = PinnedField(g, (x, y))

    def sample(self, rng: np.random.Generator, size: int, signs: np.ndarray | None = None):
        """Return ``(values, open, sign, connected)`` for ``size`` replicas."""
        if signs is None:
            signs = draw_same_sign(self.m, rng, size)
        pins = np.column_stack([np.full(size, self.a), signs * self.b])
        vals = self.pinned.sample(pins, rng)
        op = open_edges(self.g, vals, rng)
        conn = connected(self.g, op, self.x, self.y)
        return vals, op, signs, conn
