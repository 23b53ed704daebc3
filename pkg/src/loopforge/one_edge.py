"""Single-edge laboratory: Brownian bridges and squared Bessel processes on [0, 1]."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loops import conditioned_poisson
from .report import TestReport
from .seeding import run_fixed


@dataclass(frozen=True, eq=False)
class GridPath:
    """Values on the uniform grid ``t_i = i * delta``; shape ``(n+1,)`` or ``(r, n+1)``."""

    delta: float
    values: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.shape[-1])


def grid_steps(delta: float) -> int:
    n = int(round(1.0 / delta))
    if n < 100 or abs(n * delta - 1.0) > 1e-9:
        raise ValueError("delta must be 1/n with integer n >= 100")
    return n


def standard_bridges(n: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Brownian bridges 0 -> 0 on ``n`` steps, shape ``(size, n+1)``."""
    w = np.zeros((size, n + 1))
    w[:, 1:] = np.cumsum(rng.standard_normal((size, n)) * np.sqrt(1.0 / n), axis=1)
    t = np.linspace(0.0, 1.0, n + 1)
    return w - t * w[:, -1:]


def sample_bridge(a: float, b: float, delta: float, rng: np.random.Generator,
                  size: int | None = None) -> GridPath:
    n = grid_steps(delta)
    t = np.linspace(0.0, 1.0, n + 1)
    x = standard_bridges(n, rng, 1 if size is None else size) + a + (b - a) * t
    return GridPath(delta, x[0] if size is None else x)


def no_zero_between(x: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Per path: positive on the grid and no zero inside any grid step.

    Each step is a Brownian bridge of duration ``delta`` between its grid
    values; it avoids 0 with probability ``1 - exp(-2 x_i x_{i+1} / delta)``.
    """
    x = np.atleast_2d(x)
    if x.shape[1] < 2:
        return np.all(x > 0, axis=1)
    pos = np.all(x > 0, axis=1)
    prod = np.maximum(x[:, :-1] * x[:, 1:], 0.0)
    keep = rng.random(prod.shape) < -np.expm1(-2.0 * prod / delta)
    return pos & np.all(keep, axis=1)


def condition_positive(a: float, b: float, delta: float, rng: np.random.Generator,
                       size: int) -> tuple[GridPath, tuple[int, int]]:
    """Bridges a -> b conditioned to stay positive.

    Also returns ``(accepted, tries)`` over every proposal made, surplus
    acceptances included, so their ratio estimates the acceptance rate.
    """
    if a <= 0 or b <= 0:
        raise ValueError("endpoints must be positive")
    got, tries, acc = [], 0, 0
    need = size
    while need > 0:
        batch = max(need, 64)
        x = sample_bridge(a, b, delta, rng, batch).values
        ok = no_zero_between(x, delta, rng)
        tries += batch
        acc += int(ok.sum())
        got.append(x[ok][:need])
        need -= min(need, int(ok.sum()))
    return GridPath(delta, np.concatenate(got)), (acc, tries)


def reflected_bridge(a: float, b: float, delta: float, rng: np.random.Generator, size: int) -> GridPath:
    """``|X|`` for Brownian motion from ``a`` conditioned on ``|X(1)| = b``."""
    same = rng.random(size) < 1.0 / (1.0 + np.exp(-2.0 * a * b))
    n = grid_steps(delta)
    t = np.linspace(0.0, 1.0, n + 1)
    end = np.where(same, b, -b)[:, None]
    x = standard_bridges(n, rng, size) + a + (end - a) * t
    return GridPath(delta, np.abs(x))


def sample_besq0(x0, delta: float, rng: np.random.Generator, size: int | None = None) -> GridPath:
    """Zero-dimensional squared Bessel process, exact transitions on the grid.

    From state ``x`` a step of length ``delta`` lands at ``Gamma(N, 2 delta)``
    with ``N ~ Poisson(x / (2 delta))``, and at 0 when ``N = 0``.
    """
    n = grid_steps(delta)
    r = 1 if size is None else size
    out = np.zeros((r, n + 1))
    out[:, 0] = x0
    x = out[:, 0].copy()
    for i in range(1, n + 1):
        k = rng.poisson(x / (2.0 * delta))
        x = np.where(k > 0, rng.gamma(np.maximum(k, 1), 2.0 * delta), 0.0)
        out[:, i] = x
    return GridPath(delta, out[0] if size is None else out)


def besq0_absorbed_before_one(x0: float, delta: float, rng: np.random.Generator,
                              size: int) -> tuple[GridPath, tuple[int, int]]:
    """BESQ0 paths from ``x0`` conditioned on absorption by time 1 (rejection)."""
    got, tries, acc, need = [], 0, 0, size
    while need > 0:
        batch = max(need, 64)
        x = sample_besq0(x0, delta, rng, batch).values
        ok = x[:, -1] == 0.0
        tries += batch
        acc += int(ok.sum())
        got.append(x[ok][:need])
        need -= min(need, int(ok.sum()))
    return GridPath(delta, np.concatenate(got)), (acc, tries)


def besq_bridges(dims: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Squared Bessel bridges 0 -> 0 of integer dimensions ``dims`` (sums of squared bridges)."""
    dims = np.asarray(dims, dtype=np.int64)
    n = grid_steps(delta)
    out = np.zeros((len(dims), n + 1))
    total = int(dims.sum())
    if total == 0:
        return out
    sq = standard_bridges(n, rng, total) ** 2
    owner = np.repeat(np.arange(len(dims)), dims)
    np.add.at(out, owner, sq)
    return out


def sample_cpy_rhs(a: float, b: float, delta: float, rng: np.random.Generator, size: int,
                   parity: str = "odd", C: float = 1.0) -> tuple[GridPath, dict]:
    """Three-part decomposition: two absorbed BESQ0 pieces plus a BESQ^(1+2D) bridge.

    Returns the path ``X = sqrt(sum)`` and side information (the Poisson
    counts and the rejection tries of each BESQ0 piece).
    """
    y1, t1 = besq0_absorbed_before_one(a * a, delta, rng, size)
    y2, t2 = besq0_absorbed_before_one(b * b, delta, rng, size)
    delta_n = np.asarray(conditioned_poisson(a * b * C, parity, rng, size))
    z = besq_bridges(1 + 2 * delta_n, delta, rng)
    x = np.sqrt(y1.values + y2.values[:, ::-1] + z)
    return GridPath(delta, x), {"counts": delta_n, "tries_a": t1, "tries_b": t2}


def functionals(path: GridPath) -> dict:
    x = np.atleast_2d(path.values)
    n = x.shape[1] - 1
    return {
        "X(1/4)": x[:, n // 4],
        "X(1/2)": x[:, n // 2],
        "X(3/4)": x[:, 3 * n // 4],
        "int X": 0.5 * (x[:, :-1] + x[:, 1:]).sum(axis=1) / n,
    }


def _cpy_block(ctx, rng, size):
    a, b, delta, C = ctx
    lhs, pos = condition_positive(a, b, delta, rng, size)
    rhs, side = sample_cpy_rhs(a, b, delta, rng, size, "odd", C)
    refl = reflected_bridge(a, b, delta, rng, size)
    even, side_e = sample_cpy_rhs(a, b, delta, rng, size, "even", C)
    return {
        "lhs": functionals(lhs),
        "rhs": functionals(rhs),
        "refl": functionals(refl),
        "even": functionals(even),
        "pos": pos,
        "besq": side["tries_a"],
        "odd_ok": bool(np.all(side["counts"] % 2 == 1)),
        "ends_ok": bool(np.allclose(rhs.values[:, 0], a) and np.allclose(rhs.values[:, -1], b)),
        "size": size,
    }


def _merge(blocks, key):
    return {k: np.concatenate([bl[key][k] for bl in blocks]) for k in blocks[0][key]}


def run_cpy_test(a: float = 1.0, b: float = 1.0, delta: float = 1 / 400, replicas: int = 10_000,
                 seed: int = 0, jobs: int = 1, C: float = 1.0) -> TestReport:
    """Positive bridge vs the three-part decomposition, and the even variant."""
    rep = TestReport("one-edge", seed)
    blocks = run_fixed(_cpy_block, (a, b, delta, C), replicas, seed, f"one-edge/{a}/{b}/{delta}/{C}",
                       jobs, block=1000)
    n = sum(bl["size"] for bl in blocks)
    rep.ks_rows("odd ", _merge(blocks, "lhs"), _merge(blocks, "rhs"))
    rep.ks_rows("even ", _merge(blocks, "refl"), _merge(blocks, "even"))
    for name, key, ref in (("acceptance positive bridge", "pos", -np.expm1(-2 * a * b)),
                           ("acceptance besq0 absorbed by 1", "besq", np.exp(-a * a / 2))):
        hits = sum(bl[key][0] for bl in blocks)
        tries = sum(bl[key][1] for bl in blocks)
        acc = hits / tries
        rep.z_row(name, acc, np.sqrt(acc * (1 - acc) / tries), ref, tries)
    rep.exact_row("poisson count odd", all(bl["odd_ok"] for bl in blocks), n)
    rep.exact_row("endpoints X(0)=a X(1)=b", all(bl["ends_ok"] for bl in blocks), n)
    rep.info.update({"a": a, "b": b, "delta": delta, "C": C})
    return rep
