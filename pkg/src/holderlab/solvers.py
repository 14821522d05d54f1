"""Walk-on-spheres for Delta u = f and walk-on-balls for (-Delta)^(s/2) u = 0.

Paths are simulated in vectorized chunks of ``_streams.CHUNK_SIZE``; chunk
``j`` draws from the substream ``(seed, *stream, j)``. The mean and standard
error are exactly rounded sums, so the result is byte-identical for any
number of worker threads.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from holderlab import _streams
from holderlab.geometry import DomainOracle, ball_volume, sphere_area
from holderlab.kernels import _centered_exit


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet (or exterior) data, vectorized over ``(m, n)`` point arrays."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    holder_seminorm_at_origin: float | None = None
    holder_exponent: float | None = None
    params: dict = field(default_factory=dict)

    def evaluate(self, points):
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return float(np.asarray(self.fn(p[None, :]), dtype=float)[0])
        return np.asarray(self.fn(p), dtype=float) * np.ones(len(p))


@dataclass(frozen=True)
class SourceTerm:
    """Bounded right-hand side f of Delta u = f."""

    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    name: str = "custom"
    is_zero: bool = False
    params: dict = field(default_factory=dict)

    def evaluate(self, points):
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return float(np.asarray(self.fn(p[None, :]), dtype=float)[0])
        return np.asarray(self.fn(p), dtype=float) * np.ones(len(p))


ZERO_SOURCE = SourceTerm(lambda p: np.zeros(len(p)), 0.0, "zero", True)


def builtin_data(name: str, **params) -> BoundaryData:
    """Named boundary data.

    ``constant(value)``, ``coordinate(axis, scale)`` for g(y) = scale * y_axis,
    ``outer_indicator(threshold)`` for 1 on |y| >= threshold and 0 inside,
    ``half_space_step(radius)`` for 0 on {y_1 <= 0, |y| < radius} and 1 elsewhere.
    """
    params = {k: float(v) for k, v in params.items()}

    def take(*allowed):
        extra = set(params) - set(allowed)
        if extra:
            raise ValueError(f"data {name!r} does not take {sorted(extra)}")

    if name == "zero":
        take()
        return BoundaryData(lambda p: np.zeros(len(p)), "zero", 0.0, math.inf)
    if name == "constant":
        take("value")
        c = params.get("value", 1.0)
        return BoundaryData(lambda p: np.full(len(p), c), "constant", 0.0, math.inf, {"value": c})
    if name == "coordinate":
        take("axis", "scale")
        axis = int(params.get("axis", 0))
        scale = params.get("scale", 1.0)
        return BoundaryData(lambda p: scale * p[:, axis], "coordinate", abs(scale), 1.0, {"axis": axis, "scale": scale})
    if name == "outer_indicator":
        take("threshold")
        t = params.get("threshold", 0.999)
        return BoundaryData(
            lambda p: (np.linalg.norm(p, axis=1) >= t).astype(float), "outer_indicator", None, None, {"threshold": t}
        )
    if name == "half_space_step":
        take("radius")
        rad = params.get("radius", 2.0)

        def step(p):
            zero = (p[:, 0] <= 0.0) & (np.linalg.norm(p, axis=1) < rad)
            return np.where(zero, 0.0, 1.0)

        return BoundaryData(step, "half_space_step", None, None, {"radius": rad})
    raise ValueError(f"unknown boundary data {name!r}")


def builtin_source(name: str, **params) -> SourceTerm:
    """Named sources: ``zero`` or ``constant(value)``."""
    params = {k: float(v) for k, v in params.items()}
    if name == "zero":
        if params:
            raise ValueError("source 'zero' takes no parameters")
        return ZERO_SOURCE
    if name == "constant":
        if set(params) - {"value"}:
            raise ValueError("source 'constant' takes only 'value'")
        c = params.get("value", 1.0)
        return SourceTerm(lambda p: np.full(len(p), c), abs(c), "constant", c == 0.0, {"value": c})
    raise ValueError(f"unknown source {name!r}")


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    stderr: float
    paths: int
    seed: int
    shell_epsilon: float | None
    mean_steps: float
    discarded: int = 0

    @property
    def discarded_fraction(self) -> float:
        total = self.paths + self.discarded
        return self.discarded / total if total else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["discarded_fraction"] = self.discarded_fraction
        return d


def _ball_green(rho: np.ndarray, radius: np.ndarray, n: int) -> np.ndarray:
    """Green's function of -Delta on B(0, radius) with pole at the center."""
    if n == 1:
        return (radius - rho) / 2.0
    if n == 2:
        return np.log(radius / rho) / (2.0 * math.pi)
    return (rho ** (2 - n) - radius ** (2 - n)) / ((n - 2) * sphere_area(n))


def _wos_chunk(domain, g, f, x, size, eps, max_steps, rng):
    n = domain.dim
    pos = np.tile(np.asarray(x, dtype=float), (size, 1))
    source = np.zeros(size)
    steps = np.zeros(size, dtype=np.int64)
    values = np.full(size, np.nan)
    active = np.arange(size)
    vol = ball_volume(n)
    for _ in range(max_steps + 1):
        d = domain.dist_to_complement(pos)
        stop = d < eps
        if stop.any():
            idx = active[stop]
            values[idx] = g.evaluate(pos[stop]) + source[idx]
            keep = ~stop
            active, pos, d = active[keep], pos[keep], d[keep]
        if active.size == 0:
            break
        if steps[active[0]] >= max_steps:
            break
        if not f.is_zero:
            # one-sample estimate of the ball Green potential of f
            u = rng.random(active.size)
            rho = d * u ** (1.0 / n)
            y = pos + rho[:, None] * _streams.unit_vectors(rng, active.size, n)
            rho = np.maximum(rho, np.finfo(float).tiny)
            source[active] -= vol * d**n * _ball_green(rho, d, n) * f.evaluate(y)
        pos = pos + d[:, None] * _streams.unit_vectors(rng, active.size, n)
        steps[active] += 1
    done = ~np.isnan(values)
    return values[done], steps[done], int(size - done.sum())


def _summarize(parts, seed, eps) -> EstimatorResult:
    values = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    steps = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
    discarded = sum(p[2] for p in parts)
    if values.size == 0:
        raise RuntimeError(f"all {discarded} paths hit the step cap")
    if values.min() == values.max():
        mean, se = float(values[0]), 0.0
    else:
        mean, se = _streams.mean_and_stderr(values)
    return EstimatorResult(
        mean=mean,
        stderr=se,
        paths=int(values.size),
        seed=int(seed),
        shell_epsilon=eps,
        mean_steps=math.fsum(steps) / steps.size,
        discarded=discarded,
    )


def _check_start(domain, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise ValueError(f"x must be a point of dimension {domain.dim}")
    if not domain.contains(x):
        raise ValueError(f"x = {x.tolist()} is not in the domain")
    return x


def wos_estimate(
    domain: DomainOracle,
    g: BoundaryData,
    f: SourceTerm | None,
    x,
    shell_epsilon: float,
    paths: int,
    seed: int,
    *,
    max_steps: int = 20_000,
    stream: tuple = (),
    workers: int | None = None,
) -> EstimatorResult:
    """Walk-on-spheres estimate of u(x) for Delta u = f in the domain, u = g on its boundary.

    Each path jumps to a uniform point on the largest sphere around the
    current position that the distance oracle certifies, and stops inside
    the ``shell_epsilon`` band, scoring g at the stopping point. Paths that
    reach ``max_steps`` are discarded and counted.
    """
    x = _check_start(domain, x)
    if not shell_epsilon > 0:
        raise ValueError("shell_epsilon must be positive")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    f = ZERO_SOURCE if f is None else f
    tasks = list(enumerate(_streams.chunk_sizes(paths)))

    def run(task):
        j, size = task
        rng = _streams.generator(seed, *stream, j)
        return _wos_chunk(domain, g, f, x, size, shell_epsilon, max_steps, rng)

    return _summarize(_streams.parallel_map(run, tasks, workers), seed, shell_epsilon)


def _wob_chunk(domain, g, x, size, s, max_steps, rng, keep_exits=False):
    n = domain.dim
    pos = np.tile(np.asarray(x, dtype=float), (size, 1))
    values = np.full(size, np.nan)
    steps = np.zeros(size, dtype=np.int64)
    exits = np.full((size, n), np.nan) if keep_exits else None
    active = np.arange(size)
    for _ in range(max_steps):
        r = domain.dist_to_complement(pos)
        y = pos + _centered_exit(rng, active.size, n, 1.0, s) * r[:, None]
        steps[active] += 1
        out = ~domain.contains(y) | (r <= 0.0)
        if out.any():
            idx = active[out]
            values[idx] = g.evaluate(y[out])
            if keep_exits:
                exits[idx] = y[out]
        keep = ~out
        active, pos = active[keep], y[keep]
        if active.size == 0:
            break
    done = ~np.isnan(values)
    if keep_exits:
        return values[done], steps[done], int(size - done.sum()), exits[done]
    return values[done], steps[done], int(size - done.sum())


def wob_fractional_estimate(
    domain: DomainOracle,
    g_ext: BoundaryData,
    x,
    s: float,
    paths: int,
    seed: int,
    *,
    max_steps: int = 10_000,
    stream: tuple = (),
    workers: int | None = None,
) -> EstimatorResult:
    """Walk-on-balls estimate of u(x) for (-Delta)^(s/2) u = 0 in the domain, u = g_ext outside.

    Each step samples the exact exit point of the s-stable process from the
    largest ball centered at the current position; the walk ends at the
    first jump that lands outside the domain.
    """
    x = _check_start(domain, x)
    if not 0.0 < s < 2.0:
        raise ValueError(f"s must lie in (0, 2), got {s}")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    tasks = list(enumerate(_streams.chunk_sizes(paths)))

    def run(task):
        j, size = task
        rng = _streams.generator(seed, *stream, j)
        return _wob_chunk(domain, g_ext, x, size, s, max_steps, rng)

    return _summarize(_streams.parallel_map(run, tasks, workers), seed, None)
