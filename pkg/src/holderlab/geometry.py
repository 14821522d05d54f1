"""Implicit domains and Monte Carlo checkers for the exterior conditions (H1)-(H4).

All domains are normalized so that the boundary point under study is the
origin. A domain answers two questions about an array of points: whether
each point lies in the open set, and a conservative (never too large)
distance to the complement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gamma

from holderlab import _streams

# stream tags, so different checkers never share random numbers
_TAG_H1 = 1
_TAG_H2 = 2
_TAG_H3 = 3

_REL_TOL = 1e-12


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n, i.e. n * omega_n."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


def ball_volume(n: int) -> float:
    """Volume omega_n of the unit ball in R^n."""
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


# ---------------------------------------------------------------------------
# scale ladders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuasiGeometricSequence:
    """Radii 1 = r_0 > r_1 > ... with tau1 * r_{k-1} <= r_k <= tau2 * r_{k-1}."""

    tau1: float
    tau2: float
    radii: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if not 0.0 < self.tau1 < self.tau2 < 1.0:
            raise ValueError(f"need 0 < tau1 < tau2 < 1, got tau1={self.tau1}, tau2={self.tau2}")
        if not self.radii or self.radii[0] != 1.0:
            raise ValueError("radii must start with r_0 = 1")
        for k in range(1, len(self.radii)):
            prev, cur = self.radii[k - 1], self.radii[k]
            lo = self.tau1 * prev * (1 - _REL_TOL)
            hi = self.tau2 * prev * (1 + _REL_TOL)
            if not (lo <= cur <= hi) or cur <= 0 or cur >= prev:
                raise ValueError(
                    f"r_{k}={cur} violates {self.tau1}*r_{k-1} <= r_{k} <= {self.tau2}*r_{k-1}"
                )

    def __len__(self) -> int:
        return len(self.radii)

    @classmethod
    def from_radii(cls, radii: Sequence[float], tau1: float | None = None, tau2: float | None = None):
        """Build from explicit radii; missing ratio bounds are taken from the observed ratios."""
        radii = [float(r) for r in radii]
        ratios = [b / a for a, b in zip(radii, radii[1:])]
        if tau1 is None:
            tau1 = min(ratios) if ratios else 0.25
        if tau2 is None:
            tau2 = max(ratios) if ratios else 0.5
        if tau1 >= tau2:
            # equal ratios: widen per the tau -> (tau^2, tau) subsequence convention
            tau1 = tau2 * tau2
        return cls(tau1=tau1, tau2=tau2, radii=tuple(radii))


def make_geometric_sequence(tau: float, count: int) -> QuasiGeometricSequence:
    """The canonical ladder r_k = tau^k, k < max(count, 1).

    A pure geometric ladder has equal ratio bounds, which the strict
    inequality tau1 < tau2 forbids; it is reported with tau1 = tau^2 and
    tau2 = tau.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    radii = tuple(tau**k for k in range(max(count, 1)))
    return QuasiGeometricSequence(tau1=tau * tau, tau2=tau, radii=radii)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


def _as_points(points, dim: int) -> tuple[np.ndarray, bool]:
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    if p.ndim != 2 or p.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {np.shape(points)}")
    return p, single


class DomainOracle:
    """Base class for implicit domains with the studied boundary point at 0.

    Subclasses implement ``_contains`` and ``_dist`` on ``(m, dim)`` arrays.
    The public methods also accept a single point and then return a scalar.
    """

    kind = "abstract"
    dim: int
    bounding_radius: float = 1.0

    def contains(self, points):
        p, single = _as_points(points, self.dim)
        out = self._contains(p)
        return bool(out[0]) if single else out

    def dist_to_complement(self, points):
        p, single = _as_points(points, self.dim)
        # every _dist is <= 0 off the domain, so clipping suffices
        d = np.maximum(self._dist(p), 0.0)
        return float(d[0]) if single else d

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, "dimension": self.dim, **self.params()}

    def _contains(self, p: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _dist(self, p: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class Ball(DomainOracle):
    """The unit ball centered at the origin. The origin is interior, so this is a control domain."""

    kind = "ball"

    def __init__(self, dim: int, radius: float = 1.0):
        self.dim = int(dim)
        self.radius = float(radius)
        self.bounding_radius = self.radius

    def params(self):
        return {"radius": self.radius} if self.radius != 1.0 else {}

    def _contains(self, p):
        return np.linalg.norm(p, axis=1) < self.radius

    def _dist(self, p):
        return self.radius - np.linalg.norm(p, axis=1)


class HalfBall(DomainOracle):
    """B_1 intersected with the half-space {x_1 > 0}."""

    kind = "half_ball"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def _contains(self, p):
        return (np.linalg.norm(p, axis=1) < 1.0) & (p[:, 0] > 0.0)

    def _dist(self, p):
        return np.minimum(1.0 - np.linalg.norm(p, axis=1), p[:, 0])


class EmptyDomain(DomainOracle):
    """Omega is empty; its complement is all of R^n."""

    kind = "empty"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def _contains(self, p):
        return np.zeros(len(p), dtype=bool)

    def _dist(self, p):
        return np.zeros(len(p))


def _angle_from(p: np.ndarray, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Norms and polar angles of points measured from a unit axis (angle 0 at the origin)."""
    rho = np.linalg.norm(p, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(rho > 0, p @ axis / np.where(rho > 0, rho, 1.0), 1.0)
    return rho, np.arccos(np.clip(c, -1.0, 1.0))


class ConeComplement(DomainOracle):
    """B_1 minus the closed cone of half-angle ``aperture`` around the negative x_1-axis."""

    kind = "cone_complement"

    def __init__(self, dim: int, aperture: float):
        if not 0.0 < aperture < math.pi:
            raise ValueError(f"aperture must lie in (0, pi), got {aperture}")
        self.dim = int(dim)
        self.aperture = float(aperture)
        self.axis = -np.eye(self.dim)[0]

    def params(self):
        return {"aperture": self.aperture}

    def _cone_dist(self, p):
        rho, theta = _angle_from(p, self.axis)
        gap = theta - self.aperture
        d = np.where(gap >= math.pi / 2, rho, rho * np.sin(np.clip(gap, 0.0, math.pi / 2)))
        return np.where(gap <= 0.0, 0.0, d)

    def _contains(self, p):
        rho, theta = _angle_from(p, self.axis)
        return (rho < 1.0) & (rho > 0.0) & (theta > self.aperture)

    def _dist(self, p):
        return np.minimum(1.0 - np.linalg.norm(p, axis=1), self._cone_dist(p))


class Corkscrew(DomainOracle):
    """B_1 minus a spiral of balls B(c_k, delta 2^-k), |c_k| = (1 - delta) 2^-k.

    Each obstacle sits inside B(0, 2^-k), so at every dyadic scale r the
    complement contains a ball of radius delta * r inside B(0, r). Successive
    centers rotate by 120 degrees in the (x_1, x_2)-plane, starting at -e_1.
    """

    kind = "corkscrew"
    levels = 60

    def __init__(self, dim: int, delta: float):
        if not 0.0 < delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 1/2] so that 0 stays on the boundary, got {delta}")
        self.dim = int(dim)
        self.delta = float(delta)
        k = np.arange(self.levels)
        scale = 0.5 ** k
        centers = np.zeros((self.levels, self.dim))
        if self.dim == 1:
            centers[:, 0] = -((-1.0) ** k)
        else:
            ang = math.pi + k * (2 * math.pi / 3)
            centers[:, 0] = np.cos(ang)
            centers[:, 1] = np.sin(ang)
        self.centers = centers * ((1.0 - self.delta) * scale)[:, None]
        self.radii = self.delta * scale

    def params(self):
        return {"delta": self.delta}

    def _ball_dist(self, p):
        diff = p[:, None, :] - self.centers[None, :, :]
        return (np.linalg.norm(diff, axis=2) - self.radii[None, :]).min(axis=1)

    def _contains(self, p):
        rho = np.linalg.norm(p, axis=1)
        return (rho < 1.0) & (rho > 0.0) & (self._ball_dist(p) > 0.0)

    def _dist(self, p):
        rho = np.linalg.norm(p, axis=1)
        # obstacles beyond the last level lie inside B(0, 2^-levels)
        tail = rho - 0.5**self.levels
        return np.minimum(np.minimum(1.0 - rho, self._ball_dist(p)), tail)


class ShellCaps(DomainOracle):
    """B_1 minus thickened caps 2^-k * Gamma, Gamma = dB_{1/2} cap B(y_0, nu), y_0 = -e_1/2.

    Each cap is a solid shell piece of radial thickness ``thickness * 2^-k``.
    Membership also uses a relative tolerance band around each cap radius, so
    that exact sphere samples see the caps even as the thickness shrinks.
    """

    kind = "shell_caps"
    levels = 60
    band = 1e-9

    def __init__(self, dim: int, nu: float, thickness: float):
        if not 0.0 < nu < 1.0:
            raise ValueError(f"nu must lie in (0, 1), got {nu}")
        if not 0.0 < thickness < 1.0:
            raise ValueError(f"thickness must lie in (0, 1), got {thickness}")
        self.dim = int(dim)
        self.nu = float(nu)
        self.thickness = float(thickness)
        self.axis = -np.eye(self.dim)[0]
        # chord nu on the sphere of radius 1/2
        self.cap_angle = 2.0 * math.asin(self.nu)
        scale = 0.5 ** np.arange(self.levels)
        self.cap_radii = 0.5 * scale
        self.half_thickness = np.maximum(0.5 * self.thickness * scale, self.band * self.cap_radii)

    def params(self):
        return {"nu": self.nu, "thickness": self.thickness}

    def _cap_dist(self, p):
        rho, theta = _angle_from(p, self.axis)
        rho, theta = rho[:, None], theta[:, None]
        lo = (self.cap_radii - self.half_thickness)[None, :]
        hi = (self.cap_radii + self.half_thickness)[None, :]
        radial = np.maximum(np.maximum(lo - rho, rho - hi), 0.0)
        delta = np.clip(theta - self.cap_angle, 0.0, math.pi)
        proj = np.clip(rho * np.cos(delta), lo, hi)
        lateral = np.sqrt(np.maximum(rho**2 + proj**2 - 2 * rho * proj * np.cos(delta), 0.0))
        d = np.where(theta <= self.cap_angle, radial, lateral)
        return d.min(axis=1)

    def _in_caps(self, p):
        rho, theta = _angle_from(p, self.axis)
        inside = (np.abs(rho[:, None] - self.cap_radii[None, :]) <= self.half_thickness[None, :]) & (
            theta[:, None] <= self.cap_angle
        )
        return inside.any(axis=1)

    def _contains(self, p):
        rho = np.linalg.norm(p, axis=1)
        return (rho < 1.0) & (rho > 0.0) & ~self._in_caps(p)

    def _dist(self, p):
        rho = np.linalg.norm(p, axis=1)
        tail = rho - 0.5**self.levels
        return np.minimum(np.minimum(1.0 - rho, self._cap_dist(p)), tail)


_BUILTINS = {
    "ball": (Ball, ()),
    "half_ball": (HalfBall, ()),
    "empty": (EmptyDomain, ()),
    "cone_complement": (ConeComplement, ("aperture",)),
    "corkscrew": (Corkscrew, ("delta",)),
    "shell_caps": (ShellCaps, ("nu", "thickness")),
}


def builtin_domain(kind: str, dim: int = 2, **params) -> DomainOracle:
    """Construct one of the named example domains."""
    if kind not in _BUILTINS:
        raise ValueError(f"unknown domain kind {kind!r}; choose from {sorted(_BUILTINS)}")
    if int(dim) < 1:
        raise ValueError("dimension must be >= 1")
    cls, required = _BUILTINS[kind]
    allowed = set(required) | ({"radius"} if kind == "ball" else set())
    missing = [k for k in required if k not in params]
    extra = [k for k in params if k not in allowed]
    if missing:
        raise ValueError(f"domain {kind!r} needs parameters {missing}")
    if extra:
        raise ValueError(f"domain {kind!r} does not take parameters {extra}")
    return cls(int(dim), **{k: float(v) for k, v in params.items()})


def domain_from_mapping(spec: Mapping[str, object]) -> DomainOracle:
    """Build a domain from ``{"kind": ..., "dimension": ..., <params>}``."""
    spec = dict(spec)
    try:
        kind = str(spec.pop("kind"))
    except KeyError:
        raise ValueError("domain spec needs a 'kind'") from None
    dim = int(spec.pop("dimension", 2))
    return builtin_domain(kind, dim, **{k: float(v) for k, v in spec.items()})


# ---------------------------------------------------------------------------
# condition checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasureEstimate:
    """Monte Carlo estimate of a normalized complement measure.

    ``estimate`` is in the units of the condition (surface measure over
    r^(n-1) for H1, volume over r^n for H3); ``fraction`` is the raw hit rate.
    """

    estimate: float
    stderr: float
    fraction: float
    samples: int
    radius: float


def _count_hits(domain, sampler, samples, seed, stream, workers):
    tasks = list(enumerate(_streams.chunk_sizes(samples)))

    def run(task):
        j, size = task
        rng = _streams.generator(seed, *stream, j)
        pts = sampler(rng, size)
        return int(np.count_nonzero(~domain.contains(pts)))

    return sum(_streams.parallel_map(run, tasks, workers))


def _binomial(hits: int, samples: int, scale: float, radius: float) -> MeasureEstimate:
    p = hits / samples
    se = math.sqrt(p * (1.0 - p) / samples)
    return MeasureEstimate(float(p * scale), float(se * scale), float(p), int(samples), float(radius))


def h1_fraction(
    domain: DomainOracle, r: float, samples: int, seed: int, *, stream: tuple = (), workers=None
) -> MeasureEstimate:
    """Estimate H^{n-1}(dB(0,r) minus Omega) / r^{n-1} from uniform sphere samples."""
    if not 0.0 < r <= 1.0:
        raise ValueError(f"r must lie in (0, 1], got {r}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = domain.dim

    def sampler(rng, size):
        return r * _streams.unit_vectors(rng, size, n)

    hits = _count_hits(domain, sampler, samples, seed, (_TAG_H1, *stream), workers)
    return _binomial(hits, samples, sphere_area(n), r)


def h3_fraction(
    domain: DomainOracle, r_k: float, r_k1: float, samples: int, seed: int, *, stream: tuple = (), workers=None
) -> MeasureEstimate:
    """Estimate |(B(0,r_k) minus B(0,r_k1)) minus Omega| / r_k^n.

    Annulus points use the radial inverse CDF by volume plus an isotropic direction.
    """
    if not 0.0 < r_k1 < r_k:
        raise ValueError(f"need 0 < r_k1 < r_k, got r_k={r_k}, r_k1={r_k1}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = domain.dim
    inner, outer = r_k1**n, r_k**n

    def sampler(rng, size):
        u = rng.random(size)
        rad = (inner + u * (outer - inner)) ** (1.0 / n)
        return rad[:, None] * _streams.unit_vectors(rng, size, n)

    hits = _count_hits(domain, sampler, samples, seed, (_TAG_H3, *stream), workers)
    return _binomial(hits, samples, ball_volume(n) * (1.0 - (r_k1 / r_k) ** n), r_k)


@dataclass(frozen=True)
class H4Row:
    k: int
    r_k: float
    term: float
    term_stderr: float
    partial_sum: float
    partial_stderr: float


def h4_partial_sums(
    domain: DomainOracle, seq: QuasiGeometricSequence, samples: int, seed: int, *, workers=None
) -> list[H4Row]:
    """Running sums of the H1 quantity along the ladder; scales use independent streams."""
    rows = []
    total, var = 0.0, 0.0
    for k, r in enumerate(seq.radii):
        est = h1_fraction(domain, r, samples, seed, stream=(k,), workers=workers)
        total += est.estimate
        var += est.stderr**2
        rows.append(H4Row(k, r, est.estimate, est.stderr, total, math.sqrt(var)))
    return rows


@dataclass(frozen=True)
class H2Witness:
    scale_index: int
    radius: float
    center: tuple[float, ...]
    angular_radius: float


@dataclass(frozen=True)
class H2Failure:
    scale_index: int
    radius: float
    directions_tested: int


def direction_grid(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform unit directions: equal angles (n=2), a Fibonacci lattice (n=3), seeded draws otherwise."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = 2 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = math.pi * (1.0 + math.sqrt(5.0)) * i
        s = np.sqrt(1.0 - z * z)
        return np.column_stack([z, s * np.cos(phi), s * np.sin(phi)])
    return _streams.unit_vectors(_streams.generator(seed, _TAG_H2, 0), count, dim)


def _cap_template(dim: int, half_angle: float, count: int, rng) -> np.ndarray:
    """Test points on the unit sphere within ``half_angle`` of e_1, including the center and rim."""
    e1 = np.eye(dim)[0]
    if dim == 1:
        return e1[None, :]
    if dim == 2:
        t = np.linspace(-half_angle, half_angle, max(count, 3))
        return np.column_stack([np.cos(t), np.sin(t)])
    rim = max(count // 4, 1)
    inner = max(count - rim - 1, 0)
    theta = np.concatenate([[0.0], np.full(rim, half_angle), half_angle * rng.random(inner) ** (1.0 / (dim - 1))])
    perp = rng.standard_normal((len(theta), dim))
    perp[:, 0] = 0.0
    perp /= np.linalg.norm(perp, axis=1)[:, None]
    return np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * perp


def _reflect_to(points: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Householder reflection sending e_1 to ``target``, applied to ``points``."""
    e1 = np.zeros_like(target)
    e1[0] = 1.0
    v = e1 - target
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return points
    v = v / nv
    return points - 2.0 * np.outer(points @ v, v)


def check_h2(
    domain: DomainOracle,
    seq: QuasiGeometricSequence,
    nu: float,
    angular_grid: int,
    seed: int,
    *,
    cap_samples: int = 128,
) -> list[H2Witness | H2Failure]:
    """Search each sphere dB(0, r_k) for a cap dB(0,r_k) cap B(y, nu r_k) lying in the complement.

    A grid direction qualifies if every test point of its cap is outside the
    domain. Among qualifying directions the most central one (closest to their
    mean direction) is reported, which lands on the axis of a symmetric obstacle.
    The result certifies the condition only up to the grid resolution.
    """
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    n = domain.dim
    half_angle = 2.0 * math.asin(nu / 2.0)
    dirs = direction_grid(n, angular_grid, seed)
    template = _cap_template(n, half_angle, cap_samples, _streams.generator(seed, _TAG_H2, 1))
    caps = np.stack([_reflect_to(template, d) for d in dirs])  # (G, S, n)
    out: list[H2Witness | H2Failure] = []
    for k, r in enumerate(seq.radii):
        pts = (r * caps).reshape(-1, n)
        inside = domain.contains(pts).reshape(len(dirs), -1)
        ok = ~inside.any(axis=1)
        if not ok.any():
            out.append(H2Failure(k, r, len(dirs)))
            continue
        good = dirs[ok]
        mean = good.sum(axis=0)
        pick = int(np.argmax(good @ mean)) if np.linalg.norm(mean) > 1e-12 else 0
        center = tuple(float(c) for c in good[pick])
        out.append(H2Witness(k, r, center, nu))
    return out
