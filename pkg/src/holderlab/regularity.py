"""Measured oscillation decay at a boundary point and certification against a budget."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from holderlab import _streams
from holderlab.geometry import DomainOracle, QuasiGeometricSequence
from holderlab.kernels import ExponentBudget
from holderlab.solvers import BoundaryData, SourceTerm, wob_fractional_estimate, wos_estimate

_TAG_POINTS = 11
_TAG_PATHS = 12

# relative errors below this floor do not earn extra weight in the log-log fit
REL_ERROR_FLOOR = 0.05


@dataclass(frozen=True)
class SolverConfig:
    method: str = "wos"
    shell_epsilon: float = 1e-6
    max_steps: int = 20_000
    s: float | None = None

    def __post_init__(self):
        if self.method not in ("wos", "wob"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.method == "wob" and self.s is None:
            raise ValueError("the fractional solver needs s")


@dataclass(frozen=True)
class ProfileEntry:
    k: int
    r_k: float
    osc: float
    stderr: float
    points_used: int


@dataclass(frozen=True)
class OscillationProfile:
    entries: tuple[ProfileEntry, ...]
    x0: tuple[float, ...]
    data_value_at_x0: float
    skipped: tuple[int, ...] = ()

    def __post_init__(self):
        radii = [e.r_k for e in self.entries]
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ValueError("profile radii must be strictly decreasing")
        if any(e.osc < 0 for e in self.entries):
            raise ValueError("oscillations must be nonnegative")

    @classmethod
    def from_arrays(cls, radii, osc, stderr=None, ks=None, x0=None, g0=0.0):
        """Convenience constructor for synthetic or reloaded profiles."""
        radii = [float(r) for r in radii]
        stderr = [0.0] * len(radii) if stderr is None else [float(e) for e in stderr]
        ks = list(range(len(radii))) if ks is None else [int(k) for k in ks]
        entries = tuple(ProfileEntry(k, r, float(o), e, 1) for k, r, o, e in zip(ks, radii, osc, stderr))
        x0 = (0.0,) if x0 is None else tuple(float(c) for c in x0)
        return cls(entries, x0, float(g0))

    @property
    def radii(self) -> np.ndarray:
        return np.array([e.r_k for e in self.entries])

    @property
    def osc(self) -> np.ndarray:
        return np.array([e.osc for e in self.entries])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([e.stderr for e in self.entries])


def _sample_in_ball(domain, x0, r, count, rng, max_draws):
    n = domain.dim
    found = []
    drawn = 0
    while sum(len(a) for a in found) < count and drawn < max_draws:
        batch = min(max(4 * count, 256), max_draws - drawn)
        u = rng.random(batch) ** (1.0 / n)
        pts = x0 + (r * u)[:, None] * _streams.unit_vectors(rng, batch, n)
        found.append(pts[domain.contains(pts)])
        drawn += batch
    pts = np.concatenate(found) if found else np.empty((0, n))
    return pts[:count]


def oscillation_profile(
    solver: SolverConfig,
    domain: DomainOracle,
    g: BoundaryData,
    f: SourceTerm | None,
    seq: QuasiGeometricSequence,
    points_per_scale: int,
    paths_per_point: int,
    seed: int,
    *,
    x0=None,
    max_draws_per_scale: int = 1_000_000,
    workers: int | None = None,
) -> OscillationProfile:
    """Measure max |u - g(x0)| over sampled points of the domain inside B(x0, r_k), for each k.

    u(x0) is taken to be g(x0). Each point gets ``paths_per_point`` paths from
    its own substream; the reported error is that of the maximizing point.
    Scales with no interior point in the sampling budget are skipped.
    """
    if points_per_scale < 1:
        raise ValueError("points_per_scale must be >= 1")
    n = domain.dim
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    g0 = float(g.evaluate(x0))

    scale_points = []
    skipped = []
    for k, r in enumerate(seq.radii):
        rng = _streams.generator(seed, _TAG_POINTS, k)
        pts = _sample_in_ball(domain, x0, r, points_per_scale, rng, max_draws_per_scale)
        if len(pts) == 0:
            skipped.append(k)
        scale_points.append(pts)

    tasks = [(k, i, p) for k, pts in enumerate(scale_points) for i, p in enumerate(pts)]

    def run(task):
        k, i, p = task
        if solver.method == "wos":
            return wos_estimate(
                domain, g, f, p, solver.shell_epsilon, paths_per_point, seed,
                max_steps=solver.max_steps, stream=(_TAG_PATHS, k, i), workers=1,
            )
        return wob_fractional_estimate(
            domain, g, p, solver.s, paths_per_point, seed,
            max_steps=solver.max_steps, stream=(_TAG_PATHS, k, i), workers=1,
        )

    results = _streams.parallel_map(run, tasks, workers)
    entries = []
    pos = 0
    for k, pts in enumerate(scale_points):
        res = results[pos : pos + len(pts)]
        pos += len(pts)
        if not res:
            continue
        dev = [abs(e.mean - g0) for e in res]
        j = int(np.argmax(dev))
        entries.append(ProfileEntry(k, seq.radii[k], dev[j], res[j].stderr, len(res)))
    return OscillationProfile(tuple(entries), tuple(float(c) for c in x0), g0, tuple(skipped))


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    C: float
    r_squared: float
    scales_used: int
    exact_zero: bool = False


def fit_holder(profile: OscillationProfile, *, rel_error_floor: float = REL_ERROR_FLOOR) -> HolderFit:
    """Weighted least squares of log(osc) on log(r): osc ~ C r^alpha.

    Weights are 1 / (relative error)^2 with the relative error floored at
    ``rel_error_floor``, so noise-free profiles are fitted with equal weights.
    """
    osc, radii, se = profile.osc, profile.radii, profile.stderr
    if osc.size and np.all(osc == 0):
        return HolderFit(math.nan, 0.0, math.nan, 0, exact_zero=True)
    pos = osc > 0
    if pos.sum() < 3:
        raise ValueError(f"need at least 3 scales with positive oscillation, got {int(pos.sum())}")
    x = np.log(radii[pos])
    y = np.log(osc[pos])
    rel = np.maximum(se[pos] / osc[pos], rel_error_floor)
    w = 1.0 / rel**2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    syy = np.sum(w * (y - ym) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / syy if syy > 0 else 1.0
    return HolderFit(float(slope), float(math.exp(intercept)), float(r2), int(pos.sum()))


@dataclass(frozen=True)
class ScaleCheck:
    k: int
    r_k: float
    osc: float
    stderr: float
    holder_bound: float | None
    geometric_bound: float | None
    passed: bool


@dataclass(frozen=True)
class RegularityCertificate:
    budget: ExponentBudget
    fitted_alpha: float
    fitted_C: float
    r_squared: float
    per_scale_pass: tuple[bool, ...]
    verdict: bool
    checks: tuple[ScaleCheck, ...] = ()
    skipped: tuple[int, ...] = ()
    slack_sigmas: float = 3.0

    def to_dict(self) -> dict:
        return {
            "verdict": "pass" if self.verdict else "fail",
            "fitted_alpha": self.fitted_alpha,
            "fitted_C": self.fitted_C,
            "r_squared": self.r_squared,
            "slack_sigmas": self.slack_sigmas,
            "per_scale_pass": list(self.per_scale_pass),
            "skipped_scales": list(self.skipped),
            "scales": [asdict(c) for c in self.checks],
            "budget": self.budget.to_dict(),
        }


def certify_decay(
    profile: OscillationProfile,
    budget: ExponentBudget,
    slack_sigmas: float = 3.0,
    *,
    checks: tuple[str, ...] = ("holder", "geometric"),
) -> RegularityCertificate:
    """Check each measured scale against the budget.

    ``holder``:    osc_k <= C_hat M r_k^beta + slack * stderr_k
    ``geometric``: osc_k <= (1 - mu)^k M + slack * stderr_k
    The verdict passes iff every requested check passes at every measured scale.
    """
    unknown = set(checks) - {"holder", "geometric"}
    if unknown or not checks:
        raise ValueError(f"checks must be a nonempty subset of ('holder', 'geometric'), got {checks}")
    rows = []
    for e in profile.entries:
        slack = slack_sigmas * e.stderr
        hb = gb = None
        ok = True
        if "holder" in checks:
            hb = budget.C_hat * budget.M * e.r_k**budget.beta
            ok &= e.osc <= hb + slack
        if "geometric" in checks:
            gb = (1.0 - budget.mu) ** e.k * budget.M
            ok &= e.osc <= gb + slack
        rows.append(ScaleCheck(e.k, e.r_k, e.osc, e.stderr, hb, gb, bool(ok)))
    try:
        fit = fit_holder(profile)
    except ValueError:
        fit = HolderFit(math.nan, math.nan, math.nan, 0)
    per_scale = tuple(r.passed for r in rows)
    return RegularityCertificate(
        budget=budget,
        fitted_alpha=fit.alpha,
        fitted_C=fit.C,
        r_squared=fit.r_squared,
        per_scale_pass=per_scale,
        verdict=all(per_scale),
        checks=tuple(rows),
        skipped=profile.skipped,
        slack_sigmas=slack_sigmas,
    )
