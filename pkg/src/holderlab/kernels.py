"""Poisson kernels, cap harmonic measures and the exponent calculus.

The decay constant ``mu`` measures how much harmonic measure an exterior
obstacle carries on a smaller concentric ball; ``alpha_of`` turns a decay
per scale into a Hölder exponent, and ``constant_chaser`` solves the
induction inequality for an admissible (beta, C_hat) pair.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import betaincinv, ellipe, gamma

from holderlab import _streams
from holderlab.geometry import ball_volume, sphere_area

__all__ = [
    "CapBoundaryData",
    "ExponentBudget",
    "QuadratureError",
    "RejectionCapExceeded",
    "alpha_of",
    "cap_harmonic_measure",
    "chaser_lhs",
    "constant_chaser",
    "exponent_budget",
    "fractional_poisson_kernel",
    "mu_cap",
    "mu_for_cap_angle",
    "mu_h1_lower",
    "mu_h3_lower",
    "poisson_kernel",
    "sample_fractional_exit",
    "ball_volume",
    "sphere_area",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, value: float, error: float, tol: float):
        super().__init__(f"quadrature error bound {error:.3e} exceeds tolerance {tol:.1e} (value {value:.12g})")
        self.value = value
        self.error = error


class RejectionCapExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# classical Poisson kernel
# ---------------------------------------------------------------------------


def poisson_kernel(x, y, r: float = 1.0, n: int | None = None, *, tol: float = 1e-9):
    """(r^2 - |x|^2) / (n omega_n r) * |x - y|^-n for |x| < r, |y| = r.

    ``y`` may be a single point or an ``(m, n)`` array of sphere points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size if n is None else n
    if x.size != n or y.shape[-1] != n:
        raise ValueError("x and y must have dimension n")
    if not np.linalg.norm(x) < r:
        raise ValueError(f"x must lie inside B_r (|x|={np.linalg.norm(x)}, r={r})")
    ny = np.linalg.norm(y, axis=-1)
    if np.any(np.abs(ny - r) > tol * r):
        raise ValueError("y must lie on the sphere |y| = r")
    dist = np.linalg.norm(y - x, axis=-1)
    val = (r * r - x @ x) / (sphere_area(n) * r) / dist**n
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# axially symmetric boundary data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapBoundaryData:
    """Zonal data on a sphere: ``low_value`` within ``inner_angle`` of the axis,
    ``high_value`` beyond ``outer_angle``, linear in the polar angle between.

    ``inner_angle == outer_angle`` gives a sharp step, i.e. a cap indicator
    (low 1, high 0) or its complement.
    """

    axis: tuple[float, ...]
    inner_angle: float
    outer_angle: float
    low_value: float = 0.0
    high_value: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        na = np.linalg.norm(a)
        if na == 0:
            raise ValueError("axis must be nonzero")
        object.__setattr__(self, "axis", tuple(float(c) for c in a / na))
        if not 0.0 < self.inner_angle <= self.outer_angle <= math.pi:
            raise ValueError(
                f"need 0 < inner_angle <= outer_angle <= pi, got {self.inner_angle}, {self.outer_angle}"
            )

    @property
    def dim(self) -> int:
        return len(self.axis)

    @classmethod
    def indicator(cls, angle: float, axis: Sequence[float]) -> "CapBoundaryData":
        """1 on the cap of polar half-angle ``angle`` around ``axis``, 0 elsewhere."""
        return cls(tuple(axis), angle, angle, 1.0, 0.0)

    @classmethod
    def g_nu(cls, nu: float, axis: Sequence[float], low: float = 0.0, high: float = 1.0) -> "CapBoundaryData":
        """Ramp data: ``low`` on dB_1 cap B(e, nu/2), ``high`` off B(e, nu), for the unit axis e.

        Chordal radii are converted to polar angles via chord = 2 sin(angle / 2).
        With ``low = M r^alpha`` and ``high = C_hat M r^beta`` this is the rescaled
        comparison data used at each induction step.
        """
        if not 0.0 < nu < 2.0:
            raise ValueError(f"nu must lie in (0, 2), got {nu}")
        return cls(tuple(axis), 2 * math.asin(nu / 4), 2 * math.asin(nu / 2), low, high)

    def profile(self, theta):
        """Data value as a function of the polar angle from the axis."""
        theta = np.asarray(theta, dtype=float)
        if self.outer_angle == self.inner_angle:
            return np.where(theta <= self.inner_angle, self.low_value, self.high_value)
        t = np.clip((theta - self.inner_angle) / (self.outer_angle - self.inner_angle), 0.0, 1.0)
        return self.low_value + t * (self.high_value - self.low_value)

    def evaluate(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        c = p @ np.asarray(self.axis) / np.linalg.norm(p, axis=1)
        return self.profile(np.arccos(np.clip(c, -1.0, 1.0)))


def _axial_poisson_integral(rho: float, phi: float, cap: CapBoundaryData, tol: float) -> tuple[float, float]:
    """Poisson integral over the unit sphere of zonal data, at a point of norm ``rho``
    making angle ``phi`` with the axis. Returns (value, error bound)."""
    n = cap.dim
    area = sphere_area(n)
    c = 1.0 - rho * rho
    h = cap.profile
    breaks = sorted({cap.inner_angle, cap.outer_angle})

    if n == 1:
        t = rho * math.cos(phi)
        val = c / 2 * (float(h(0.0)) / abs(1 - t) + float(h(math.pi)) / abs(1 + t))
        return val, 0.0

    if n == 2:

        def f2(theta):
            return float(h(abs(theta))) * c / (area * (1 + rho * rho - 2 * rho * math.cos(theta - phi)))

        pts = sorted({-math.pi, math.pi, phi, *breaks, *(-b for b in breaks)})
        pieces = [integrate.quad(f2, a, b, epsabs=tol / 10, epsrel=1e-12, limit=200) for a, b in zip(pts, pts[1:]) if b > a]
        return sum(p[0] for p in pieces), sum(p[1] for p in pieces)

    cphi, sphi = math.cos(phi), math.sin(phi)

    if n == 3:

        def azimuthal(theta):
            a = 1 + rho * rho - 2 * rho * cphi * math.cos(theta)
            b = 2 * rho * sphi * math.sin(theta)
            if b <= 1e-15 * a:
                return math.pi * a**-1.5
            return 2 * ellipe(2 * b / (a + b)) / ((a - b) * math.sqrt(a + b))

        weight = 2.0  # measure of S^0

    else:
        weight = sphere_area(n - 2)

        def azimuthal(theta):
            a = 1 + rho * rho - 2 * rho * cphi * math.cos(theta)
            b = 2 * rho * sphi * math.sin(theta)
            val, _ = integrate.quad(
                lambda psi: (a - b * math.cos(psi)) ** (-n / 2) * math.sin(psi) ** (n - 3),
                0.0,
                math.pi,
                epsabs=tol / 100,
                epsrel=1e-12,
                limit=200,
            )
            return val

    def fn(theta):
        return float(h(theta)) * math.sin(theta) ** (n - 2) * azimuthal(theta)

    scale = weight * c / area
    pts = sorted({0.0, math.pi, phi, *(b for b in breaks if b < math.pi)})
    pieces = [integrate.quad(fn, a, b, epsabs=tol / 10 / scale, epsrel=1e-12, limit=200) for a, b in zip(pts, pts[1:]) if b > a]
    return scale * sum(p[0] for p in pieces), scale * sum(p[1] for p in pieces)


def cap_harmonic_measure(x, cap: CapBoundaryData, r: float = 1.0, *, tol: float = 1e-9) -> float:
    """Poisson integral over dB_r of the zonal data ``cap`` evaluated at ``x``.

    For ``CapBoundaryData.indicator`` this is the harmonic measure of the cap.
    Axial symmetry reduces the sphere integral to the polar angle plus, for
    off-axis points in n >= 3, one azimuthal integral (closed form via the
    complete elliptic integral when n = 3).
    """
    x = np.asarray(x, dtype=float)
    if x.size != cap.dim:
        raise ValueError("x and the cap axis must have the same dimension")
    nx = float(np.linalg.norm(x))
    if not nx < r:
        raise ValueError(f"x must lie inside B_r (|x|={nx}, r={r})")
    rho = nx / r
    if rho == 0.0:
        phi = 0.0
    else:
        phi = math.acos(max(-1.0, min(1.0, float(x @ np.asarray(cap.axis)) / nx)))
    val, err = _axial_poisson_integral(rho, phi, cap, tol)
    if err > tol:
        raise QuadratureError(val, err, tol)
    return val


# ---------------------------------------------------------------------------
# decay constants and exponents
# ---------------------------------------------------------------------------


def mu_for_cap_angle(half_angle: float, tau2: float, n: int, *, tol: float = 1e-9) -> float:
    """Minimum over |x| = tau2 of the harmonic measure of a polar cap with the given half-angle.

    The minimum is attained on the ball's boundary sphere by the minimum
    principle; by axial symmetry it is a 1-D minimization over the angle
    between x and the cap axis.
    """
    if not 0.0 < tau2 < 1.0:
        raise ValueError(f"tau2 must lie in (0, 1), got {tau2}")
    if half_angle <= 0:
        raise ValueError("half_angle must be positive")
    if half_angle >= math.pi:
        return 1.0
    axis = np.eye(n)[0]
    cap = CapBoundaryData.indicator(half_angle, axis)

    def at(phi):
        x = np.zeros(n)
        x[0] = tau2 * math.cos(phi)
        if n > 1:
            x[1] = tau2 * math.sin(phi)
        return cap_harmonic_measure(x, cap, tol=tol)

    if n == 1:
        return min(at(0.0), at(math.pi))
    best = at(math.pi)
    res = optimize.minimize_scalar(at, bounds=(0.0, math.pi), method="bounded", options={"xatol": 1e-8})
    if not res.success:
        raise RuntimeError(f"minimization over the angle failed: {res.message}")
    return float(min(best, res.fun))


def mu_cap(nu: float, tau2: float, n: int, *, tol: float = 1e-9) -> float:
    """Decay constant from an (H2) cap of chordal radius ``nu``.

    Uses the harmonic measure of the inner cap dB_1 cap B(e_1, nu/2), on which
    the comparison data vanish; its minimum over |x| = tau2 bounds 1 - sup v
    from below.
    """
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    return mu_for_cap_angle(2 * math.asin(nu / 4), tau2, n, tol=tol)


def mu_h1_lower(nu: float, tau2: float, n: int) -> float:
    """Set-independent bound nu (1 - tau2) / (n omega_n (1 + tau2)^(n-1)).

    Valid for any subset of the unit sphere with surface measure ``nu``:
    it multiplies the measure by the smallest Poisson kernel value over
    |x| <= tau2.
    """
    area = sphere_area(n)
    if not 0.0 < nu <= area * (1 + 1e-12):
        raise ValueError(f"nu must lie in (0, n omega_n], got {nu}")
    if not 0.0 <= tau2 < 1.0:
        raise ValueError(f"tau2 must lie in [0, 1), got {tau2}")
    return nu * (1.0 - tau2) / (area * (1.0 + tau2) ** (n - 1))


def mu_h3_lower(nu: float, tau1: float, tau2: float, n: int, s: float) -> float:
    """Set-independent decay bound for the fractional kernel from an annulus volume bound.

    After rescaling so the inner radius is 1, the exterior set lies in
    1 < |y| < 1/tau1 with volume at least ``nu``; the kernel of B_1 at
    |x| <= tau2 is smallest at |x| = tau2, |y| = 1/tau1 on the far side.
    """
    if not 0.0 < s < 2.0:
        raise ValueError("s must lie in (0, 2)")
    if not 0.0 < tau1 < 1.0 or not 0.0 < tau2 < 1.0:
        raise ValueError("tau1, tau2 must lie in (0, 1)")
    big = 1.0 / tau1
    kmin = (
        gamma(n / 2) / math.pi ** (n / 2 + 1) * math.sin(math.pi * s / 2)
        * ((1 - tau2**2) / (big**2 - 1)) ** (s / 2) / (big + tau2) ** n
    )
    return min(nu * kmin, 1.0)


def alpha_of(mu: float, tau1: float) -> float:
    """Exponent with tau1^alpha = 1 - mu."""
    if not 0.0 < mu < 1.0 or not 0.0 < tau1 < 1.0:
        raise ValueError(f"mu and tau1 must lie in (0, 1), got mu={mu}, tau1={tau1}")
    return math.log1p(-mu) / math.log(tau1)


def chaser_lhs(mu: float, tau1: float, beta: float, C_hat: float, C_aux: float = 0.0) -> float:
    """(1 - mu)/tau1^beta + mu/(C_hat tau1^beta) + C_aux/(C_hat tau1^beta); admissible when <= 1."""
    tb = tau1**beta
    return (1.0 - mu) / tb + mu / (C_hat * tb) + C_aux / (C_hat * tb)


def constant_chaser(mu: float, tau1: float, C_aux: float = 0.0, alpha_cap: float = math.inf) -> tuple[float, float]:
    """Pick beta at half the feasible maximum and the smallest C_hat >= 1 closing the induction.

    The closed form C_hat = (mu + C_aux) / (tau1^beta - (1 - mu)) is then
    nudged up by a few ulps until ``chaser_lhs`` evaluates to at most 1 in
    floating point.
    """
    if not alpha_cap > 0:
        raise ValueError(f"infeasible: alpha_cap must be positive, got {alpha_cap}")
    if C_aux < 0:
        raise ValueError("C_aux must be nonnegative")
    beta = min(alpha_cap, alpha_of(mu, tau1)) / 2.0
    gap = tau1**beta - (1.0 - mu)
    C_hat = max(1.0, (mu + C_aux) / gap * (1.0 + 1e-12))
    for _ in range(64):
        if chaser_lhs(mu, tau1, beta, C_hat, C_aux) <= 1.0:
            break
        C_hat = np.nextafter(C_hat, math.inf) * (1.0 + 1e-15)
    else:  # pragma: no cover - would need a catastrophically small gap
        raise RuntimeError("could not close the induction inequality in floating point")
    return beta, float(C_hat)


@dataclass(frozen=True)
class ExponentBudget:
    """The constants tying the geometry to a certified decay rate."""

    n: int
    nu: float
    tau1: float
    tau2: float
    mu: float
    alpha: float
    beta: float
    C_hat: float
    M: float = 1.0
    p: float = math.inf
    s: float | None = None
    alpha_data: float = math.inf
    C_aux: float = 0.0
    mu_source: str = "h2"

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "inf"
        return d


def exponent_budget(
    nu: float,
    tau1: float,
    tau2: float,
    n: int,
    *,
    p: float = math.inf,
    s: float | None = None,
    alpha_data: float = math.inf,
    C_aux: float = 0.0,
    M: float = 1.0,
    condition: str = "h2",
    cap_angle: float | None = None,
) -> ExponentBudget:
    """Assemble mu, alpha, beta and C_hat from the geometric constants.

    ``condition`` picks how mu is obtained: ``h2`` (cap of chordal radius nu),
    ``h1`` (measure-only bound), ``h3`` (fractional annulus bound, needs s) or
    ``cap`` (exact cap of polar half-angle ``cap_angle``, e.g. a known
    exterior cone). The certified exponent is capped by min(2 - n/p, alpha_data),
    or min(s - n/p, alpha_data) when s is given.
    """
    if not 0.0 < tau1 < tau2 < 1.0:
        raise ValueError(f"need 0 < tau1 < tau2 < 1, got {tau1}, {tau2}")
    if condition == "h2":
        mu = mu_cap(nu, tau2, n)
    elif condition == "h1":
        mu = mu_h1_lower(nu, tau2, n)
    elif condition == "h3":
        if s is None:
            raise ValueError("condition h3 needs the fractional order s")
        mu = mu_h3_lower(nu, tau1, tau2, n, s)
    elif condition == "cap":
        if cap_angle is None:
            raise ValueError("condition 'cap' needs cap_angle")
        mu = mu_for_cap_angle(cap_angle, tau2, n)
    else:
        raise ValueError(f"unknown condition {condition!r}")
    order = 2.0 if s is None else s
    integrability = order - (0.0 if math.isinf(p) else n / p)
    if integrability <= 0:
        raise ValueError(f"need p > n/{order}")
    alpha = alpha_of(mu, tau1)
    beta, C_hat = constant_chaser(mu, tau1, C_aux, min(integrability, alpha_data))
    return ExponentBudget(
        n=n, nu=nu, tau1=tau1, tau2=tau2, mu=mu, alpha=alpha, beta=beta, C_hat=C_hat, M=M,
        p=p, s=s, alpha_data=alpha_data, C_aux=C_aux, mu_source=condition,
    )


# ---------------------------------------------------------------------------
# fractional Poisson kernel and exact exit sampling
# ---------------------------------------------------------------------------


def fractional_poisson_kernel(x, y, r: float, n: int | None = None, s: float = 1.0):
    """Exit density of the s-stable process started at x from B_r, at |y| > r."""
    if not 0.0 < s < 2.0:
        raise ValueError(f"s must lie in (0, 2), got {s}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size if n is None else n
    if x.size != n or y.shape[-1] != n:
        raise ValueError("x and y must have dimension n")
    xx = float(x @ x)
    if not xx < r * r:
        raise ValueError("x must lie inside B_r")
    yy = np.sum(y * y, axis=-1)
    if np.any(yy <= r * r):
        raise ValueError("y must lie outside the closed ball (the kernel is singular on |y| = r)")
    const = gamma(n / 2) / math.pi ** (n / 2 + 1) * math.sin(math.pi * s / 2)
    val = const * ((r * r - xx) / (yy - r * r)) ** (s / 2) / np.linalg.norm(y - x, axis=-1) ** n
    return float(val) if np.ndim(val) == 0 else val


def _centered_exit(rng: np.random.Generator, size: int, n: int, r: float, s: float) -> np.ndarray:
    # r^2/|Y|^2 has the Beta(s/2, 1 - s/2) law; invert its CDF at a uniform draw
    u = rng.random(size)
    w = betaincinv(s / 2, 1 - s / 2, u)
    w = np.clip(w, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
    radius = r / np.sqrt(w)
    return radius[:, None] * _streams.unit_vectors(rng, size, n)


def sample_fractional_exit(
    x,
    r: float,
    s: float,
    rng: np.random.Generator,
    size: int = 1,
    *,
    center=None,
    max_rounds: int = 10_000,
) -> np.ndarray:
    """Exact draws from the exit law of B(center, r) for the s-stable process started at x.

    Started at the center, the radius comes from the exact inverse CDF and the
    direction is isotropic. Off-center starts reject against the centered law
    with the bound (1 - d^2/r^2)^(s/2) (r / (r - d))^n on the density ratio,
    d = |x - center|.
    """
    if not 0.0 < s < 2.0:
        raise ValueError(f"s must lie in (0, 2), got {s}")
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    rel = x - c
    d = float(np.linalg.norm(rel))
    if not d < r:
        raise ValueError("x must lie inside the ball")
    if d == 0.0:
        return c + _centered_exit(rng, size, n, r, s)
    bound = (1 - d * d / (r * r)) ** (s / 2) * (r / (r - d)) ** n
    out = np.empty((size, n))
    filled = 0
    for _ in range(max_rounds):
        need = size - filled
        batch = max(int(need * bound * 1.2) + 8, 16)
        y = _centered_exit(rng, batch, n, r, s)
        ratio = fractional_poisson_kernel(rel, y, r, n, s) / fractional_poisson_kernel(np.zeros(n), y, r, n, s)
        keep = y[rng.random(batch) * bound < ratio][:need]
        out[filled : filled + len(keep)] = keep
        filled += len(keep)
        if filled == size:
            return c + out
    raise RejectionCapExceeded(f"rejection sampler accepted {filled}/{size} draws in {max_rounds} rounds")
