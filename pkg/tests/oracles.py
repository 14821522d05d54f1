"""Independent reference computations shared by the unit and acceptance tests."""

import math

import numpy as np
from scipy import integrate
from scipy.special import betainc

from holderlab import kernels as kn


def sphere_integral(fn, n, m=400, q=800):
    """Integrate fn over the unit sphere in n = 2 or 3 on a fixed tensor grid."""
    if n == 2:
        t = np.arange(q) * 2 * np.pi / q
        y = np.stack([np.cos(t), np.sin(t)], -1)
        return float(fn(y).sum() * 2 * np.pi / q)
    c, w = np.polynomial.legendre.leggauss(m)
    phi = np.arange(q) * 2 * np.pi / q
    C, P = np.meshgrid(c, phi, indexing="ij")
    S = np.sqrt(1 - C**2)
    y = np.stack([S * np.cos(P), S * np.sin(P), C], -1).reshape(-1, 3)
    return float(w @ fn(y).reshape(m, q).sum(1) * 2 * np.pi / q)


def cap_area_fraction(theta, n):
    """Share of the unit sphere within polar angle theta of an axis."""
    if n == 2:
        return theta / math.pi
    half = 0.5 * betainc((n - 1) / 2, 0.5, math.sin(theta) ** 2)
    return half if theta <= math.pi / 2 else 1 - half


def planar_arc_measure(x, half_angle):
    """Harmonic measure in the unit disc of the arc |arg y| <= half_angle, from the
    antiderivative of the Poisson kernel."""
    rho = float(np.hypot(*x))
    phi = math.atan2(x[1], x[0])

    def F(t):  # antiderivative of P(rho, t - phi) in t, continuous on (phi - pi, phi + pi)
        return math.atan(((1 + rho) / (1 - rho)) * math.tan((t - phi) / 2)) / math.pi

    a, b = -half_angle, half_angle
    # F drops by 1 where tan((t - phi)/2) passes through its pole at t = phi + pi (mod 2 pi)
    pole = phi + math.pi
    while pole > b:
        pole -= 2 * math.pi
    return F(b) - F(a) + (1.0 if a < pole < b else 0.0)


def exterior_integral(x, n, s, r=1.0):
    """Integral of the fractional kernel over |y| > r.

    The substitution rho = r + v^m with m = 2/(2 - s) cancels the
    (rho - r)^(-s/2) endpoint singularity, leaving a smooth integrand in v.
    """
    x = np.asarray(x, dtype=float)
    m = 2.0 / (2.0 - s)

    def angular(rho):
        if n == 1:
            return sum(kn.fractional_poisson_kernel(x, np.array([sgn * rho]), r, 1, s) for sgn in (-1, 1))
        val, _ = integrate.quad(
            lambda t: kn.fractional_poisson_kernel(x, np.array([rho * math.cos(t), rho * math.sin(t)]), r, 2, s) * rho,
            0, 2 * math.pi, epsabs=1e-12, limit=200,
        )
        return val

    near, _ = integrate.quad(lambda v: angular(r + v**m) * m * v ** (m - 1), 0.0, 1.0, epsabs=1e-11, limit=200)
    far, _ = integrate.quad(angular, 2 * r, math.inf, epsabs=1e-11, limit=400)
    return near + far


def radial_cdf_quadrature(rho, s, r=1.0):
    """CDF of |Y| for the centered exit in n = 1 by direct quadrature of
    (2/pi) sin(pi s/2) r^s t^-1 (t^2 - r^2)^(-s/2)."""
    c = 2 / math.pi * math.sin(math.pi * s / 2) * r**s
    val, _ = integrate.quad(
        lambda t: c / t * (t + r) ** (-s / 2), r, rho, weight="alg", wvar=(-s / 2, 0), epsabs=1e-12
    )
    return val


def max_product_oracle(a, omega, c0, A0, K):
    """A_k = max over j <= k of omega_j * prod_{i=j}^{k-1} (1 - c0 a_i / 2), with omega_{-1} = A0."""
    out = []
    for k in range(K + 1):
        best = A0 * math.prod(max(0.0, 1 - c0 * a[i] / 2) for i in range(k))
        for j in range(1, k + 1):
            best = max(best, omega[j] * math.prod(max(0.0, 1 - c0 * a[i] / 2) for i in range(j, k)))
        out.append(best)
    return np.array(out)



def radial_cdf_increment(a, b, s, r=1.0):
    """Integral of the same radial density over [a, b] with r < a <= b."""
    if b <= a:
        return 0.0
    c = 2 / math.pi * math.sin(math.pi * s / 2) * r**s
    val, _ = integrate.quad(lambda t: c / t * (t * t - r * r) ** (-s / 2), a, b, epsabs=1e-13, epsrel=1e-12)
    return val
