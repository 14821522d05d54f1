"""The modulus-of-continuity recursion behind the divergent-sum solvability criterion.

With a_k the normalized exterior sphere measure at scale r_k and omega_k
the boundary-data modulus at r_k, the bound on |u| over the k-th ball is
2 A_k, where

    A_0 = sup |g|,    A_k = max(omega_k, (1 - c0 a_{k-1} / 2) A_{k-1}).

A_k -> 0 exactly when the a_k have divergent sum, which is the same as
the product of (1 - c0 a_k) vanishing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from holderlab.geometry import H4Row, sphere_area


@dataclass(frozen=True)
class ModulusInput:
    a: tuple[float, ...]
    omega_vals: tuple[float, ...]
    c0: float
    A0: float

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "omega_vals", tuple(float(v) for v in self.omega_vals))
        if any(v < 0 for v in self.a):
            raise ValueError("a_k must be nonnegative")
        if any(v < 0 for v in self.omega_vals):
            raise ValueError("omega values must be nonnegative")
        if any(b > a for a, b in zip(self.omega_vals, self.omega_vals[1:])):
            raise ValueError("omega values must be nonincreasing")
        if not 0.0 < self.c0 < 1.0:
            raise ValueError(f"c0 must lie in (0, 1), got {self.c0}")
        if not self.A0 > 0:
            raise ValueError("A0 must be positive")

    @classmethod
    def from_h4(cls, rows: Sequence[H4Row], omega_vals, c0: float, A0: float) -> "ModulusInput":
        """Take a_k term by term from ``geometry.h4_partial_sums``."""
        return cls(tuple(r.term for r in rows), tuple(omega_vals), c0, A0)


def default_c0(tau2: float, n: int) -> float:
    """c0 = (1 - tau2) / (n omega_n (1 + tau2)^(n-1)), the pointwise Poisson-kernel minimum on |x| <= tau2."""
    if not 0.0 < tau2 < 1.0:
        raise ValueError("tau2 must lie in (0, 1)")
    return (1.0 - tau2) / (sphere_area(n) * (1.0 + tau2) ** (n - 1))


@dataclass(frozen=True)
class RecursionResult:
    A: np.ndarray
    clamped: tuple[int, ...]


def modulus_recursion(inp: ModulusInput, K: int) -> RecursionResult:
    """Evaluate A_0..A_K. Needs a_0..a_{K-1} and omega_1..omega_K.

    A factor 1 - c0 a_k / 2 that would be negative is clamped to 0 and its
    index reported in ``clamped``.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if len(inp.a) < K or len(inp.omega_vals) < K + 1:
        raise ValueError(f"K={K} needs {K} values of a and {K + 1} values of omega")
    A = np.empty(K + 1)
    A[0] = inp.A0
    clamped = []
    for k in range(1, K + 1):
        factor = 1.0 - inp.c0 * inp.a[k - 1] / 2.0
        if factor < 0.0:
            factor = 0.0
            clamped.append(k - 1)
        A[k] = max(inp.omega_vals[k], factor * A[k - 1])
    return RecursionResult(A, tuple(clamped))


def sum_product_check(a: Sequence[float], c0: float, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Partial sums of a_k and partial products of (1 - c0 a_k), k = 0..K.

    Products are accumulated as sums of log1p terms.
    """
    a = np.asarray(a, dtype=float)[: K + 1]
    if len(a) < K + 1:
        raise ValueError(f"need {K + 1} terms, got {len(a)}")
    t = c0 * a
    if np.any(t < 0) or np.any(t >= 1):
        raise ValueError("need 0 <= c0 a_k < 1")
    sums = np.cumsum(a)
    prods = np.exp(np.cumsum(np.log1p(-t)))
    return sums, prods


def family(name: str, K: int, *, exponent: float = 0.5, ratio: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Named test families: ``harmonic`` (a_k = 1/(k+1)) and ``geometric`` (a_k = 2^-k).

    Returns (a_0..a_K, omega_0..omega_K) with omega_k = r_k^exponent, r_k = ratio^k.
    """
    k = np.arange(K + 1)
    if name == "harmonic":
        a = 1.0 / (k + 1)
    elif name == "geometric":
        a = 0.5**k
    else:
        raise ValueError(f"unknown family {name!r}")
    return a, (ratio**k) ** exponent


def product_floor(a: Sequence[float], c0: float) -> float:
    """prod (1 - c0 a_k / 2): a lower bound for inf A_k / A_0 when omega never dominates."""
    return math.exp(math.fsum(np.log1p(-c0 * np.asarray(a, dtype=float) / 2.0)))
