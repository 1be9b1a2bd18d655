"""Probabilists' Hermite polynomials and bivariate Gaussian odd moments.

The odd monomial expansion

    x**(2r+1) = sum_{j=0}^{r} c_{j,r} * H_{2(r-j)+1}(x)

with positive integer coefficients is the engine behind the closed-form
second moment of odd power variations: orthogonality of the H_q under a
bivariate Gaussian reduces ``E[A**(2l+1) B**(2l+1)]`` to a short sum in
the covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "OddPowerCoeffs",
    "CoefficientRangeError",
    "CorrelationRangeError",
    "hermite_eval",
    "odd_power_coeffs",
    "joint_odd_moment",
    "gauss_hermite_nodes",
]

_R_CAP = 32


class CoefficientRangeError(ValueError):
    """Coefficient row index beyond the supported cap."""


class CorrelationRangeError(ValueError):
    """|cov| exceeds sqrt(var_a * var_b)."""


@dataclass(frozen=True)
class OddPowerCoeffs:
    r: int
    coeffs: tuple  # (c_{0,r}, ..., c_{r,r}), exact ints


def hermite_eval(q: int, x):
    """Evaluate H_q (probabilists' normalization) via the three-term
    recurrence ``H_{q+1} = x H_q - q H_{q-1}``; vectorized in x."""
    if q < 0:
        raise ValueError("Hermite index must be nonnegative")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if q == 0:
        out = h_prev
    else:
        h = x.copy()
        for k in range(1, q):
            h, h_prev = x * h - k * h_prev, h
        out = h
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _coeff_row(r: int) -> tuple:
    # c_{j,r} = (2r+1)! / (2**j * j! * (2(r-j)+1)!), exact integers
    fact = math.factorial(2 * r + 1)
    row = []
    for j in range(r + 1):
        num, den = fact, (2 ** j) * math.factorial(j) * math.factorial(2 * (r - j) + 1)
        if num % den:  # pragma: no cover - integrality is structural
            raise ArithmeticError(f"non-integer Hermite coefficient at ({j}, {r})")
        row.append(num // den)
    return tuple(row)


def odd_power_coeffs(r: int) -> OddPowerCoeffs:
    """Integer coefficients expanding ``x**(2r+1)`` over odd H_q."""
    if not 0 <= r <= _R_CAP:
        raise CoefficientRangeError(f"need 0 <= r <= {_R_CAP}, got {r}")
    return OddPowerCoeffs(r=r, coeffs=_coeff_row(r))


def joint_odd_moment(ell: int, var_a: float, var_b: float, cov: float) -> float:
    """``E[A**(2*ell+1) * B**(2*ell+1)]`` for centered jointly Gaussian (A, B).

    Expanding both odd powers over Hermite polynomials of the standardized
    variables and using ``E[H_p(A')H_q(B')] = delta_pq q! rho**q`` gives

        sum_{r=0}^{ell} c_{r,ell}**2 * (var_a*var_b)**r * q_r! * cov**q_r,

    with ``q_r = 2(ell-r)+1``.  Exact for all parameters with
    ``|cov| <= sqrt(var_a*var_b)``.
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if var_a <= 0 or var_b <= 0:
        raise CorrelationRangeError("variances must be positive")
    bound = math.sqrt(var_a * var_b)
    if abs(cov) > bound * (1 + 1e-12):
        raise CorrelationRangeError(
            f"|cov|={abs(cov)} exceeds sqrt(var_a*var_b)={bound}")
    coeffs = _coeff_row(ell)
    total = 0.0
    for r, c in enumerate(coeffs):
        q = 2 * (ell - r) + 1
        total += (c * c) * (var_a * var_b) ** r * math.factorial(q) * cov ** q
    return total


def gauss_hermite_nodes(n: int):
    """Nodes and weights integrating against the standard normal density.

    Rescaled from the physicists' Gauss-Hermite rule; exact for
    polynomials of degree <= 2n-1.
    """
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    return nodes * math.sqrt(2.0), weights / math.sqrt(math.pi)
