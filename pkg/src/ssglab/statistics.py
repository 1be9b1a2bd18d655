"""Path statistics, limit constants and the exact power-variation variance.

Two deterministic oracles anchor the Monte Carlo experiments:

* ``sigma_ell_series`` sums the closed-form series for the limit variance
  coefficient ``sigma_ell**2`` of odd power variations in the critical
  regime ``alpha = 1/(2*ell+1)``, with a rigorous truncation-tail bound.
* ``exact_variance_Vn`` evaluates ``E[V_n(t)**2]`` exactly at finite n
  through the bivariate Gaussian odd-moment formula applied to the grid
  Gram matrix, an O(N^2) sum whose n -> infinity limit is
  ``sigma_ell**2 * t**(2*beta/alpha)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import quadrature
from .covariance_engine import GridSpec, PathSample, gram_block, increment_variances
from .hermite import _coeff_row, gauss_hermite_nodes, hermite_eval
from .process_models import ProcessModel

__all__ = [
    "SmoothFunction",
    "LimitConstants",
    "DerivativeOrderError",
    "RegimeError",
    "QuadratureConvergenceError",
    "smooth_function",
    "rho_alpha",
    "sigma_ell_series",
    "limit_constants",
    "power_variation",
    "riemann_sum",
    "corrector",
    "ito_residual",
    "exact_variance_Vn",
    "taylor_remainder",
    "limit_variance_Z",
]

EXACT_VARIANCE_CAP = 8192
_BLOCK = 512


class DerivativeOrderError(ValueError):
    """A derivative beyond the declared smoothness order was requested."""


class RegimeError(ValueError):
    """Increment exponent incompatible with the requested limit regime."""


class QuadratureConvergenceError(RuntimeError):
    """Node doubling moved the quadrature value more than the tolerance."""


@dataclass(frozen=True)
class SmoothFunction:
    """A function together with evaluators for its derivatives.

    ``deriv_fn(x, k)`` returns the k-th derivative at x (vectorized);
    ``order`` caps the available k (None means every order).
    """

    name: str
    order: int | None
    deriv_fn: Callable = field(repr=False, compare=False)

    def __call__(self, x):
        return self.deriv_fn(x, 0)

    def deriv(self, k: int) -> Callable:
        if k < 0:
            raise DerivativeOrderError("derivative order must be nonnegative")
        if self.order is not None and k > self.order:
            raise DerivativeOrderError(
                f"{self.name} declares derivatives up to order {self.order}, "
                f"requested {k}")
        return lambda x: self.deriv_fn(x, k)


def _validate_derivatives(sf: SmoothFunction) -> None:
    # registration check: analytic f' must match a central difference of f
    x = np.linspace(-3.0, 3.0, 25)
    h = 1e-5
    fd = (sf.deriv_fn(x + h, 0) - sf.deriv_fn(x - h, 0)) / (2 * h)
    d1 = sf.deriv_fn(x, 1)
    err = np.abs(fd - d1) / (1.0 + np.abs(d1))
    if np.max(err) > 1e-6:
        raise DerivativeOrderError(
            f"{sf.name}: first derivative disagrees with finite differences "
            f"(max relative error {np.max(err):.2e})")


def _sin_deriv(x, k):
    return np.sin(np.asarray(x, dtype=float) + k * math.pi / 2)


def _xexp_deriv(x, k):
    # f = x exp(-x^2/2) = -(d/dx) exp(-x^2/2), so the k-th derivative is
    # (-1)^k H_{k+1}(x) exp(-x^2/2) with probabilists' Hermite H.
    x = np.asarray(x, dtype=float)
    return (-1.0) ** k * hermite_eval(k + 1, x) * np.exp(-0.5 * x * x)


def _poly_deriv(coeffs):
    c = np.asarray(coeffs, dtype=float)
    def d(x, k):
        ck = np.polynomial.polynomial.polyder(c, k) if k else c
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), ck)
    return d


def smooth_function(spec) -> SmoothFunction:
    """Resolve a smooth-function id: ``sin``, ``xexp`` or ``poly:c0,c1,...``."""
    if isinstance(spec, SmoothFunction):
        return spec
    spec = spec.strip()
    if spec == "sin":
        sf = SmoothFunction("sin", None, _sin_deriv)
    elif spec == "xexp":
        sf = SmoothFunction("xexp", None, _xexp_deriv)
    elif spec.startswith("poly:"):
        coeffs = [float(v) for v in spec[len("poly:"):].split(",")]
        sf = SmoothFunction(spec, None, _poly_deriv(coeffs))
    else:
        raise DerivativeOrderError(f"unknown smooth function {spec!r}")
    _validate_derivatives(sf)
    return sf


# -- limit constants ----------------------------------------------------------

@dataclass(frozen=True)
class LimitConstants:
    """Constants entering the power-variation limit at one order ell."""

    ell: int
    sigma2: float
    kappa: object = None          # Fraction/float once a measure is attached
    truncation_P: int = 0
    tail_bound: float = 0.0
    warning: str | None = None


def rho_alpha(alpha: float, m: int) -> float:
    """Second difference ``|m+1|^a + |m-1|^a - 2|m|^a``; even in m."""
    if not 0.0 < alpha < 1.0:
        raise RegimeError(f"need 0 < alpha < 1, got {alpha}")
    m = abs(int(m))
    return float((m + 1) ** alpha + abs(m - 1) ** alpha - 2 * m ** alpha)


def _check_critical(model: ProcessModel, ell: int) -> str | None:
    dev = abs(model.alpha * (2 * ell + 1) - 1.0)
    if dev > 1e-6:
        raise RegimeError(
            f"alpha={model.alpha} is not the critical exponent 1/{2 * ell + 1} "
            f"for ell={ell} (deviation {dev:.2e})")
    if dev > 1e-9:
        return (f"alpha*(2*ell+1) deviates from 1 by {dev:.2e}; series "
                f"evaluated at the model's own alpha")
    return None


def sigma_ell_series(model: ProcessModel, ell: int,
                     rel_tol: float = 1e-12) -> LimitConstants:
    """Limit variance coefficient ``sigma_ell**2`` from its closed series.

    ``sigma**2 = (a/(2b)) * sum_{r<ell} K_r * sum_{p in Z} rho_a(p)**q_r``
    with ``K_r = c_{r,ell}**2 * 2**(2r) * lambda**(2*ell+1) * q_r!`` and
    ``q_r = 2(ell-r)+1``.  Each p-series is truncated once the analytic
    tail bound (|rho_a(p)| <= a(1-a)(p-1)**(a-2) for p >= 2, summed by an
    integral comparison) drops below ``rel_tol`` times the partial sum.
    """
    if ell < 1:
        raise RegimeError("ell must be >= 1")
    warning = _check_critical(model, ell)
    a, lam = model.alpha, model.lambda_
    coeffs = _coeff_row(ell)
    rho_cache = [rho_alpha(a, 0)]

    def rho(p):
        while len(rho_cache) <= p:
            rho_cache.append(rho_alpha(a, len(rho_cache)))
        return rho_cache[p]

    def tail(P, q):
        # 2 * sum_{p > P} |rho(p)|^q, bounded by first term + integral
        c = (a * (1.0 - a)) ** q
        e = (a - 2.0) * q
        return 2.0 * c * (P ** e + P ** (e + 1.0) / (-e - 1.0))

    sigma2 = 0.0
    tail_total = 0.0
    P_max = 0
    for r in range(ell):
        q = 2 * (ell - r) + 1
        K = coeffs[r] ** 2 * 2 ** (2 * r) * lam ** (2 * ell + 1) * math.factorial(q)
        terms = [rho(0) ** q]
        p = 0
        while True:
            p += 1
            terms.append(2.0 * rho(p) ** q)
            partial = math.fsum(terms)
            if p >= 4 and tail(p, q) <= rel_tol * abs(partial):
                break
            if p > 10 ** 7:  # pragma: no cover - defensive
                raise QuadratureConvergenceError("rho series failed to settle")
        sigma2 += K * partial
        tail_total += K * tail(p, q)
        P_max = max(P_max, p)
    sigma2 *= a / (2 * model.beta)
    tail_total *= a / (2 * model.beta)
    return LimitConstants(ell=ell, sigma2=sigma2, truncation_P=P_max,
                          tail_bound=tail_total, warning=warning)


def limit_constants(model: ProcessModel, measure, rel_tol: float = 1e-12,
                    ell: int | None = None) -> LimitConstants:
    """Series constants plus the corrector constant of the given measure."""
    if ell is None:
        ell = quadrature.ell_of(measure)
    base = sigma_ell_series(model, ell, rel_tol=rel_tol)
    return LimitConstants(ell=base.ell, sigma2=base.sigma2,
                          kappa=quadrature.kappa(measure, ell),
                          truncation_P=base.truncation_P,
                          tail_bound=base.tail_bound, warning=base.warning)


# -- path statistics ----------------------------------------------------------

def _path_arrays(path: PathSample, t: float):
    steps = path.grid.steps(t)
    x = path.values[:steps + 1]
    return x[:-1], np.diff(x), steps


def power_variation(path: PathSample, ell: int, t: float) -> float:
    """Odd power variation ``sum_j (DX_j)**(2*ell+1)`` up to time t."""
    _, dx, steps = _path_arrays(path, t)
    if steps == 0:
        return 0.0
    return float(np.sum(dx ** (2 * ell + 1)))


def riemann_sum(path: PathSample, g: Callable, measure, t: float) -> float:
    """Weighted Riemann sum ``sum_j int g(X_j + y DX_j) nu(dy) DX_j``."""
    x, dx, steps = _path_arrays(path, t)
    if steps == 0:
        return 0.0
    total = 0.0
    for y, w in measure.atoms:
        total += float(w) * float(np.dot(np.asarray(g(x + float(y) * dx)), dx))
    return total


def corrector(path: PathSample, f: SmoothFunction, h: int, measure,
              t: float) -> float:
    """Order-h corrector ``kappa_h * sum_j f^(2h+1)(midpoint_j) DX_j**(2h+1)``."""
    ell = quadrature.ell_of(measure)
    if not ell <= h <= 2 * ell:
        raise DerivativeOrderError(
            f"corrector order h={h} outside [{ell}, {2 * ell}] for this measure")
    deriv = f.deriv(2 * h + 1)
    x, dx, steps = _path_arrays(path, t)
    if steps == 0:
        return 0.0
    mid = x + 0.5 * dx
    kap = float(quadrature.kappa(measure, h))
    return kap * float(np.dot(np.asarray(deriv(mid)), dx ** (2 * h + 1)))


def ito_residual(path: PathSample, f: SmoothFunction, measure,
                 t: float) -> float:
    """Defect of the change-of-variables formula along one path:

    ``f(X_{floor(nt)/n}) - f(0) - riemann_sum(f', nu, t)``.
    """
    steps = path.grid.steps(t)
    end = float(np.asarray(f(path.values[steps])))
    start = float(np.asarray(f(0.0)))
    return end - start - riemann_sum(path, f.deriv(1), measure, t)


# -- exact variance oracle ----------------------------------------------------

def exact_variance_Vn(model: ProcessModel, ell: int, n: int, t: float,
                      workers: int = 1, cap: int = EXACT_VARIANCE_CAP) -> float:
    """Exact ``E[V_n(t)**2]`` for the odd power variation of order 2*ell+1.

    Sums ``joint_odd_moment`` over all pairs (j, k) of grid increments:

        sum_{j,k} sum_r c_{r,ell}**2 q_r! (xi_j xi_k)**(2r) <d_j, d_k>**q_r.

    Runs in O(N^2 * ell) over row blocks; per-block partial sums are
    reduced with exact summation, so the result is identical for any
    worker count.
    """
    steps = int(math.floor(n * t + 1e-9))
    if steps < 1:
        return 0.0
    if steps > cap:
        raise ValueError(f"N={steps} exceeds cap {cap}; pass cap= to override")
    grid = GridSpec(n, T=steps / n)
    xi2 = increment_variances(model, grid)
    coeffs = _coeff_row(ell)
    xi2_pow = [xi2 ** r for r in range(ell + 1)]

    def block_sum(lo: int) -> float:
        hi = min(lo + _BLOCK, steps)
        G = gram_block(model, grid, lo, hi, xi2=xi2)
        G2 = G * G
        Gq = G.copy()
        total = 0.0
        for r in range(ell, -1, -1):  # q = 1, 3, ..., 2*ell+1
            q = 2 * (ell - r) + 1
            if q > 1:
                Gq *= G2
            w = xi2_pow[r]
            total += (coeffs[r] ** 2 * math.factorial(q)
                      * float(w[lo:hi] @ (Gq @ w)))
        return total

    starts = range(0, steps, _BLOCK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(block_sum, starts))
    else:
        partials = [block_sum(lo) for lo in starts]
    return math.fsum(partials)


# -- expansion remainder ------------------------------------------------------

def _cast_like(value, like):
    """Convert a rational constant to the arithmetic of ``like``."""
    if isinstance(like, float):
        return float(value)
    one = like - like + 1
    f = Fraction(value)
    return (f.numerator * one) / f.denominator


def taylor_remainder(f: SmoothFunction, measure, a, b):
    """Remainder of the measure-weighted expansion of f(b) - f(a).

    Subtracts the weighted first-derivative average and every midpoint
    corrector of order ell..2*ell; for polynomials of degree <= 2*ell the
    result is zero to roundoff, and for smooth f it vanishes at a rate
    steeper than (b-a)**(4*ell+2) as b -> a.  Arithmetic follows the type
    of the endpoints, so extended-precision inputs stay extended.
    """
    ell = quadrature.ell_of(measure)
    if f.order is not None and f.order < 4 * ell + 2:
        raise DerivativeOrderError(
            f"need derivatives to order {4 * ell + 2}, have {f.order}")
    d = b - a
    quad = sum(_cast_like(w, a) * f.deriv(1)(a + _cast_like(y, a) * d)
               for y, w in measure.atoms)
    rem = f(b) - f(a) - d * quad
    mid = (a + b) / 2
    for h in range(ell, 2 * ell + 1):
        kap = _cast_like(quadrature.kappa(measure, h), a)
        rem = rem - kap * f.deriv(2 * h + 1)(mid) * d ** (2 * h + 1)
    return rem


# -- limit process variance ---------------------------------------------------

def limit_variance_Z(model: ProcessModel, f: SmoothFunction, ell: int,
                     measure, t: float, quad_nodes: int = 64,
                     time_panels: int = 96, rtol: float = 1e-6) -> float:
    """Unconditional variance of the limit corrector process at time t:

    ``kappa**2 sigma**2 * int_0^t E[f^(2*ell+1)(X_s)**2] d(s**(2b/a))``,

    the inner expectation by Gauss-Hermite quadrature against
    N(0, s**(2b) phi(1)) and the outer integral, in the natural variable
    ``u = s**(2b/a)``, by composite Gauss-Legendre panels geometrically
    refined toward 0 (where the integrand has a power-law derivative
    singularity).  Doubling both node counts must move the value by less
    than ``rtol`` or the computation is rejected.
    """
    _check_critical(model, ell)
    kap = float(quadrature.kappa(measure, ell))
    sigma2 = sigma_ell_series(model, ell).sigma2
    g = f.deriv(2 * ell + 1)
    phi1 = float(model.phi_fn(np.float64(1.0)))
    expo = 2 * model.beta / model.alpha
    u_max = t ** expo
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)

    def integral(qn: int, panels: int) -> float:
        nodes, weights = gauss_hermite_nodes(qn)
        half = panels // 2
        edges = np.concatenate([
            [0.0],
            u_max * np.geomspace(1e-12, 0.1, half),
            u_max * np.linspace(0.1, 1.0, panels - half + 1)[1:],
        ])
        mid = 0.5 * (edges[1:] + edges[:-1])
        radius = 0.5 * np.diff(edges)
        u = (mid[:, None] + radius[:, None] * gl_x[None, :]).ravel()
        w = (radius[:, None] * gl_w[None, :]).ravel()
        # s = u**(1/expo), so the law N(0, s**(2b) phi(1)) has sd^2 = u^a phi(1)
        sd = np.sqrt(u ** model.alpha * phi1)
        vals = np.asarray(g(sd[:, None] * nodes[None, :])) ** 2 @ weights
        return float(w @ vals)

    prev = integral(quad_nodes, time_panels)
    cur = integral(min(2 * quad_nodes, 192), 2 * time_panels)
    if not (math.isfinite(cur)
            and abs(cur - prev) <= rtol * max(abs(cur), 1e-300)):
        raise QuadratureConvergenceError(
            f"node doubling moves the integral from {prev} to {cur}, beyond "
            f"relative tolerance {rtol}")
    return kap * kap * sigma2 * cur
