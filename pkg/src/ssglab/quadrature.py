"""Finitely atomic symmetric probability measures on [0, 1].

A measure here plays the role of the averaging rule in a weighted Riemann
sum: the integrand is evaluated at ``x_j + y * dx_j`` and averaged over
``y`` with weights ``w``.  The classical rules are atomic instances:

* trapezoid      (0 and 1, weight 1/2 each)         -> order ell = 1
* Simpson        (0, 1/2, 1 with weights 1/6,4/6)   -> order ell = 2
* Milne          (0, 1/4, 1/2, 3/4, 1)              -> order ell = 3

``ell`` is the first even-moment order at which the measure stops matching
Lebesgue measure on [0, 1]; it controls both the polynomial exactness of
the rule and the critical increment exponent ``alpha = 1/(2*ell+1)``.
Atoms with small rational coordinates are kept in exact rational
arithmetic so that ell detection and the corrector constants are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

__all__ = [
    "SymmetricMeasure",
    "QuadratureConstants",
    "MeasureError",
    "EllCapError",
    "make_measure",
    "parse_measure_spec",
    "trapezoid",
    "simpson",
    "milne",
    "midpoint",
    "moment",
    "ell_of",
    "kappa",
    "constants_of",
]


class MeasureError(ValueError):
    """Invalid atom list: bad locations, weights, normalization or symmetry."""


class EllCapError(ValueError):
    """Even moments match Lebesgue up to the search cap; measure is suspect."""


@dataclass(frozen=True)
class SymmetricMeasure:
    """Aggregated, validated atomic measure.  ``exact`` marks rational atoms."""

    atoms: tuple  # ((location, weight), ...) sorted by location
    exact: bool

    @property
    def locations(self):
        return tuple(a for a, _ in self.atoms)

    @property
    def weights(self):
        return tuple(w for _, w in self.atoms)

    @property
    def boundary_supported(self) -> bool:
        """True when the measure charges both endpoints 0 and 1.

        Interior-only rules (e.g. the midpoint rule) fall outside the class
        this package's limit theory is verified for; they are still valid
        measures and all finite-n operations accept them.
        """
        locs = self.locations
        return locs[0] == 0 and locs[-1] == 1

    def spec(self) -> str:
        return "atoms:" + ",".join(f"{float(y):g}={float(w):g}"
                                   for y, w in self.atoms)


@dataclass(frozen=True)
class QuadratureConstants:
    ell: int
    kappa: object  # Fraction for exact measures, float otherwise


def _as_exact(value):
    """Return a Fraction when the value is (close to) a small rational."""
    if isinstance(value, Rational):
        return Fraction(value)
    f = Fraction(value).limit_denominator(10 ** 6)
    if abs(float(f) - float(value)) <= 1e-15 * max(1.0, abs(float(value))):
        return f
    return None


def make_measure(atoms) -> SymmetricMeasure:
    """Validate, aggregate and canonicalize an atom list.

    Raises ``MeasureError`` naming the offending atom for asymmetric input,
    and for weights or locations outside their domains.
    """
    atoms = list(atoms)
    if not atoms:
        raise MeasureError("measure needs at least one atom")
    exact_pairs = []
    for y, w in atoms:
        ye, we = _as_exact(y), _as_exact(w)
        if ye is None or we is None:
            exact_pairs = None
            break
        exact_pairs.append((ye, we))
    pairs = exact_pairs if exact_pairs is not None else \
        [(float(y), float(w)) for y, w in atoms]
    is_exact = exact_pairs is not None

    merged: dict = {}
    for y, w in pairs:
        if w <= 0:
            raise MeasureError(f"atom weight must be positive, got {w} at {y}")
        if not 0 <= y <= 1:
            raise MeasureError(f"atom location must lie in [0, 1], got {y}")
        key = y if is_exact else round(float(y), 12)
        merged[key] = merged.get(key, 0) + w

    total = sum(merged.values())
    if abs(float(total) - 1.0) > 1e-14:
        raise MeasureError(f"weights must sum to 1, got {float(total)!r}")

    for y, w in merged.items():
        mirror = 1 - y if is_exact else round(1.0 - float(y), 12)
        wm = merged.get(mirror)
        bad = wm is None or (w != wm if is_exact
                             else abs(float(w) - float(wm)) > 1e-12)
        if bad:
            raise MeasureError(
                f"measure is not symmetric: weight {float(w):g} at "
                f"{float(y):g} has no match at {float(mirror):g}")

    out = tuple(sorted(merged.items()))
    return SymmetricMeasure(atoms=out, exact=is_exact)


def trapezoid() -> SymmetricMeasure:
    return make_measure([(0, Fraction(1, 2)), (1, Fraction(1, 2))])


def simpson() -> SymmetricMeasure:
    return make_measure([(0, Fraction(1, 6)), (Fraction(1, 2), Fraction(4, 6)),
                         (1, Fraction(1, 6))])


def milne() -> SymmetricMeasure:
    return make_measure([(0, Fraction(7, 90)), (Fraction(1, 4), Fraction(32, 90)),
                         (Fraction(1, 2), Fraction(12, 90)),
                         (Fraction(3, 4), Fraction(32, 90)),
                         (1, Fraction(7, 90))])


def midpoint() -> SymmetricMeasure:
    return make_measure([(Fraction(1, 2), 1)])


_NAMED = {"trapezoid": trapezoid, "simpson": simpson, "milne": milne,
          "midpoint": midpoint}


def parse_measure_spec(spec: str) -> SymmetricMeasure:
    """Parse ``trapezoid`` / ``simpson`` / ``milne`` / ``atoms:0=0.5,1=0.5``."""
    spec = spec.strip().lower()
    if spec in _NAMED:
        return _NAMED[spec]()
    if spec.startswith("atoms:"):
        pairs = []
        for item in spec[len("atoms:"):].split(","):
            y, sep, w = item.partition("=")
            if not sep:
                raise MeasureError(f"malformed atom {item!r}")
            pairs.append((float(y), float(w)))
        return make_measure(pairs)
    raise MeasureError(f"unknown measure spec {spec!r}")


def moment(measure: SymmetricMeasure, k: int):
    """k-th raw moment; exact Fraction when the atoms are rational."""
    if k < 0:
        raise MeasureError("moment order must be nonnegative")
    return sum(w * y ** k for y, w in measure.atoms)


def ell_of(measure: SymmetricMeasure, cap: int = 16) -> int:
    """Order of the rule: first j >= 1 whose even moment leaves 1/(2j+1).

    Measures matching Lebesgue even moments all the way to ``cap`` are
    rejected as degenerate rather than silently assigned a huge order.
    """
    for j in range(1, cap + 1):
        m = moment(measure, 2 * j)
        target = Fraction(1, 2 * j + 1)
        if measure.exact:
            if m != target:
                return j
        elif abs(float(m) - float(target)) > 1e-12:
            return j
    raise EllCapError(f"even moments match Lebesgue up to order {2 * cap}; "
                      f"raise the cap or check the measure")


def kappa(measure: SymmetricMeasure, ell: int):
    """Corrector constant of order ``h = ell``.

    ``kappa = (1/(2h)!) * (1/((2h+1) 2**(2h)) - sum_i w_i (y_i - 1/2)**(2h))``

    The first factor difference vanishes exactly for h below the measure's
    order, which is what makes the weighted Riemann sums reproduce smooth
    antiderivatives to that order.  Exact measures give exact Fractions.
    """
    if ell < 1:
        raise MeasureError("kappa order must be >= 1")
    two_h = 2 * ell
    if measure.exact:
        central = sum(w * (y - Fraction(1, 2)) ** two_h
                      for y, w in measure.atoms)
        return (Fraction(1, (two_h + 1) * 2 ** two_h) - central) \
            / math.factorial(two_h)
    central = sum(w * (y - 0.5) ** two_h for y, w in measure.atoms)
    return (1.0 / ((two_h + 1) * 2.0 ** two_h) - central) / math.factorial(two_h)


def constants_of(measure: SymmetricMeasure, ell: int | None = None,
                 cap: int = 16) -> QuadratureConstants:
    if ell is None:
        ell = ell_of(measure, cap=cap)
    return QuadratureConstants(ell=ell, kappa=kappa(measure, ell))
