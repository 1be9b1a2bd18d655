from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

import ssglab as sg
from ssglab.quadrature import EllCapError, MeasureError, make_measure


class TestMakeMeasure:
    def test_trapezoid_atoms(self):
        m = make_measure([(0, 0.5), (1, 0.5)])
        assert m.atoms == ((Fraction(0), Fraction(1, 2)),
                           (Fraction(1), Fraction(1, 2)))
        assert m.exact and m.boundary_supported

    def test_asymmetric_rejected(self):
        with pytest.raises(MeasureError, match="not symmetric"):
            make_measure([(0, 0.3), (1, 0.7)])

    def test_unnormalized_rejected(self):
        with pytest.raises(MeasureError, match="sum to 1"):
            make_measure([(0, 0.5), (1, 0.6)])

    def test_bad_domain(self):
        with pytest.raises(MeasureError):
            make_measure([(stub, 1.0) for stub in (1.5,)])
        with pytest.raises(MeasureError):
            make_measure([(0.5, -1.0), (0.5, 2.0)])

    def test_midpoint_valid_but_interior(self):
        m = sg.midpoint()
        assert not m.boundary_supported
        assert sg.ell_of(m) == 1

    def test_duplicate_atoms_merge(self):
        m = make_measure([(0, 0.25), (0, 0.25), (1, 0.5)])
        assert m.atoms == sg.trapezoid().atoms

    def test_float_atoms_fall_back_to_inexact(self):
        import math
        y = 1 / math.pi
        m = make_measure([(y, 0.5), (1 - y, 0.5)])
        assert not m.exact
        assert sg.ell_of(m) >= 1

    def test_spec_parsing(self):
        assert sg.parse_measure_spec("simpson").atoms == sg.simpson().atoms
        m = sg.parse_measure_spec("atoms:0=0.5,1=0.5")
        assert m.atoms == sg.trapezoid().atoms
        with pytest.raises(MeasureError):
            sg.parse_measure_spec("gauss")


class TestMoments:
    def test_trapezoid_second(self):
        assert sg.moment(sg.trapezoid(), 2) == Fraction(1, 2)

    def test_simpson_second(self):
        assert sg.moment(sg.simpson(), 2) == Fraction(1, 3)

    def test_normalization(self):
        for m in (sg.trapezoid(), sg.simpson(), sg.milne(), sg.midpoint()):
            assert sg.moment(m, 0) == 1

    @given(hs.integers(0, 9))
    @settings(max_examples=30, deadline=None)
    def test_symmetry_relation(self, k):
        # sum w y^k == sum w (1-y)^k for symmetric measures
        for m in (sg.trapezoid(), sg.simpson(), sg.milne()):
            lhs = sum(w * y ** k for y, w in m.atoms)
            rhs = sum(w * (1 - y) ** k for y, w in m.atoms)
            assert lhs == rhs


class TestEll:
    def test_named_rules(self):
        assert sg.ell_of(sg.trapezoid()) == 1
        assert sg.ell_of(sg.simpson()) == 2
        assert sg.ell_of(sg.milne()) == 3

    def test_cap_error(self):
        with pytest.raises(EllCapError):
            sg.ell_of(sg.simpson(), cap=1)

    def test_order_invariance(self):
        scrambled = make_measure([(1, Fraction(1, 6)), (0, Fraction(1, 6)),
                                  (Fraction(1, 2), Fraction(1, 3)),
                                  (Fraction(1, 2), Fraction(1, 3))])
        assert sg.ell_of(scrambled) == sg.ell_of(sg.simpson()) == 2


class TestKappa:
    def test_trapezoid_order_one(self):
        assert sg.kappa(sg.trapezoid(), 1) == Fraction(-1, 12)

    def test_simpson_order_two(self):
        assert sg.kappa(sg.simpson(), 2) == Fraction(-1, 2880)

    def test_midpoint_order_one(self):
        assert sg.kappa(sg.midpoint(), 1) == Fraction(1, 24)

    def test_trapezoid_order_two(self):
        # corrector constant used for h = 2*ell in the trapezoid expansions
        assert sg.kappa(sg.trapezoid(), 2) == Fraction(-1, 480)

    def test_vanishes_below_order(self):
        # kappa_h = 0 exactly for h < ell characterizes the rule's order
        assert sg.kappa(sg.simpson(), 1) == 0
        assert sg.kappa(sg.milne(), 1) == 0
        assert sg.kappa(sg.milne(), 2) == 0
        assert sg.kappa(sg.milne(), 3) != 0

    def test_constants_of(self):
        qc = sg.constants_of(sg.simpson())
        assert (qc.ell, qc.kappa) == (2, Fraction(-1, 2880))
