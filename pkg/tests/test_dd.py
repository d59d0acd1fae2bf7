import math
from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gvx import dd

finite = st.floats(min_value=-1e150, max_value=1e150,
                   allow_nan=False, allow_infinity=False)
# error-free products need both factors and the product away from the
# subnormal range (the series machinery works on O(1)-scaled values)
scaled = st.floats(min_value=1e-70, max_value=1e70,
                   allow_nan=False, allow_infinity=False)
signed_scaled = st.builds(lambda m, s: m * s, scaled,
                          st.sampled_from([-1.0, 1.0]))
nonzero = signed_scaled


@given(finite, finite)
def test_two_sum_exact(a, b):
    s, e = dd.two_sum(a, b)
    assert Fraction(s) + Fraction(e) == Fraction(a) + Fraction(b)


@given(signed_scaled, signed_scaled)
@settings(max_examples=200)
def test_two_prod_exact(a, b):
    p, e = dd.two_prod(a, b)
    assert Fraction(p) + Fraction(e) == Fraction(a) * Fraction(b)


@given(finite, finite, finite, finite)
@settings(max_examples=200)
def test_add_close_to_exact(ah, al, bh, bl):
    h, l = dd.add(ah, 0.0, bh, 0.0)
    exact = Fraction(ah) + Fraction(bh)
    got = Fraction(h) + Fraction(l)
    if exact != 0:
        assert abs((got - exact) / exact) < Fraction(1, 10**30)


@given(nonzero, nonzero)
@settings(max_examples=200)
def test_mul_div_roundtrip(a, b):
    ph, pl = dd.mul(a, 0.0, b, 0.0)
    qh, ql = dd.div(ph, pl, b, 0.0)
    exact = Fraction(a)
    got = Fraction(qh) + Fraction(ql)
    assert abs(got - exact) <= abs(exact) * Fraction(1, 10**28)


def test_vector_ops_match_scalar():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1e5, 1e5, 64)
    b = rng.uniform(-1e5, 1e5, 64)
    vh, vl = dd.vadd(a, np.zeros(64), b, np.zeros(64))
    for i in range(64):
        sh, sl = dd.add(a[i], 0.0, b[i], 0.0)
        assert vh[i] == sh and vl[i] == sl
    vh, vl = dd.vmul(a, np.zeros(64), b, np.zeros(64))
    for i in range(64):
        sh, sl = dd.mul(a[i], 0.0, b[i], 0.0)
        assert vh[i] == sh and vl[i] == sl


def test_from_mpf_big_integer_exact():
    p = 34134779074054062081  # needs more than 53 bits
    h, l = dd.from_mpf(p)
    assert int(h) + int(l) == p


def test_dsum_cancellation():
    # alternating series that cancels far below double precision
    vals = [1e16, 1.0, -1e16, 1e-8]
    h, l = dd.dsum(vals)
    assert h + l == 1.00000001
