"""Double-double (~31 significant digits) arithmetic, scalar and numpy-vectorized.

A double-double value is an unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
Based on the error-free transforms of Dekker and Knuth; no FMA required.
Used for the alternating series and k-th order difference tables, whose
terms cancel far below double precision.
"""

from __future__ import annotations

import math
from typing import Iterable, Tuple

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a: float, b: float) -> Tuple[float, float]:
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a: float, b: float) -> Tuple[float, float]:
    # requires |a| >= |b|
    s = a + b
    err = b - (s - a)
    return s, err


def split(a: float) -> Tuple[float, float]:
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a: float, b: float) -> Tuple[float, float]:
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def add(ah: float, al: float, bh: float, bl: float) -> Tuple[float, float]:
    s1, s2 = two_sum(ah, bh)
    t1, t2 = two_sum(al, bl)
    s2 += t1
    s1, s2 = quick_two_sum(s1, s2)
    s2 += t2
    return quick_two_sum(s1, s2)

def add_f(ah: float, al: float, b: float) -> Tuple[float, float]:
    s1, s2 = two_sum(ah, b)
    s2 += al
    return quick_two_sum(s1, s2)


def sub(ah: float, al: float, bh: float, bl: float) -> Tuple[float, float]:
    return add(ah, al, -bh, -bl)


def mul(ah: float, al: float, bh: float, bl: float) -> Tuple[float, float]:
    p1, p2 = two_prod(ah, bh)
    p2 += ah * bl + al * bh
    return quick_two_sum(p1, p2)


def mul_f(ah: float, al: float, b: float) -> Tuple[float, float]:
    p1, p2 = two_prod(ah, b)
    p2 += al * b
    return quick_two_sum(p1, p2)


def div(ah: float, al: float, bh: float, bl: float) -> Tuple[float, float]:
    q1 = ah / bh
    rh, rl = add(*(ah, al), *mul_f(bh, bl, -q1))
    q2 = rh / bh
    rh, rl = add(rh, rl, *mul_f(bh, bl, -q2))
    q3 = rh / bh
    q1, q2 = quick_two_sum(q1, q2)
    return add_f(q1, q2, q3)


def from_float(a: float) -> Tuple[float, float]:
    return float(a), 0.0


def from_mpf(x) -> Tuple[float, float]:
    """Round an mpmath mpf or exact int to a double-double pair.

    Integers are split exactly (int - float would coerce the whole integer
    to a double first and lose the low bits); mpf subtraction is exact at
    the caller's working precision.
    """
    hi = float(x)
    if isinstance(x, int):
        lo = float(x - int(hi))
    else:
        lo = float(x - hi)
    return hi, lo


def to_float(ah: float, al: float) -> float:
    return ah + al


def dsum(values: Iterable[float]) -> Tuple[float, float]:
    """Double-double sum of plain floats (exact up to ~31 digits)."""
    sh, sl = 0.0, 0.0
    for v in values:
        sh, sl = add_f(sh, sl, v)
    return sh, sl


def fsum2(values: Iterable[float]) -> Tuple[float, float]:
    """Exactly rounded sum plus a residual estimate, via math.fsum."""
    vals = list(values)
    s = math.fsum(vals)
    r = math.fsum([-s] + vals)
    return s, r


# ---------------------------------------------------------------------------
# numpy-vectorized variants: a dd vector is a pair of equal-shape float arrays.
# ---------------------------------------------------------------------------

def vtwo_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def vquick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def vtwo_prod(a, b):
    p = a * b
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def vadd(ah, al, bh, bl):
    s1, s2 = vtwo_sum(ah, bh)
    t1, t2 = vtwo_sum(al, bl)
    s2 = s2 + t1
    s1, s2 = vquick_two_sum(s1, s2)
    s2 = s2 + t2
    return vquick_two_sum(s1, s2)


def vmul(ah, al, bh, bl):
    p1, p2 = vtwo_prod(ah, bh)
    p2 = p2 + (ah * bl + al * bh)
    return vquick_two_sum(p1, p2)


def vmul_f(ah, al, b):
    p1, p2 = vtwo_prod(ah, b)
    p2 = p2 + al * b
    return vquick_two_sum(p1, p2)


def vdiv(ah, al, bh, bl):
    q1 = ah / bh
    th, tl = vmul_f(bh, bl, q1)
    rh, rl = vadd(ah, al, -th, -tl)
    q2 = rh / bh
    th, tl = vmul_f(bh, bl, q2)
    rh, rl = vadd(rh, rl, -th, -tl)
    q3 = rh / bh
    q1, q2 = vquick_two_sum(q1, q2)
    s1, s2 = vtwo_sum(q1, q3)
    s2 = s2 + q2
    return vquick_two_sum(s1, s2)


def vsub(ah, al, bh, bl):
    return vadd(ah, al, -bh, -bl)


def varray(values) -> Tuple[np.ndarray, np.ndarray]:
    hi = np.asarray(values, dtype=float)
    return hi, np.zeros_like(hi)
