from fractions import Fraction
import math

import mpmath
import numpy as np

from mpnewton import _dd
from mpnewton._dd import DD

mpmath.mp.prec = 200
U_EXT = 2.0 ** -104


def exact(x):
    return Fraction(float(x.hi)) + Fraction(float(x.lo))


def mp(x):
    return mpmath.mpf(float(x.hi)) + mpmath.mpf(float(x.lo))


def test_two_sum_is_error_free(rng):
    a = rng.standard_normal(100)
    b = rng.standard_normal(100) * 1e-9
    s, e = _dd.two_sum(a, b)
    for i in range(100):
        assert Fraction(s[i]) + Fraction(e[i]) == Fraction(a[i]) + Fraction(b[i])


def test_two_prod_is_error_free(rng):
    a = rng.standard_normal(100)
    b = rng.standard_normal(100)
    p, e = _dd.two_prod(a, b)
    for i in range(100):
        assert Fraction(p[i]) + Fraction(e[i]) == Fraction(a[i]) * Fraction(b[i])


def test_from_exact_third():
    x = DD.from_exact(Fraction(1, 3))
    assert abs(exact(x) - Fraction(1, 3)) <= Fraction(1, 3) * Fraction(1, 2 ** 105)


def test_arithmetic_accuracy(rng):
    a = DD(rng.standard_normal(50), rng.standard_normal(50) * 1e-17)
    b = DD(rng.standard_normal(50) + 3.0, rng.standard_normal(50) * 1e-17)
    for op in ("add", "sub", "mul", "div"):
        got = {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b}[op]
        for i in range(50):
            x, y = exact(a[i]), exact(b[i])
            want = {"add": x + y, "sub": x - y, "mul": x * y, "div": x / y}[op]
            tol = 4 * U_EXT * (abs(want) if op in ("mul", "div") else abs(x) + abs(y))
            assert abs(exact(got[i]) - want) <= tol, op


def test_elementary_functions():
    x = DD(np.array([0.3, 1.7, -2.5, 10.0]))
    checks = [(_dd.exp(x), mpmath.exp), (_dd.sin(x), mpmath.sin), (_dd.cos(x), mpmath.cos)]
    for got, fn in checks:
        for i in range(4):
            want = fn(mp(x[i]))
            assert abs(mp(got[i]) - want) <= 1e-30 * max(1.0, abs(want))
    y = DD(np.array([0.5, 2.0, 1e10]))
    for got, fn in ((_dd.log(y), mpmath.log), (_dd.sqrt(y), mpmath.sqrt)):
        for i in range(3):
            want = fn(mp(y[i]))
            assert abs(mp(got[i]) - want) <= 1e-30 * max(1.0, abs(want))


def test_tree_sum_deterministic(rng):
    v = DD(rng.standard_normal(1001))
    s1 = _dd.tree_sum(v, 0)
    s2 = _dd.tree_sum(v.copy(), 0)
    assert s1.hi == s2.hi and s1.lo == s2.lo
    want = sum(Fraction(float(t)) for t in v.hi)
    assert abs(exact(s1) - want) <= 1001 * U_EXT * sum(abs(Fraction(float(t))) for t in v.hi)


def test_comparisons_and_float():
    a = DD(np.array([1.0]), np.array([1e-20]))
    b = DD(np.array([1.0]))
    assert bool((a > b)[0]) and bool((b < a)[0])
    assert math.isclose(float(DD(2.0)), 2.0)
