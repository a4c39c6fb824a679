from fractions import Fraction

import numpy as np
import pytest

from mpnewton import precision as P
from mpnewton._dd import DD
from mpnewton.precision import Tier, fl_op, round_to, unit_roundoff


def test_unit_roundoff_values():
    assert unit_roundoff(Tier.P32) == 2.0 ** -24
    assert unit_roundoff(Tier.P64) == 2.0 ** -53
    assert unit_roundoff(Tier.EXT) < unit_roundoff(Tier.P64) < unit_roundoff(Tier.P32)
    assert unit_roundoff("fp32") == unit_roundoff("32")


def test_unknown_tier():
    with pytest.raises(ValueError):
        Tier.parse("16")


def test_round_to_machine_number():
    assert round_to(1.0, Tier.P32).value == 1.0


def test_round_to_below_half_ulp():
    assert round_to(1 + 2.0 ** -25, Tier.P32).value == 1.0
    # exactly half an ulp ties to even, just above rounds up
    assert round_to(1 + 2.0 ** -24, Tier.P32).value == 1.0
    assert round_to(1 + 2.0 ** -24 + 2.0 ** -40, Tier.P32).value == 1 + 2.0 ** -23


def test_round_to_random_bound(rng):
    x = rng.standard_normal(2000) * 10.0 ** rng.uniform(-20, 20, 2000)
    for v in x:
        r = round_to(float(v), Tier.P32).value
        assert abs(r - v) <= 2.0 ** -24 * abs(v)


def test_round_to_exact_rational_single_rounding():
    # 1/3 to P32: compare with bit-level rounding of the exact value
    r = round_to(Fraction(1, 3), Tier.P32).value
    assert r == float(np.float32(1 / 3))
    assert abs(Fraction(r) - Fraction(1, 3)) <= Fraction(1, 3) * Fraction(1, 2 ** 24)


def test_round_to_ext_is_exact_for_dd_inputs():
    v = round_to(Fraction(1, 3), Tier.EXT).value
    assert isinstance(v, DD)
    err = abs(Fraction(float(v.hi)) + Fraction(float(v.lo)) - Fraction(1, 3))
    assert err <= Fraction(1, 3) * Fraction(1, 2 ** 104)


def test_round_to_idempotent(rng):
    for v in rng.standard_normal(200):
        for tier in (Tier.P32, Tier.P64):
            once = round_to(float(v), tier).value
            assert round_to(once, tier).value == once


def test_round_to_overflow():
    with pytest.raises(P.TierOverflow):
        round_to(1e39, Tier.P32)
    with pytest.raises(ValueError):
        round_to(float("inf"), Tier.P64)


def test_fl_op_examples():
    assert float(fl_op(1, 1, "add", Tier.P64)) == 2.0
    third = float(fl_op(1, 3, "div", Tier.P32))
    assert abs(third - 1 / 3) <= 6e-8 / 3
    assert float(fl_op(2.0 ** 30 + 1, 2.0 ** 30, "sub", Tier.P32)) == 0.0


def test_fl_op_division_by_zero_is_ieee():
    assert float(fl_op(1, 0, "div", Tier.P64)) == float("inf")
    with pytest.raises(ValueError):
        fl_op(1, 2, "pow", Tier.P64)


def test_asarray_dtypes():
    assert P.asarray([1.0, 2.0], Tier.P32).dtype == np.float32
    assert P.tier_of(P.asarray([1.0], Tier.P64)) is Tier.P64
    assert P.tier_of(P.asarray([1.0], Tier.EXT)) is Tier.EXT
    with pytest.raises(P.TierOverflow):
        P.asarray([1e300], Tier.P32)


def test_tsum_is_left_to_right_at_p32():
    x = np.array([1.0, 2.0 ** -24, 2.0 ** -24], dtype=np.float32)
    # left to right each tiny term is lost; summing the tail first would keep it
    assert P.tsum(x) == np.float32(1.0)


def test_matmul_matches_float64_at_p64(rng):
    A = rng.standard_normal((7, 5))
    B = rng.standard_normal((5, 3))
    assert np.allclose(P.matmul(A, B), A @ B, rtol=1e-14, atol=1e-14)
    assert np.allclose(P.matmul(A, B[:, 0]), A @ B[:, 0], rtol=1e-14, atol=1e-14)


def test_matmul_ext_more_accurate(rng):
    A = rng.standard_normal((6, 6))
    x = rng.standard_normal(6)
    ext = P.matmul(P.asarray(A, Tier.EXT), P.asarray(x, Tier.EXT))
    exact = [sum(Fraction(a) * Fraction(b) for a, b in zip(row, x)) for row in A]
    for got, want in zip(P.to_f64(ext), exact):
        assert abs(Fraction(got) - want) <= abs(want) * Fraction(1, 2 ** 52) + Fraction(1, 2 ** 200)


def test_clip_reports_hits():
    v, hit = P.clip(np.array([-1.0, 0.5, 2.0]), 0.0, 1.0)
    assert hit and list(v) == [0.0, 0.5, 1.0]
    _, hit = P.clip(np.array([0.5]), 0.0, 1.0)
    assert not hit
