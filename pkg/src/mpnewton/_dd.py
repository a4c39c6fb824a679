"""Vectorized double-double arithmetic.

A value is stored as an unevaluated sum ``hi + lo`` of two float64 arrays with
``|lo| <= ulp(hi)/2``.  The kernels follow the classical error-free
transformations (Knuth two-sum, Dekker split product) and give roughly 104 bits
of significand.
"""

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1

LN2 = (0.6931471805599453, 2.3190468138462996e-17, 5.707708438416212e-34)
PIO2 = (1.5707963267948966, 6.123233995736766e-17, -1.4973849048591698e-33)


def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add_pair(ah, al, bh, bl):
    s, e = two_sum(ah, bh)
    t, f = two_sum(al, bl)
    s, e = quick_two_sum(s, e + t)
    return quick_two_sum(s, e + f)


def mul_pair(ah, al, bh, bl):
    p, e = two_prod(ah, bh)
    return quick_two_sum(p, e + (ah * bl + al * bh))


def div_pair(ah, al, bh, bl):
    q1 = ah / bh
    ph, pl = mul_pair(q1, 0.0, bh, bl)
    rh, rl = add_pair(ah, al, -ph, -pl)
    q2 = rh / bh
    ph, pl = mul_pair(q2, 0.0, bh, bl)
    rh, rl = add_pair(rh, rl, -ph, -pl)
    q3 = rh / bh
    q1, q2 = quick_two_sum(q1, q2)
    return add_pair(q1, q2, q3, 0.0)


def _parts(x):
    if isinstance(x, DD):
        return x.hi, x.lo
    x = np.asarray(x, dtype=np.float64)
    return x, np.zeros_like(x)


class DD:
    """Array of double-double numbers with numpy-style broadcasting."""

    __slots__ = ("hi", "lo")
    __array_ufunc__ = None

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        self.lo = np.zeros_like(self.hi) if lo is None else np.asarray(lo, dtype=np.float64)

    @classmethod
    def from_exact(cls, values):
        """Round arbitrary-precision reals (mpmath, Fraction, str) to double-double."""
        arr = np.asarray(values, dtype=object)
        hi = np.empty(arr.shape)
        lo = np.empty(arr.shape)
        for idx, v in np.ndenumerate(arr):
            if isinstance(v, str):
                from fractions import Fraction
                v = Fraction(v)
            h = float(v)
            hi[idx] = h
            lo[idx] = float(v - type(v)(h)) if np.isfinite(h) else 0.0
        hi, lo = quick_two_sum(hi, lo)
        return cls(hi, lo)

    # shape handling
    @property
    def shape(self):
        return self.hi.shape

    @property
    def ndim(self):
        return self.hi.ndim

    @property
    def size(self):
        return self.hi.size

    def __len__(self):
        return len(self.hi)

    def __getitem__(self, key):
        return DD(self.hi[key], self.lo[key])

    def __setitem__(self, key, value):
        h, l = _parts(value)
        self.hi[key] = h
        self.lo[key] = l

    def copy(self):
        return DD(self.hi.copy(), self.lo.copy())

    def reshape(self, *shape):
        return DD(self.hi.reshape(*shape), self.lo.reshape(*shape))

    def ravel(self):
        return DD(self.hi.ravel(), self.lo.ravel())

    @property
    def T(self):
        return DD(self.hi.T, self.lo.T)

    def __repr__(self):
        return f"DD(hi={self.hi!r}, lo={self.lo!r})"

    def __float__(self):
        return float(self.hi + self.lo)

    def to_float(self):
        return self.hi + self.lo

    # arithmetic
    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __pos__(self):
        return self

    def __abs__(self):
        neg = self.hi < 0
        return DD(np.where(neg, -self.hi, self.hi), np.where(neg, -self.lo, self.lo))

    def __add__(self, other):
        bh, bl = _parts(other)
        return DD(*add_pair(self.hi, self.lo, bh, bl))

    __radd__ = __add__

    def __sub__(self, other):
        bh, bl = _parts(other)
        return DD(*add_pair(self.hi, self.lo, -bh, -bl))

    def __rsub__(self, other):
        ah, al = _parts(other)
        return DD(*add_pair(ah, al, -self.hi, -self.lo))

    def __mul__(self, other):
        bh, bl = _parts(other)
        return DD(*mul_pair(self.hi, self.lo, bh, bl))

    __rmul__ = __mul__

    def __truediv__(self, other):
        bh, bl = _parts(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            return DD(*div_pair(self.hi, self.lo, bh, bl))

    def __rtruediv__(self, other):
        ah, al = _parts(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            return DD(*div_pair(ah, al, self.hi, self.lo))

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("double-double power supports non-negative integer exponents")
        result = DD(np.ones_like(self.hi))
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # ordering compares (hi, lo) lexicographically, exact for normalized pairs
    def _cmp(self, other):
        bh, bl = _parts(other)
        return np.where(self.hi == bh, np.sign(self.lo - bl), np.sign(self.hi - bh))

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0


def ldexp(x, k):
    return DD(np.ldexp(x.hi, k), np.ldexp(x.lo, k))


def where(cond, a, b):
    ah, al = _parts(a)
    bh, bl = _parts(b)
    return DD(np.where(cond, ah, bh), np.where(cond, al, bl))


def sqrt(a):
    a = a if isinstance(a, DD) else DD(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = 1.0 / np.sqrt(a.hi)
        ax = a.hi * x
        sh, sl = two_prod(ax, ax)
        rh, _ = add_pair(a.hi, a.lo, -sh, -sl)
        h, l = two_sum(ax, rh * x * 0.5)
        h, l = quick_two_sum(h, l)
    zero = a.hi == 0.0
    return DD(np.where(zero, 0.0, h), np.where(zero, 0.0, l))


def _coeffs(first, step):
    # Taylor coefficients 1/n! for n = first, first + step, ... as double-double
    out = []
    c = DD(1.0)
    n = 1
    while n < first:
        n += 1
        c = c / float(n)
    out.append(c)
    for _ in range(14):
        for _ in range(step):
            n += 1
            c = c / float(n)
        out.append(c)
    return out


_EXP_TERMS = 11
_EXP_SCALE = 10
_INV_FACT = _coeffs(1, 1)
_SIN_COEF = _coeffs(1, 2)  # 1/1!, 1/3!, 1/5!, ...
_COS_COEF = _coeffs(2, 2)  # 1/2!, 1/4!, ...


def exp(a):
    a = a if isinstance(a, DD) else DD(a)
    with np.errstate(invalid="ignore", over="ignore"):
        k = np.rint(a.hi / LN2[0])
        k = np.where(np.isfinite(k), k, 0.0)
        k = np.clip(k, -1100.0, 1100.0)
    r = a - DD(*two_prod(k, LN2[0]))
    r = r - DD(*two_prod(k, LN2[1]))
    r = r - k * LN2[2]
    r = ldexp(r, -_EXP_SCALE)
    # expm1(r) by Horner, then undo the scaling with (1+s)**2 - 1 = 2s + s*s
    s = r * _INV_FACT[_EXP_TERMS - 1]
    for j in range(_EXP_TERMS - 2, -1, -1):
        s = (s + _INV_FACT[j]) * r
    for _ in range(_EXP_SCALE):
        s = s * 2.0 + s * s
    out = ldexp(s + 1.0, k.astype(np.int64))
    with np.errstate(invalid="ignore"):
        big = a.hi > 709.78
        small = a.hi < -745.2
        bad = np.isnan(a.hi)
    hi = np.where(big, np.inf, np.where(small, 0.0, out.hi))
    lo = np.where(big | small, 0.0, out.lo)
    hi = np.where(bad, np.nan, hi)
    return DD(hi, np.where(np.isfinite(hi), lo, 0.0))


def log(a):
    a = a if isinstance(a, DD) else DD(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = DD(np.log(a.hi))
        ok = np.isfinite(y.hi)
        y0 = DD(np.where(ok, y.hi, 0.0))
        y1 = y0 + a * exp(-y0) - 1.0
    return DD(np.where(ok, y1.hi, y.hi), np.where(ok, y1.lo, 0.0))


def _reduce_quadrant(a):
    k = np.rint(a.hi / PIO2[0])
    r = a - DD(*two_prod(k, PIO2[0]))
    r = r - DD(*two_prod(k, PIO2[1]))
    r = r - k * PIO2[2]
    return r, np.mod(k, 4).astype(np.int64)


def _sin_cos_reduced(r):
    r2 = r * r
    s = _SIN_COEF[-1]
    for c in reversed(_SIN_COEF[:-1]):
        s = c - r2 * s
    t = _COS_COEF[-1]
    for c in reversed(_COS_COEF[:-1]):
        t = c - r2 * t
    return r * s, 1.0 - r2 * t


def sin_cos(a):
    a = a if isinstance(a, DD) else DD(a)
    r, q = _reduce_quadrant(a)
    s, c = _sin_cos_reduced(r)
    sin_ = where(q == 0, s, where(q == 1, c, where(q == 2, -s, -c)))
    cos_ = where(q == 0, c, where(q == 1, -s, where(q == 2, -c, s)))
    return sin_, cos_


def sin(a):
    return sin_cos(a)[0]


def cos(a):
    return sin_cos(a)[1]


def tree_sum(x, axis=0):
    """Sum along ``axis`` by a fixed pairwise tree of double-double additions."""
    hi = np.moveaxis(x.hi, axis, 0)
    lo = np.moveaxis(x.lo, axis, 0)
    if hi.shape[0] == 0:
        return DD(np.zeros(hi.shape[1:]))
    while hi.shape[0] > 1:
        if hi.shape[0] % 2:
            pad = np.zeros((1,) + hi.shape[1:])
            hi = np.concatenate([hi, pad])
            lo = np.concatenate([lo, pad])
        hi, lo = add_pair(hi[0::2], lo[0::2], hi[1::2], lo[1::2])
    return DD(hi[0], lo[0])


def concatenate(parts, axis=0):
    parts = [p if isinstance(p, DD) else DD(p) for p in parts]
    return DD(np.concatenate([p.hi for p in parts], axis), np.concatenate([p.lo for p in parts], axis))


def stack(parts, axis=0):
    parts = [p if isinstance(p, DD) else DD(p) for p in parts]
    return DD(np.stack([p.hi for p in parts], axis), np.stack([p.lo for p in parts], axis))
