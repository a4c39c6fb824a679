"""Precision tiers and per-operation rounding.

Three tiers are simulated: IEEE single (``P32``), IEEE double (``P64``) and a
double-double extended tier (``EXT``).  "Computing at a tier" means every input
is rounded to the tier on entry and every elementary operation rounds its
result, i.e. ``fl(x op y) = (x op y)(1 + delta)`` with ``|delta| <= u``.

Arrays at P32/P64 are plain numpy arrays of the matching dtype; arrays at EXT
are :class:`DD` instances.  The helpers below (``exp``, ``tsum``, ``matmul``...)
dispatch on the array type so model code can be written once for all tiers.

Reductions at P32/P64 accumulate strictly left to right.  At EXT they use a
fixed pairwise tree, which is just as reproducible and keeps the double-double
kernels vectorized.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
import math

import numpy as np

from . import _dd
from ._dd import DD


class NumericFailure(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class TierOverflow(NumericFailure, OverflowError):
    pass


class Tier(Enum):
    P32 = "32"
    P64 = "64"
    EXT = "ext"

    @property
    def bits(self) -> int:
        return _BITS[self]

    @property
    def u(self) -> float:
        return 2.0 ** -self.bits

    @property
    def dtype(self):
        return {Tier.P32: np.float32, Tier.P64: np.float64}.get(self)

    @classmethod
    def parse(cls, value) -> "Tier":
        if isinstance(value, Tier):
            return value
        key = str(value).strip().lower()
        aliases = {"32": "32", "fp32": "32", "single": "32", "64": "64", "fp64": "64",
                   "double": "64", "ext": "ext", "128": "ext", "dd": "ext"}
        if key not in aliases:
            raise ValueError(f"unknown precision tier {value!r}")
        return cls(aliases[key])

    def __str__(self):
        return self.value


_BITS = {Tier.P32: 24, Tier.P64: 53, Tier.EXT: 104}

ALL_TIERS = (Tier.P32, Tier.P64, Tier.EXT)


def unit_roundoff(tier) -> float:
    return Tier.parse(tier).u


def at_least_as_fine(a: Tier, b: Tier) -> bool:
    """True when tier ``a`` carries at least the precision of ``b``."""
    return a.u <= b.u


@dataclass(frozen=True)
class RoundedScalar:
    value: object
    tier: Tier

    def __float__(self):
        return float(self.value)


def round_to(x, tier) -> RoundedScalar:
    """Round a finite real to ``tier`` with round-to-nearest-even.

    ``x`` may be a float, int, Fraction, mpmath number, decimal string or
    double-double; exact inputs are rounded once (no double rounding through
    float64 for the EXT tier).
    """
    tier = Tier.parse(tier)
    if tier is Tier.EXT:
        if isinstance(x, DD):
            value = x
        elif isinstance(x, (float, np.floating)):
            value = DD(float(x))
        else:
            value = DD.from_exact(x if not isinstance(x, int) else Fraction(x))
        if not np.all(np.isfinite(value.hi)):
            raise TierOverflow(f"{x!r} is outside the range of tier {tier}")
        return RoundedScalar(value, tier)
    if isinstance(x, DD):
        x = float(x.hi) + float(x.lo)
    elif not isinstance(x, (float, np.floating)):
        x = _exact_to_float(x, tier)
    if not math.isfinite(x):
        raise ValueError("round_to requires a finite input")
    with np.errstate(over="ignore"):
        value = float(tier.dtype(x))
    if not math.isfinite(value):
        raise TierOverflow(f"{x!r} overflows tier {tier}")
    return RoundedScalar(value, tier)


def _exact_to_float(x, tier):
    # Correct single rounding of an exact rational at the tier's width: float()
    # of a Fraction is correctly rounded to 53 bits, and for P32 we round the
    # exact value directly to avoid an intermediate double rounding.
    q = Fraction(x) if not isinstance(x, Fraction) else x
    if tier is Tier.P64:
        return float(q)
    if q == 0:
        return 0.0
    sign = -1 if q < 0 else 1
    q = abs(q)
    e = math.floor(math.log2(q.numerator) - math.log2(q.denominator))
    while Fraction(2) ** e > q:
        e -= 1
    while Fraction(2) ** (e + 1) <= q:
        e += 1
    e = max(e, -126)  # stay in the subnormal grid below the normal range
    scale = Fraction(2) ** (e - 23)
    m = q / scale
    n = math.floor(m)
    rem = m - n
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and n % 2):
        n += 1
    return sign * float(n * scale)


def fl_op(a, b, op: str, tier) -> RoundedScalar:
    """One rounded arithmetic operation at ``tier``.

    Division by zero returns the IEEE result (inf or nan); callers treat a
    non-finite value as a solver failure.
    """
    tier = Tier.parse(tier)
    x = asarray(float(a) if not isinstance(a, DD) else a, tier)
    y = asarray(float(b) if not isinstance(b, DD) else b, tier)
    with np.errstate(all="ignore"):
        if op == "add":
            r = x + y
        elif op == "sub":
            r = x - y
        elif op == "mul":
            r = x * y
        elif op == "div":
            r = x / y
        else:
            raise ValueError(f"unknown operation {op!r}")
    if tier is Tier.EXT:
        return RoundedScalar(r, tier)
    value = float(r)
    if math.isinf(value) and float(y) != 0.0:
        raise TierOverflow(f"{a!r} {op} {b!r} overflows tier {tier}")
    return RoundedScalar(value, tier)


# ---------------------------------------------------------------------------
# arrays


def asarray(x, tier):
    """Round an array (or scalar) to ``tier``."""
    tier = Tier.parse(tier)
    if tier is Tier.EXT:
        if isinstance(x, DD):
            return x
        return DD(np.asarray(x, dtype=np.float64))
    if isinstance(x, DD):
        x = x.to_float()
    arr = np.asarray(x)
    with np.errstate(over="ignore"):
        out = arr.astype(tier.dtype)
    if out.size and not np.all(np.isfinite(out)):
        if np.all(np.isfinite(arr.astype(np.float64))):
            raise TierOverflow(f"value overflows tier {tier}")
    return out


def tier_of(x) -> Tier:
    if isinstance(x, DD):
        return Tier.EXT
    dt = np.asarray(x).dtype
    if dt == np.float32:
        return Tier.P32
    return Tier.P64


def to_f64(x) -> np.ndarray:
    if isinstance(x, DD):
        return x.to_float()
    return np.asarray(x, dtype=np.float64)


def zeros(shape, tier):
    return asarray(np.zeros(shape), tier)


def eye(n, tier):
    return asarray(np.eye(n), tier)


def is_finite(x) -> bool:
    if isinstance(x, DD):
        return bool(np.all(np.isfinite(x.hi)))
    return bool(np.all(np.isfinite(x)))


def check_finite(x, what="value"):
    if not is_finite(x):
        raise NumericFailure(f"non-finite {what}")
    return x


# elementwise functions


def exp(x):
    if isinstance(x, DD):
        return _dd.exp(x)
    with np.errstate(over="ignore"):
        return np.exp(x)


def log(x):
    if isinstance(x, DD):
        return _dd.log(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x)


def sin(x):
    return _dd.sin(x) if isinstance(x, DD) else np.sin(x)


def cos(x):
    return _dd.cos(x) if isinstance(x, DD) else np.cos(x)


def sin_cos(x):
    if isinstance(x, DD):
        return _dd.sin_cos(x)
    return np.sin(x), np.cos(x)


def sqrt(x):
    if isinstance(x, DD):
        return _dd.sqrt(x)
    with np.errstate(invalid="ignore"):
        return np.sqrt(x)


def where(cond, a, b):
    if isinstance(a, DD) or isinstance(b, DD):
        return _dd.where(cond, a, b)
    return np.where(cond, a, b)


def clip(x, lo, hi):
    """Clamp to [lo, hi]; returns the clamped array and whether any entry moved."""
    below = x < lo
    above = x > hi
    hit = bool(np.any(below) or np.any(above))
    return where(below, lo, where(above, hi, x)), hit


def concatenate(parts, axis=0):
    if any(isinstance(p, DD) for p in parts):
        return _dd.concatenate(parts, axis)
    return np.concatenate(parts, axis)


def stack(parts, axis=0):
    if any(isinstance(p, DD) for p in parts):
        return _dd.stack(parts, axis)
    return np.stack(parts, axis)


def transpose(x):
    return x.T


# reductions and products


def tsum(x, axis=None):
    """Sum at the tier of ``x`` in a fixed order (see module docstring)."""
    if isinstance(x, DD):
        if axis is None:
            return _dd.tree_sum(x.ravel(), 0)
        return _dd.tree_sum(x, axis)
    x = np.asarray(x)
    if axis is None:
        x = x.ravel()
        axis = 0
    if x.shape[axis] == 0:
        return np.zeros(np.delete(x.shape, axis), dtype=x.dtype)
    return np.take(np.cumsum(x, axis=axis), -1, axis=axis)


def dot(a, b):
    return tsum(a * b)


_CHUNK = 4_000_000


def matmul(A, B):
    """Product at the tier of the operands with fixed accumulation order."""
    vec_out = B.ndim == 1
    if vec_out:
        B = B.reshape(-1, 1)
    lead = A.ndim == 1
    if lead:
        A = A.reshape(1, -1)
    n, k = A.shape
    m = B.shape[1]
    chunk = _CHUNK // 16 if isinstance(A, DD) or isinstance(B, DD) else _CHUNK
    block = max(1, chunk // max(1, n * m))
    C = None
    for start in range(0, k, block):
        stop = min(k, start + block)
        prod = A[:, start:stop].reshape(n, stop - start, 1) * B[start:stop].reshape(1, stop - start, m)
        if isinstance(prod, DD):
            part = _dd.tree_sum(prod, 1)
            C = part if C is None else C + part
        else:
            # a running left-to-right sum continued across blocks
            if C is not None:
                prod[:, 0, :] = C + prod[:, 0, :]
            C = np.cumsum(prod, axis=1)[:, -1, :]
    if C is None:
        C = zeros((n, m), tier_of(A))
    if vec_out or lead:
        C = C.reshape(-1)
    return C


def norm2(x) -> float:
    """Euclidean norm of a vector, reported in float64."""
    v = to_f64(x)
    return float(np.linalg.norm(v))
