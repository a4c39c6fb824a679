"""Small dense linear algebra at a chosen tier.

LU with partial pivoting is written out here so it can run at any tier,
including double-double.  Orthogonal factorizations and spectra are only needed
at double precision and come from LAPACK through numpy.
"""

from dataclasses import dataclass
import csv

import numpy as np

from . import precision as P
from .precision import DD, NumericFailure, Tier


class SingularMatrix(NumericFailure):
    pass


class RankDeficient(NumericFailure):
    """Random input turned out rank deficient; draw a new one."""


class ContractViolation(ValueError):
    pass


@dataclass
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def _mag(x):
    return np.abs(P.to_f64(x))


def lu_factor(A, tier):
    """Return (LU, perm) with L unit lower triangular stored below the diagonal."""
    tier = Tier.parse(tier)
    LU = P.asarray(P.to_f64(A) if not isinstance(A, DD) else A, tier).copy()
    n, m = LU.shape
    if n != m:
        raise ValueError("lu_factor needs a square matrix")
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(_mag(LU[k:, k])))
        if _mag(LU[p, k]) == 0.0:
            raise SingularMatrix(f"zero pivot in column {k}")
        if p != k:
            rows = [k, p]
            LU[rows] = LU[[p, k]]
            perm[rows] = perm[[p, k]]
        if k + 1 < n:
            l = LU[k + 1:, k] / LU[k, k]
            LU[k + 1:, k] = l
            LU[k + 1:, k + 1:] = LU[k + 1:, k + 1:] - l.reshape(-1, 1) * LU[k, k + 1:].reshape(1, -1)
    return LU, perm


def lu_solve(A, b, tier):
    """Solve ``A x = b`` at ``tier`` by Gaussian elimination with partial pivoting."""
    tier = Tier.parse(tier)
    LU, perm = lu_factor(A, tier)
    return lu_substitute(LU, perm, b, tier)


def lu_substitute(LU, perm, b, tier):
    n = LU.shape[0]
    y = P.asarray(b, tier)[perm].copy()
    for i in range(1, n):
        y[i] = y[i] - P.dot(LU[i, :i], y[:i])
    x = y
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] = (x[i] - P.dot(LU[i, i + 1:], x[i + 1:])) / LU[i, i]
        else:
            x[i] = x[i] / LU[i, i]
    return x


def det(A, tier=Tier.P64) -> float:
    LU, perm = lu_factor(A, tier)
    d = np.prod(np.diag(P.to_f64(LU)))
    # sign of the permutation from its cycle decomposition
    seen = np.zeros(len(perm), bool)
    sign = 1.0
    for i in range(len(perm)):
        if not seen[i]:
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
    return float(sign * d)


def qr_orthonormal(M) -> np.ndarray:
    """Orthonormal factor of a square matrix, with the sign convention diag(R) > 0."""
    M = P.to_f64(M)
    Q, R = np.linalg.qr(M)
    d = np.diag(R)
    if np.any(np.abs(d) <= M.shape[0] * np.finfo(float).eps * np.abs(R).max()):
        raise RankDeficient("input to QR is numerically rank deficient")
    return Q * np.sign(d)


def svd(A) -> SvdResult:
    A = P.to_f64(A)
    if not np.all(np.isfinite(A)):
        raise NumericFailure("svd of a non-finite matrix")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"svd did not converge: {exc}") from exc
    return SvdResult(U, s, Vt.T)


def singular_values(A) -> np.ndarray:
    return np.linalg.svd(P.to_f64(A), compute_uv=False)


def cond_2(A) -> float:
    s = singular_values(A)
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def spectral_norm(A) -> float:
    A = P.to_f64(A)
    if A.ndim == 1:
        return float(np.linalg.norm(A))
    return float(singular_values(A)[0])


def fro_norm(A) -> float:
    return float(np.linalg.norm(P.to_f64(A)))


def inv_spectral_norm(A) -> float:
    """``||A^-1||_2 = 1 / sigma_min(A)``."""
    s = singular_values(A)[-1]
    if s == 0.0:
        raise SingularMatrix("matrix is singular")
    return float(1.0 / s)


def _check_symmetric(A):
    A = P.to_f64(A)
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ContractViolation("matrix is not symmetric")
    return A


def eig_sym_min(A) -> float:
    A = _check_symmetric(A)
    return float(np.linalg.eigvalsh((A + A.T) / 2)[0])


def eig_sym(A):
    A = _check_symmetric(A)
    return np.linalg.eigh((A + A.T) / 2)


def write_matrix_csv(path, A, tier=None):
    """Write a matrix with a ``rows,cols,tier`` header.  EXT entries are ``hi|lo``."""
    tier = P.tier_of(A) if tier is None else Tier.parse(tier)
    A2 = A if A.ndim == 2 else A.reshape(-1, 1)
    rows, cols = A2.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([rows, cols, str(tier)])
        if isinstance(A2, DD):
            for i in range(rows):
                w.writerow([f"{float(A2.hi[i, j])!r}|{float(A2.lo[i, j])!r}" for j in range(cols)])
        else:
            vals = P.to_f64(A2)
            for i in range(rows):
                w.writerow([repr(float(v)) for v in vals[i]])


def read_matrix_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        rows, cols, tier = next(r)
        tier = Tier.parse(tier)
        body = [row for row in r if row]
    rows, cols = int(rows), int(cols)
    if len(body) != rows or any(len(row) != cols for row in body):
        raise ValueError(f"{path}: expected {rows}x{cols} entries")
    if tier is Tier.EXT:
        hi = np.array([[float(c.split("|")[0]) for c in row] for row in body])
        lo = np.array([[float(c.split("|")[1]) if "|" in c else 0.0 for c in row] for row in body])
        return DD(hi, lo), tier
    return P.asarray(np.array([[float(c) for c in row] for row in body]), tier), tier
