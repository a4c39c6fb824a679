"""Iterative solvers for Newton steps and extended normal equations.

All recurrences run at the requested tier.  ``cgls_k`` solves
``(A^T A + S) x = A^T b`` without forming the matrix, keeping ``v = -S x`` as an
auxiliary recursion; with ``S = 0`` it is exactly CGLS.
"""

from dataclasses import dataclass, field

import numpy as np

from . import precision as P
from .precision import NumericFailure, Tier


class IndefiniteMatrix(NumericFailure):
    pass


@dataclass
class SolveOutcome:
    x: object
    iterations: int
    final_residual_norm: float
    converged: bool
    per_iteration_residuals: list = field(default_factory=list)
    rel_errors: list = field(default_factory=list)
    iterates: list = field(default_factory=list)


def _norm(v):
    return float(np.sqrt(float(P.to_f64(P.dot(v, v)))))


def _rel_err(x, x_star):
    xs = np.asarray(x_star, float)
    return float(np.linalg.norm(P.to_f64(x) - xs) / np.linalg.norm(xs))


def cg(apply_A, b, x0=None, eta=1e-8, maxit=50, tier=Tier.P64, x_star=None, keep_iterates=False):
    """Conjugate gradients; stops when the recursive residual satisfies ``|r| <= eta |b|``."""
    tier = Tier.parse(tier)
    b = P.asarray(b, tier)
    x = P.zeros(b.shape, tier) if x0 is None else P.asarray(x0, tier).copy()
    r = b - apply_A(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = P.dot(r, r)
    target = eta * _norm(b)
    out = SolveOutcome(x, 0, _norm(r), False, [_norm(r)])
    if x_star is not None:
        out.rel_errors.append(_rel_err(x, x_star))
    if out.final_residual_norm <= target:
        out.converged = True
        return out
    for k in range(1, maxit + 1):
        Ap = apply_A(p)
        pAp = P.dot(p, Ap)
        if not float(P.to_f64(pAp)) > 0.0:
            raise IndefiniteMatrix(f"nonpositive curvature p^T A p = {float(P.to_f64(pAp)):.3g}")
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = P.dot(r, r)
        res = float(np.sqrt(float(P.to_f64(rr_new))))
        out.per_iteration_residuals.append(res)
        if x_star is not None:
            out.rel_errors.append(_rel_err(x, x_star))
        if keep_iterates:
            out.iterates.append(P.to_f64(x).copy())
        out.iterations = k
        if res <= target:
            out.converged = True
            break
        if float(P.to_f64(rr_new)) == 0.0:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    out.x = x
    out.final_residual_norm = out.per_iteration_residuals[-1]
    P.check_finite(x, "CG iterate")
    return out


def matrix_operator(M, tier):
    M = P.asarray(M, tier)
    return lambda v: P.matmul(M, v)


def cg_normal(A, S, rhs, x0=None, eta=None, maxit=60, tier=Tier.P64, x_star=None):
    """Plain CG on the explicitly formed ``(A^T A + S) x = rhs``.

    The matrix is formed at ``tier``; ``rhs`` is the reduced right-hand side
    ``A^T b`` as supplied (rounded to the tier on entry).
    """
    tier = Tier.parse(tier)
    eta = tier.u if eta is None else eta
    A = P.asarray(A, tier)
    B = P.matmul(A.T, A) + P.asarray(S, tier)
    return cg(matrix_operator(B, tier), rhs, x0, eta, maxit, tier, x_star)


def cg_smart(A, S, b_rhs, x0=None, eta=None, maxit=60, tier=Tier.P64, x_star=None):
    """CG on ``(A^T A + S) x = b_rhs`` applying ``A^T (A p) + S p`` without forming the matrix."""
    tier = Tier.parse(tier)
    eta = tier.u if eta is None else eta
    A = P.asarray(A, tier)
    S = P.asarray(S, tier)
    At = A.T

    def apply(p):
        return P.matmul(At, P.matmul(A, p)) + P.matmul(S, p)

    return cg(apply, b_rhs, x0, eta, maxit, tier, x_star)


def cgls_k(A, S, b, x0=None, maxit=60, tol=None, tier=Tier.P64, x_star=None,
           direction="reduced", keep_iterates=False, audit=None):
    """CGLS for ``(A^T A + S) x = A^T b`` with the auxiliary recursion ``v = -S x``.

    ``direction="reduced"`` builds search directions from the reduced residual
    ``s_k = A^T r_k + v_k``.  ``direction="residual"`` uses ``r_k`` instead, which
    only makes sense when A is square.  ``audit``, if a list, receives
    ``|v_k + S x_k|`` after every iteration.
    """
    tier = Tier.parse(tier)
    tol = tier.u if tol is None else tol
    A = P.asarray(A, tier)
    S = P.asarray(S, tier)
    b = P.asarray(b, tier)
    At = A.T
    n = A.shape[1]
    if direction not in ("reduced", "residual"):
        raise ValueError(f"unknown direction rule {direction!r}")
    if direction == "residual" and A.shape[0] != n:
        raise ValueError("the residual direction rule needs a square A")
    x = P.zeros(n, tier) if x0 is None else P.asarray(x0, tier).copy()
    r = b - P.matmul(A, x)
    v = -P.matmul(S, x)
    s = P.matmul(At, r) + v
    p = s.copy()
    ss = P.dot(s, s)
    s0 = float(np.sqrt(float(P.to_f64(ss))))
    out = SolveOutcome(x, 0, s0, False, [s0])
    if x_star is not None:
        out.rel_errors.append(_rel_err(x, x_star))
    if s0 == 0.0:
        out.converged = True
        return out
    for k in range(1, maxit + 1):
        t = P.matmul(A, p)
        w = P.matmul(S, p)
        denom = P.dot(t, t) + P.dot(p, w)
        if not float(P.to_f64(denom)) > 0.0:
            raise IndefiniteMatrix("nonpositive curvature in CGLS_k")
        alpha = ss / denom
        x = x + alpha * p
        r = r - alpha * t
        v = v - alpha * w
        s = P.matmul(At, r) + v
        ss_new = P.dot(s, s)
        res = float(np.sqrt(float(P.to_f64(ss_new))))
        out.per_iteration_residuals.append(res)
        out.iterations = k
        if x_star is not None:
            out.rel_errors.append(_rel_err(x, x_star))
        if keep_iterates:
            out.iterates.append(P.to_f64(x).copy())
        if audit is not None:
            audit.append(float(np.linalg.norm(P.to_f64(v) + P.to_f64(S) @ P.to_f64(x))))
        if res <= tol * s0:
            out.converged = True
            break
        if res == 0.0:
            break
        beta = ss_new / ss
        p = (s if direction == "reduced" else r) + beta * p
        ss = ss_new
    out.x = x
    out.final_residual_norm = out.per_iteration_residuals[-1]
    P.check_finite(x, "CGLS_k iterate")
    return out


def cgls(A, b, x0=None, maxit=60, tol=None, tier=Tier.P64, x_star=None, keep_iterates=False):
    """CGLS on ``A^T A x = A^T b``: ``cgls_k`` with a zero S."""
    n = np.shape(A)[1]
    return cgls_k(A, np.zeros((n, n)), b, x0, maxit, tol, tier, x_star, keep_iterates=keep_iterates)


SOLVERS = ("cg", "cg-smart", "cgls-k")


def solve_system(system, method, tier=Tier.P32, maxit=60, tol=0.0):
    """Run one of the three solvers on a generated system for a fixed budget.

    ``tol = 0`` disables early stopping so every method spends ``maxit``
    iterations.  Plain CG receives ``A^T b`` formed in double precision with the
    system; CG_smart forms ``A^T b`` at ``tier`` the same way CGLS_k does.
    """
    tier = Tier.parse(tier)
    A, S, b, xs = system.A, system.S, system.b, system.x_star
    if method == "cg":
        return cg_normal(A, S, P.to_f64(A).T @ P.to_f64(b), eta=tol, maxit=maxit, tier=tier, x_star=xs)
    if method == "cg-smart":
        rhs = P.matmul(P.asarray(A, tier).T, P.asarray(b, tier))
        return cg_smart(A, S, rhs, eta=tol, maxit=maxit, tier=tier, x_star=xs)
    if method == "cgls-k":
        return cgls_k(A, S, b, maxit=maxit, tol=tol, tier=tier, x_star=xs)
    raise ValueError(f"unknown method {method!r}; expected one of {SOLVERS}")
