"""A-priori accuracy bounds and condition numbers.

Everything here is computed in double-double unless stated otherwise, so the
bounds are not contaminated by the precisions they describe.
"""

from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from . import linalg
from . import precision as P
from .models import fd_gradient
from .precision import DD, Tier

ETA_MAX = 1.0 / 7.0
ASSUMPTION_LIMIT = 1.0 / 8.0


@dataclass
class BoundReport:
    psi: float
    lim_acc: float
    lim_g: float
    kappa_H_star: float
    ul_kappa_check: dict
    eta_max: float = ETA_MAX
    gn_condition: dict = None
    notes: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True, default=_jsonable)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    return str(obj)


def _ext(theta):
    return theta if isinstance(theta, DD) else P.asarray(np.asarray(theta, float), Tier.EXT)


def _diff_norm(a, b):
    return P.norm2(P.asarray(a, Tier.EXT) - P.asarray(b, Tier.EXT))


# ---------------------------------------------------------------------------
# gradient error and limiting accuracies


def estimate_psi(problem, theta_star, gradient_tier, gradient_source="analytic", fd_eps=None):
    """Gradient error at theta*: distance from the double-double analytic gradient.

    For an analytic gradient at the top tier the double-precision error is
    rescaled by ``u(EXT)/u(P64)``.  A finite-difference gradient is always
    compared directly, at every tier, so its truncation error is included.
    """
    tier = Tier.parse(gradient_tier)
    ts = _ext(theta_star)
    g_ref = problem.gradient(ts, Tier.EXT)
    if gradient_source == "fd":
        eps = math.sqrt(tier.u) if fd_eps is None else fd_eps
        return _diff_norm(g_ref, fd_gradient(problem, P.asarray(ts, tier), eps, tier))
    if tier is Tier.EXT:
        g64 = problem.gradient(P.asarray(ts, Tier.P64), Tier.P64)
        return _diff_norm(g_ref, g64) / Tier.P64.u * Tier.EXT.u
    return _diff_norm(g_ref, problem.gradient(P.asarray(ts, tier), tier))


def limiting_accuracy(psi, H_star, x_star, working_tier) -> float:
    """``|H*^-1| psi / |x*| + u_w``."""
    inv = linalg.inv_spectral_norm(H_star)
    return inv * psi / P.norm2(x_star) + Tier.parse(working_tier).u


def limiting_gradient(psi, H_at, x_at, working_tier) -> float:
    """``psi + u_w |H| |x|``."""
    return psi + Tier.parse(working_tier).u * linalg.spectral_norm(H_at) * P.norm2(x_at)


def check_assumptions(H, solve_tier) -> dict:
    value = Tier.parse(solve_tier).u * linalg.cond_2(H)
    return {"value": value, "passes": bool(value <= ASSUMPTION_LIMIT),
            "note": "the Lipschitz-constant assumption on H is not machine-checkable"}


def gn_condition_check(J_star, R_star, residual_hessian_provider, K=()) -> dict:
    """Compare the neglected second-order term at theta* with lambda_min(J^T J).

    ``residual_hessian_provider(idx)`` returns the residual Hessians for ``idx``.
    """
    R = P.asarray(R_star, Tier.EXT)
    n = len(P.to_f64(R))
    keep = np.setdiff1d(np.arange(n), np.asarray(K, dtype=int))
    J = P.asarray(J_star, Tier.EXT)
    JtJ = P.to_f64(P.matmul(J.T, J))
    lam = linalg.eig_sym_min((JtJ + JtJ.T) / 2)
    if len(keep):
        Hs = P.asarray(residual_hessian_provider(keep), Tier.EXT)
        S = P.to_f64(P.tsum(R[keep].reshape(-1, 1, 1) * Hs, axis=0))
        lhs = linalg.spectral_norm((S + S.T) / 2)
    else:
        lhs = 0.0
    return {"lhs": lhs, "lambda_min": lam, "passes": bool(lhs < lam)}


def gn_condition_at(problem, theta_star, K=()):
    ts = _ext(theta_star)
    R, J = problem.residuals_jacobian(ts, Tier.EXT)
    return gn_condition_check(J, R, lambda idx: problem.residual_hessians(ts, Tier.EXT, idx), K)


def gradient_conditioning(problem, theta, n_samples=200, delta_scale=1e-6, seed=0) -> float:
    """Largest sampled relative change of g over relative change of theta."""
    t = _ext(theta)
    g = problem.gradient(t, Tier.EXT)
    gn = P.norm2(g)
    if gn == 0.0:
        return float("inf")
    tn = P.norm2(t)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        dirn = rng.standard_normal(problem.dim)
        dx = dirn / np.linalg.norm(dirn) * delta_scale * tn
        dx_e = P.asarray(dx, Tier.EXT)
        change = _diff_norm(problem.gradient(t + dx_e, Tier.EXT), g) / gn
        best = max(best, change / (P.norm2(dx_e) / tn))
    return best


def reference_hessian(problem, theta_star, tier=Tier.EXT):
    return P.to_f64(problem.hessian(_ext(theta_star) if Tier.parse(tier) is Tier.EXT
                                    else P.to_f64(theta_star), tier))


def bound_report(problem, theta_star, policy, hessian_tier=Tier.EXT) -> BoundReport:
    """Bounds for one (problem, policy) pair evaluated at theta*."""
    gt, wt, lt = policy.tiers
    psi = estimate_psi(problem, theta_star, gt, policy.gradient_source,
                       policy.step_eps if policy.gradient_source == "fd" else None)
    H = reference_hessian(problem, theta_star, hessian_tier)
    x = P.to_f64(theta_star)
    notes = ["the Lipschitz-constant assumption on H is not machine-checkable"]
    meta = {"policy": policy.to_dict()}
    if gt is Tier.EXT and policy.gradient_source == "analytic":
        meta["psi_rescaled"] = "u(ext)/u(64) with a double-double top tier"
    report = BoundReport(psi, limiting_accuracy(psi, H, x, wt), limiting_gradient(psi, H, x, wt),
                         linalg.cond_2(H), check_assumptions(H, lt), notes=notes, metadata=meta)
    if policy.hessian_source != "exact" and problem.least_squares:
        K = ()
        if policy.hessian_source == "gnk" and policy.gnk_percent > 0:
            R = P.to_f64(problem.residuals(_ext(theta_star), Tier.EXT))
            count = math.ceil(policy.gnk_percent / 100.0 * len(R) - 1e-9)
            K = np.argsort(-np.abs(R), kind="stable")[:count]
        report.gn_condition = gn_condition_at(problem, theta_star, K)
    return report


# ---------------------------------------------------------------------------
# backward error of inexact steps


def rigal_gaches(H, d, rhs) -> float:
    """Norm of the smallest ``E`` with ``(H + E) d = rhs``: ``|rhs - H d| / |d|``."""
    He = P.asarray(P.to_f64(H), Tier.EXT)
    de = P.asarray(P.to_f64(d), Tier.EXT)
    r = P.asarray(P.to_f64(rhs), Tier.EXT) - P.matmul(He, de)
    return P.norm2(r) / P.norm2(de)


def reconstructed_eta(phi, kappa) -> float:
    """``phi kappa / (1 - phi kappa)``, infinite when ``phi kappa >= 1``."""
    pk = phi * kappa
    return float("inf") if pk >= 1.0 else pk / (1.0 - pk)


def inexact_step_check(step, residual="recurrence", slack=1.01) -> dict:
    """Backward-error consistency of one iterative Newton step.

    ``step`` is a diagnostic record from the Newton loop.  The residual used is
    either the solver's recurrence residual or the true residual of the
    rounded system.
    """
    r = step["recurrence_residual"] if residual == "recurrence" else step["true_residual"]
    eta, dn, Hn = step["eta"], step["step_norm"], step["H_norm"]
    E_H = r / dn
    sigma = step["Hd_norm"] / (Hn * dn)
    bound = eta * sigma * Hn
    phi = eta * sigma
    eta_rec = reconstructed_eta(phi, step["cond"])
    observed = r / step["rhs_norm"]
    return {"E_H": E_H, "bound": bound, "backward_ok": bool(E_H <= slack * bound),
            "phi": phi, "eta_reconstructed": eta_rec, "observed_ratio": observed,
            "eta_ok": bool(observed <= eta_rec)}


# ---------------------------------------------------------------------------
# structured condition number of extended normal equations


@dataclass
class StructuredCond:
    kappa_S: float
    M_bar_spectral_norm: float
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    M_bar: np.ndarray = None
    min_eigenvalue: float = 0.0


def _dd(x):
    return P.asarray(np.asarray(x, float), Tier.EXT)


def _inverse_ext(B):
    n = B.shape[0]
    LU, perm = linalg.lu_factor(B, Tier.EXT)
    cols = [linalg.lu_substitute(LU, perm, np.eye(n)[:, j], Tier.EXT) for j in range(n)]
    return P.stack(cols, axis=1)


def structured_cond(A, S, b, x, alpha=1.0, beta=1.0, gamma=1.0) -> StructuredCond:
    """Condition number of ``x`` under weighted perturbations of ``(A, S, b)``.

    ``M`` is the Gram matrix of the adjoint of the solution's derivative; its
    spectral norm is the squared absolute condition number.
    """
    A, S, b, x = _dd(A), _dd(S), _dd(b), _dd(x)
    B = P.matmul(A.T, A) + S
    try:
        Binv = _inverse_ext(B)
    except linalg.SingularMatrix as exc:
        raise linalg.SingularMatrix("A^T A + S is singular") from exc
    r = b - P.matmul(A, x)
    xx = P.dot(x, x)
    rr = P.dot(r, r)
    inv_sq = lambda w: 1.0 / (w * w)
    BBt = P.matmul(Binv, Binv.T)
    AB = P.matmul(A, Binv.T)
    BAAB = P.matmul(AB.T, AB)
    u = P.matmul(Binv, P.matmul(A.T, r))
    v = P.matmul(Binv, x)
    Bt = u.reshape(-1, 1) * v.reshape(1, -1)
    M = ((xx * inv_sq(gamma) + rr * inv_sq(alpha)) * BBt
         + (inv_sq(beta) + xx * inv_sq(alpha)) * BAAB
         - (Bt + Bt.T) * inv_sq(alpha))
    M64 = P.to_f64(M)
    M64 = (M64 + M64.T) / 2
    eig = np.linalg.eigvalsh(M64)
    norm = float(max(abs(eig[0]), abs(eig[-1])))
    data = math.sqrt(linalg.fro_norm(A) ** 2 + linalg.fro_norm(S) ** 2 + P.norm2(b) ** 2)
    kappa = math.sqrt(norm) * data / P.norm2(x)
    return StructuredCond(kappa, norm, alpha, beta, gamma, M64, float(eig[0]))


def solution_derivative(A, S, b, x, E, E_S, g):
    """Directional derivative of ``x(A, S, b)`` along ``(E, E_S, g)``."""
    A, S, b, x = (P.to_f64(v) for v in (A, S, b, x))
    B = A.T @ A + S
    r = b - A @ x
    rhs = E.T @ r + A.T @ (g - E @ x) - E_S @ x
    return np.linalg.solve(B, rhs)


def worst_perturbation(A, S, b, x, M_bar):
    """Unit-norm ``(E, E_S, g)`` built from the top eigenvector of ``M_bar``."""
    A, S, b, x = (P.to_f64(v) for v in (A, S, b, x))
    B = A.T @ A + S
    w, V = np.linalg.eigh(M_bar)
    y = V[:, -1]
    c = np.linalg.solve(B.T, y)
    r = b - A @ x
    E = np.outer(r, c) - np.outer(A @ c, x)
    g = A @ c
    E_S = -np.outer(c, x)
    scale = math.sqrt(np.sum(E * E) + np.sum(E_S * E_S) + g @ g)
    return E / scale, E_S / scale, g / scale


def random_unit_perturbation(rng, m, n):
    E = rng.standard_normal((m, n))
    E_S = rng.standard_normal((n, n))
    g = rng.standard_normal(m)
    scale = math.sqrt(np.sum(E * E) + np.sum(E_S * E_S) + g @ g)
    return E / scale, E_S / scale, g / scale
