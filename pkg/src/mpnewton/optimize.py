"""Mixed-precision Newton-type minimizers and the AdamW baseline.

``newton_minimize`` evaluates the gradient at ``gradient_tier``, forms the
curvature matrix and updates the iterate at ``working_tier``, and solves for
the step at ``solve_tier``.  The curvature matrix may be the exact Hessian,
the Gauss-Newton matrix ``J^T J`` or the GN_k matrix, which adds the
second-order terms of the k% largest residuals only.
"""

from dataclasses import asdict, dataclass, field
import csv
import hashlib
import math
import time

import numpy as np

from . import linalg, linsolve
from . import precision as P
from .models import ConfigError, Unsupported, fd_gradient
from .precision import DD, NumericFailure, Tier

HESSIAN_SOURCES = ("exact", "gauss-newton", "gnk")
LINEAR_SOLVERS = ("lu", "cg", "cg-smart", "cgls-k")
GRADIENT_SOURCES = ("analytic", "fd")

TRACE_HEADER = ["iter", "rel_error", "grad_norm", "loss", "step_norm", "solver_iters", "elapsed_ns", "flags"]


@dataclass(frozen=True)
class PrecisionPolicy:
    gradient_tier: Tier = Tier.P64
    working_tier: Tier = Tier.P64
    solve_tier: Tier = Tier.P64
    hessian_source: str = "exact"
    gnk_percent: float = 0.0
    linear_solver: str = "lu"
    eta: float = None
    cg_maxit: int = None
    gradient_source: str = "analytic"
    fd_eps: float = None
    allow_any_order: bool = False

    def __post_init__(self):
        for name in ("gradient_tier", "working_tier", "solve_tier"):
            object.__setattr__(self, name, Tier.parse(getattr(self, name)))
        if self.hessian_source not in HESSIAN_SOURCES:
            raise ConfigError(f"hessian_source must be one of {HESSIAN_SOURCES}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ConfigError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if self.gradient_source not in GRADIENT_SOURCES:
            raise ConfigError(f"gradient_source must be one of {GRADIENT_SOURCES}")
        if isinstance(self.fd_eps, str) and self.fd_eps not in ("u", "sqrt", "quart"):
            raise ConfigError(f"fd_eps must be a number or one of u, sqrt, quart; got {self.fd_eps!r}")
        if not 0.0 <= self.gnk_percent <= 100.0:
            raise ConfigError("gnk_percent must lie in [0, 100]")
        if self.linear_solver in ("cg-smart", "cgls-k") and self.hessian_source == "exact":
            raise ConfigError(f"{self.linear_solver} needs a Gauss-Newton type curvature matrix")
        ordered = self.gradient_tier.u <= self.working_tier.u <= self.solve_tier.u
        if not ordered and not self.allow_any_order:
            raise ConfigError(f"tiers {self.label} violate u_g <= u_w <= u_l; set allow_any_order to override")

    @property
    def label(self):
        return f"({self.gradient_tier},{self.working_tier},{self.solve_tier})"

    def describe(self):
        parts = [self.label]
        if self.hessian_source == "gauss-newton":
            parts.append("GN")
        elif self.hessian_source == "gnk":
            parts.append(f"GN_{self.gnk_percent:g}")
        if self.linear_solver != "lu":
            parts.append(f"{self.linear_solver} eta={self.step_eta:.3g}")
        if self.gradient_source == "fd":
            eps = self.fd_eps if isinstance(self.fd_eps, str) else f"{self.step_eps:.3g}"
            parts.append(f"fd eps={eps}")
        return " ".join(parts)

    @property
    def tiers(self):
        return self.gradient_tier, self.working_tier, self.solve_tier

    @property
    def step_eta(self):
        return self.solve_tier.u if self.eta is None else float(self.eta)

    @property
    def step_eps(self):
        """Finite-difference step; ``u``, ``sqrt`` and ``quart`` are relative to u_g."""
        u = self.gradient_tier.u
        named = {"u": u, "sqrt": math.sqrt(u), "quart": u ** 0.25}
        if self.fd_eps is None:
            return named["sqrt"]
        if isinstance(self.fd_eps, str):
            return named[self.fd_eps]
        return float(self.fd_eps)

    def to_dict(self):
        d = asdict(self)
        for name in ("gradient_tier", "working_tier", "solve_tier"):
            d[name] = str(d[name])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "tiers" in d:
            g, w, l = d.pop("tiers")
            d.update(gradient_tier=g, working_tier=w, solve_tier=l)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown policy keys {sorted(unknown)}")
        try:
            return cls(**d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class IterationRecord:
    index: int
    rel_error: float
    grad_norm: float
    loss: float
    step_norm: float
    solver_iterations: int
    elapsed_ns: int
    flags: frozenset = frozenset()
    theta_norm: float = float("nan")

    def row(self, timing=True):
        return [self.index, repr(float(self.rel_error)), repr(float(self.grad_norm)), repr(float(self.loss)),
                repr(float(self.step_norm)), self.solver_iterations, self.elapsed_ns if timing else 0,
                ";".join(sorted(self.flags))]


@dataclass
class Trace:
    records: list
    policy: object
    problem_id: str
    theta0: np.ndarray
    theta_star_digest: str = ""
    seed: object = None
    status: str = "ok"
    label: str = ""
    meta: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def final(self):
        return self.records[-1]

    def plateau(self, name="rel_error", window=10):
        """Median of the last ``window`` values of a column."""
        vals = self.column(name)[-window:]
        return float(np.median(vals))

    def iterations_to(self, name, threshold):
        """First record index with ``name <= threshold``, or None."""
        for r in self.records:
            if getattr(r, name) <= threshold:
                return r.index
        return None

    def write_csv(self, path, timing=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for r in self.records:
                w.writerow(r.row(timing))

    @staticmethod
    def read_records(path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {rows[0]}")
        out = []
        for row in rows[1:]:
            flags = frozenset(f for f in row[7].split(";") if f)
            out.append(IterationRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                       float(row[4]), int(row[5]), int(row[6]), flags))
        return out


def theta_digest(theta_star):
    if theta_star is None:
        return ""
    h = hashlib.sha256()
    if isinstance(theta_star, DD):
        h.update(np.ascontiguousarray(theta_star.hi).tobytes())
        h.update(np.ascontiguousarray(theta_star.lo).tobytes())
    else:
        h.update(np.ascontiguousarray(np.asarray(theta_star, float)).tobytes())
    return h.hexdigest()[:16]


def relative_error(theta, theta_star):
    if theta_star is None:
        return float("nan")
    diff = P.asarray(theta, Tier.EXT) - P.asarray(theta_star, Tier.EXT)
    return P.norm2(diff) / P.norm2(theta_star)


def _stagnated(grad_norms, window):
    if window is None or len(grad_norms) <= window:
        return False
    recent = min(grad_norms[-window:])
    earlier = min(grad_norms[:-window])
    return not recent < 0.99 * earlier


# ---------------------------------------------------------------------------
# curvature


def gauss_newton_flops(n, d):
    return 2 * n * d * d


def gn_k_curvature(R, J, residual_hessian_provider, k_percent, tier, flops_provider=None):
    """``B = J^T J + sum_{j in K} r_j Hess(r_j)`` for the k% largest |r_j|.

    ``residual_hessian_provider(idx)`` returns the stacked residual Hessians for
    the indices ``idx``.  Returns ``(B, K, flops)`` where ``flops`` counts the
    curvature assembly, using ``flops_provider(idx)`` for the residual Hessians.
    """
    tier = Tier.parse(tier)
    r64 = P.to_f64(R)
    n = len(r64)
    d = J.shape[1]
    count = math.ceil(k_percent / 100.0 * n - 1e-9)
    K = np.sort(np.argsort(-np.abs(r64), kind="stable")[:count])
    J = P.asarray(J, tier)
    B = P.matmul(J.T, J)
    flops = gauss_newton_flops(n, d)
    if len(K):
        r = P.asarray(R, tier)[K]
        Hs = P.asarray(residual_hessian_provider(K), tier)
        B = B + P.tsum(r.reshape(-1, 1, 1) * Hs, axis=0)
        flops += 2 * d * d * len(K)
        if flops_provider is not None:
            flops += int(flops_provider(K))
    return B, K, flops


# ---------------------------------------------------------------------------
# Newton-type iteration


class _StepFailure(Exception):
    def __init__(self, flag, msg):
        super().__init__(msg)
        self.flag = flag


def _gradient(problem, theta, policy, flags):
    tier = policy.gradient_tier
    t = P.asarray(theta, tier)
    with np.errstate(all="ignore"):  # non-finite results are caught by the caller
        if policy.gradient_source == "fd":
            return fd_gradient(problem, t, policy.step_eps, tier)
        return problem.gradient(t, tier, flags)


def _solve_step(problem, theta_w, g, policy, diagnostics):
    """Return (step at the working tier, solver iterations, curvature flops)."""
    gt, wt, lt = policy.tiers
    src = policy.hessian_source
    flops = 0
    S = None
    if src == "exact":
        H = problem.hessian(theta_w, wt)
    else:
        if not problem.least_squares:
            raise Unsupported(f"{problem.family} has no residual form for {src}")
        R_g = problem.residuals(P.asarray(theta_w, gt), gt)
        R_w, J = problem.residuals_jacobian(theta_w, wt)
        k = policy.gnk_percent if src == "gnk" else 0.0
        if policy.linear_solver in ("cg-smart", "cgls-k"):
            zero = lambda idx: P.zeros((len(idx), problem.dim, problem.dim), wt)
            _, K, flops = gn_k_curvature(R_g, J, zero, k, wt)
            S = problem.curvature_sum(theta_w, K, wt) if len(K) else P.zeros((problem.dim,) * 2, wt)
            H = None
        else:
            H, K, flops = gn_k_curvature(
                R_g, J, lambda idx: problem.residual_hessians(theta_w, wt, idx), k, wt,
                problem.residual_hessian_flops)
    rhs = P.asarray(-g, lt)
    iters = 0
    solver = policy.linear_solver
    try:
        if solver == "lu":
            d = linalg.lu_solve(P.asarray(H, lt), rhs, lt)
            iters = 1
        elif solver == "cg":
            Hl = P.asarray(H, lt)
            maxit = policy.cg_maxit or 2 * problem.dim + 10
            out = linsolve.cg(linsolve.matrix_operator(Hl, lt), rhs, None, policy.step_eta, maxit, lt)
            d, iters = out.x, out.iterations
            if diagnostics is not None:
                diagnostics.append(_step_diagnostic(Hl, rhs, d, out, policy.step_eta))
        else:
            Jl = P.asarray(J, lt)
            Sl = P.asarray(S, lt)
            maxit = policy.cg_maxit or 2 * problem.dim + 10
            if solver == "cg-smart":
                out = linsolve.cg_smart(Jl, Sl, rhs, None, policy.step_eta, maxit, lt)
            else:
                # J^T (-R) is the reduced right-hand side; the gradient itself is not used
                out = linsolve.cgls_k(Jl, Sl, -P.asarray(R_g, lt), None, maxit, policy.step_eta, lt)
            d, iters = out.x, out.iterations
    except linsolve.IndefiniteMatrix as exc:
        raise _StepFailure("indefinite-H", str(exc)) from exc
    except linalg.SingularMatrix as exc:
        raise _StepFailure("singular-H", str(exc)) from exc
    return P.asarray(d, wt), iters, flops


def _step_diagnostic(H, rhs, d, out, eta):
    """Backward-error quantities of one iterative step, evaluated in double-double."""
    He = P.asarray(P.to_f64(H), Tier.EXT)
    de = P.asarray(P.to_f64(d), Tier.EXT)
    be = P.asarray(P.to_f64(rhs), Tier.EXT)
    Hd = P.matmul(He, de)
    H64 = P.to_f64(H)
    return {
        "eta": eta,
        "rhs_norm": P.norm2(be),
        "true_residual": P.norm2(be - Hd),
        "recurrence_residual": out.final_residual_norm,
        "Hd_norm": P.norm2(Hd),
        "step_norm": P.norm2(de),
        "H_norm": linalg.spectral_norm(H64),
        "cond": linalg.cond_2(H64),
        "converged": out.converged,
        "iterations": out.iterations,
    }


def newton_minimize(problem, theta0, policy, maxit=50, theta_star=None, stagnation_window=10,
                    loss_tier=Tier.P64, diagnostics=False, label=""):
    """Run the Newton-type iteration described by ``policy``.

    Record ``i`` describes the iterate ``x_i``; its ``step_norm`` and
    ``solver_iterations`` belong to the step that produced it.  A curvature
    failure ends the run with a flagged record and a non-ok status.
    """
    if isinstance(policy, dict):
        policy = PrecisionPolicy.from_dict(policy)
    gt, wt, lt = policy.tiers
    theta = P.asarray(P.to_f64(theta0) if not isinstance(theta0, DD) else theta0, wt)
    trace = Trace([], policy, problem.family, P.to_f64(theta0).copy(), theta_digest(theta_star),
                  label=label or policy.label)
    trace.meta["curvature_flops"] = []
    steps = [] if diagnostics or policy.linear_solver == "cg" else None
    if steps is not None:
        trace.meta["steps"] = steps
    start = time.perf_counter_ns()
    step_norm, solver_iters = 0.0, 0
    grad_norms = []
    for i in range(maxit + 1):
        flags = set()
        try:
            g = _gradient(problem, theta, policy, flags)
            P.check_finite(g, "gradient")
        except (NumericFailure, OverflowError) as exc:
            trace.status = f"failed: {exc}"
            flags.add("overflow")
            g = None
        gn = P.norm2(g) if g is not None else float("inf")
        elapsed = time.perf_counter_ns() - start
        with np.errstate(all="ignore"):
            loss = float(P.to_f64(problem.objective(P.asarray(theta, loss_tier), loss_tier, flags)))
        rec = IterationRecord(i, relative_error(theta, theta_star), gn, loss, step_norm, solver_iters,
                              elapsed, frozenset(flags), P.norm2(theta))
        trace.records.append(rec)
        grad_norms.append(gn)
        if g is None or i == maxit or _stagnated(grad_norms, stagnation_window):
            break
        try:
            d, solver_iters, flops = _solve_step(problem, theta, g, policy, steps)
            new = theta + d
            P.check_finite(new, "iterate")
        except _StepFailure as exc:
            trace.records[-1].flags = rec.flags | {exc.flag}
            trace.status = f"failed: {exc}"
            break
        except (NumericFailure, OverflowError) as exc:
            trace.records[-1].flags = rec.flags | {"overflow"}
            trace.status = f"failed: {exc}"
            break
        trace.meta["curvature_flops"].append(flops)
        step_norm = P.norm2(d)
        theta = new
    trace.meta["theta"] = P.to_f64(theta)
    trace.theta = theta
    return trace


# ---------------------------------------------------------------------------
# AdamW


def gradient_flops(problem):
    """Rough operation count of one gradient evaluation."""
    n = getattr(problem, "N", 1)
    return int(4 * n * problem.dim + 10 * n)


def newton_iteration_flops(problem):
    """Gradient, Hessian and an LU solve for one Newton iteration."""
    d = problem.dim
    n = getattr(problem, "N", 1)
    return gradient_flops(problem) + 2 * n * d * d + (2 * d ** 3) // 3 + 2 * d * d


def adamw_iteration_flops(problem):
    return gradient_flops(problem) + 12 * problem.dim


def adamw_minimize(problem, theta0, lr=1e-2, beta1=0.9, beta2=0.999, weight_decay=1e-2, tier=Tier.P64,
                   maxit=1000, eps=1e-8, theta_star=None, flop_budget=None, record_every=1, label="AdamW"):
    """AdamW with decoupled weight decay at ``tier``.

    With ``flop_budget`` the iteration count is ``flop_budget`` divided by the
    cost of one AdamW iteration (capped by ``maxit`` only when no budget is set).
    """
    if not (lr > 0 and 0 < beta1 < 1 and 0 < beta2 < 1 and weight_decay >= 0 and eps > 0):
        raise ConfigError("AdamW hyperparameters out of range")
    tier = Tier.parse(tier)
    if flop_budget is not None:
        maxit = max(1, int(flop_budget // adamw_iteration_flops(problem)))
    theta = P.asarray(P.to_f64(theta0), tier)
    m = P.zeros(problem.dim, tier)
    v = P.zeros(problem.dim, tier)
    c = lambda x: P.asarray(x, tier)
    lr_t, b1, b2, wd, ep = c(lr), c(beta1), c(beta2), c(weight_decay), c(eps)
    trace = Trace([], {"optimizer": "adamw", "lr": lr, "beta1": beta1, "beta2": beta2,
                       "weight_decay": weight_decay, "tier": str(tier)},
                  problem.family, P.to_f64(theta0).copy(), theta_digest(theta_star), label=label)
    trace.meta["iterations"] = maxit
    start = time.perf_counter_ns()
    step_norm = 0.0
    b1p, b2p = 1.0, 1.0
    for i in range(maxit + 1):
        g = problem.gradient(theta, tier)
        if not P.is_finite(g):
            trace.status = "failed: non-finite gradient"
            break
        if i % record_every == 0 or i == maxit:
            flags = set()
            loss = float(P.to_f64(problem.objective(P.asarray(theta, Tier.P64), Tier.P64, flags)))
            trace.records.append(IterationRecord(i, relative_error(theta, theta_star), P.norm2(g), loss,
                                                 step_norm, 0, time.perf_counter_ns() - start,
                                                 frozenset(flags), P.norm2(theta)))
        if i == maxit:
            break
        b1p *= beta1
        b2p *= beta2
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        mhat = m / c(1.0 - b1p)
        vhat = v / c(1.0 - b2p)
        step = lr_t * (mhat / (P.sqrt(vhat) + ep) + wd * theta)
        theta = theta - step
        step_norm = P.norm2(step)
    trace.meta["theta"] = P.to_f64(theta)
    trace.theta = theta
    return trace
