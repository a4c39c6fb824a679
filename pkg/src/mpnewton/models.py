"""Objective functions with analytic derivatives, evaluable at any tier.

Every problem offers ``objective``, ``gradient`` and ``hessian``.  Least-squares
families additionally expose residuals ``R``, the Jacobian ``J`` and the
per-residual Hessians, with ``f = R.R / 2``.  The direct gradient/Hessian
formulas are written independently of the residual form so that the identities
``g = J^T R`` and ``H = J^T J + sum_j r_j Hess(r_j)`` act as a cross-check.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import linalg
from . import precision as P
from .precision import DD, NumericFailure, Tier


class ConfigError(ValueError):
    pass


class Unsupported(TypeError):
    pass


FAMILIES = ("PolyExp", "SinePoly", "SqrtControlled", "LinNonlin", "LogisticBCE",
            "SquaredErrorSigmoid")


def _const(value, tier):
    return P.asarray(value, tier)


class Problem:
    family = "?"
    least_squares = False

    def __init__(self, dim, theta_star=None, params=None):
        self.dim = dim
        self.theta_star = None if theta_star is None else np.asarray(theta_star, float)
        self.params = dict(params or {})
        self._cache = {}

    def _data(self, name, tier):
        tier = Tier.parse(tier)
        key = (name, tier)
        if key not in self._cache:
            self._cache[key] = P.asarray(getattr(self, name), tier)
        return self._cache[key]

    def _theta(self, theta, tier):
        t = P.asarray(theta, tier)
        if t.shape != (self.dim,):
            raise ValueError(f"theta has shape {t.shape}, expected ({self.dim},)")
        return t

    def objective(self, theta, tier=Tier.P64, flags=None):
        raise NotImplementedError

    def gradient(self, theta, tier=Tier.P64, flags=None):
        raise NotImplementedError

    def hessian(self, theta, tier=Tier.P64, flags=None):
        raise NotImplementedError

    # least-squares interface
    def residuals_jacobian(self, theta, tier=Tier.P64):
        raise Unsupported(f"{self.family} is not a least-squares problem")

    def residuals(self, theta, tier=Tier.P64):
        return self.residuals_jacobian(theta, tier)[0]

    def residual_hessians(self, theta, tier=Tier.P64, idx=None):
        """Stack of residual Hessians, shape (len(idx), d, d)."""
        raise Unsupported(f"{self.family} is not a least-squares problem")

    def residual_hessian(self, theta, j, tier=Tier.P64):
        return self.residual_hessians(theta, tier, np.array([j]))[0]

    def residual_hessian_flops(self, idx) -> int:
        """Floating-point operations needed to form the residual Hessians ``idx``."""
        raise Unsupported(f"{self.family} is not a least-squares problem")

    def curvature_sum(self, theta, idx, tier=Tier.P64):
        """``sum_{j in idx} r_j Hess(r_j)`` at ``tier``."""
        idx = np.asarray(idx, dtype=int)
        d = self.dim
        if idx.size == 0:
            return P.zeros((d, d), tier)
        R = self.residuals(theta, tier)[idx]
        Hs = self.residual_hessians(theta, tier, idx)
        return P.tsum(R.reshape(-1, 1, 1) * Hs, axis=0)

    def predict(self, X, theta, tier=Tier.P64):
        raise Unsupported(f"{self.family} has no prediction function")


# ---------------------------------------------------------------------------
# regression families


class PolyExp(Problem):
    """``F(x) = t1 exp(t0) x + t1 exp(t1) x^2`` with mean squared error."""

    family = "PolyExp"
    least_squares = True

    def __init__(self, X, y, theta_star=None):
        super().__init__(2, theta_star)
        self.X = np.asarray(X, float).reshape(-1)
        self.y = np.asarray(y, float).reshape(-1)
        self.N = len(self.X)

    @staticmethod
    def forward(X, theta, tier):
        x = P.asarray(X, tier)
        t = P.asarray(theta, tier)
        return t[1] * P.exp(t[0]) * x + t[1] * P.exp(t[1]) * (x * x)

    def _parts(self, theta, tier):
        t = self._theta(theta, tier)
        x = self._data("X", tier)
        e0, e1 = P.exp(t[0]), P.exp(t[1])
        x2 = x * x
        F = t[1] * e0 * x + t[1] * e1 * x2
        return t, x, x2, e0, e1, F - self._data("y", tier)

    def objective(self, theta, tier=Tier.P64, flags=None):
        *_, err = self._parts(theta, tier)
        return P.tsum(err * err) / self.N

    def gradient(self, theta, tier=Tier.P64, flags=None):
        t, x, x2, e0, e1, err = self._parts(theta, tier)
        sx = P.tsum(err * x)
        sx2 = P.tsum(err * x2)
        g0 = t[1] * e0 * sx
        g1 = e0 * sx + e1 * (1.0 + t[1]) * sx2
        return P.stack([g0, g1]) * (2.0 / _const(self.N, tier))

    def hessian(self, theta, tier=Tier.P64, flags=None):
        t, x, x2, e0, e1, err = self._parts(theta, tier)
        d0 = t[1] * e0 * x
        d1 = e0 * x + e1 * (1.0 + t[1]) * x2
        h00 = P.tsum(d0 * d0) + t[1] * e0 * P.tsum(err * x)
        h01 = P.tsum(d0 * d1) + e0 * P.tsum(err * x)
        h11 = P.tsum(d1 * d1) + e1 * (2.0 + t[1]) * P.tsum(err * x2)
        H = P.stack([P.stack([h00, h01]), P.stack([h01, h11])])
        return H * (2.0 / _const(self.N, tier))

    def _scale(self, tier):
        return P.sqrt(2.0 / _const(self.N, tier))

    def residuals_jacobian(self, theta, tier=Tier.P64):
        t, x, x2, e0, e1, err = self._parts(theta, tier)
        c = self._scale(tier)
        J = P.stack([t[1] * e0 * x, e0 * x + e1 * (1.0 + t[1]) * x2], axis=1)
        return err * c, J * c

    def residual_hessians(self, theta, tier=Tier.P64, idx=None):
        t = self._theta(theta, tier)
        x = self._data("X", tier)
        if idx is not None:
            x = x[np.asarray(idx)]
        e0, e1 = P.exp(t[0]), P.exp(t[1])
        c = self._scale(tier)
        h00 = t[1] * e0 * x * c
        h01 = e0 * x * c
        h11 = e1 * (2.0 + t[1]) * (x * x) * c
        return P.stack([P.stack([h00, h01], axis=1), P.stack([h01, h11], axis=1)], axis=1)

    def residual_hessian_flops(self, idx) -> int:
        # x^2 and three scaled products per residual, exponentials shared
        return 7 * len(np.atleast_1d(idx))


def sine_poly_exponents(D):
    """Exponents of the polynomial components: 2 for theta_1, then (i+1)/2 + 1."""
    ks = {1: 2.0}
    for i in range(2, D, 2):
        ks[i + 1] = (i + 1) / 2 + 1
    return ks


class SinePoly(Problem):
    """Separable sum of a constant, a quadratic, and alternating sine / power terms.

    Each parameter drives its own output component and each component has its
    own target column, so the Hessian is diagonal.  Components are::

        theta_0,  theta_1 x^2,  sin(theta_2 x),  theta_3 x^{5/2},  sin(theta_4 x), ...
    """

    family = "SinePoly"
    least_squares = True

    def __init__(self, X, Y, theta_star=None):
        Y = np.asarray(Y, float)
        super().__init__(Y.shape[1], theta_star)
        if self.dim % 2:
            raise ConfigError("SinePoly needs an even dimension")
        self.X = np.asarray(X, float).reshape(-1)
        self.y = Y
        self.N = len(self.X)
        self.exponents = sine_poly_exponents(self.dim)

    @staticmethod
    def _power(x, k):
        whole = int(math.floor(k))
        out = x ** whole if whole else x * 0.0 + 1.0
        if k - whole:
            out = out * P.sqrt(x)
        return out

    @classmethod
    def components(cls, X, theta, tier):
        """Per-component values F_c and their first/second derivative in theta_c."""
        x = P.asarray(X, tier)
        t = P.asarray(theta, tier)
        D = len(t)
        one = x * 0.0 + 1.0
        ks = sine_poly_exponents(D)
        cols = []
        for c in range(D):
            if c == 0:
                cols.append((one * t[0], one, one * 0.0))
            elif c % 2 == 0:
                s, co = P.sin_cos(t[c] * x)
                cols.append((s, x * co, -(x * x) * s))
            else:
                xk = cls._power(x, ks[c])
                cols.append((t[c] * xk, xk, one * 0.0))
        F, d1, d2 = zip(*cols)
        return P.stack(F, 1), P.stack(d1, 1), P.stack(d2, 1)

    @classmethod
    def forward(cls, X, theta, tier):
        return cls.components(X, theta, tier)[0]

    def _err(self, theta, tier):
        F, d1, d2 = self.components(self._data("X", tier), self._theta(theta, tier), tier)
        return F - self._data("y", tier), d1, d2

    def objective(self, theta, tier=Tier.P64, flags=None):
        err, _, _ = self._err(theta, tier)
        return P.tsum(err * err) / self.N

    def gradient(self, theta, tier=Tier.P64, flags=None):
        err, d1, _ = self._err(theta, tier)
        return P.tsum(err * d1, axis=0) * (2.0 / _const(self.N, tier))

    def hessian(self, theta, tier=Tier.P64, flags=None):
        err, d1, d2 = self._err(theta, tier)
        diag = P.tsum(d1 * d1 + err * d2, axis=0) * (2.0 / _const(self.N, tier))
        H = P.zeros((self.dim, self.dim), tier)
        for c in range(self.dim):
            H[c, c] = diag[c]
        return H

    def _scale(self, tier):
        return P.sqrt(2.0 / _const(self.N, tier))

    # residual j = i * D + c belongs to point i and component c
    def residuals_jacobian(self, theta, tier=Tier.P64):
        err, d1, _ = self._err(theta, tier)
        c = self._scale(tier)
        N, D = self.N, self.dim
        R = (err * c).reshape(N * D)
        J = P.zeros((N * D, D), tier)
        rows = np.arange(N * D)
        J[rows, rows % D] = (d1 * c).reshape(N * D)
        return R, J

    def residual_hessians(self, theta, tier=Tier.P64, idx=None):
        _, _, d2 = self._err(theta, tier)
        c = self._scale(tier)
        N, D = self.N, self.dim
        idx = np.arange(N * D) if idx is None else np.asarray(idx)
        vals = (d2 * c).reshape(N * D)[idx]
        out = P.zeros((len(idx), D, D), tier)
        comp = idx % D
        out[np.arange(len(idx)), comp, comp] = vals
        return out

    def residual_hessian_flops(self, idx) -> int:
        comp = np.atleast_1d(idx) % self.dim
        # only sine components curve: product, sine, square, product, scale
        return 5 * int(np.count_nonzero((comp % 2 == 0) & (comp > 0)))


class SqrtControlled(Problem):
    """``sqrt(1 + ax (t0 - a)^2) + sqrt(1 + ay (t1 - b)^2)``: tunable conditioning."""

    family = "SqrtControlled"

    def __init__(self, alpha_x, alpha_y, a, b):
        super().__init__(2, (a, b), dict(alpha_x=alpha_x, alpha_y=alpha_y, a=a, b=b))
        self.alpha = np.array([alpha_x, alpha_y], float)
        self.center = np.array([a, b], float)

    def _q(self, theta, tier):
        t = self._theta(theta, tier)
        delta = t - self._data("center", tier)
        al = self._data("alpha", tier)
        return delta, al, 1.0 + al * (delta * delta)

    def objective(self, theta, tier=Tier.P64, flags=None):
        _, _, q = self._q(theta, tier)
        return P.tsum(P.sqrt(q))

    def gradient(self, theta, tier=Tier.P64, flags=None):
        delta, al, q = self._q(theta, tier)
        return al * delta / P.sqrt(q)

    def hessian(self, theta, tier=Tier.P64, flags=None):
        _, al, q = self._q(theta, tier)
        diag = al / (q * P.sqrt(q))
        H = P.zeros((2, 2), tier)
        H[0, 0] = diag[0]
        H[1, 1] = diag[1]
        return H


class LinNonlin(Problem):
    """Linear-plus-sine least squares with strongly curved residuals.

    ``F_lin = (sum_i theta_i^2) X A^T`` and ``F_nonlin = sin(prod_i theta_i * X)``
    are both fitted to the same targets, with ``f = |F_lin - Y|^2/2 + |F_nonlin - Y|^2/2``.
    The m x m matrix ``A`` acts on each data point.  Residuals are ordered as the
    flattened linear block followed by the flattened sine block.
    """

    family = "LinNonlin"
    least_squares = True

    def __init__(self, X, Y, A, theta_star=None):
        X = np.asarray(X, float)
        super().__init__(X.shape[1], theta_star, dict(A=A))
        self.X = X
        self.y = np.asarray(Y, float)
        self.A = np.asarray(A, float)
        self.AX = X @ self.A.T  # stored data: the coupling is fixed, not a parameter
        self.n_res = 2 * X.size

    @staticmethod
    def _prod_parts(t, tier):
        """prod(theta), its gradient and Hessian, without dividing by theta_i."""
        d = len(t)
        one = _const(1.0, tier)
        prod = one
        for i in range(d):
            prod = prod * t[i]
        grad = []
        for i in range(d):
            g = one
            for k in range(d):
                if k != i:
                    g = g * t[k]
            grad.append(g)
        Hp = P.zeros((d, d), tier)
        for i in range(d):
            for j in range(d):
                if i != j:
                    h = one
                    for k in range(d):
                        if k != i and k != j:
                            h = h * t[k]
                    Hp[i, j] = h
        return prod, P.stack(grad), Hp

    @classmethod
    def forward(cls, X, AX, theta, tier):
        t = P.asarray(theta, tier)
        s = P.tsum(t * t)
        prod = cls._prod_parts(t, tier)[0]
        return s * P.asarray(AX, tier), P.sin(prod * P.asarray(X, tier))

    def _eval(self, theta, tier):
        t = self._theta(theta, tier)
        x = self._data("X", tier)
        ax = self._data("AX", tier)
        y = self._data("y", tier)
        s = P.tsum(t * t)
        prod, gp, Hp = self._prod_parts(t, tier)
        sn, cs = P.sin_cos(prod * x)
        return t, x, ax, s, prod, gp, Hp, sn, cs, s * ax - y, sn - y

    def objective(self, theta, tier=Tier.P64, flags=None):
        *_, rl, rn = self._eval(theta, tier)
        return (P.tsum(rl * rl) + P.tsum(rn * rn)) * 0.5

    def gradient(self, theta, tier=Tier.P64, flags=None):
        t, x, ax, s, prod, gp, Hp, sn, cs, rl, rn = self._eval(theta, tier)
        return t * (2.0 * P.tsum(rl * ax)) + gp * P.tsum(rn * cs * x)

    def hessian(self, theta, tier=Tier.P64, flags=None):
        t, x, ax, s, prod, gp, Hp, sn, cs, rl, rn = self._eval(theta, tier)
        d = self.dim
        a = 2.0 * P.tsum(rl * ax)
        b = 4.0 * P.tsum(ax * ax)
        cx = cs * x
        c = P.tsum(cx * cx) - P.tsum(rn * sn * (x * x))
        e = P.tsum(rn * cx)
        outer_t = t.reshape(d, 1) * t.reshape(1, d)
        outer_p = gp.reshape(d, 1) * gp.reshape(1, d)
        return P.eye(d, P.tier_of(t)) * a + outer_t * b + outer_p * c + Hp * e

    def residuals_jacobian(self, theta, tier=Tier.P64):
        t, x, ax, s, prod, gp, Hp, sn, cs, rl, rn = self._eval(theta, tier)
        d = self.dim
        R = P.concatenate([rl.reshape(-1), rn.reshape(-1)])
        Jl = ax.reshape(-1, 1) * (t * 2.0).reshape(1, d)
        Jn = (cs * x).reshape(-1, 1) * gp.reshape(1, d)
        return R, P.concatenate([Jl, Jn])

    def residual_hessians(self, theta, tier=Tier.P64, idx=None):
        t, x, ax, s, prod, gp, Hp, sn, cs, rl, rn = self._eval(theta, tier)
        d = self.dim
        nl = x.size
        idx = np.arange(self.n_res) if idx is None else np.asarray(idx, dtype=int)
        lin = idx[idx < nl]
        non = idx[idx >= nl] - nl
        eye = P.eye(d, tier).reshape(1, d, d)
        Hl = (ax.reshape(-1)[lin] * 2.0).reshape(-1, 1, 1) * eye
        xf = x.reshape(-1)[non]
        w1 = -(sn.reshape(-1)[non] * (xf * xf))
        w2 = cs.reshape(-1)[non] * xf
        outer_p = (gp.reshape(d, 1) * gp.reshape(1, d)).reshape(1, d, d)
        Hn = w1.reshape(-1, 1, 1) * outer_p + w2.reshape(-1, 1, 1) * Hp.reshape(1, d, d)
        out = P.zeros((len(idx), d, d), tier)
        pos_l = np.nonzero(idx < nl)[0]
        pos_n = np.nonzero(idx >= nl)[0]
        if len(pos_l):
            out[pos_l] = Hl
        if len(pos_n):
            out[pos_n] = Hn
        return out

    def residual_hessian_flops(self, idx) -> int:
        idx = np.atleast_1d(idx)
        d = self.dim
        nl = self.X.size
        n_lin = int(np.count_nonzero(idx < nl))
        n_non = len(idx) - n_lin
        # linear: 2 * (AX)_j times the identity; sine: product, sin, cos, x^2,
        # two scalings, two scaled d x d matrices and their sum
        return n_lin * (1 + d * d) + n_non * (6 + 3 * d * d)


# ---------------------------------------------------------------------------
# classification families


def _sigmoid(z):
    # evaluates 1/(1 + e^-|z|) on both branches so exp never overflows
    az = P.where(z >= 0, z, -z) if not isinstance(z, DD) else abs(z)
    e = P.exp(-az)
    one_plus = 1.0 + e
    return P.where(z >= 0, 1.0 / one_plus, e / one_plus)


class _Classifier(Problem):
    def __init__(self, X, y, lam):
        X = np.asarray(X, float)
        super().__init__(X.shape[1], None, dict(lam=lam))
        self.X = X
        self.y = np.asarray(y, float).reshape(-1)
        self.N = len(self.y)
        self.lam = float(lam)

    def _z(self, theta, tier):
        t = self._theta(theta, tier)
        return t, P.matmul(self._data("X", tier), t)

    def predict(self, X, theta, tier=Tier.P64):
        return P.to_f64(_sigmoid(P.matmul(P.asarray(X, tier), P.asarray(theta, tier))))

    def _reg(self, t, tier):
        return _const(self.lam, tier) * 0.5 * P.tsum(t * t)


class LogisticBCE(_Classifier):
    """Binary cross-entropy of a logistic model plus ``lam/2 |theta|^2``."""

    family = "LogisticBCE"

    def objective(self, theta, tier=Tier.P64, flags=None):
        tier = Tier.parse(tier)
        t, z = self._z(theta, tier)
        u = tier.u
        p, hit = P.clip(_sigmoid(z), _const(u, tier), _const(1.0 - u, tier))
        if hit and flags is not None:
            flags.add("clamped-bce")
        y = self._data("y", tier)
        ll = y * P.log(p) + (1.0 - y) * P.log(1.0 - p)
        return -P.tsum(ll) / self.N + self._reg(t, tier)

    def gradient(self, theta, tier=Tier.P64, flags=None):
        t, z = self._z(theta, tier)
        resid = _sigmoid(z) - self._data("y", tier)
        return P.matmul(resid, self._data("X", tier)) / self.N + t * _const(self.lam, tier)

    def hessian(self, theta, tier=Tier.P64, flags=None):
        t, z = self._z(theta, tier)
        p = _sigmoid(z)
        w = p * (1.0 - p) / self.N
        X = self._data("X", tier)
        H = P.matmul(X.T, X * w.reshape(-1, 1))
        return H + P.eye(self.dim, tier) * _const(self.lam, tier)


class SquaredErrorSigmoid(_Classifier):
    """``(1/2N) sum (y - sigmoid(x.theta))^2 + lam/2 |theta|^2`` as least squares.

    Residuals are ``(sigmoid - y)/sqrt(N)`` for each sample followed by
    ``sqrt(lam) theta_k`` for each parameter.
    """

    family = "SquaredErrorSigmoid"
    least_squares = True

    def _pieces(self, theta, tier):
        t, z = self._z(theta, tier)
        p = _sigmoid(z)
        dp = p * (1.0 - p)
        return t, p, dp, dp * (1.0 - 2.0 * p), p - self._data("y", tier)

    def objective(self, theta, tier=Tier.P64, flags=None):
        t, p, dp, d2p, err = self._pieces(theta, tier)
        return P.tsum(err * err) / (2.0 * self.N) + self._reg(t, tier)

    def gradient(self, theta, tier=Tier.P64, flags=None):
        t, p, dp, d2p, err = self._pieces(theta, tier)
        return P.matmul(err * dp, self._data("X", tier)) / self.N + t * _const(self.lam, tier)

    def hessian(self, theta, tier=Tier.P64, flags=None):
        t, p, dp, d2p, err = self._pieces(theta, tier)
        X = self._data("X", tier)
        w = (dp * dp + err * d2p) / self.N
        return P.matmul(X.T, X * w.reshape(-1, 1)) + P.eye(self.dim, tier) * _const(self.lam, tier)

    def residuals_jacobian(self, theta, tier=Tier.P64):
        t, p, dp, d2p, err = self._pieces(theta, tier)
        rn = P.sqrt(_const(float(self.N), tier))
        rl = P.sqrt(_const(self.lam, tier))
        R = P.concatenate([err / rn, t * rl])
        J = P.concatenate([self._data("X", tier) * (dp / rn).reshape(-1, 1), P.eye(self.dim, tier) * rl])
        return R, J

    def residual_hessians(self, theta, tier=Tier.P64, idx=None):
        t, p, dp, d2p, err = self._pieces(theta, tier)
        n_all = self.N + self.dim
        idx = np.arange(n_all) if idx is None else np.asarray(idx, dtype=int)
        d = self.dim
        out = P.zeros((len(idx), d, d), tier)
        pos = np.nonzero(idx < self.N)[0]
        if len(pos):
            X = self._data("X", tier)[idx[pos]]
            w = d2p[idx[pos]] / P.sqrt(_const(float(self.N), tier))
            out[pos] = w.reshape(-1, 1, 1) * (X.reshape(-1, d, 1) * X.reshape(-1, 1, d))
        return out

    def curvature_sum(self, theta, idx, tier=Tier.P64):
        t, p, dp, d2p, err = self._pieces(theta, tier)
        idx = np.asarray(idx, dtype=int)
        idx = idx[idx < self.N]
        X = self._data("X", tier)[idx]
        w = (err * d2p)[idx] / self.N
        return P.matmul(X.T, X * w.reshape(-1, 1))

    def residual_hessian_flops(self, idx) -> int:
        idx = np.atleast_1d(idx)
        d = self.dim
        return int(np.count_nonzero(idx < self.N)) * (4 + 2 * d * d)


# ---------------------------------------------------------------------------
# construction


@dataclass
class ProblemSpec:
    family: str
    theta_star: tuple = ()
    n_points: int = 50
    noise_scale: float = 1e-3
    seed: int = 0
    x_range: tuple = (0.0, 1.0)
    params: dict = field(default_factory=dict)
    dataset: object = None

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {k: d.pop(k) for k in list(d) if k in cls.__dataclass_fields__}
        if "family" not in known:
            raise ConfigError("problem needs a 'family'")
        if known["family"] not in FAMILIES:
            raise ConfigError(f"unknown family {known['family']!r}")
        known.setdefault("params", {}).update(d)
        for key in ("theta_star", "x_range"):
            if key in known:
                known[key] = tuple(float(v) for v in known[key])
        return cls(**known)


def sample_inputs(N, shape_tail, seed, x_range=(0.0, 1.0)):
    rng = np.random.default_rng(seed)
    lo, hi = x_range
    return rng.uniform(lo, hi, (N,) + tuple(shape_tail)), rng


def generate_regression_data(family, theta_star, N, noise_scale=1e-3, seed=0,
                             x_range=(0.0, 1.0), **extra):
    """Draw inputs and targets ``y = F(theta*) + U(-noise, noise)``.

    Targets are computed in double-double and stored in double precision.
    Returns ``(X, y)`` and, for LinNonlin, the coupling matrix as a third item.
    """
    theta_star = np.asarray(theta_star, float)
    if family == "PolyExp":
        X, rng = sample_inputs(N, (), seed, x_range)
        F = PolyExp.forward(X, theta_star, Tier.EXT)
    elif family == "SinePoly":
        X, rng = sample_inputs(N, (), seed, x_range)
        F = SinePoly.forward(X, theta_star, Tier.EXT)
    elif family == "LinNonlin":
        m = len(theta_star)
        X, rng = sample_inputs(N, (m,), seed, x_range)
        A = rng.standard_normal((m, m))
        AX = X @ A.T
        Fl, Fn = LinNonlin.forward(X, AX, theta_star, Tier.EXT)
        F = Fl + Fn
    else:
        raise ConfigError(f"no regression generator for {family}")
    noise = rng.uniform(-noise_scale, noise_scale, F.shape)
    y = P.to_f64(F + noise)
    if family == "LinNonlin":
        return X, y, A
    return X, y


def build_problem(spec) -> Problem:
    if isinstance(spec, dict):
        spec = ProblemSpec.from_dict(spec)
    fam = spec.family
    prm = spec.params
    if fam in ("PolyExp", "SinePoly", "LinNonlin"):
        if not spec.theta_star:
            raise ConfigError(f"{fam} needs theta_star")
        data = generate_regression_data(fam, spec.theta_star, spec.n_points, spec.noise_scale,
                                        spec.seed, spec.x_range)
        if fam == "PolyExp":
            return PolyExp(*data, theta_star=spec.theta_star)
        if fam == "SinePoly":
            return SinePoly(*data, theta_star=spec.theta_star)
        return LinNonlin(*data, theta_star=spec.theta_star)
    if fam == "SqrtControlled":
        missing = {"alpha_x", "alpha_y"} - set(prm)
        if missing:
            raise ConfigError(f"SqrtControlled needs {sorted(missing)}")
        a, b = spec.theta_star if spec.theta_star else (prm["a"], prm["b"])
        return SqrtControlled(float(prm["alpha_x"]), float(prm["alpha_y"]), a, b)
    if fam in ("LogisticBCE", "SquaredErrorSigmoid"):
        ds = spec.dataset
        if ds is None:
            raise ConfigError(f"{fam} needs a dataset")
        cls = LogisticBCE if fam == "LogisticBCE" else SquaredErrorSigmoid
        return cls(ds.features, ds.labels, float(prm.get("lam", 1e-4)))
    raise ConfigError(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# derivatives by differences and the reference solution


def fd_gradient(problem, theta, eps, tier=Tier.P64):
    """Central differences ``(f(t + eps e_i) - f(t - eps e_i)) / (2 eps)`` at ``tier``."""
    tier = Tier.parse(tier)
    e = _const(eps, tier)
    if float(P.to_f64(e)) == 0.0 or not eps > 0:
        raise ValueError(f"step {eps!r} is zero at tier {tier}")
    t = P.asarray(theta, tier)
    parts = []
    for i in range(problem.dim):
        tp = t.copy()
        tm = t.copy()
        tp[i] = t[i] + e
        tm[i] = t[i] - e
        parts.append((problem.objective(tp, tier) - problem.objective(tm, tier)) / (e * 2.0))
    return P.stack(parts)


class ReferenceFailure(NumericFailure):
    pass


def compute_reference_solution(problem, theta0, iters=500, hessian_tier=Tier.EXT):
    """Newton's method in double-double with LU solves; returns theta* as a DD vector.

    Stops early once three consecutive steps are below ``u(EXT) |theta|``
    (further steps only move the last bits).  ``hessian_tier`` lets very large
    problems form the Hessian in double precision: the gradient, solve and
    update stay in double-double, so the fixed point is unchanged.
    """
    hessian_tier = Tier.parse(hessian_tier)
    t = P.asarray(np.asarray(P.to_f64(theta0), float), Tier.EXT) if not isinstance(theta0, DD) else theta0
    quiet = 0
    for _ in range(iters):
        g = problem.gradient(t, Tier.EXT)
        H = problem.hessian(t if hessian_tier is Tier.EXT else P.to_f64(t), hessian_tier)
        d = linalg.lu_solve(H, -g, Tier.EXT)
        new = t + d
        if not P.is_finite(new) or np.max(np.abs(new.hi)) > 1e150:
            raise ReferenceFailure("reference Newton run diverged")
        small = P.norm2(d) <= Tier.EXT.u * P.norm2(new)
        t = new
        quiet = quiet + 1 if small else 0
        if quiet >= 3:
            break
    return t
