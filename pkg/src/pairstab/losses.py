"""Pairwise losses with certified constants.

Every loss evaluates ``l(w, z, z')`` and its gradient in ``w``. The private
``_value``/``_grad`` hooks broadcast over leading batch axes:

* ``w``  -- ``(..., p)``
* ``x``, ``xp`` -- ``(..., d)``
* ``y``, ``yp`` -- ``(...)``

so the SGD engine can evaluate thousands of pairs in one call. The public
``value``/``grad`` wrap a single ``(w, z, z')`` triple with validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .core import Domain, Example, as_seed, project
from .errors import InvalidArgumentError, InvalidParameterError

__all__ = [
    "LossMeta",
    "PairwiseLoss",
    "AUCSquaredLoss",
    "SymmetrizedLoss",
    "MetricLogisticLoss",
    "MEELoss",
    "SyntheticConvexLoss",
    "SyntheticStronglyConvexLoss",
    "auc_squared_loss",
    "symmetrized",
    "metric_logistic_loss",
    "mee_loss",
    "synthetic_convex_loss",
    "synthetic_strongly_convex_loss",
    "check_gradient",
    "certify_constants",
]


@dataclass(frozen=True)
class LossMeta:
    """Certified constants of a pairwise loss on its domain.

    Attributes
    ----------
    L : float
        Lipschitz constant in ``w``.
    beta : float
        Smoothness (Lipschitz constant of the gradient).
    gamma : float
        Strong-convexity modulus, 0 for merely convex or non-convex losses.
    rho : float
        Supremum of the loss over the domain and all example pairs.
    b : float
        Upper bound on ``sup_{z,z'} min_w |grad l(w, z, z')|``.
    range_unit : bool
        Whether loss values lie in ``[0, 1]``.
    convex : bool
        Whether the loss is convex in ``w`` for every pair.
    """

    L: float
    beta: float
    gamma: float = 0.0
    rho: float = math.inf
    b: float = 0.0
    range_unit: bool = False
    convex: bool = True

    def __post_init__(self):
        if not (self.L > 0 and self.beta > 0):
            raise InvalidArgumentError(f"L and beta must be positive, got L={self.L}, beta={self.beta}")
        if self.gamma < 0 or self.gamma > self.beta:
            raise InvalidArgumentError(f"need 0 <= gamma <= beta, got gamma={self.gamma}, beta={self.beta}")
        if self.rho < 0 or self.b < 0:
            raise InvalidArgumentError("rho and b must be non-negative")


def _pos(name, v):
    if not (isinstance(v, (int, float, np.floating, np.integer)) and v > 0 and math.isfinite(v)):
        raise InvalidArgumentError(f"{name} must be a finite positive number, got {v!r}")
    return float(v)


class PairwiseLoss:
    """Base class for ``l(w, z, z')``.

    Subclasses set ``meta``, ``domain``, ``dim`` (parameter size ``p``),
    ``feature_dim`` and ``bounds = (B1, B2)`` and implement the broadcasting
    hooks ``_value`` and ``_grad``.
    """

    name = "pairwise"
    meta: LossMeta
    domain: Domain
    dim: int
    feature_dim: int
    bounds: tuple
    # labels drawn by sample_examples: "sign" (+-1) or "real" (uniform in [-B2, B2])
    label_kind = "sign"

    def _value(self, w, x, y, xp, yp):
        raise NotImplementedError

    def _grad(self, w, x, y, xp, yp):
        raise NotImplementedError

    # -- single-triple API -------------------------------------------------

    def _check_param(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise InvalidParameterError(f"{self.name}: expected parameter of shape ({self.dim},), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidParameterError(f"{self.name}: parameter is not finite")
        return w

    def value(self, w, z: Example, zp: Example) -> float:
        w = self._check_param(w)
        return float(self._value(w, z.x, np.float64(z.y), zp.x, np.float64(zp.y)))

    def grad(self, w, z: Example, zp: Example) -> np.ndarray:
        w = self._check_param(w)
        return np.asarray(self._grad(w, z.x, np.float64(z.y), zp.x, np.float64(zp.y)), dtype=float)

    # -- sampling helpers used by the certification utilities --------------

    def sample_examples(self, rng: np.random.Generator, m: int):
        """``m`` examples spread over the admissible set ``|x| <= B1, |y| <= B2``."""
        B1, B2 = self.bounds
        d = self.feature_dim
        u = rng.standard_normal((m, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # half the draws sit on the sphere, where the constants are tight
        radii = np.where(rng.random(m) < 0.5, 1.0, rng.random(m) ** (1.0 / d))
        X = B1 * u * radii[:, None]
        if self.label_kind == "sign":
            y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
        else:
            y = B2 * rng.uniform(-1.0, 1.0, m)
            edge = rng.random(m) < 0.25
            y[edge] = B2 * np.where(rng.random(int(edge.sum())) < 0.5, 1.0, -1.0)
        return X, y

    def sample_params(self, rng: np.random.Generator, m: int, interior: float = 1.0) -> np.ndarray:
        dom = self.domain
        if dom.kind == "unconstrained":
            return rng.standard_normal((m, self.dim))
        pts = dom.sample(rng, m, self.dim)
        return pts * interior

    def __repr__(self):
        return f"{type(self).__name__}({self.meta})"


# ---------------------------------------------------------------------------
# AUC


class AUCSquaredLoss(PairwiseLoss):
    """``(1 - (x - x')^T w)^2 * 1{y = 1, y' = -1} + (mu / 2) |w|^2``.

    The indicator is order-sensitive: only positive-then-negative pairs pay
    the ranking term. Use :func:`symmetrized` for an order-free variant.
    """

    name = "auc"

    def __init__(self, mu: float, B1: float, d: int = 2):
        self.mu = _pos("mu", mu)
        self.B1 = _pos("B1", B1)
        self.dim = self.feature_dim = int(d)
        r0 = math.sqrt(2.0 / self.mu)
        self.domain = Domain.ball(r0)
        self.bounds = (self.B1, 1.0)
        L = 4 * self.B1 + 8 * self.B1**2 * math.sqrt(2 / self.mu) + math.sqrt(2 * self.mu)
        beta = 8 * self.B1**2 + self.mu
        rho = 1 + (1 + 2 * self.B1 * math.sqrt(2 / self.mu)) ** 2
        # the per-pair minimiser 2D/(mu + 2|D|^2) has norm <= 1/sqrt(2 mu) < r0, so b = 0
        self.meta = LossMeta(L=L, beta=beta, gamma=self.mu, rho=rho, b=0.0)

    def _value(self, w, x, y, xp, yp):
        ind = (y == 1) & (yp == -1)
        u = np.einsum("...i,...i->...", x - xp, w)
        return np.where(ind, (1.0 - u) ** 2, 0.0) + 0.5 * self.mu * np.einsum("...i,...i->...", w, w)

    def _grad(self, w, x, y, xp, yp):
        D = x - xp
        ind = (y == 1) & (yp == -1)
        u = np.einsum("...i,...i->...", D, w)
        coef = np.where(ind, -2.0 * (1.0 - u), 0.0)
        return coef[..., None] * D + self.mu * w


def auc_squared_loss(mu: float, B1: float, d: int = 2) -> AUCSquaredLoss:
    """Strongly convex least-squares AUC surrogate on the ball of radius ``sqrt(2/mu)``."""
    return AUCSquaredLoss(mu, B1, d)


class SymmetrizedLoss(PairwiseLoss):
    """``l(w, z, z') + l(w, z', z)`` for an order-sensitive base loss."""

    def __init__(self, base: PairwiseLoss):
        self.base = base
        self.name = f"sym-{base.name}"
        self.dim, self.feature_dim = base.dim, base.feature_dim
        self.domain, self.bounds = base.domain, base.bounds
        self.label_kind = base.label_kind
        m = base.meta
        self.meta = replace(m, L=2 * m.L, beta=2 * m.beta, gamma=2 * m.gamma, rho=2 * m.rho, b=2 * m.b,
                            range_unit=False)

    def _value(self, w, x, y, xp, yp):
        return self.base._value(w, x, y, xp, yp) + self.base._value(w, xp, yp, x, y)

    def _grad(self, w, x, y, xp, yp):
        return self.base._grad(w, x, y, xp, yp) + self.base._grad(w, xp, yp, x, y)


def symmetrized(base: PairwiseLoss) -> SymmetrizedLoss:
    return SymmetrizedLoss(base)


# ---------------------------------------------------------------------------
# metric learning


class MetricLogisticLoss(PairwiseLoss):
    """``log(1 + exp(s * <M, (x - x')(x - x')^T>))`` with ``s = +1`` for equal labels, else ``-1``.

    ``M`` is a symmetric ``d x d`` matrix stored flat (row-major, ``d*d``
    entries) on the PSD Frobenius ball of radius ``r0``.
    """

    name = "metric"

    def __init__(self, B1: float, r0: float, d: int = 2, psd_mode: str = "clamp"):
        self.B1 = _pos("B1", B1)
        self.r0 = _pos("r0", r0)
        self.side = self.feature_dim = int(d)
        self.dim = self.side * self.side
        self.domain = Domain.psd_ball(self.r0, self.side, psd_mode)
        self.bounds = (self.B1, 1.0)
        L = 4 * self.B1**2
        # on the PSD ball the inner product is at most r0 * 4 B1^2
        rho = math.log1p(math.exp(min(self.r0 * L, 700.0)))
        # b: conservative, the gradient norm never exceeds L
        self.meta = LossMeta(L=L, beta=4 * self.B1**4, gamma=0.0, rho=rho, b=L)

    def _check_param(self, w):
        w = super()._check_param(w)
        M = w.reshape(self.side, self.side)
        if not np.array_equal(M, M.T):
            raise InvalidParameterError("metric parameter must be a symmetric matrix")
        return w

    def _score(self, w, x, y, xp, yp):
        D = x - xp
        k = self.side
        M = w.reshape(*w.shape[:-1], k, k)
        q = np.einsum("...i,...ij,...j->...", D, M, D)
        sign = np.where(y == yp, 1.0, -1.0)
        return sign * q, sign, D

    def _value(self, w, x, y, xp, yp):
        s, _, _ = self._score(w, x, y, xp, yp)
        return np.logaddexp(0.0, s)

    def _grad(self, w, x, y, xp, yp):
        s, sign, D = self._score(w, x, y, xp, yp)
        outer = D[..., :, None] * D[..., None, :]
        g = (expit(s) * sign)[..., None, None] * outer
        return g.reshape(*g.shape[:-2], self.dim)


def metric_logistic_loss(B1: float, r0: float, d: int = 2, psd_mode: str = "clamp") -> MetricLogisticLoss:
    """Convex logistic metric-learning loss over PSD matrices."""
    return MetricLogisticLoss(B1, r0, d, psd_mode)


# ---------------------------------------------------------------------------
# minimum error entropy


class MEELoss(PairwiseLoss):
    """``1 - exp(-((y - y') - (x - x')^T w)^2 / (2 h^2))``, valued in ``[0, 1)``; non-convex."""

    name = "mee"
    label_kind = "real"

    def __init__(self, h: float, B1: float, B2: float, r0: float, d: int = 2):
        self.h = _pos("h", h)
        self.B1, self.B2, self.r0 = _pos("B1", B1), _pos("B2", B2), _pos("r0", r0)
        self.dim = self.feature_dim = int(d)
        self.domain = Domain.ball(self.r0)
        self.bounds = (self.B1, self.B2)
        core = self.B1**2 * self.r0 + self.B1 * self.B2
        L = 4.0 / self.h**2 * core
        beta = 4.0 / self.h**2 * self.B1**2 + 16.0 / self.h**4 * core**2
        self.meta = LossMeta(L=L, beta=beta, gamma=0.0, rho=1.0, b=L, range_unit=True, convex=False)

    def _resid(self, w, x, y, xp, yp):
        D = x - xp
        return (y - yp) - np.einsum("...i,...i->...", D, w), D

    def _value(self, w, x, y, xp, yp):
        e, _ = self._resid(w, x, y, xp, yp)
        return -np.expm1(-(e**2) / (2 * self.h**2))

    def _grad(self, w, x, y, xp, yp):
        e, D = self._resid(w, x, y, xp, yp)
        coef = -np.exp(-(e**2) / (2 * self.h**2)) * e / self.h**2
        return coef[..., None] * D


def mee_loss(h: float, B1: float, B2: float, r0: float, d: int = 2) -> MEELoss:
    """Minimum-error-entropy (correntropy-type) regression loss."""
    return MEELoss(h, B1, B2, r0, d)


# ---------------------------------------------------------------------------
# label-dispatched synthetic losses used by the two-point constructions


def _label_weights(y, yp):
    """Weights of ``f1`` and ``f2``: (+,+) -> f1, (-,-) -> f2, mixed -> average."""
    a = y == 1
    b = yp == 1
    mixed = 0.5 * (a != b)
    return (a & b) + mixed, (~a & ~b) + mixed


class SyntheticConvexLoss(PairwiseLoss):
    """Huber-type losses ``f1``/``f2`` in the first coordinate, dispatched on label signs.

    ``f1(w) = beta/2 (w1 - r)^2`` when ``|w1 - r| <= r/2`` and
    ``beta r/2 |w1 - r| - beta r^2/8`` otherwise; ``f2`` is the mirror
    image centred at ``-r``. Features are ignored.
    """

    name = "synthetic-convex"

    def __init__(self, beta: float, r: float, n: int, r0: float | None = None, d: int = 1):
        self.beta = _pos("beta", beta)
        self.r = _pos("r", r)
        if int(n) != n or n < 2:
            raise InvalidArgumentError(f"n must be an integer >= 2, got {n}")
        self.n = int(n)
        self.r0 = 2.0 * self.r if r0 is None else _pos("r0", r0)
        if self.r > self.r0:
            raise InvalidArgumentError(f"offset r={self.r} exceeds half the domain diameter ({self.r0})")
        self.dim = self.feature_dim = int(d)
        self.domain = Domain.ball(self.r0)
        self.bounds = (1.0, 1.0)
        rho = self._huber(np.float64(self.r0 + self.r))
        self.meta = LossMeta(L=self.beta * self.r / 2, beta=self.beta, gamma=0.0, rho=float(rho), b=0.0)

    def _huber(self, u):
        quad = 0.5 * self.beta * u**2
        lin = 0.5 * self.beta * self.r * np.abs(u) - self.beta * self.r**2 / 8
        return np.where(np.abs(u) <= self.r / 2, quad, lin)

    def _huber_grad(self, u):
        return np.where(np.abs(u) <= self.r / 2, self.beta * u, 0.5 * self.beta * self.r * np.sign(u))

    def f1(self, w):
        return self._huber(np.asarray(w, float)[..., 0] - self.r)

    def f2(self, w):
        return self._huber(np.asarray(w, float)[..., 0] + self.r)

    def _value(self, w, x, y, xp, yp):
        c1, c2 = _label_weights(y, yp)
        return c1 * self.f1(w) + c2 * self.f2(w)

    def _grad(self, w, x, y, xp, yp):
        c1, c2 = _label_weights(y, yp)
        g1 = c1 * self._huber_grad(w[..., 0] - self.r) + c2 * self._huber_grad(w[..., 0] + self.r)
        g = np.zeros(np.broadcast_shapes(w.shape, np.shape(g1) + (self.dim,)))
        g[..., 0] = g1
        return g


def synthetic_convex_loss(beta: float, r: float, n: int, r0: float | None = None, d: int = 1):
    """Convex, ``beta``-smooth two-point loss; the domain radius defaults to ``2 r``."""
    return SyntheticConvexLoss(beta, r, n, r0, d)


class SyntheticStronglyConvexLoss(PairwiseLoss):
    """``f1(w) = beta/2 |w - r e1|^2``, ``f2(w) = beta/2 |w + r e1|^2``, label-dispatched."""

    name = "synthetic-sconvex"

    def __init__(self, beta: float, r: float, d: int = 1, r0: float | None = None):
        self.beta = _pos("beta", beta)
        self.r = _pos("r", r)
        if int(d) != d or d < 1:
            raise InvalidArgumentError(f"d must be a positive integer, got {d}")
        self.dim = self.feature_dim = int(d)
        self.r0 = 2.0 * self.r if r0 is None else _pos("r0", r0)
        self.domain = Domain.ball(self.r0)
        self.bounds = (1.0, 1.0)
        self.meta = LossMeta(L=self.beta * (self.r0 + self.r), beta=self.beta, gamma=self.beta,
                             rho=0.5 * self.beta * (self.r0 + self.r) ** 2, b=0.0)

    def _shift(self, w, sign):
        v = np.array(w, dtype=float, copy=True)
        v[..., 0] -= sign * self.r
        return v

    def f1(self, w):
        v = self._shift(w, 1.0)
        return 0.5 * self.beta * np.einsum("...i,...i->...", v, v)

    def f2(self, w):
        v = self._shift(w, -1.0)
        return 0.5 * self.beta * np.einsum("...i,...i->...", v, v)

    def _value(self, w, x, y, xp, yp):
        c1, c2 = _label_weights(y, yp)
        return c1 * self.f1(w) + c2 * self.f2(w)

    def _grad(self, w, x, y, xp, yp):
        c1, c2 = _label_weights(y, yp)
        c1 = np.asarray(c1, float)[..., None]
        c2 = np.asarray(c2, float)[..., None]
        return self.beta * (c1 * self._shift(w, 1.0) + c2 * self._shift(w, -1.0))


def synthetic_strongly_convex_loss(beta: float, r: float, d: int = 1, r0: float | None = None):
    """``beta``-strongly convex and ``beta``-smooth two-point loss."""
    return SyntheticStronglyConvexLoss(beta, r, d, r0)


# ---------------------------------------------------------------------------
# certification


def _sample_triples(loss: PairwiseLoss, rng, m: int, interior: float = 1.0):
    w = loss.sample_params(rng, m, interior)
    X, y = loss.sample_examples(rng, 2 * m)
    return w, X[:m], y[:m], X[m:], y[m:]


def check_gradient(loss: PairwiseLoss, trials: int = 100, eps: float = 1e-5, seed=0) -> float:
    """Max relative error between the analytic gradient and central differences.

    Parameters are drawn strictly inside the domain (90% of its radius) so
    every perturbation stays feasible.
    """
    if not 1e-8 <= eps <= 1e-3:
        raise InvalidArgumentError(f"eps must lie in [1e-8, 1e-3], got {eps}")
    rng = as_seed(seed).generator()
    w, x, y, xp, yp = _sample_triples(loss, rng, int(trials), interior=0.9)
    g = loss._grad(w, x, y, xp, yp)
    fd = np.empty_like(g)
    for k in range(loss.dim):
        e = np.zeros(loss.dim)
        e[k] = eps
        fd[:, k] = (loss._value(w + e, x, y, xp, yp) - loss._value(w - e, x, y, xp, yp)) / (2 * eps)
    num = np.linalg.norm(fd - g, axis=1)
    den = np.maximum(np.maximum(np.linalg.norm(g, axis=1), np.linalg.norm(fd, axis=1)), 1e-8)
    return float(np.max(num / den))


@dataclass(frozen=True)
class ConstantEstimates:
    """Sampled envelopes ``(L_hat, beta_hat, gamma_hat)``."""

    L: float
    beta: float
    gamma: float

    def __iter__(self):
        return iter((self.L, self.beta, self.gamma))


def certify_constants(loss: PairwiseLoss, trials: int = 10_000, seed=0) -> ConstantEstimates:
    """Empirical Lipschitz, smoothness and strong-convexity constants on the domain.

    For each trial a pair ``(z, z')`` and two parameters ``w, w'`` in the
    domain are drawn; pairs closer than ``1e-5`` are discarded. Half of the
    ``w'`` draws are small perturbations of ``w`` to probe local curvature.
    """
    if trials < 100:
        raise InvalidArgumentError(f"trials must be >= 100, got {trials}")
    rng = as_seed(seed).generator()
    w, x, y, xp, yp = _sample_triples(loss, rng, int(trials))
    w2 = loss.sample_params(rng, int(trials))
    near = rng.random(trials) < 0.5
    step = 1e-3 * rng.standard_normal(w.shape)
    if loss.domain.kind == "psd_ball":
        k = loss.domain.side
        step = step.reshape(-1, k, k)
        step = 0.5 * (step + np.swapaxes(step, -1, -2))
        step = step.reshape(-1, k * k)
    w2 = np.where(near[:, None], project(w + step, loss.domain), w2)
    g1 = loss._grad(w, x, y, xp, yp)
    g2 = loss._grad(w2, x, y, xp, yp)
    dw = w - w2
    dist = np.linalg.norm(dw, axis=1)
    # tiny separations (a perturbation clipped by the projection) only amplify round-off
    keep = dist > 1e-5
    dg = (g1 - g2)[keep]
    dw = dw[keep]
    dist = dist[keep]
    L_hat = float(max(np.linalg.norm(g1, axis=1).max(), np.linalg.norm(g2, axis=1).max()))
    beta_hat = float(np.max(np.linalg.norm(dg, axis=1) / dist))
    gamma_hat = float(np.min(np.einsum("ij,ij->i", dg, dw) / dist**2))
    return ConstantEstimates(L_hat, beta_hat, gamma_hat)
