"""Empirical and population risks, batch minimisers and the excess-risk decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Estimate, as_seed, project
from .errors import InvalidArgumentError

__all__ = [
    "empirical_risk",
    "empirical_risk_grad",
    "population_risk",
    "empirical_minimizer",
    "population_minimizer",
    "MinimizerResult",
    "RiskReport",
    "decompose",
]


def _pairs(n: int):
    return np.triu_indices(n, k=1)


def empirical_risk(w, data: Dataset, loss) -> float:
    """``2 / (n (n-1)) * sum_{i<j} l(w, z_i, z_j)``, summed in ascending ``(i, j)`` order."""
    w = np.asarray(w, dtype=float)
    i, j = _pairs(data.n)
    vals = loss._value(w[..., None, :], data.X[i], data.y[i], data.X[j], data.y[j])
    vals = np.broadcast_to(vals, w.shape[:-1] + (len(i),))
    out = vals.sum(axis=-1) * (2.0 / (data.n * (data.n - 1)))
    return float(out) if out.ndim == 0 else out


def empirical_risk_grad(w, data: Dataset, loss) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    i, j = _pairs(data.n)
    G = loss._grad(w[..., None, :], data.X[i], data.y[i], data.X[j], data.y[j])
    G = np.broadcast_to(G, w.shape[:-1] + (len(i), w.shape[-1]))
    return G.mean(axis=-2)


def _exact_risk_fn(dist, loss):
    """Closed-form risk when ``dist`` is a two-point source paired with its own loss."""
    problem = getattr(dist, "problem", None)
    if problem is None:
        return None
    ref = problem.loss
    if type(ref) is type(loss) and ref.beta == loss.beta and ref.r == loss.r:
        return dist.exact_risk
    return None


def population_risk(w, dist, loss, mc_samples: int = 10_000, seed=0) -> Estimate:
    """``E_{(z, z') ~ D x D} l(w, z, z')``.

    Exact (standard error 0) for two-point sources evaluated with their own
    loss; otherwise a Monte-Carlo mean over ``mc_samples`` independent pairs.
    """
    exact = _exact_risk_fn(dist, loss)
    if exact is not None:
        return Estimate(float(exact(np.asarray(w, dtype=float))), 0.0)
    if mc_samples < 1000:
        raise InvalidArgumentError(f"mc_samples must be >= 1000, got {mc_samples}")
    rng = as_seed(seed).generator()
    X, y = dist.draw(rng, 2 * mc_samples)
    m = mc_samples
    vals = np.broadcast_to(loss._value(np.asarray(w, float), X[:m], y[:m], X[m:], y[m:]), (m,))
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m)))


@dataclass(frozen=True)
class MinimizerResult:
    """Output of projected gradient descent.

    ``grad_norm`` is the norm of the gradient mapping
    ``beta * (w - P(w - grad / beta))``, which vanishes exactly at
    constrained minimisers.
    """

    w: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    iterations: int


def _projected_gd(w0, value_fn, grad_fn, dom, beta, tol, max_iters):
    w = np.array(w0, dtype=float)
    gm = math.inf
    for k in range(1, max_iters + 1):
        w_next = project(w - grad_fn(w) / beta, dom)
        gm = beta * float(np.linalg.norm(w - w_next))
        w = w_next
        if gm <= tol:
            return MinimizerResult(w, float(value_fn(w)), gm, True, k)
    return MinimizerResult(w, float(value_fn(w)), gm, False, max_iters)


def empirical_minimizer(data: Dataset, loss, tol: float = 1e-10, max_iters: int = 10_000, w0=None) -> MinimizerResult:
    """Projected full-batch gradient descent on the empirical risk with step ``1/beta``.

    Never fails silently: if ``max_iters`` is reached the last iterate is
    returned with ``converged=False``.
    """
    if tol < 1e-12:
        raise InvalidArgumentError(f"tol must be >= 1e-12, got {tol}")
    w0 = np.zeros(loss.dim) if w0 is None else w0
    return _projected_gd(w0, lambda w: empirical_risk(w, data, loss), lambda w: empirical_risk_grad(w, data, loss),
                         loss.domain, loss.meta.beta, tol, max_iters)


def population_minimizer(dist, loss, samples: int = 100_000, restarts: int = 16, seed=0, tol: float = 1e-8,
                         max_iters: int = 500) -> MinimizerResult:
    """Minimiser of the population risk.

    Two-point sources return their closed-form minimiser. Otherwise the
    best of ``restarts`` projected-GD runs on a frozen Monte-Carlo surrogate
    built from ``samples`` pairs.
    """
    problem = getattr(dist, "problem", None)
    if problem is not None and _exact_risk_fn(dist, loss) is not None:
        from .minimax import risk

        w = np.zeros(problem.d)
        w[0] = problem.delta if dist.which == 1 else -problem.delta
        return MinimizerResult(w, float(risk(problem, dist.which, w)), 0.0, True, 0)
    seed = as_seed(seed)
    X, y = dist.draw(seed.derive("surrogate").generator(), 2 * samples)
    m = samples
    Xa, ya, Xb, yb = X[:m], y[:m], X[m:], y[m:]

    def value(w):
        return float(np.mean(loss._value(w, Xa, ya, Xb, yb)))

    def grad(w):
        return np.broadcast_to(loss._grad(w, Xa, ya, Xb, yb), (m, loss.dim)).mean(axis=0)

    starts = loss.sample_params(seed.derive("restarts").generator(), restarts)
    starts[0] = 0.0
    best = None
    for w0 in starts:
        res = _projected_gd(w0, value, grad, loss.domain, loss.meta.beta, tol, max_iters)
        if best is None or res.value < best.value:
            best = res
    return best


@dataclass(frozen=True)
class RiskReport:
    """Risk decomposition at one parameter.

    ``gen_gap = population - empirical``; ``opt_error = empirical - R_S(w*_S)``;
    ``excess = population - R(w*)``.
    """

    empirical: float
    population: Estimate
    gen_gap: float
    opt_error: float
    excess: float
    empirical_min: float
    population_min: float
    solver_converged: bool


def decompose(w, data: Dataset, dist, loss, mc_samples: int = 10_000, seed=0, empirical_opt=None,
              population_opt=None) -> RiskReport:
    """Split the excess risk of ``w`` into generalisation and optimisation parts.

    Pre-computed minimiser results may be passed to avoid re-solving.
    """
    seed = as_seed(seed)
    emp = empirical_risk(w, data, loss)
    pop = population_risk(w, dist, loss, mc_samples, seed.derive("pop"))
    emin = empirical_opt or empirical_minimizer(data, loss)
    pmin = population_opt or population_minimizer(dist, loss, seed=seed.derive("popmin"))
    pstar = population_risk(pmin.w, dist, loss, mc_samples, seed.derive("pop"))
    return RiskReport(
        empirical=emp,
        population=pop,
        gen_gap=pop.value - emp,
        opt_error=emp - emin.value,
        excess=pop.value - pstar.value,
        empirical_min=emin.value,
        population_min=pstar.value,
        solver_converged=emin.converged,
    )
