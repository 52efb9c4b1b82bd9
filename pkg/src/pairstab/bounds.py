"""Closed-form stability upper bounds, minimax and optimisation-error lower bounds.

Each evaluator checks the step-size regime its bound was proved under and
raises :class:`PreconditionError` naming the violated inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import StepSchedule
from .errors import InvalidArgumentError, PreconditionError

__all__ = [
    "BoundParams",
    "TradeoffResult",
    "ceil_ratio",
    "stability_bound",
    "minimax_lower_bound",
    "opt_error_lower_bound",
    "opt_error_threshold",
    "tradeoff_audit",
    "STABILITY_KINDS",
    "OPT_KINDS",
]

STABILITY_KINDS = (
    "convex-last",
    "convex-avg",
    "sconvex-const-last",
    "sconvex-const-avg",
    "sconvex-staircase-last",
    "nonconvex-last",
)
OPT_KINDS = ("convex-rate", "sconvex-const", "sconvex-staircase")

# relative slack when comparing a step size with its regime ceiling
_REGIME_RTOL = 1e-12


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the bounds.

    ``omega_diam`` is the domain diameter ``|Omega|``. ``c`` is the
    step-size constant used by the non-convex bound (``alpha_t <= c/t``); for
    power and horizon schedules it defaults to the schedule's own ``c``.
    """

    n: int
    T: int
    schedule: StepSchedule
    L: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    rho: float = math.inf
    b: float = 0.0
    omega_diam: float = 0.0
    c: float | None = None
    a: float | None = None

    @classmethod
    def from_loss(cls, loss, n: int, T: int, schedule: StepSchedule, **kw) -> "BoundParams":
        m = loss.meta
        return cls(n=n, T=T, schedule=schedule, L=m.L, beta=m.beta, gamma=m.gamma, rho=m.rho, b=m.b,
                   omega_diam=loss.domain.diameter, **kw)


def ceil_ratio(beta: float, gamma: float) -> int:
    """``ceil(beta / gamma)`` with a ``1e-12`` downward nudge against round-off at integers."""
    return max(1, math.ceil(beta / gamma - 1e-12))


def _need(cond: bool, msg: str):
    if not cond:
        raise PreconditionError(msg)


def _alphas(p: BoundParams, upto: int) -> np.ndarray:
    return p.schedule.values(upto) if upto > 0 else np.zeros(0)


def _check_common(p: BoundParams):
    _need(p.n >= 2, f"n >= 2 required, got n={p.n}")
    _need(p.T >= 2, f"T >= 2 required, got T={p.T}")
    _need(p.L > 0 and p.beta > 0, "L > 0 and beta > 0 required")


def _check_max_step(alphas, ceiling, label):
    if alphas.size:
        worst = float(alphas.max())
        _need(worst <= ceiling * (1 + _REGIME_RTOL), f"alpha_t <= {label} = {ceiling:.6g} violated (max alpha_t = {worst:.6g})")


def stability_bound(kind: str, p: BoundParams) -> float:
    """Upper bound on the random uniform stability of pairwise SGD.

    kind
        ``convex-last``/``convex-avg``: convex loss, ``alpha_t <= 2/beta``.
        ``sconvex-const-last``/``-avg``: constant ``alpha <= 2/(beta+gamma)``.
        ``sconvex-staircase-last``: ``alpha_t = 2/(gamma t)`` and
        ``T >= ceil(beta/gamma) + 1``.
        ``nonconvex-last``: loss valued in ``[0, 1]``, ``alpha_t <= c/t``.
    """
    _check_common(p)
    n, T, L = p.n, p.T, p.L
    if kind in ("convex-last", "convex-avg"):
        a = _alphas(p, T - 1)
        _check_max_step(a, 2.0 / p.beta, "2/beta")
        if kind == "convex-last":
            return 4.0 * L**2 / n * float(a.sum())
        # sum_{t=2}^T sum_{j<t} alpha_j
        return 4.0 * L**2 / (T * n) * float(np.cumsum(a).sum())
    if kind in ("sconvex-const-last", "sconvex-const-avg"):
        _need(p.gamma > 0, "gamma > 0 required for strongly convex bounds")
        _need(p.schedule.is_constant, "constant step size required")
        alpha = p.schedule(1)
        _check_max_step(np.array([alpha]), 2.0 / (p.beta + p.gamma), "2/(beta+gamma)")
        q = 1.0 - alpha * p.gamma / 2.0
        cap = 8.0 * L**2 / (p.gamma * n)
        if kind == "sconvex-const-last":
            return cap * -math.expm1((T - 1) * math.log(q))
        k = np.arange(1, T)
        return cap / T * float(np.sum(-np.expm1(k * math.log(q))))
    if kind == "sconvex-staircase-last":
        _need(p.gamma > 0, "gamma > 0 required for strongly convex bounds")
        s = p.schedule
        _need(s.kind == "staircase" and math.isclose(s.gamma, p.gamma, rel_tol=1e-12),
              f"staircase schedule alpha_t = 2/(gamma t) with gamma={p.gamma} required")
        k = ceil_ratio(p.beta, p.gamma)
        _need(T >= k + 1, f"T >= ceil(beta/gamma) + 1 = {k + 1} required, got T={T}")
        _need(k + 1 <= n, f"ceil(beta/gamma) + 1 = {k + 1} must not exceed n={n}")
        _need(math.isfinite(p.rho), "finite rho required")
        return 8.0 * L**2 / (p.gamma * n) * (1.0 - k / (T - 1)) + p.rho / n * (1 + k)
    if kind == "nonconvex-last":
        c = _step_constant(p)
        _need(p.rho <= 1.0, f"loss must take values in [0, 1] (rho={p.rho})")
        t = np.arange(1, T + 1, dtype=float)
        _check_max_step(_alphas(p, T) * t, c, "c/t (scaled by t)")
        bc = p.beta * c
        return (1 + 1 / bc) / (n - 1) * (4 * c * L**2) ** (1 / (1 + bc)) * (T - 1) ** (bc / (1 + bc))
    raise InvalidArgumentError(f"unknown stability bound kind {kind!r}; choose from {STABILITY_KINDS}")


def _step_constant(p: BoundParams) -> float:
    if p.c is not None:
        return float(p.c)
    if p.schedule.kind in ("power", "horizon", "constant"):
        return p.schedule.c
    raise PreconditionError("step constant c must be given for this schedule")


def minimax_lower_bound(kind: str, beta: float, omega_diam: float, n: int) -> float:
    """Worst-case excess risk no estimator can beat on the two-point constructions.

    ``convex``: ``3 beta |Omega|^2 / (128 sqrt(6 n))``;
    ``strongly-convex``: ``beta |Omega|^2 / (32 n)``.
    """
    if not (beta > 0 and omega_diam > 0 and n >= 1):
        raise InvalidArgumentError("beta, omega_diam must be positive and n >= 1")
    if kind == "convex":
        return 3.0 * beta * omega_diam**2 / (128.0 * math.sqrt(6.0 * n))
    if kind == "strongly-convex":
        return beta * omega_diam**2 / (32.0 * n)
    raise InvalidArgumentError(f"unknown minimax kind {kind!r}")


def _opt_lipschitz(p: BoundParams) -> float:
    _need(p.omega_diam > 0, "finite domain diameter required")
    return p.omega_diam * p.beta + p.b


def _convex_rate_constants(p: BoundParams):
    """``(C1, tau0, a)`` for the convex optimisation-error rate."""
    s = p.schedule
    _need(p.beta > 0, "beta > 0 required")
    if s.kind == "horizon":
        a, c = s.a, s.c
        _need(s.horizon_T == p.T, f"horizon schedule built for T={s.horizon_T}, bound requested at T={p.T}")
        _need(c / p.T**a <= 2.0 / p.beta * (1 + _REGIME_RTOL), f"alpha = c/T^a <= 2/beta = {2 / p.beta:.6g} violated")
        c_eff = c
    elif s.kind == "power":
        a, c = s.a, s.c
        _need(0 < a < 1, f"0 < a < 1 required for decaying steps, got a={a}")
        _need(c <= 2.0 / p.beta * (1 + _REGIME_RTOL), f"c <= 2/beta = {2 / p.beta:.6g} violated")
        c_eff = c / (1 - a)
    else:
        raise PreconditionError("convex-rate needs a horizon (c/T^a) or power (c/t^a) schedule")
    L = _opt_lipschitz(p)
    D = p.omega_diam
    C1 = 9 * p.beta**2 * D**4 / (4194304 * c_eff * L**2)
    tau0 = (3 * p.beta * D**2 / (2048 * math.sqrt(6) * c_eff * L**2)) ** (1 / (1 - a))
    return C1, tau0, a


def opt_error_threshold(p: BoundParams) -> float:
    """Smallest ``T`` from which the convex optimisation-error rate is proved."""
    return _convex_rate_constants(p)[1]


def opt_error_lower_bound(kind: str, p: BoundParams) -> float:
    """Lower bound on the optimisation error of the averaged projected-SGD output.

    The Lipschitz constant is taken as ``|Omega| beta + b``. Kinds:
    ``convex-rate`` (``C1 / T^(1-a)``, valid for ``T >= tau0``),
    ``sconvex-const`` and ``sconvex-staircase`` (each with its offset).
    """
    if kind == "convex-rate":
        C1, tau0, a = _convex_rate_constants(p)
        _need(p.T >= tau0, f"T >= tau0 = {tau0:.6g} required, got T={p.T}")
        return C1 / p.T ** (1 - a)
    _need(p.gamma > 0 and p.n >= 1, "gamma > 0 and n >= 1 required")
    L = _opt_lipschitz(p)
    D, beta, gamma, n, T = p.omega_diam, p.beta, p.gamma, p.n, p.T
    if kind == "sconvex-const":
        _need(p.schedule.is_constant, "constant step size required")
        alpha = p.schedule(1)
        _need(alpha <= 2.0 / (beta + gamma) * (1 + _REGIME_RTOL), f"alpha <= 2/(beta+gamma) = {2 / (beta + gamma):.6g} violated")
        C = (16 * L**2 / gamma - beta * D**2 / 32) / n
        return 16 * L**2 / (gamma * n) * (1 - alpha * gamma / 2) ** (T - 1) - C
    if kind == "sconvex-staircase":
        s = p.schedule
        _need(s.kind == "staircase" and math.isclose(s.gamma, gamma, rel_tol=1e-12),
              f"staircase schedule alpha_t = 2/(gamma t) with gamma={gamma} required")
        _need(T >= 1, "T >= 1 required")
        C = (2 * (beta * D**2 + p.b * D) / n * (beta / gamma + 3) - beta * D**2 / (32 * n)
             + 16 * L**2 / (n * gamma) * math.log(beta / gamma + 3))
        return 16 * L**2 * (beta + gamma) / (gamma**2 * n) * math.log(T) / T - C
    raise InvalidArgumentError(f"unknown optimisation bound kind {kind!r}; choose from {OPT_KINDS}")


@dataclass(frozen=True)
class TradeoffResult:
    holds: bool
    slack: float


def tradeoff_audit(stab: float, opt: float, minimax: float, tol: float = 0.0) -> TradeoffResult:
    """Check ``2 stab + opt >= minimax - tol``; ``slack = 2 stab + opt - minimax``."""
    slack = 2.0 * stab + opt - minimax
    return TradeoffResult(bool(slack >= -tol), float(slack))
