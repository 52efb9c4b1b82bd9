"""Two-point (Le Cam) constructions behind the minimax lower bounds.

Two label distributions ``P1`` and ``P2`` over four cells
``(X1, +1), (X1, -1), (X2, +1), (X2, -1)`` are paired with a label-dispatched
loss whose population minimisers sit at ``+delta`` and ``-delta``. Features
are realised by two fixed points ``(B1, 0, ...)`` and ``(-B1, 0, ...)`` so
every risk is available in closed form.

Two quantities are reported both as claimed by the construction's
derivation and as computed exactly, because they differ:

* ``claimed_excess_at_origin`` (convex kind) uses ``inf R_1 = 3 beta r^2 (s-1)/(8 s)``
  with ``s = sqrt(6 n)``; the exact infimum is ``beta r^2 (7q/8 - q^2/(8p))``.
* ``kl_closed_form`` is the divergence between the *label marginals*;
  ``kl_per_sample`` sums over all four cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Domain, as_seed, generate_dataset, project
from .errors import ConstructionError, InvalidArgumentError
from .losses import synthetic_convex_loss, synthetic_strongly_convex_loss

__all__ = [
    "TwoPointProblem",
    "TwoPointSource",
    "LecamReport",
    "LecamEmpirical",
    "CELLS",
    "build_problem",
    "exact_risks",
    "risk",
    "risk_grad",
    "excess_risk",
    "sample_dataset",
    "empirical_lecam",
    "kl_cells",
]

CELLS = ("X1,+1", "X1,-1", "X2,+1", "X2,-1")
NU_MAX = math.sqrt(6.0) / 2.0


@dataclass(frozen=True)
class TwoPointProblem:
    """A two-point construction.

    ``cell_probs_P1``/``cell_probs_P2`` follow the order of :data:`CELLS`.
    ``r0`` is the radius of the parameter ball, ``B1`` the feature scale.
    """

    kind: str
    beta: float
    r: float
    nu: float
    n: int
    d: int
    r0: float
    B1: float
    cell_probs_P1: np.ndarray
    cell_probs_P2: np.ndarray

    @property
    def s(self) -> float:
        return math.sqrt(6.0 * self.n)

    @property
    def p_plus(self) -> tuple:
        """``(P1(Z+), P2(Z+))`` from the cell table."""
        c1, c2 = self.cell_probs_P1, self.cell_probs_P2
        return float(c1[0] + c1[2]), float(c2[0] + c2[2])

    @property
    def delta(self) -> float:
        if self.kind == "convex":
            return self.r / 2 + self.r / (1 + self.s)
        return self.r / self.s

    @property
    def domain(self) -> Domain:
        return Domain.ball(self.r0)

    @property
    def loss(self):
        if self.kind == "convex":
            return synthetic_convex_loss(self.beta, self.r, max(self.n, 2), self.r0, self.d)
        return synthetic_strongly_convex_loss(self.beta, self.r, self.d, self.r0)

    @property
    def features(self) -> np.ndarray:
        """Representatives of ``X1`` and ``X2`` as rows."""
        x = np.zeros((2, self.d))
        x[0, 0], x[1, 0] = self.B1, -self.B1
        return x

    def source(self, which: int) -> "TwoPointSource":
        return TwoPointSource(self, which)


def _cell_table(n: int, nu: float):
    s = math.sqrt(6.0 * n)
    a, b = nu / s, (nu - 1.0) / s
    P1 = 0.5 * np.array([0.5 + a, 0.5 - a, 0.5 - b, 0.5 + b])
    P2 = 0.5 * np.array([0.5 - a, 0.5 + a, 0.5 + b, 0.5 - b])
    return P1, P2


def build_problem(kind: str, beta: float = 1.0, r: float = 1.0, nu: float = 1.1, n: int = 6, d: int = 1,
                  r0: float | None = None, B1: float = 1.0) -> TwoPointProblem:
    """Build and validate a two-point construction.

    ``kind`` is ``"convex"`` (Huber-type loss) or ``"strongly-convex"``
    (quadratic loss). ``r0`` defaults to ``2 r``; it must leave room for the
    witness point ``2 delta`` and satisfy ``r <= r0``.
    """
    if kind not in ("convex", "strongly-convex"):
        raise InvalidArgumentError(f"unknown construction kind {kind!r}")
    if not (beta > 0 and r > 0):
        raise InvalidArgumentError("beta and r must be positive")
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    if int(d) != d or d < 1:
        raise InvalidArgumentError(f"d must be a positive integer, got {d}")
    if not 1.0 < nu < NU_MAX:
        raise ConstructionError(f"nu must lie in (1, sqrt(6)/2) = (1, {NU_MAX:.6f}), got {nu}")
    r0 = 2.0 * r if r0 is None else float(r0)
    P1, P2 = _cell_table(int(n), float(nu))
    for name, P in (("P1", P1), ("P2", P2)):
        for cell, prob in zip(CELLS, 2 * P):
            # conditional label probabilities must lie strictly inside (0, 1)
            if not 0.0 < prob < 1.0:
                raise ConstructionError(f"{name} cell ({cell}) has conditional probability {prob:.6g} outside (0, 1)")
    prob = TwoPointProblem(kind, float(beta), float(r), float(nu), int(n), int(d), r0, float(B1), P1, P2)
    if r > r0:
        raise ConstructionError(f"r={r} exceeds half the domain diameter ({r0})")
    if 2 * prob.delta > r0 * (1 + 1e-12):
        raise ConstructionError(f"domain radius {r0} cannot hold the witness point 2*delta = {2 * prob.delta:.6g}")
    for P in (P1, P2):
        if not math.isclose(P.sum(), 1.0, abs_tol=1e-12):
            raise ConstructionError("cell probabilities do not sum to 1")
    return prob


# ---------------------------------------------------------------------------
# exact risks


def _mix(p: TwoPointProblem, which: int):
    """Weights ``(on f1, on f2)`` of the population risk under ``P_which``."""
    pp = p.p_plus[which - 1]
    return pp, 1.0 - pp


def risk(p: TwoPointProblem, which: int, w) -> np.ndarray:
    """Exact population risk ``R_which(w)``; broadcasts over leading axes of ``w``."""
    if which not in (1, 2):
        raise InvalidArgumentError(f"which must be 1 or 2, got {which}")
    a, b = _mix(p, which)
    loss = p.loss
    w = np.asarray(w, dtype=float)
    return a * loss.f1(w) + b * loss.f2(w)


def risk_grad(p: TwoPointProblem, which: int, w) -> np.ndarray:
    a, b = _mix(p, which)
    loss = p.loss
    w = np.asarray(w, dtype=float)
    one = np.ones(w.shape[:-1])
    # a (+,+) pair selects f1 alone and a (-,-) pair f2 alone
    g1 = loss._grad(w, None, one, None, one)
    g2 = loss._grad(w, None, -one, None, -one)
    return a * g1 + b * g2


def _minimizer(p: TwoPointProblem, which: int) -> np.ndarray:
    w = np.zeros(p.d)
    w[0] = p.delta if which == 1 else -p.delta
    return w


def excess_risk(p: TwoPointProblem, which: int, w) -> np.ndarray:
    """``R_which(w) - inf_Omega R_which``."""
    return risk(p, which, w) - float(risk(p, which, _minimizer(p, which)))


def kl_cells(P: np.ndarray, Q: np.ndarray) -> float:
    """``sum P log(P / Q)`` over cells."""
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    return float(np.sum(P * np.log(P / Q)))


@dataclass(frozen=True)
class LecamReport:
    """Closed-form quantities of a two-point construction.

    ``excess_at_origin`` and ``risk_at_min`` are exact; the ``claimed_*``
    fields carry the values asserted by the construction's derivation.
    ``lecam_lower_bound`` is the construction's bound
    (claimed witness excess times ``1/4``); ``lecam_bound_exact`` redoes the
    Le Cam step with the exact witness excess and the full four-cell KL.
    """

    delta: float
    w_star_1: np.ndarray
    w_star_2: np.ndarray
    risk_at_min: float
    excess_at_origin: float
    excess_at_witness: float
    claimed_risk_at_min: float
    claimed_excess_at_origin: float
    kl_per_sample: float
    kl_label_marginal: float
    kl_closed_form: float
    lecam_lower_bound: float
    lecam_bound_exact: float


def exact_risks(p: TwoPointProblem) -> LecamReport:
    """Minimisers, optimal risks, witness excesses and KL divergences."""
    w1, w2 = _minimizer(p, 1), _minimizer(p, 2)
    rmin = float(risk(p, 1, w1))
    r0 = float(risk(p, 1, np.zeros(p.d)))
    right = np.zeros(p.d)
    right[0] = 2 * p.delta
    ex0 = r0 - rmin
    ex_right = float(risk(p, 1, right)) - rmin
    s, beta, r = p.s, p.beta, p.r
    if p.kind == "convex":
        claimed_min = 3 * (s - 1) * beta * r**2 / (8 * s)
        claimed_ex = 3 * beta * r**2 / (8 * s)
    else:
        claimed_min = beta * r**2 / 2 * (1 - 1 / (6 * p.n))
        claimed_ex = beta * r**2 / (12 * p.n)
    kl_full = kl_cells(p.cell_probs_P1, p.cell_probs_P2)
    pp1, pp2 = p.p_plus
    kl_label = kl_cells([pp1, 1 - pp1], [pp2, 1 - pp2])
    kl_closed = (1 / s) * math.log((1 + 1 / s) / (1 - 1 / s))
    test_err = 0.5 * max(0.0, 1.0 - math.sqrt(p.n * kl_full / 2))
    return LecamReport(
        delta=p.delta,
        w_star_1=w1,
        w_star_2=w2,
        risk_at_min=rmin,
        excess_at_origin=ex0,
        excess_at_witness=min(ex0, ex_right),
        claimed_risk_at_min=claimed_min,
        claimed_excess_at_origin=claimed_ex,
        kl_per_sample=kl_full,
        kl_label_marginal=kl_label,
        kl_closed_form=kl_closed,
        lecam_lower_bound=claimed_ex / 4,
        lecam_bound_exact=min(ex0, ex_right) * test_err,
    )


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class TwoPointSource:
    """Data source drawing i.i.d. examples from ``P1`` (``which=1``) or ``P2``."""

    problem: TwoPointProblem
    which: int

    def __post_init__(self):
        if self.which not in (1, 2):
            raise InvalidArgumentError(f"which must be 1 or 2, got {self.which}")

    @property
    def bounds(self):
        return (self.problem.B1, 1.0)

    @property
    def cell_probs(self) -> np.ndarray:
        return self.problem.cell_probs_P1 if self.which == 1 else self.problem.cell_probs_P2

    def draw(self, rng: np.random.Generator, n: int):
        cells = rng.choice(4, size=n, p=self.cell_probs)
        X = self.problem.features[cells // 2]
        y = np.where(cells % 2 == 0, 1.0, -1.0)
        return X, y

    def exact_risk(self, w):
        return risk(self.problem, self.which, w)


def sample_dataset(p: TwoPointProblem, which: int, n: int, seed) -> Dataset:
    """``n`` i.i.d. examples from ``P_which``."""
    return generate_dataset(TwoPointSource(p, which), n, seed)


@dataclass(frozen=True)
class LecamEmpirical:
    """Mean excess risk of an estimator under each distribution."""

    mean: tuple
    se: tuple
    worst: float
    worst_se: float
    projected: int
    trials: int


def empirical_lecam(p: TwoPointProblem, estimator, trials: int = 100, seed=0) -> LecamEmpirical:
    """Average exact excess risk of ``estimator`` over samples of size ``p.n`` from each distribution.

    Outputs outside the domain are projected; ``projected`` counts them.
    """
    if trials < 100:
        raise InvalidArgumentError(f"trials must be >= 100, got {trials}")
    seed = as_seed(seed)
    means, ses = [], []
    projected = 0
    for which in (1, 2):
        vals = np.empty(trials)
        for k in range(trials):
            S = sample_dataset(p, which, max(p.n, 2), seed.derive(which, k))
            w = np.asarray(estimator(S), dtype=float).reshape(p.d)
            if not p.domain.contains(w):
                projected += 1
                w = project(w, p.domain)
            vals[k] = float(excess_risk(p, which, w))
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(trials)))
    i = int(np.argmax(means))
    return LecamEmpirical(tuple(means), tuple(ses), means[i], ses[i], projected, trials)
