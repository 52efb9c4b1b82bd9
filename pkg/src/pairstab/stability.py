"""Coupled-trajectory stability measurements.

Two SGD runs on neighbouring datasets ``S`` and ``S'`` consume the very same
index path, so their divergence ``delta_t = |w_t - w'_t|`` isolates the
effect of the one replaced example. Everything here is built on one
batched twin engine: the first half of the rows trains on ``S``, the second
half on ``S'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Estimate, Example, StepSchedule, as_seed, generate_dataset
from .errors import InsufficientSamplesError, InvalidArgumentError, PreconditionError
from .sgd import lemma_expansiveness, make_path, run_batch

__all__ = [
    "NeighborPair",
    "CoupledRun",
    "StabilityReport",
    "RecursionReport",
    "ConditionalStats",
    "make_neighbor",
    "coupled_run",
    "estimate_stability",
    "verify_recursion",
    "conditional_delta_stats",
]


@dataclass(frozen=True)
class NeighborPair:
    """Datasets ``S`` and ``S'`` that differ only at ``replaced_index`` (0-based)."""

    S: Dataset
    S_prime: Dataset
    replaced_index: int
    replacement: Example

    def swapped(self) -> "NeighborPair":
        return NeighborPair(self.S_prime, self.S, self.replaced_index, self.S[self.replaced_index])


def make_neighbor(S: Dataset, i: int, replacement: Example) -> NeighborPair:
    """Replace example ``i`` of ``S`` by ``replacement``."""
    if not (isinstance(i, (int, np.integer)) and 0 <= i < S.n):
        raise InvalidArgumentError(f"replaced index must be in [0, {S.n - 1}], got {i}")
    if replacement.x.shape != (S.d,):
        raise InvalidArgumentError(f"replacement has {replacement.x.shape[0]} features, dataset has {S.d}")
    if not replacement.within(*S.bounds):
        raise InvalidArgumentError("replacement violates the dataset bounds")
    return NeighborPair(S, S.replace(int(i), replacement), int(i), replacement)


# ---------------------------------------------------------------------------
# twin engine


@dataclass
class _TwinResult:
    last: np.ndarray        # (2B, p)
    average: np.ndarray     # (2B, p)
    delta: np.ndarray       # (B, T), delta[:, t-1] = delta_t


def _twin_runs(pairs, pair_of_row, paths, loss, s, projected) -> _TwinResult:
    """Run ``B`` coupled twins; row ``b`` uses ``pairs[pair_of_row[b]]`` and ``paths[b]``."""
    pair_of_row = np.asarray(pair_of_row)
    B, T = paths.shape
    SX = np.stack([p.S.X for p in pairs])
    SY = np.stack([p.S.y for p in pairs])
    PX = np.stack([p.S_prime.X for p in pairs])
    PY = np.stack([p.S_prime.y for p in pairs])
    X = np.concatenate([SX[pair_of_row], PX[pair_of_row]])
    Y = np.concatenate([SY[pair_of_row], PY[pair_of_row]])
    delta = np.zeros((B, T))

    def on_step(t, w):
        delta[:, t - 1] = np.linalg.norm(w[:B] - w[B:], axis=1)

    res = run_batch(X, Y, np.concatenate([paths, paths]), loss, s, projected=projected, on_step=on_step)
    return _TwinResult(res.last, res.average, delta)


def _loss_at(loss, W, probes):
    """``l(W[b], a_m, b_m)`` for every row and probe, shape ``(B, M)``."""
    Xa, ya, Xb, yb = probes
    return loss._value(W[:, None, :], Xa[None], ya[None], Xb[None], yb[None])


def _as_probes(probes):
    if probes is None:
        return None
    Xa, ya, Xb, yb = (np.asarray(a, dtype=float) for a in probes)
    return Xa.reshape(len(ya), -1), ya, Xb.reshape(len(yb), -1), yb


# ---------------------------------------------------------------------------
# single coupled run


@dataclass(frozen=True)
class CoupledRun:
    """Divergence and probe loss gaps of one pair of coupled runs.

    ``delta[t-1]`` is ``delta_t`` (so ``delta[0] == 0``). ``loss_gap_last``
    and ``loss_gap_avg`` hold ``l(A(S), z, z') - l(A(S'), z, z')`` per probe.
    """

    delta: np.ndarray
    loss_gap_last: np.ndarray
    loss_gap_avg: np.ndarray
    first_divergence_step: float
    path: object

    @property
    def delta_1(self) -> float:
        return float(self.delta[0])


def _first_divergence(delta_row) -> float:
    nz = np.flatnonzero(delta_row > 0)
    return float(nz[0] + 1) if nz.size else math.inf


def coupled_run(pair: NeighborPair, loss, s: StepSchedule, rule: str, T: int, seed, projected: bool = False,
                probes=None) -> CoupledRun:
    """Train on ``S`` and ``S'`` along one shared index path.

    Parameters
    ----------
    probes : tuple of arrays ``(Xa, ya, Xb, yb)``, optional
        Probe pairs ``((Xa[m], ya[m]), (Xb[m], yb[m]))`` at which the loss
        gap of both outputs is evaluated.
    """
    path = make_path(rule, pair.S.n, T, seed)
    res = _twin_runs([pair], [0], path.xi[None, :], loss, s, projected)
    probes = _as_probes(probes)
    if probes is None:
        gl = ga = np.zeros(0)
    else:
        gl = (_loss_at(loss, res.last[:1], probes) - _loss_at(loss, res.last[1:], probes))[0]
        ga = (_loss_at(loss, res.average[:1], probes) - _loss_at(loss, res.average[1:], probes))[0]
    return CoupledRun(res.delta[0], gl, ga, _first_divergence(res.delta[0]), path)


# ---------------------------------------------------------------------------
# stability estimation


@dataclass(frozen=True)
class StabilityReport:
    """Empirical stability of the last and average outputs.

    ``*_signed`` estimates take the worst one-sided expected loss gap over
    neighbour pairs (in both orderings) and probes; ``*_abs`` estimates use
    the expected absolute gap instead. Standard errors are replicate
    standard errors at the maximising (pair, probe). ``margin_*`` is
    ``bound - (estimate + 3 se)`` for the signed estimate.
    """

    epsilon_last_signed: Estimate
    epsilon_avg_signed: Estimate
    epsilon_last_abs: Estimate
    epsilon_avg_abs: Estimate
    replicates: int
    probe_pairs: int
    neighbor_pairs: int
    mean_delta: np.ndarray
    bound_last: float | None = None
    bound_avg: float | None = None

    @property
    def epsilon_hat_last(self) -> Estimate:
        return self.epsilon_last_signed

    @property
    def epsilon_hat_avg(self) -> Estimate:
        return self.epsilon_avg_signed

    @property
    def margin_last(self) -> float | None:
        return None if self.bound_last is None else self.bound_last - self.epsilon_last_signed.upper

    @property
    def margin_avg(self) -> float | None:
        return None if self.bound_avg is None else self.bound_avg - self.epsilon_avg_signed.upper


def _sup_gap(gaps: np.ndarray):
    """Signed and absolute sup estimates from gaps of shape ``(K, R, M)``."""
    R = gaps.shape[1]
    mean = gaps.mean(axis=1)
    sd = gaps.std(axis=1, ddof=1) if R > 1 else np.zeros_like(mean)
    # Both orderings of every neighbour pair are admissible, so the one-sided
    # sup over pairs is the largest |mean| over (pair, probe).
    k, m = np.unravel_index(np.argmax(np.abs(mean)), mean.shape)
    signed = Estimate(float(abs(mean[k, m])), float(sd[k, m] / math.sqrt(R)))
    absg = np.abs(gaps)
    amean = absg.mean(axis=1)
    asd = absg.std(axis=1, ddof=1) if R > 1 else np.zeros_like(amean)
    k, m = np.unravel_index(np.argmax(amean), amean.shape)
    absolute = Estimate(float(amean[k, m]), float(asd[k, m] / math.sqrt(R)))
    return signed, absolute


def draw_neighbors(source, n: int, K: int, seed) -> list:
    """``K`` neighbour pairs sharing one base sample drawn from ``source``.

    The replaced index is uniform and the replacement is a fresh draw.
    """
    seed = as_seed(seed)
    S = generate_dataset(source, n, seed.derive("base"))
    rng = seed.derive("neighbors").generator()
    idx = rng.integers(0, n, size=K)
    Xr, yr = source.draw(rng, K)
    return [make_neighbor(S, int(i), Example(Xr[k], yr[k])) for k, i in enumerate(idx)]


def draw_probes(source, M: int, seed):
    """``M`` probe pairs drawn i.i.d. from ``source x source``."""
    rng = as_seed(seed).generator()
    X, y = source.draw(rng, 2 * M)
    return X[:M], y[:M], X[M:], y[M:]


def _pooled_probes(pairs, M, seed):
    X = np.concatenate([np.concatenate([p.S.X, p.S_prime.X[[p.replaced_index]]]) for p in pairs])
    y = np.concatenate([np.concatenate([p.S.y, p.S_prime.y[[p.replaced_index]]]) for p in pairs])
    rng = as_seed(seed).generator()
    a = rng.integers(0, len(y), size=M)
    b = rng.integers(0, len(y), size=M)
    return X[a], y[a], X[b], y[b]


def estimate_stability(data, loss, s: StepSchedule, rule: str, T: int, replicates: int = 200, probes=100,
                       seed=0, *, n: int | None = None, neighbors: int = 8, projected: bool = False,
                       bound_last: float | None = None, bound_avg: float | None = None) -> StabilityReport:
    """Monte-Carlo estimate of the random uniform stability of pairwise SGD.

    Parameters
    ----------
    data : NeighborPair, sequence of NeighborPair, or data source
        A source (anything with ``draw(rng, n)`` and ``bounds``) yields
        ``neighbors`` pairs around one base sample of size ``n``.
    probes : int or tuple of arrays
        Number of probe pairs, or explicit ``(Xa, ya, Xb, yb)``. Counted
        probes come from the source when one is given, otherwise from the
        pooled examples of the supplied pairs.
    replicates : int
        Independent index paths per neighbour pair; only the algorithm's
        randomness varies across replicates.
    """
    seed = as_seed(seed)
    if replicates < 2:
        raise InvalidArgumentError(f"replicates must be >= 2, got {replicates}")
    source = None
    if isinstance(data, NeighborPair):
        pairs = [data]
    elif hasattr(data, "draw"):
        if n is None:
            raise InvalidArgumentError("n is required when sampling neighbour pairs from a source")
        source = data
        pairs = draw_neighbors(source, n, neighbors, seed.derive("neighbors"))
    else:
        pairs = list(data)
        if not pairs:
            raise InvalidArgumentError("no neighbour pairs given")
    if isinstance(probes, (int, np.integer)):
        M = int(probes)
        if M < 1:
            raise InvalidArgumentError(f"probes must be >= 1, got {M}")
        probe_arrays = (draw_probes(source, M, seed.derive("probes")) if source is not None
                        else _pooled_probes(pairs, M, seed.derive("probes")))
    else:
        probe_arrays = _as_probes(probes)
    M = len(probe_arrays[1])
    K, R = len(pairs), int(replicates)
    nn = pairs[0].S.n

    paths = np.stack([make_path(rule, nn, T, seed.derive("path", k, r)).xi for k in range(K) for r in range(R)])
    pair_of_row = np.repeat(np.arange(K), R)
    res = _twin_runs(pairs, pair_of_row, paths, loss, s, projected)
    B = K * R

    def gaps(W):
        return (_loss_at(loss, W[:B], probe_arrays) - _loss_at(loss, W[B:], probe_arrays)).reshape(K, R, M)

    last_s, last_a = _sup_gap(gaps(res.last))
    avg_s, avg_a = _sup_gap(gaps(res.average))
    return StabilityReport(last_s, avg_s, last_a, avg_a, R, M, K, res.delta.mean(axis=0), bound_last, bound_avg)


# ---------------------------------------------------------------------------
# recursion on E[delta_t]


@dataclass(frozen=True)
class RecursionReport:
    """Per-step check of ``E[delta_t] <= c_t E[delta_{t-1}] + 4 L alpha_{t-1} / n``.

    Arrays are indexed by ``t = 2..T`` (entry ``t - 2``). ``residual`` is
    right-hand side minus left-hand side, computed replicate-wise so its
    standard error accounts for the pairing.
    """

    t: np.ndarray
    mean_delta: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    residual_se: np.ndarray
    eta: np.ndarray
    replicates: int

    @property
    def holds(self) -> bool:
        return bool(np.all(self.residual >= -3.0 * self.residual_se))

    @property
    def worst_z(self) -> float:
        """Most negative ``residual / se`` (``inf`` when every residual is exactly non-negative)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.residual_se > 0, self.residual / self.residual_se,
                         np.where(self.residual >= 0, np.inf, -np.inf))
        return float(z.min())


def _eta(loss, alpha, claim):
    options = lemma_expansiveness(loss, alpha)
    if claim == "auto":
        for key in ("c", "b", "a"):
            if key in options:
                return options[key]
    if claim not in options:
        m = loss.meta
        need = {"b": f"convex loss with alpha <= 2/beta = {2 / m.beta:.6g}",
                "c": f"gamma > 0 with alpha <= 2/(beta+gamma) = {2 / (m.beta + m.gamma) if m.gamma else 0:.6g}"}
        raise PreconditionError(f"expansiveness claim {claim!r} needs {need.get(claim, claim)}; got alpha={alpha:.6g}")
    return options[claim]


def verify_recursion(pair: NeighborPair, loss, s: StepSchedule, rule: str, T: int, replicates: int = 2000,
                     seed=0, projected: bool = False, claim: str = "auto") -> RecursionReport:
    """Compare Monte-Carlo ``E[delta_t]`` with the one-step recursion.

    ``claim`` selects the expansiveness factor: ``"a"`` (any smooth loss),
    ``"b"`` (convex, ``alpha <= 2/beta``), ``"c"`` (strongly convex,
    ``alpha <= 2/(beta+gamma)``) or ``"auto"`` (tightest valid one).
    """
    if claim not in ("auto", "a", "b", "c"):
        raise InvalidArgumentError(f"unknown expansiveness claim {claim!r}")
    seed = as_seed(seed)
    n = pair.S.n
    alphas = s.values(T)
    eta = np.array([_eta(loss, alphas[t - 2], claim) for t in range(2, T + 1)])
    coef = (1.0 / n) * np.minimum(eta, 1.0) + (1.0 - 1.0 / n) * eta
    paths = np.stack([make_path(rule, n, T, seed.derive("path", r)).xi for r in range(replicates)])
    d = _twin_runs([pair], np.zeros(replicates, dtype=int), paths, loss, s, projected).delta
    add = 4.0 * loss.meta.L * alphas[:-1] / n
    per_rep = coef[None, :] * d[:, :-1] + add[None, :] - d[:, 1:]
    R = replicates
    return RecursionReport(
        t=np.arange(2, T + 1),
        mean_delta=d[:, 1:].mean(axis=0),
        rhs=coef * d[:, :-1].mean(axis=0) + add,
        residual=per_rep.mean(axis=0),
        residual_se=per_rep.std(axis=0, ddof=1) / math.sqrt(R),
        eta=eta,
        replicates=R,
    )


# ---------------------------------------------------------------------------
# conditioning on late divergence


@dataclass(frozen=True)
class ConditionalStats:
    """Divergence statistics conditioned on ``delta_{t0} = 0``."""

    t0: int
    p_nonzero: Estimate
    bound: float
    cond_mean_delta_T: Estimate
    survivors: int
    replicates: int

    @property
    def holds(self) -> bool:
        return self.p_nonzero.value <= self.bound + 3.0 * self.p_nonzero.se


def conditional_delta_stats(pair: NeighborPair, loss, s: StepSchedule, rule: str, T: int, t0: int,
                            replicates: int = 2000, seed=0, projected: bool = False,
                            min_survivors: int = 30) -> ConditionalStats:
    """Estimate ``P{delta_{t0} != 0}`` (compared with ``t0/n``) and ``E[delta_T | delta_{t0} = 0]``.

    Raises :class:`InsufficientSamplesError` when fewer than
    ``min_survivors`` replicates satisfy ``delta_{t0} = 0``.
    """
    n = pair.S.n
    if not 2 <= t0 <= min(n, T):
        raise InvalidArgumentError(f"t0 must satisfy 2 <= t0 <= min(n, T) = {min(n, T)}, got {t0}")
    seed = as_seed(seed)
    paths = np.stack([make_path(rule, n, T, seed.derive("path", r)).xi for r in range(replicates)])
    d = _twin_runs([pair], np.zeros(replicates, dtype=int), paths, loss, s, projected).delta
    nz = d[:, t0 - 1] != 0
    p = float(nz.mean())
    p_se = float(nz.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    surv = d[~nz, T - 1]
    if surv.size < max(1, min_survivors):
        raise InsufficientSamplesError(f"only {surv.size} replicates have delta_{t0} = 0; need {min_survivors}")
    cse = float(surv.std(ddof=1) / math.sqrt(surv.size)) if surv.size > 1 else 0.0
    return ConditionalStats(t0, Estimate(p, p_se), t0 / n, Estimate(float(surv.mean()), cse), int(surv.size),
                            replicates)
