"""Pairwise SGD.

At step ``t >= 2`` the fresh example ``z_{xi_t}`` is paired with every
previously visited example::

    w_t = w_{t-1} - alpha_{t-1} / (t-1) * sum_{j<t} grad l(w_{t-1}, z_{xi_t}, z_{xi_j})

starting from ``w_1 = 0``, optionally followed by projection onto the loss
domain. Example indices are 0-based; step indices ``t`` are 1-based.

Two implementations share this contract. :func:`sgd_step` is the literal
``O(t)`` sum used by :func:`run`. :func:`run_batch` advances many
trajectories at once and replaces the sum over visited positions by a sum
over distinct examples weighted by visit counts, which is the same sum
regrouped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, Domain, StepSchedule, as_seed, project
from .errors import InvalidArgumentError, NumericalOverflowError

__all__ = [
    "IndexPath",
    "Trajectory",
    "BatchResult",
    "make_path",
    "sgd_step",
    "run",
    "run_batch",
    "expansiveness_probe",
    "normalize_rule",
]

_RULES = {
    "permutation": "permutation",
    "random-permutation": "permutation",
    "selection": "selection",
    "random-selection": "selection",
}


def normalize_rule(rule: str) -> str:
    try:
        return _RULES[rule]
    except KeyError:
        raise InvalidArgumentError(f"unknown sampling rule {rule!r}; use 'permutation' or 'selection'") from None


@dataclass(frozen=True)
class IndexPath:
    """Visiting order ``xi_1..xi_T`` (0-based example indices)."""

    xi: np.ndarray
    rule: str
    n: int
    seed: object = None

    @property
    def T(self) -> int:
        return len(self.xi)


def _draw_path(rng: np.random.Generator, rule: str, n: int, T: int) -> np.ndarray:
    if rule == "selection":
        return rng.integers(0, n, size=T)
    blocks = -(-T // n)
    return np.concatenate([rng.permutation(n) for _ in range(blocks)])[:T]


def make_path(rule: str, n: int, T: int, seed) -> IndexPath:
    """Index path for either sampling rule; depends only on ``(rule, n, T, seed)``.

    ``permutation`` visits fresh uniform permutations back to back;
    ``selection`` draws each index uniformly and independently.
    """
    rule = normalize_rule(rule)
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    if T < 2:
        raise InvalidArgumentError(f"T must be >= 2, got {T}")
    seed = as_seed(seed)
    xi = _draw_path(seed.generator(), rule, int(n), int(T)).astype(np.int64)
    xi.setflags(write=False)
    return IndexPath(xi, rule, int(n), seed)


def _raise_overflow(t, w_prev, bad_rows=None):
    w_prev = np.atleast_2d(w_prev)
    row = 0 if bad_rows is None else int(np.flatnonzero(bad_rows)[0])
    raise NumericalOverflowError(t, float(np.linalg.norm(w_prev[row])))


def sgd_step(w, t: int, data: Dataset, path: IndexPath, loss, s: StepSchedule, projected: bool = False):
    """One pairwise SGD update producing ``w_t`` from ``w_{t-1}``.

    Averages the gradients of ``(z_{xi_t}, z_{xi_j})`` over all ``j < t``
    and applies step size ``alpha_{t-1}``.
    """
    if not 2 <= t <= path.T:
        raise InvalidArgumentError(f"step index must satisfy 2 <= t <= {path.T}, got {t}")
    w = np.asarray(w, dtype=float)
    new = path.xi[t - 1]
    prev = path.xi[: t - 1]
    with np.errstate(all="ignore"):
        grads = loss._grad(w[None, :], data.X[new][None, :], data.y[new], data.X[prev], data.y[prev])
        g = np.broadcast_to(grads, (t - 1, w.shape[-1])).sum(axis=0) / (t - 1)
        w_new = w - s(t - 1) * g
    if not np.all(np.isfinite(w_new)):
        _raise_overflow(t, w)
    return project(w_new, loss.domain) if projected else w_new


@dataclass(frozen=True)
class Trajectory:
    """Result of one SGD run.

    ``last`` is ``w_T``; ``average`` is ``(1/T) sum_{t=1}^T w_t`` including
    ``w_1 = 0``. ``iterates`` holds ``w_1..w_T`` row-wise when requested.
    """

    last: np.ndarray
    average: np.ndarray
    path: IndexPath
    schedule: StepSchedule
    projected: bool
    iterates: np.ndarray | None = None
    approximate: bool = False


def run(data: Dataset, loss, s: StepSchedule, rule: str, T: int, seed, projected: bool = False,
        store_full: bool = False, reservoir: int | None = None) -> Trajectory:
    """Run pairwise SGD from ``w_1 = 0`` for ``T`` steps.

    Parameters
    ----------
    reservoir : int, optional
        Speed-only approximation: pair the fresh example with ``reservoir``
        uniformly chosen earlier positions instead of all of them. The
        result is flagged ``approximate`` and is never used by the
        stability or bound experiments.
    """
    path = make_path(rule, data.n, T, seed)
    w = np.zeros(loss.dim)
    total = w.copy()
    its = [w.copy()] if store_full else None
    if reservoir is not None:
        if reservoir < 1:
            raise InvalidArgumentError(f"reservoir size must be >= 1, got {reservoir}")
        rrng = as_seed(seed).derive("reservoir").generator()
    for t in range(2, T + 1):
        if reservoir is None or t - 1 <= reservoir:
            w = sgd_step(w, t, data, path, loss, s, projected)
        else:
            w = _reservoir_step(w, t, data, path, loss, s, projected, rrng.choice(t - 1, reservoir, replace=False))
        total += w
        if store_full:
            its.append(w.copy())
    return Trajectory(
        last=w,
        average=total / T,
        path=path,
        schedule=s,
        projected=projected,
        iterates=np.stack(its) if store_full else None,
        approximate=reservoir is not None and T - 1 > reservoir,
    )


def _reservoir_step(w, t, data, path, loss, s, projected, positions):
    new = path.xi[t - 1]
    prev = path.xi[positions]
    with np.errstate(all="ignore"):
        g = loss._grad(w[None, :], data.X[new][None, :], data.y[new], data.X[prev], data.y[prev]).mean(axis=0)
        w_new = w - s(t - 1) * g
    if not np.all(np.isfinite(w_new)):
        _raise_overflow(t, w)
    return project(w_new, loss.domain) if projected else w_new


# ---------------------------------------------------------------------------
# batched engine


@dataclass(frozen=True)
class BatchResult:
    last: np.ndarray
    average: np.ndarray
    iterates: np.ndarray | None = None


def _weighted_grad(loss, w, x_new, y_new, X, Y, weights):
    """``sum_k weights[b, k] * grad l(w[b], z_new[b], z_k)`` for every row ``b``."""
    G = loss._grad(w[:, None, :], x_new[:, None, :], y_new[:, None], X, Y)
    G = np.broadcast_to(G, weights.shape + (w.shape[-1],))
    return np.einsum("bn,bnp->bp", weights, G)


def run_batch(X, Y, paths, loss, s: StepSchedule, projected: bool = False, on_step=None,
              store_full: bool = False) -> BatchResult:
    """Advance ``B`` independent trajectories in lock-step.

    Parameters
    ----------
    X : array, shape (B, n, d) or (n, d)
        Features per trajectory (a shared dataset may be passed unbatched).
    Y : array, shape (B, n) or (n,)
    paths : int array, shape (B, T)
        0-based index paths.
    on_step : callable, optional
        Called as ``on_step(t, w)`` with the ``(B, p)`` iterate ``w_t`` for
        every ``t = 1..T``.
    """
    paths = np.asarray(paths, dtype=np.int64)
    B, T = paths.shape
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 2:
        X = np.broadcast_to(X, (B,) + X.shape)
        Y = np.broadcast_to(Y, (B,) + Y.shape)
    n = X.shape[1]
    rows = np.arange(B)
    alphas = s.values(T)
    w = np.zeros((B, loss.dim))
    total = np.zeros_like(w)
    counts = np.zeros((B, n))
    its = [w.copy()] if store_full else None
    if on_step is not None:
        on_step(1, w)
    for t in range(2, T + 1):
        counts[rows, paths[:, t - 2]] += 1.0
        new = paths[:, t - 1]
        with np.errstate(all="ignore"):
            g = _weighted_grad(loss, w, X[rows, new], Y[rows, new], X, Y, counts)
            w_new = w - (alphas[t - 2] / (t - 1)) * g
        bad = ~np.all(np.isfinite(w_new), axis=1)
        if bad.any():
            _raise_overflow(t, w, bad)
        w = project(w_new, loss.domain) if projected else w_new
        total += w
        if store_full:
            its.append(w.copy())
        if on_step is not None:
            on_step(t, w)
    return BatchResult(w, total / T, np.stack(its, axis=1) if store_full else None)


# ---------------------------------------------------------------------------
# expansiveness


def expansiveness_probe(data: Dataset, loss, s: StepSchedule, t: int, path: IndexPath, trials: int = 1000,
                        seed=0) -> float:
    """Largest sampled ratio ``|G_t(u) - G_t(v)| / |u - v|`` of the unprojected update.

    ``u`` and ``v`` are drawn from the loss domain; half of the ``v`` draws
    are small perturbations of ``u`` so local curvature is probed as well.
    """
    if trials < 100:
        raise InvalidArgumentError(f"trials must be >= 100, got {trials}")
    if not 2 <= t <= path.T:
        raise InvalidArgumentError(f"step index must satisfy 2 <= t <= {path.T}, got {t}")
    rng = as_seed(seed).generator()
    u = loss.sample_params(rng, trials)
    v = loss.sample_params(rng, trials)
    near = rng.random(trials) < 0.5
    eps = 1e-4 * rng.standard_normal(u.shape)
    if loss.domain.kind == "psd_ball":
        k = loss.domain.side
        eps = eps.reshape(-1, k, k)
        eps = (0.5 * (eps + np.swapaxes(eps, -1, -2))).reshape(-1, k * k)
    v = np.where(near[:, None], u + eps, v)
    dist = np.linalg.norm(u - v, axis=1)
    keep = dist > 0
    u, v, dist = u[keep], v[keep], dist[keep]

    weights = np.bincount(path.xi[: t - 1], minlength=data.n).astype(float)[None, :]
    new = path.xi[t - 1]
    alpha = s(t - 1)

    def G(w):
        m = w.shape[0]
        g = _weighted_grad(loss, w, np.broadcast_to(data.X[new], (m, data.d)), np.full(m, data.y[new]),
                           data.X[None], data.y[None], np.broadcast_to(weights, (m, data.n)))
        return w - alpha / (t - 1) * g

    return float(np.max(np.linalg.norm(G(u) - G(v), axis=1) / dist))


def lemma_expansiveness(loss, alpha: float) -> dict:
    """Expansiveness factors available for one step size (keys ``"a"``, ``"b"``, ``"c"``).

    ``"a"`` holds for any smooth loss; ``"b"`` needs convexity and
    ``alpha <= 2/beta``; ``"c"`` needs ``gamma > 0`` and
    ``alpha <= 2/(beta + gamma)``.
    """
    m = loss.meta
    out = {"a": 1.0 + alpha * m.beta}
    if m.convex and alpha <= 2.0 / m.beta:
        out["b"] = 1.0
    if m.gamma > 0 and alpha <= 2.0 / (m.beta + m.gamma):
        out["c"] = 1.0 - m.beta * m.gamma * alpha / (m.beta + m.gamma)
    return out
