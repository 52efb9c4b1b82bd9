"""Shared domain types: examples, datasets, parameter domains, step sizes, seeds.

Parameters are plain float arrays. Vector models use shape ``(d,)``; the
metric-learning model is a symmetric ``d x d`` matrix stored flat with
``d*d`` entries. Every array-valued helper here broadcasts over leading
batch dimensions so the SGD engine can push many trajectories at once.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError

BALL_TOL = 1e-12
PSD_EIG_TOL = 1e-10

__all__ = [
    "Example",
    "Dataset",
    "Domain",
    "StepSchedule",
    "SeedSpec",
    "Estimate",
    "GaussianClassification",
    "LinearRegression",
    "project",
    "schedule_eval",
    "generate_dataset",
    "rescale_into_ball",
]


# ---------------------------------------------------------------------------
# randomness


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise InvalidArgumentError(f"seed keys must be non-negative, got {tag}")
        return int(tag)
    digest = hashlib.sha256(str(tag).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeedSpec:
    """A ``(master_seed, stream_id)`` pair naming one pseudo-random stream.

    Streams come from the counter-based Philox generator keyed by a
    ``SeedSequence``, so a given pair reproduces bit-identical draws on any
    platform. Use :meth:`derive` to hand an independent stream to each
    consumer (replicate, neighbor pair, probe set, ...).
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= v < 2**64:
                raise InvalidArgumentError(f"{name} must be an unsigned 64-bit integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def derive(self, *keys) -> "SeedSpec":
        """Child stream determined by this stream and ``keys`` (ints or strings)."""
        entropy = [self.master_seed, self.stream_id, *(_tag_to_int(k) for k in keys)]
        state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
        return SeedSpec(self.master_seed, int(state[0]))


def as_seed(seed) -> SeedSpec:
    """Accept a ``SeedSpec`` or a bare integer master seed."""
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed))


@dataclass(frozen=True)
class Estimate:
    """A Monte-Carlo estimate with its standard error."""

    value: float
    se: float

    @property
    def upper(self) -> float:
        """``value + 3 se``."""
        return self.value + 3.0 * self.se


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Example:
    """One labeled instance ``z = (x, y)``."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))

    def within(self, B1: float, B2: float) -> bool:
        return bool(np.linalg.norm(self.x) <= B1 * (1 + BALL_TOL) and abs(self.y) <= B2 * (1 + BALL_TOL))


@dataclass(frozen=True)
class Dataset:
    """A sample ``S`` of ``n >= 2`` examples stored column-wise.

    ``X`` has shape ``(n, d)`` and ``y`` shape ``(n,)``. Both are frozen
    copies; construction checks every example against ``bounds = (B1, B2)``.
    """

    X: np.ndarray
    y: np.ndarray
    bounds: tuple = (np.inf, np.inf)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 2:
            raise InvalidArgumentError(f"a dataset needs n >= 2 examples, got {X.shape[0]}")
        B1, B2 = (float(b) for b in self.bounds)
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms > B1 * (1 + BALL_TOL)):
            raise InvalidArgumentError(f"feature norm {norms.max():.6g} exceeds B1={B1}")
        if np.any(np.abs(y) > B2 * (1 + BALL_TOL)):
            raise InvalidArgumentError(f"label magnitude {np.abs(y).max():.6g} exceeds B2={B2}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "bounds", (B1, B2))

    @classmethod
    def from_examples(cls, examples, bounds=(np.inf, np.inf)) -> "Dataset":
        examples = list(examples)
        return cls(np.stack([e.x for e in examples]), np.array([e.y for e in examples]), bounds)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> Example:
        return Example(self.X[i], self.y[i])

    @property
    def examples(self) -> tuple:
        return tuple(self[i] for i in range(self.n))

    def replace(self, i: int, z: Example) -> "Dataset":
        X = self.X.copy()
        y = self.y.copy()
        X[i] = z.x
        y[i] = z.y
        return Dataset(X, y, self.bounds)


def rescale_into_ball(X: np.ndarray, B1: float) -> np.ndarray:
    """Divide each row by ``max(1, |x| / B1)``."""
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    return X / np.maximum(1.0, norms / B1)


@dataclass(frozen=True)
class GaussianClassification:
    """Binary labels with class-conditional Gaussian features.

    ``y = +1`` with probability ``p``; ``x ~ N(y * separation * 1/sqrt(d), I)``
    then pulled into the ``B1`` ball.
    """

    d: int
    B1: float = 1.0
    p: float = 0.5
    separation: float = 1.0

    @property
    def bounds(self):
        return (float(self.B1), 1.0)

    def draw(self, rng: np.random.Generator, n: int):
        y = np.where(rng.random(n) < self.p, 1.0, -1.0)
        mean = self.separation / math.sqrt(self.d)
        X = rng.standard_normal((n, self.d)) + y[:, None] * mean
        return rescale_into_ball(X, self.B1), y


@dataclass(frozen=True)
class LinearRegression:
    """``y = <w_true, x> + noise * eps`` with ``x ~ N(0, I)`` rescaled into the ball."""

    d: int
    B1: float = 1.0
    B2: float = 1.0
    noise: float = 0.1
    w_true: tuple = field(default=None)

    @property
    def bounds(self):
        return (float(self.B1), float(self.B2))

    def draw(self, rng: np.random.Generator, n: int):
        w = np.ones(self.d) / math.sqrt(self.d) if self.w_true is None else np.asarray(self.w_true, float)
        X = rescale_into_ball(rng.standard_normal((n, self.d)), self.B1)
        y = X @ w + self.noise * rng.standard_normal(n)
        return X, np.clip(y, -self.B2, self.B2)


def generate_dataset(source, n: int, seed) -> Dataset:
    """Draw ``n`` i.i.d. examples from a generator descriptor.

    ``source`` is any object exposing ``draw(rng, n) -> (X, y)`` and a
    ``bounds`` pair; :class:`GaussianClassification`,
    :class:`LinearRegression` and :class:`pairstab.minimax.TwoPointSource`
    all qualify.
    """
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    X, y = source.draw(as_seed(seed).generator(), int(n))
    return Dataset(X, y, source.bounds)


# ---------------------------------------------------------------------------
# domains and projection


@dataclass(frozen=True)
class Domain:
    """Parameter domain ``Omega``.

    kind
        ``"unconstrained"``, ``"ball"`` (Euclidean ball of radius ``radius``)
        or ``"psd_ball"`` (PSD matrices with Frobenius norm at most
        ``radius``; ``side`` gives the matrix size).
    psd_mode
        ``"clamp"`` (eigenvalue clamp, then Frobenius rescale) or
        ``"dykstra"`` (alternating projections).
    """

    kind: str = "unconstrained"
    radius: float = math.inf
    side: int | None = None
    psd_mode: str = "clamp"

    def __post_init__(self):
        if self.kind not in ("unconstrained", "ball", "psd_ball"):
            raise InvalidArgumentError(f"unknown domain kind {self.kind!r}")
        if self.kind != "unconstrained" and not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidArgumentError(f"constrained domains need a finite radius > 0, got {self.radius}")
        if self.kind == "psd_ball" and not self.side:
            raise InvalidArgumentError("psd_ball domain needs the matrix side length")
        if self.psd_mode not in ("clamp", "dykstra"):
            raise InvalidArgumentError(f"unknown psd_mode {self.psd_mode!r}")

    @classmethod
    def ball(cls, radius: float) -> "Domain":
        return cls("ball", float(radius))

    @classmethod
    def psd_ball(cls, radius: float, side: int, psd_mode: str = "clamp") -> "Domain":
        return cls("psd_ball", float(radius), int(side), psd_mode)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, w) -> bool:
        w = np.asarray(w, dtype=float)
        if self.kind == "unconstrained":
            return bool(np.all(np.isfinite(w)))
        if np.linalg.norm(w) > self.radius + BALL_TOL:
            return False
        if self.kind == "psd_ball":
            M = w.reshape(self.side, self.side)
            if not np.array_equal(M, M.T):
                return False
            return bool(np.linalg.eigvalsh(M).min() >= -PSD_EIG_TOL)
        return True

    def sample(self, rng: np.random.Generator, size: int, dim: int | None = None) -> np.ndarray:
        """Draw ``size`` points spread over the domain (uniform radius law)."""
        if self.kind == "psd_ball":
            k = self.side
            A = rng.standard_normal((size, k, k))
            # random rank so that boundary faces of the cone get visited too
            ranks = rng.integers(1, k + 1, size=size)
            mask = np.arange(k)[None, :] < ranks[:, None]
            A = A * mask[:, None, :]
            M = A @ np.swapaxes(A, -1, -2)
            norms = np.linalg.norm(M.reshape(size, -1), axis=1)
            scale = self.radius * rng.random(size) ** (1.0 / (k * k)) / np.maximum(norms, 1e-300)
            M = M * scale[:, None, None]
            return _symmetrize(M).reshape(size, k * k)
        if dim is None:
            raise InvalidArgumentError("dim is required for vector domains")
        radius = 1.0 if self.kind == "unconstrained" else self.radius
        u = rng.standard_normal((size, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * (radius * rng.random(size) ** (1.0 / dim))[:, None]


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _project_ball(w: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(w, axis=-1, keepdims=True)
    # a rescaled point can sit a few ulps outside; leaving it alone keeps projection idempotent
    outside = norms > radius * (1 + 1e-14)
    scale = np.where(outside, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return w * scale


def _project_psd_cone(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_symmetrize(M))
    vals = np.maximum(vals, 0.0)
    return _symmetrize((vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2))


def _project_psd_ball_clamp(w: np.ndarray, side: int, radius: float) -> np.ndarray:
    lead = w.shape[:-1]
    M = _project_psd_cone(w.reshape(*lead, side, side))
    return _project_ball(M.reshape(*lead, side * side), radius)


def project_psd_ball_dykstra(w, side, radius, tol=1e-10, max_sweeps=500):
    """Dykstra's alternating projections onto PSD cone ∩ Frobenius ball.

    Returns the projected flat matrix and the number of sweeps used.
    """
    x = np.array(w, dtype=float)
    lead = x.shape[:-1]
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for sweep in range(1, max_sweeps + 1):
        y = _project_psd_cone((x + p).reshape(*lead, side, side)).reshape(x.shape)
        p = x + p - y
        x_new = _project_ball(y + q, radius)
        q = y + q - x_new
        change = np.max(np.abs(x_new - x)) if x.size else 0.0
        x = x_new
        if change <= tol:
            break
    # final cone pass removes the O(tol) negative eigenvalues the ball step can leave
    x = _project_ball(_project_psd_cone(x.reshape(*lead, side, side)).reshape(x.shape), radius)
    return x, sweep


def project(w, dom: Domain) -> np.ndarray:
    """Euclidean projection onto ``dom``; broadcasts over leading axes.

    For the PSD ball, clamping eigenvalues at zero and then rescaling onto
    the Frobenius ball is already the exact projection: for any closed
    convex cone ``K`` and origin-centred ball ``B``,
    ``P_{K∩B} = P_B ∘ P_K``. The Dykstra mode is kept as an independent
    numerical route to the same point.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InvalidParameterError("cannot project a non-finite parameter")
    if dom.kind == "unconstrained":
        return w.copy()
    if dom.kind == "ball":
        return _project_ball(w, dom.radius)
    if w.shape[-1] != dom.side * dom.side:
        raise InvalidParameterError(f"expected {dom.side * dom.side} entries, got {w.shape[-1]}")
    if dom.psd_mode == "dykstra":
        return project_psd_ball_dykstra(w, dom.side, dom.radius)[0]
    return _project_psd_ball_clamp(w, dom.side, dom.radius)


# ---------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule ``t -> alpha_t`` for ``t >= 1``.

    Build with :meth:`constant`, :meth:`power`, :meth:`staircase` or
    :meth:`horizon` rather than the raw constructor.
    """

    kind: str
    c: float = 0.0
    a: float = 0.0
    gamma: float = 0.0
    horizon_T: int = 0

    def __post_init__(self):
        if self.kind == "constant":
            ok = self.c > 0
        elif self.kind == "power":
            ok = self.c > 0 and 0 < self.a <= 1
        elif self.kind == "staircase":
            ok = self.gamma > 0
        elif self.kind == "horizon":
            ok = self.c > 0 and 0 <= self.a < 1 and self.horizon_T >= 1
        else:
            raise InvalidArgumentError(f"unknown schedule kind {self.kind!r}")
        if not ok:
            raise InvalidArgumentError(f"invalid parameters for {self.kind} schedule: {self}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls("constant", c=float(alpha))

    @classmethod
    def power(cls, c: float, a: float) -> "StepSchedule":
        """``alpha_t = c / t**a``."""
        return cls("power", c=float(c), a=float(a))

    @classmethod
    def staircase(cls, gamma: float) -> "StepSchedule":
        """``alpha_t = 2 / (gamma * t)``."""
        return cls("staircase", gamma=float(gamma))

    @classmethod
    def horizon(cls, c: float, a: float, T: int) -> "StepSchedule":
        """Constant ``alpha = c / T**a`` tied to the run length ``T``."""
        return cls("horizon", c=float(c), a=float(a), horizon_T=int(T))

    def __call__(self, t):
        return schedule_eval(self, t)

    def values(self, T: int) -> np.ndarray:
        """``alpha_1, ..., alpha_T`` as an array."""
        return _schedule_array(self, np.arange(1, int(T) + 1, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.kind in ("constant", "horizon")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "alpha": self.c}
        if self.kind == "power":
            return {"kind": "power", "c": self.c, "a": self.a}
        if self.kind == "staircase":
            return {"kind": "staircase", "gamma": self.gamma}
        return {"kind": "horizon", "c": self.c, "a": self.a, "T": self.horizon_T}


def _schedule_array(s: StepSchedule, t: np.ndarray) -> np.ndarray:
    if s.kind == "constant":
        return np.full_like(t, s.c)
    if s.kind == "power":
        return s.c / t**s.a
    if s.kind == "staircase":
        return 2.0 / (s.gamma * t)
    return np.full_like(t, s.c / s.horizon_T**s.a)


def schedule_eval(s: StepSchedule, t: int) -> float:
    """Step size ``alpha_t``; ``t`` counts from 1."""
    if int(t) != t or t < 1:
        raise InvalidArgumentError(f"step index must be a positive integer, got {t}")
    return float(_schedule_array(s, np.array([float(t)]))[0])
