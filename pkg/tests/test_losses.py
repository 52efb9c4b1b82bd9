import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairstab.core import Example
from pairstab.errors import InvalidArgumentError, InvalidParameterError
from pairstab.losses import (
    LossMeta,
    PairwiseLoss,
    auc_squared_loss,
    certify_constants,
    check_gradient,
    mee_loss,
    metric_logistic_loss,
    symmetrized,
    synthetic_convex_loss,
    synthetic_strongly_convex_loss,
)


def catalogue():
    return {
        "auc": auc_squared_loss(2.0, 1.0),
        "auc-sym": symmetrized(auc_squared_loss(2.0, 1.0)),
        "metric": metric_logistic_loss(2.0, 1.0),
        "metric-3": metric_logistic_loss(1.0, 1.5, d=3),
        "mee": mee_loss(1.0, 1.0, 1.0, 1.0),
        "convex": synthetic_convex_loss(1.0, 1.0, 6),
        "sconvex": synthetic_strongly_convex_loss(1.0, 1.0, d=2),
    }


LOSSES = catalogue()


def z(x, y):
    return Example(np.asarray(x, float), y)


# ---------------------------------------------------------------- constants


def test_auc_constants():
    m = auc_squared_loss(2.0, 1.0).meta
    assert (m.L, m.beta, m.gamma, m.rho) == (14.0, 10.0, 2.0, 10.0)
    assert auc_squared_loss(2.0, 1.0).domain.radius == 1.0


def test_metric_constants():
    m = metric_logistic_loss(2.0, 1.0).meta
    assert (m.L, m.beta, m.gamma) == (16.0, 64.0, 0.0)


def test_mee_constants():
    loss = mee_loss(1.0, 1.0, 1.0, 1.0)
    assert (loss.meta.L, loss.meta.beta) == (8.0, 68.0)
    assert loss.meta.range_unit and not loss.meta.convex


def test_synthetic_constants():
    c = synthetic_convex_loss(2.0, 1.5, 10)
    assert c.meta.L == 1.5 and c.meta.beta == 2.0 and c.domain.radius == 3.0
    s = synthetic_strongly_convex_loss(2.0, 1.0)
    assert s.meta.gamma == s.meta.beta == 2.0


def test_symmetrized_doubles_constants():
    base = auc_squared_loss(2.0, 1.0)
    sym = symmetrized(base)
    assert sym.meta.L == 2 * base.meta.L and sym.meta.beta == 2 * base.meta.beta


@pytest.mark.parametrize("kw", [dict(L=0, beta=1), dict(L=1, beta=1, gamma=2), dict(L=1, beta=1, rho=-1)])
def test_loss_meta_validation(kw):
    with pytest.raises(InvalidArgumentError):
        LossMeta(**kw)


def test_factory_argument_validation():
    with pytest.raises(InvalidArgumentError):
        auc_squared_loss(0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        mee_loss(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        synthetic_convex_loss(1.0, 3.0, 6, r0=2.0)
    with pytest.raises(InvalidArgumentError):
        synthetic_convex_loss(1.0, 1.0, 1)


# ---------------------------------------------------------------- values


def test_auc_values():
    loss = auc_squared_loss(2.0, 1.0)
    assert loss.value(np.zeros(2), z([0.3, 0.1], 1), z([-0.2, 0.5], -1)) == 1.0
    w = np.array([0.3, -0.4])
    assert math.isclose(loss.value(w, z([0.3, 0.1], 1), z([-0.2, 0.5], 1)), 0.25)


def test_metric_values_and_grad_at_zero():
    loss = metric_logistic_loss(1.0, 1.0)
    a, b = z([0.6, 0.2], 1), z([-0.1, 0.4], -1)
    assert math.isclose(loss.value(np.zeros(4), a, b), math.log(2))
    D = a.x - b.x
    assert np.allclose(loss.grad(np.zeros(4), a, b), -0.5 * np.outer(D, D).ravel())
    assert np.allclose(loss.grad(np.zeros(4), a, z(b.x, 1)), 0.5 * np.outer(D, D).ravel())


def test_metric_rejects_asymmetric():
    loss = metric_logistic_loss(1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        loss.value([0.1, 0.2, 0.0, 0.1], z([0, 0], 1), z([0, 0], 1))


def test_param_shape_and_finiteness_checked():
    loss = auc_squared_loss(2.0, 1.0)
    with pytest.raises(InvalidParameterError):
        loss.value(np.zeros(3), z([0, 0], 1), z([0, 0], 1))
    with pytest.raises(InvalidParameterError):
        loss.grad([np.nan, 0.0], z([0, 0], 1), z([0, 0], 1))


def test_mee_zero_residual():
    loss = mee_loss(1.0, 1.0, 1.0, 1.0)
    w = np.array([0.5, -0.2])
    x, xp = np.array([0.4, 0.1]), np.array([-0.3, 0.2])
    y = 0.3
    yp = y - (x - xp) @ w
    assert loss.value(w, z(x, y), z(xp, yp)) == 0.0


def test_synthetic_convex_branch_values():
    loss = synthetic_convex_loss(1.0, 1.0, 6)
    assert loss.f1(np.array([1.0])) == 0.0
    assert math.isclose(float(loss.f1(np.array([-1.0]))), 0.875)
    assert math.isclose(loss.value(np.zeros(1), z([1.0], 1), z([1.0], -1)), 0.375)
    assert math.isclose(float(loss.f1(np.zeros(1))), float(loss.f2(np.zeros(1))))


def test_synthetic_convex_dispatch():
    loss = synthetic_convex_loss(1.0, 1.0, 6)
    w = np.array([0.3])
    assert loss.value(w, z([1], 1), z([-1], 1)) == float(loss.f1(w))
    assert loss.value(w, z([1], -1), z([-1], -1)) == float(loss.f2(w))


def test_synthetic_convex_seams_are_c1():
    loss = synthetic_convex_loss(1.3, 0.7, 6)
    for seam in (loss.r - loss.r / 2, loss.r + loss.r / 2):
        lo, hi = np.array([seam - 1e-10]), np.array([seam + 1e-10])
        assert abs(float(loss.f1(lo) - loss.f1(hi))) <= 1e-8
        g = lambda w: loss._grad(w, None, np.float64(1), None, np.float64(1))[0]  # noqa: E731
        assert abs(g(lo) - g(hi)) <= 1e-8


def test_synthetic_sconvex_values():
    loss = synthetic_strongly_convex_loss(1.0, 1.0, d=3)
    assert loss.f1(np.array([1.0, 0.0, 0.0])) == 0.0
    assert loss.f1(np.zeros(3)) == 0.5
    assert loss.value(np.zeros(3), z([0, 0, 0], 1), z([0, 0, 0], -1)) == 0.5


# ---------------------------------------------------------------- certification


@pytest.mark.parametrize("name", sorted(LOSSES))
def test_check_gradient_catalogue(name):
    assert check_gradient(LOSSES[name], trials=100, eps=1e-5, seed=0) <= 1e-5


def test_check_gradient_auc_tight():
    assert check_gradient(auc_squared_loss(2.0, 1.0), trials=100) <= 1e-6


class _Corrupted(PairwiseLoss):
    """Negative control: gradient off by a factor of two."""

    def __init__(self):
        self._base = auc_squared_loss(2.0, 1.0)
        for k in ("meta", "domain", "dim", "feature_dim", "bounds"):
            setattr(self, k, getattr(self._base, k))

    def _value(self, *a):
        return self._base._value(*a)

    def _grad(self, *a):
        return 2.0 * self._base._grad(*a)


def test_check_gradient_detects_corruption():
    assert check_gradient(_Corrupted(), trials=100) > 1e-2


def test_check_gradient_eps_range():
    with pytest.raises(InvalidArgumentError):
        check_gradient(LOSSES["auc"], eps=1e-2)


def test_certify_auc():
    L, b, g = certify_constants(auc_squared_loss(2.0, 1.0), 10_000, seed=0)
    assert L <= 14 and b <= 10 and g >= 2 - 1e-9
    assert L > 10  # envelope is reasonably tight


def test_certify_metric():
    L, b, g = certify_constants(metric_logistic_loss(2.0, 1.0), 10_000, seed=0)
    assert L <= 16 and b <= 64 and math.isfinite(g)


def test_certify_mee():
    L, b, _ = certify_constants(mee_loss(1.0, 1.0, 1.0, 1.0), 10_000, seed=0)
    assert L <= 8 and b <= 68


def test_certify_rejects_few_trials():
    with pytest.raises(InvalidArgumentError):
        certify_constants(LOSSES["auc"], trials=10)


@pytest.mark.parametrize("name", sorted(LOSSES))
def test_envelope_invariants(name):
    """value >= 0 plus Lipschitz, smoothness and strong-convexity envelopes on 10k samples."""
    loss = LOSSES[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    m = 10_000
    w, w2 = loss.sample_params(rng, m), loss.sample_params(rng, m)
    X, y = loss.sample_examples(rng, 2 * m)
    args = (X[:m], y[:m], X[m:], y[m:])
    v1, v2 = loss._value(w, *args), loss._value(w2, *args)
    g1, g2 = loss._grad(w, *args), loss._grad(w2, *args)
    dist = np.linalg.norm(w - w2, axis=1)
    meta = loss.meta
    assert np.all(v1 >= 0)
    assert np.all(np.abs(v1 - v2) <= meta.L * dist + 1e-9)
    assert np.all(np.linalg.norm(g1 - g2, axis=1) <= meta.beta * dist + 1e-9)
    if meta.gamma > 0:
        assert np.all(np.einsum("ij,ij->i", g1 - g2, w - w2) >= meta.gamma * dist**2 - 1e-9)
    assert np.all(v1 <= meta.rho + 1e-9)


@given(st.floats(-1e3, 1e3), st.floats(-1, 1), st.floats(-1, 1))
def test_mee_range(u, y, yp):
    loss = mee_loss(0.5, 1.0, 1.0, 1.0)
    v = loss.value(np.array([u, 0.0]), z([0.5, 0.0], y), z([-0.5, 0.0], yp))
    assert 0.0 <= v < 1.0 or (v == 1.0 and abs(u) > 1)  # saturates only through rounding


@given(st.floats(-2, 2), st.sampled_from([1.0, -1.0]), st.sampled_from([1.0, -1.0]))
def test_synthetic_convex_symmetry(u, y, yp):
    # mirroring w swaps the roles of f1 and f2
    loss = synthetic_convex_loss(1.0, 1.0, 6)
    a = loss.value(np.array([u]), z([1], y), z([1], yp))
    b = loss.value(np.array([-u]), z([1], -y), z([1], -yp))
    assert math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)


@given(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7))
def test_symmetrized_is_order_free(a, b):
    loss = symmetrized(auc_squared_loss(2.0, 1.0))
    w = np.array([a, b])
    p, q = z([0.5, 0.1], 1), z([-0.3, 0.2], -1)
    assert loss.value(w, p, q) == loss.value(w, q, p)
