import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_empirical_risk
from pairstab.core import GaussianClassification, StepSchedule, generate_dataset
from pairstab.errors import InvalidArgumentError
from pairstab.losses import auc_squared_loss, mee_loss, metric_logistic_loss, symmetrized
from pairstab.minimax import build_problem, exact_risks, sample_dataset
from pairstab.risk import (
    decompose,
    empirical_minimizer,
    empirical_risk,
    empirical_risk_grad,
    population_minimizer,
    population_risk,
)
from pairstab.sgd import run

SRC = GaussianClassification(2, 1.0)
AUC = auc_squared_loss(2.0, 1.0)


@pytest.mark.parametrize("loss", [AUC, metric_logistic_loss(1.0, 1.0), mee_loss(1.0, 1.0, 1.0, 1.0)],
                         ids=["auc", "metric", "mee"])
@pytest.mark.parametrize("n", [2, 7, 50])
def test_empirical_risk_matches_double_loop(loss, n):
    S = generate_dataset(SRC, n, n)
    w = loss.sample_params(np.random.default_rng(n), 1)[0]
    assert math.isclose(empirical_risk(w, S, loss), brute_empirical_risk(w, S, loss), rel_tol=1e-12, abs_tol=1e-15)


def test_empirical_risk_batched_params():
    S = generate_dataset(SRC, 9, 0)
    W = AUC.sample_params(np.random.default_rng(0), 4)
    got = empirical_risk(W, S, AUC)
    assert np.allclose(got, [empirical_risk(w, S, AUC) for w in W], rtol=1e-14, atol=0)


def test_empirical_grad_finite_difference():
    S = generate_dataset(SRC, 12, 1)
    w = np.array([0.2, -0.3])
    g = empirical_risk_grad(w, S, AUC)
    h = 1e-6
    fd = [(empirical_risk(w + h * e, S, AUC) - empirical_risk(w - h * e, S, AUC)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20)
def test_symmetrized_risk_order_free(seed):
    loss = symmetrized(AUC)
    S = generate_dataset(SRC, 15, seed)
    perm = np.random.default_rng(seed).permutation(S.n)
    shuffled = type(S)(S.X[perm], S.y[perm], S.bounds)
    w = np.array([0.4, -0.1])
    assert abs(empirical_risk(w, S, loss) - empirical_risk(w, shuffled, loss)) <= 1e-12


def test_minimizer_beats_random_probes():
    S = generate_dataset(SRC, 30, 4)
    res = empirical_minimizer(S, AUC)
    assert res.converged and res.grad_norm <= 1e-10
    probes = AUC.domain.sample(np.random.default_rng(0), 100, 2)
    assert np.all(res.value <= empirical_risk(probes, S, AUC) + 1e-12)


def test_minimizer_on_psd_domain():
    loss = metric_logistic_loss(1.0, 1.0)
    S = generate_dataset(SRC, 20, 2)
    res = empirical_minimizer(S, loss, tol=1e-8, max_iters=20_000)
    assert loss.domain.contains(res.w)
    probes = loss.domain.sample(np.random.default_rng(1), 100)
    assert np.all(res.value <= empirical_risk(probes, S, loss) + 1e-8)


def test_minimizer_reports_non_convergence():
    S = generate_dataset(SRC, 30, 4)
    res = empirical_minimizer(S, AUC, max_iters=1)
    assert not res.converged and res.iterations == 1
    with pytest.raises(InvalidArgumentError):
        empirical_minimizer(S, AUC, tol=1e-14)


def test_population_risk_monte_carlo():
    w = np.array([0.3, 0.1])
    est = population_risk(w, SRC, AUC, mc_samples=20_000, seed=3)
    rng = np.random.default_rng(99)
    X, y = SRC.draw(rng, 400_000)
    ref = float(np.mean(AUC._value(w, X[:200_000], y[:200_000], X[200_000:], y[200_000:])))
    assert abs(est.value - ref) <= 4 * math.hypot(est.se, est.se / math.sqrt(10))
    with pytest.raises(InvalidArgumentError):
        population_risk(w, SRC, AUC, mc_samples=10)


def test_two_point_population_risk_exact():
    p = build_problem("convex", n=6)
    est = population_risk(np.zeros(1), p.source(1), p.loss)
    assert est.se == 0.0
    m = population_minimizer(p.source(2), p.loss)
    assert m.w[0] == -p.delta and m.converged


def test_population_minimizer_surrogate():
    res = population_minimizer(SRC, AUC, samples=20_000, restarts=4, seed=0)
    assert res.value <= population_risk(np.zeros(2), SRC, AUC, mc_samples=20_000, seed=0).value + 1e-3
    assert AUC.domain.contains(res.w)


# ---------------------------------------------------------------- decomposition


def test_opt_error_zero_at_empirical_minimizer():
    S = generate_dataset(SRC, 25, 0)
    emin = empirical_minimizer(S, AUC)
    rep = decompose(emin.w, S, SRC, AUC, mc_samples=5000, empirical_opt=emin,
                    population_opt=population_minimizer(SRC, AUC, samples=5000, restarts=2))
    assert 0 <= rep.opt_error <= 1e-12 and rep.solver_converged


@pytest.mark.parametrize("kind,which", [("convex", 1), ("convex", 2), ("strongly-convex", 1)])
def test_excess_at_origin_matches_closed_form(kind, which):
    p = build_problem(kind, n=6)
    S = sample_dataset(p, which, 6, 0)
    rep = decompose(np.zeros(1), S, p.source(which), p.loss)
    assert abs(rep.excess - exact_risks(p).excess_at_origin) <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_decomposition_chain(seed):
    # excess <= gen_gap(w) + opt_error + (R_S(w*) - R(w*)); exact risks make this deterministic
    p = build_problem("convex", n=8)
    src = p.source(1)
    S = sample_dataset(p, 1, 8, seed)
    w = run(S, p.loss, StepSchedule.power(0.5, 0.5), "permutation", 20, seed, projected=True).average
    rep = decompose(w, S, src, p.loss)
    pmin = population_minimizer(src, p.loss)
    tail = empirical_risk(pmin.w, S, p.loss) - rep.population_min
    assert rep.excess <= rep.gen_gap + rep.opt_error + tail + 1e-12
    identity = rep.gen_gap + rep.opt_error + (rep.empirical_min - empirical_risk(pmin.w, S, p.loss)) + tail
    assert math.isclose(rep.excess, identity, rel_tol=1e-12, abs_tol=1e-12)


def test_opt_error_decreases_with_T():
    loss = metric_logistic_loss(1.0, 1.0)
    s = StepSchedule.power(0.125, 0.5)
    S = generate_dataset(SRC, 20, 5)
    opt = empirical_minimizer(S, loss, tol=1e-9, max_iters=50_000)
    means, ses = [], []
    for T in (50, 200, 800):
        errs = np.array([empirical_risk(run(S, loss, s, "selection", T, r, projected=True).average, S, loss)
                         - opt.value for r in range(30)])
        means.append(errs.mean())
        ses.append(errs.std(ddof=1) / math.sqrt(len(errs)))
    for k in range(2):
        assert means[k] - means[k + 1] > 3 * math.hypot(ses[k], ses[k + 1])
