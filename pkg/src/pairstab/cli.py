"""Config-driven experiment runner.

Usage::

    pairstab --config exp.json [--seed N] [--experiment NAME] [--out PATH] [--format csv|json]
    pairstab --list

Exit status is 0 when every bound check passes, 2 when any check fails and
1 on usage or configuration errors. ``PAIRSTAB_THREADS`` caps the number of
grid points evaluated concurrently.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import bounds as B
from .core import GaussianClassification, LinearRegression, SeedSpec, StepSchedule, generate_dataset
from .errors import ConfigError, PairstabError
from .losses import (
    auc_squared_loss,
    certify_constants,
    check_gradient,
    mee_loss,
    metric_logistic_loss,
    symmetrized,
    synthetic_convex_loss,
    synthetic_strongly_convex_loss,
)
from .minimax import build_problem, exact_risks, excess_risk, kl_cells, risk, risk_grad
from .risk import empirical_minimizer, empirical_risk
from .sgd import expansiveness_probe, lemma_expansiveness, make_path, normalize_rule, run_batch
from .stability import conditional_delta_stats, draw_neighbors, estimate_stability, verify_recursion

EXPERIMENTS = ("stability-sweep", "recursion-check", "expansiveness", "minimax", "gradient-audit", "tradeoff-audit")
HEADER = ("experiment", "params", "metric", "value", "stderr", "bound", "pass", "seed")

_COMMON = {"experiment", "seed", "out", "format"}
_KEYS = {
    "stability-sweep": {"loss", "data", "n", "T", "rule", "schedule", "replicates", "probes", "neighbors",
                        "projected", "bounds"},
    "recursion-check": {"loss", "data", "n", "T", "rule", "schedule", "replicates", "projected", "t0", "claim"},
    "expansiveness": {"loss", "data", "n", "T", "rule", "schedule", "steps", "trials"},
    "minimax": {"problems", "grid_points"},
    "gradient-audit": {"losses", "trials", "eps", "cert_trials"},
    "tradeoff-audit": {"problem", "T", "rule", "schedule", "samples", "projected", "gen_draws", "replicates",
                       "probes", "neighbors"},
}

_LOSSES = {
    "auc": (auc_squared_loss, {"mu", "B1", "d"}),
    "auc-symmetrized": (lambda **kw: symmetrized(auc_squared_loss(**kw)), {"mu", "B1", "d"}),
    "metric": (metric_logistic_loss, {"B1", "r0", "d", "psd_mode"}),
    "mee": (mee_loss, {"h", "B1", "B2", "r0", "d"}),
    "synthetic-convex": (synthetic_convex_loss, {"beta", "r", "n", "r0", "d"}),
    "synthetic-sconvex": (synthetic_strongly_convex_loss, {"beta", "r", "d", "r0"}),
}
_SCHEDULES = {
    "constant": {"alpha"},
    "power": {"c", "a"},
    "staircase": {"gamma"},
    "horizon": {"c", "a", "T"},
}
_DATA = {
    "gaussian-classification": (GaussianClassification, {"d", "B1", "p", "separation"}),
    "linear-regression": (LinearRegression, {"d", "B1", "B2", "noise", "w_true"}),
}
_PROBLEM_KEYS = {"kind", "beta", "r", "nu", "n", "d", "r0", "B1"}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description (the raw mapping plus the seed)."""

    experiment: str
    seed: int
    fields: dict
    out: str | None = None
    format: str = "csv"

    def get(self, key, default=None):
        return self.fields.get(key, default)


def _expect(cond, field, msg):
    if not cond:
        raise ConfigError(field, msg)


def _pos_int(v, field, minimum=1):
    _expect(isinstance(v, int) and not isinstance(v, bool) and v >= minimum, field,
            f"must be an integer >= {minimum}, got {v!r}")
    return v


def _int_list(v, field, minimum=1):
    vals = v if isinstance(v, list) else [v]
    _expect(len(vals) > 0, field, "must not be empty")
    return [_pos_int(x, field, minimum) for x in vals]


def _check_keys(mapping, allowed, field):
    _expect(isinstance(mapping, dict), field, "must be an object")
    unknown = sorted(set(mapping) - set(allowed))
    _expect(not unknown, field, f"unknown key(s) {unknown}; allowed {sorted(allowed)}")


def build_loss(spec, field="loss"):
    _expect(isinstance(spec, dict) and "name" in spec, field, "must be an object with a 'name'")
    name = spec["name"]
    _expect(name in _LOSSES, f"{field}.name", f"unknown loss {name!r}; choose from {sorted(_LOSSES)}")
    factory, allowed = _LOSSES[name]
    _check_keys(spec, allowed | {"name"}, field)
    try:
        return factory(**{k: v for k, v in spec.items() if k != "name"})
    except (PairstabError, TypeError) as exc:
        raise ConfigError(field, str(exc)) from None


def build_schedule(spec, T=None, field="schedule"):
    _expect(isinstance(spec, dict) and spec.get("kind") in _SCHEDULES, f"{field}.kind",
            f"must be one of {sorted(_SCHEDULES)}")
    kind = spec["kind"]
    _check_keys(spec, _SCHEDULES[kind] | {"kind"}, field)
    try:
        if kind == "constant":
            return StepSchedule.constant(spec["alpha"])
        if kind == "power":
            return StepSchedule.power(spec["c"], spec["a"])
        if kind == "staircase":
            return StepSchedule.staircase(spec["gamma"])
        return StepSchedule.horizon(spec["c"], spec["a"], spec.get("T", T))
    except KeyError as exc:
        raise ConfigError(field, f"missing key {exc.args[0]!r}") from None
    except (PairstabError, TypeError) as exc:
        raise ConfigError(field, str(exc)) from None


def build_source(spec, field="data"):
    _expect(isinstance(spec, dict) and "kind" in spec, field, "must be an object with a 'kind'")
    kind = spec["kind"]
    if kind == "two-point":
        _check_keys(spec, {"kind", "problem", "which"}, field)
        problem = build_two_point(spec.get("problem", {}), f"{field}.problem")
        which = spec.get("which", 1)
        _expect(which in (1, 2), f"{field}.which", "must be 1 or 2")
        return problem.source(which)
    _expect(kind in _DATA, f"{field}.kind", f"must be one of {sorted(_DATA) + ['two-point']}")
    cls, allowed = _DATA[kind]
    _check_keys(spec, allowed | {"kind"}, field)
    kw = {k: v for k, v in spec.items() if k != "kind"}
    if "w_true" in kw:
        kw["w_true"] = tuple(kw["w_true"])
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(field, str(exc)) from None


def build_two_point(spec, field="problem"):
    _check_keys(spec, _PROBLEM_KEYS, field)
    try:
        return build_problem(**spec)
    except (PairstabError, TypeError) as exc:
        raise ConfigError(field, str(exc)) from None


def parse_config(raw: dict, seed=None, experiment=None) -> ExperimentConfig:
    """Validate a raw configuration mapping; unknown keys are rejected."""
    _expect(isinstance(raw, dict), "config", "must be a JSON object")
    exp = experiment or raw.get("experiment")
    _expect(exp in EXPERIMENTS, "experiment", f"must be one of {list(EXPERIMENTS)}, got {exp!r}")
    _check_keys(raw, _COMMON | _KEYS[exp], "config")
    s = raw.get("seed", 0) if seed is None else seed
    _expect(isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2**64, "seed",
            f"must be an unsigned 64-bit integer, got {s!r}")
    fmt = raw.get("format", "csv")
    _expect(fmt in ("csv", "json"), "format", f"must be 'csv' or 'json', got {fmt!r}")
    fields = {k: v for k, v in raw.items() if k not in _COMMON}
    cfg = ExperimentConfig(exp, s, fields, raw.get("out"), fmt)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    """Eagerly build every object so errors surface before any computation."""
    f = cfg.fields
    exp = cfg.experiment
    if exp in ("stability-sweep", "recursion-check", "expansiveness"):
        for key in ("loss", "data", "n", "T", "rule", "schedule"):
            _expect(key in f, key, "is required")
        build_loss(f["loss"])
        build_source(f["data"])
        _pos_int(f["n"], "n", 2)
        Ts = _int_list(f["T"], "T", 2)
        for T in Ts:
            build_schedule(f["schedule"], T)
        rules = f["rule"] if isinstance(f["rule"], list) else [f["rule"]]
        for r in rules:
            try:
                normalize_rule(r)
            except PairstabError as exc:
                raise ConfigError("rule", str(exc)) from None
        if "replicates" in f:
            _pos_int(f["replicates"], "replicates", 2)
        if "projected" in f:
            _expect(isinstance(f["projected"], bool), "projected", "must be true or false")
    if exp == "stability-sweep":
        bk = f.get("bounds", {})
        _check_keys(bk, {"last", "avg"}, "bounds")
        for k, v in bk.items():
            _expect(v in B.STABILITY_KINDS, f"bounds.{k}", f"must be one of {B.STABILITY_KINDS}")
        for key in ("probes", "neighbors"):
            if key in f:
                _pos_int(f[key], key)
    if exp == "recursion-check":
        if "t0" in f:
            _int_list(f["t0"], "t0", 2)
        _expect(f.get("claim", "auto") in ("auto", "a", "b", "c"), "claim", "must be auto, a, b or c")
    if exp == "expansiveness":
        steps = _int_list(f.get("steps", [2]), "steps", 2)
        _expect(max(steps) <= min(_int_list(f["T"], "T", 2)), "steps", "every step must be <= T")
        _pos_int(f.get("trials", 1000), "trials", 100)
    if exp == "minimax":
        probs = f.get("problems", [])
        _expect(isinstance(probs, list) and probs, "problems", "must be a non-empty list")
        for i, p in enumerate(probs):
            build_two_point(p, f"problems[{i}]")
        _pos_int(f.get("grid_points", 10**6), "grid_points", 10)
    if exp == "gradient-audit":
        losses = f.get("losses", [])
        _expect(isinstance(losses, list) and losses, "losses", "must be a non-empty list")
        for i, spec in enumerate(losses):
            build_loss(spec, f"losses[{i}]")
        _pos_int(f.get("trials", 100), "trials")
        _pos_int(f.get("cert_trials", 10_000), "cert_trials", 100)
        eps = f.get("eps", 1e-5)
        _expect(isinstance(eps, (int, float)) and 1e-8 <= eps <= 1e-3, "eps", "must lie in [1e-8, 1e-3]")
    if exp == "tradeoff-audit":
        for key in ("problem", "T", "schedule"):
            _expect(key in f, key, "is required")
        p = build_two_point(f["problem"])
        _expect(p.kind == "convex", "problem.kind", "trade-off audit uses the convex construction")
        _expect(p.n >= 2, "problem.n", "must be >= 2")
        for T in _int_list(f["T"], "T", 2):
            build_schedule(f["schedule"], T)
        for key in ("samples", "gen_draws", "replicates", "probes", "neighbors"):
            if key in f:
                _pos_int(f[key], key, 2)


# ---------------------------------------------------------------------------
# result rows


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    params: str
    metric: str
    value: float
    stderr: float | None
    bound: float | None
    passed: bool
    seed: int

    def sort_key(self):
        return (self.experiment, self.params, self.metric)


def _params(**kw) -> str:
    return json.dumps(kw, sort_keys=True, separators=(",", ":"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _json_num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else _fmt(v)


def emit(rows, fmt: str = "csv", path=None) -> str:
    """Serialise ``rows`` (sorted by experiment, params, metric); write to ``path`` if given."""
    rows = sorted(rows, key=ResultRow.sort_key)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([r.experiment, r.params, r.metric, _fmt(r.value), _fmt(r.stderr), _fmt(r.bound),
                        _fmt(r.passed), str(r.seed)])
        text = buf.getvalue()
    elif fmt == "json":
        objs = [
            {"experiment": r.experiment, "params": r.params, "metric": r.metric, "value": _json_num(r.value),
             "stderr": _json_num(r.stderr), "bound": _json_num(r.bound), "pass": r.passed, "seed": r.seed}
            for r in rows
        ]
        text = json.dumps(objs, indent=1, sort_keys=False) + "\n"
    else:
        raise ConfigError("format", f"must be 'csv' or 'json', got {fmt!r}")
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc
    return text


# ---------------------------------------------------------------------------
# experiments


def _threads() -> int:
    raw = os.environ.get("PAIRSTAB_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError("PAIRSTAB_THREADS", f"must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError("PAIRSTAB_THREADS", f"must be a positive integer, got {raw!r}")
    return k


def _grid(cfg, tasks):
    """Run independent grid-point callables; failures become failing rows."""
    def guarded(task):
        name, fn = task
        try:
            return fn()
        except ConfigError:
            raise
        except PairstabError:
            # overflow and precondition failures included
            return [ResultRow(cfg.experiment, name, "error", math.nan, None, None, False, cfg.seed)]

    k = min(_threads(), max(1, len(tasks)))
    if k == 1:
        results = [guarded(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=k) as ex:
            results = list(ex.map(guarded, tasks))
    return [row for rows in results for row in rows]


def _stability_sweep(cfg):
    f = cfg.fields
    loss = build_loss(f["loss"])
    source = build_source(f["data"])
    rules = f["rule"] if isinstance(f["rule"], list) else [f["rule"]]
    bk = f.get("bounds", {})
    tasks = []
    for rule in rules:
        for T in _int_list(f["T"], "T", 2):
            name = _params(rule=normalize_rule(rule), T=T, n=f["n"])

            def task(rule=rule, T=T, name=name):
                s = build_schedule(f["schedule"], T)
                rep = estimate_stability(source, loss, s, rule, T, f.get("replicates", 200), f.get("probes", 100),
                                         SeedSpec(cfg.seed).derive("sweep", name), n=f["n"],
                                         neighbors=f.get("neighbors", 8), projected=f.get("projected", False))
                p = B.BoundParams.from_loss(loss, f["n"], T, s)
                rows = []
                for out in ("last", "avg"):
                    kind = bk.get(out)
                    signed = getattr(rep, f"epsilon_{out}_signed")
                    absolute = getattr(rep, f"epsilon_{out}_abs")
                    bound = B.stability_bound(kind, p) if kind else None
                    use_abs = kind is not None and kind.startswith("nonconvex")
                    for label, est, checked in ((f"epsilon_{out}", signed, not use_abs),
                                                (f"epsilon_{out}_abs", absolute, use_abs)):
                        ok = True if bound is None or not checked else est.upper <= bound
                        rows.append(ResultRow(cfg.experiment, name, label, est.value, est.se,
                                              bound if checked else None, ok, cfg.seed))
                return rows

            tasks.append((name, task))
    return _grid(cfg, tasks)


def _recursion_check(cfg):
    f = cfg.fields
    loss = build_loss(f["loss"])
    source = build_source(f["data"])
    rules = f["rule"] if isinstance(f["rule"], list) else [f["rule"]]
    tasks = []
    for rule in rules:
        for T in _int_list(f["T"], "T", 2):
            name = _params(rule=normalize_rule(rule), T=T, n=f["n"])

            def task(rule=rule, T=T, name=name):
                seed = SeedSpec(cfg.seed).derive("recursion", name)
                s = build_schedule(f["schedule"], T)
                pair = draw_neighbors(source, f["n"], 1, seed.derive("pair"))[0]
                R = f.get("replicates", 2000)
                rep = verify_recursion(pair, loss, s, rule, T, R, seed.derive("runs"), f.get("projected", False),
                                       f.get("claim", "auto"))
                i = int(np.argmin(rep.residual + 3 * rep.residual_se))
                rows = [ResultRow(cfg.experiment, name, "worst_residual", float(rep.residual[i]),
                                  float(rep.residual_se[i]), -3.0 * float(rep.residual_se[i]), rep.holds, cfg.seed)]
                for t0 in _int_list(f.get("t0", []) or [2], "t0", 2):
                    if t0 > min(f["n"], T):
                        continue
                    cs = conditional_delta_stats(pair, loss, s, rule, T, t0, R, seed.derive("runs"),
                                                 f.get("projected", False), min_survivors=30)
                    rows.append(ResultRow(cfg.experiment, name, f"p_nonzero_t0={t0}", cs.p_nonzero.value,
                                          cs.p_nonzero.se, cs.bound, cs.holds, cfg.seed))
                return rows

            tasks.append((name, task))
    return _grid(cfg, tasks)


def _expansiveness(cfg):
    f = cfg.fields
    loss = build_loss(f["loss"])
    source = build_source(f["data"])
    rules = f["rule"] if isinstance(f["rule"], list) else [f["rule"]]
    tasks = []
    for rule in rules:
        for T in _int_list(f["T"], "T", 2):
            name = _params(rule=normalize_rule(rule), T=T, n=f["n"])

            def task(rule=rule, T=T, name=name):
                seed = SeedSpec(cfg.seed).derive("expansiveness", name)
                s = build_schedule(f["schedule"], T)
                S = generate_dataset(source, f["n"], seed.derive("data"))
                path = make_path(rule, f["n"], T, seed.derive("path"))
                rows = []
                for t in _int_list(f.get("steps", [2]), "steps", 2):
                    ratio = expansiveness_probe(S, loss, s, t, path, f.get("trials", 1000), seed.derive("probe", t))
                    for key, eta in sorted(lemma_expansiveness(loss, s(t - 1)).items()):
                        rows.append(ResultRow(cfg.experiment, name, f"ratio_t={t}_lemma={key}", ratio, 0.0,
                                              eta + 1e-9, ratio <= eta + 1e-9, cfg.seed))
                return rows

            tasks.append((name, task))
    return _grid(cfg, tasks)


def _minimax(cfg):
    f = cfg.fields
    G = f.get("grid_points", 10**6)
    tasks = []
    for i, spec in enumerate(f["problems"]):
        p = build_two_point(spec, f"problems[{i}]")
        name = _params(kind=p.kind, beta=p.beta, r=p.r, nu=p.nu, n=p.n)

        def task(p=p, name=name):
            rep = exact_risks(p)
            grid = np.linspace(-p.r0, p.r0, G)
            pts = np.zeros((G, p.d))
            pts[:, 0] = grid
            R = risk(p, 1, pts)
            k = int(np.argmin(R))
            # refine the grid minimiser on the local quadratic piece
            lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, G - 1)]
            def r1(u):
                w = np.zeros(p.d)
                w[0] = u
                return float(risk(p, 1, w))

            opt = minimize_scalar(r1, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            grid_delta, grid_min = float(opt.x), float(opt.fun)
            grid_excess0 = r1(0.0) - grid_min
            kl_direct = kl_cells(p.cell_probs_P1, p.cell_probs_P2)
            stat = abs(float(risk_grad(p, 1, rep.w_star_1)[0]))
            tol = 1e-6
            row = lambda m, v, b, ok: ResultRow(cfg.experiment, name, m, v, 0.0, b, bool(ok), cfg.seed)  # noqa: E731
            return [
                row("delta", rep.delta, grid_delta, abs(rep.delta - grid_delta) <= tol),
                row("excess_at_origin_claimed", rep.claimed_excess_at_origin, grid_excess0,
                    abs(rep.claimed_excess_at_origin - grid_excess0) <= tol),
                row("excess_at_origin_exact", rep.excess_at_origin, grid_excess0,
                    abs(rep.excess_at_origin - grid_excess0) <= tol),
                row("kl_closed_form", rep.kl_closed_form, kl_direct, abs(rep.kl_closed_form - kl_direct) <= tol),
                row("kl_label_marginal", rep.kl_closed_form, rep.kl_label_marginal,
                    abs(rep.kl_closed_form - rep.kl_label_marginal) <= tol),
                row("kl_per_sample_le_half_over_n", kl_direct, 1 / (2 * p.n), kl_direct <= 1 / (2 * p.n)),
                row("stationarity_residual", stat, 1e-10, stat <= 1e-10),
            ]

        tasks.append((name, task))
    return _grid(cfg, tasks)


def _gradient_audit(cfg):
    f = cfg.fields
    rows = []
    for i, spec in enumerate(f["losses"]):
        loss = build_loss(spec, f"losses[{i}]")
        name = _params(**spec)
        seed = SeedSpec(cfg.seed).derive("gradient", name)
        err = check_gradient(loss, f.get("trials", 100), f.get("eps", 1e-5), seed.derive("fd"))
        rows.append(ResultRow(cfg.experiment, name, "grad_rel_error", err, None, 1e-5, err <= 1e-5, cfg.seed))
        L_hat, b_hat, g_hat = certify_constants(loss, f.get("cert_trials", 10_000), seed.derive("cert"))
        m = loss.meta
        rows += [
            ResultRow(cfg.experiment, name, "L_hat", L_hat, None, m.L, L_hat <= m.L + 1e-9, cfg.seed),
            ResultRow(cfg.experiment, name, "beta_hat", b_hat, None, m.beta, b_hat <= m.beta + 1e-9, cfg.seed),
        ]
        if m.convex:
            rows.append(ResultRow(cfg.experiment, name, "gamma_hat", g_hat, None, m.gamma, g_hat >= m.gamma - 1e-9,
                                  cfg.seed))
        else:
            rows.append(ResultRow(cfg.experiment, name, "gamma_hat", g_hat, None, None, True, cfg.seed))
    return rows


def tradeoff_rows(cfg):
    f = cfg.fields
    p = build_two_point(f["problem"])
    loss = p.loss
    rule = f.get("rule", "permutation")
    projected = f.get("projected", True)
    n = p.n
    tasks = []
    for T in _int_list(f["T"], "T", 2):
        name = _params(T=T, n=n, rule=normalize_rule(rule), beta=p.beta, r=p.r)

        def task(T=T, name=name):
            seed = SeedSpec(cfg.seed).derive("tradeoff", name)
            s = build_schedule(f["schedule"], T)
            stab = B.stability_bound("convex-last", B.BoundParams.from_loss(loss, n, T, s))
            # the construction realises the minimax value with |Omega| = 2r
            minimax = B.minimax_lower_bound("convex", p.beta, 2 * p.r, n)
            opt_means, excess_means, excess_se = [], [], []
            M = f.get("samples", 100)
            for which in (1, 2):
                src = p.source(which)
                sub = seed.derive("opt", which)
                data = [generate_dataset(src, n, sub.derive("S", k)) for k in range(M)]
                paths = np.stack([make_path(rule, n, T, sub.derive("path", k)).xi for k in range(M)])
                res = run_batch(np.stack([d.X for d in data]), np.stack([d.y for d in data]), paths, loss, s,
                                projected=projected)
                opt = [empirical_risk(res.last[k], d, loss) - empirical_minimizer(d, loss).value
                       for k, d in enumerate(data)]
                ex = np.asarray(excess_risk(p, which, res.last))
                opt_means.append(float(np.mean(opt)))
                excess_means.append(float(ex.mean()))
                excess_se.append(float(ex.std(ddof=1) / math.sqrt(M)))
            audit = B.tradeoff_audit(stab, max(opt_means), minimax)
            rows = [ResultRow(cfg.experiment, name, "two_stab_plus_opt", 2 * stab + max(opt_means), None, minimax,
                              audit.holds, cfg.seed)]
            gap = generalization_check(p, loss, s, rule, T, projected, f, seed.derive("gen"))
            rows.append(ResultRow(cfg.experiment, name, "generalization_gap", gap["gap"], gap["gap_se"],
                                  gap["bound"], gap["holds"], cfg.seed))
            # the minimax bound must also hold for this particular estimator
            i = int(np.argmax(excess_means))
            rows.append(ResultRow(cfg.experiment, name, "sgd_worst_excess", excess_means[i], excess_se[i], minimax,
                                  excess_means[i] >= minimax - 3 * excess_se[i], cfg.seed))
            return rows

        tasks.append((name, task))
    return _grid(cfg, tasks)


def generalization_check(p, loss, s, rule, T, projected, f, seed) -> dict:
    """``|mean(R - R_S)|`` of SGD outputs over fresh ``(S, path)`` draws against ``2 eps_hat``."""
    src = p.source(1)
    n = p.n
    D = f.get("gen_draws", 200)
    data = [generate_dataset(src, n, seed.derive("S", k)) for k in range(D)]
    paths = np.stack([make_path(rule, n, T, seed.derive("path", k)).xi for k in range(D)])
    res = run_batch(np.stack([d.X for d in data]), np.stack([d.y for d in data]), paths, loss, s, projected=projected)
    gaps = np.array([float(risk(p, 1, res.last[k])) - empirical_risk(res.last[k], d, loss) for k, d in enumerate(data)])
    rep = estimate_stability(src, loss, s, rule, T, f.get("replicates", 200), f.get("probes", 100), seed.derive("eps"),
                             n=n, neighbors=f.get("neighbors", 8), projected=projected)
    eps = rep.epsilon_last_signed
    gap = abs(float(gaps.mean()))
    gap_se = float(gaps.std(ddof=1) / math.sqrt(D))
    combined = math.sqrt(gap_se**2 + (2 * eps.se) ** 2)
    bound = 2 * eps.value + 3 * combined
    return {"gap": gap, "gap_se": gap_se, "eps": eps.value, "eps_se": eps.se, "bound": bound, "holds": gap <= bound}


_RUNNERS = {
    "stability-sweep": _stability_sweep,
    "recursion-check": _recursion_check,
    "expansiveness": _expansiveness,
    "minimax": _minimax,
    "gradient-audit": _gradient_audit,
    "tradeoff-audit": tradeoff_rows,
}


def run_experiment(cfg: ExperimentConfig) -> list:
    """Execute a validated configuration and return its result rows."""
    return sorted(_RUNNERS[cfg.experiment](cfg), key=ResultRow.sort_key)


# ---------------------------------------------------------------------------
# entry point


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pairstab", description="Stability experiments for pairwise SGD.")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    p.add_argument("--experiment", help="experiment name (overrides the config)")
    p.add_argument("--list", action="store_true", help="print the available experiments and exit")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except _UsageError as exc:
        print(f"pairstab: error: {exc}", file=sys.stderr)
        return 1
    if args.list:
        print("\n".join(EXPERIMENTS))
        return 0
    if not args.config:
        print("pairstab: error: --config is required", file=sys.stderr)
        return 1
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"pairstab: error: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"pairstab: error: config is not valid JSON: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(raw, seed=args.seed, experiment=args.experiment)
        rows = run_experiment(cfg)
        fmt = args.format or cfg.format
        out = args.out or cfg.out
        text = emit(rows, fmt, out)
    except ConfigError as exc:
        print(f"pairstab: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"pairstab: error: {exc}", file=sys.stderr)
        return 1
    if out is None:
        sys.stdout.write(text)
    return 0 if all(r.passed for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
