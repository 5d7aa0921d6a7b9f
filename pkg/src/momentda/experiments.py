"""End-to-end experiments producing deterministic JSON reports.

Each experiment returns a :class:`Report` holding metric tables, a list of
named assertions and optional two-column plot series.  Reports contain no
timings or paths, so a fixed seed gives byte-identical output.
"""

import json
import math
import os
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import data, dipals, maxent, mann, metrics, scitsm
from .errors import InvalidArgument

SCHEMA_VERSION = 1
EXPERIMENTS = ("toy-mann", "overpenalization", "bounds-demo", "dipals-synth",
               "scitsm-synth", "sweep")

# population values of the mean over-penalization example
POPULATION = {"cmd4_p_qL": 0.020704, "cmd4_p_qR": 0.02,
              "mmd2_p_qL": 0.000256, "mmd2_p_qR": 0.001216}


def jsonable(value):
    """JSON-ready copy with numpy scalars and arrays turned into Python values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise InvalidArgument("report cells must be finite")
        return value
    return value


@dataclass
class Report:
    experiment: str
    seed: int
    assertions: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)

    def check(self, name, passed, **detail):
        self.assertions.append({"name": name, "passed": bool(passed), **detail})
        return bool(passed)

    def table(self, name, columns, rows):
        self.tables[name] = {"columns": list(columns), "rows": [list(r) for r in rows]}

    def plot(self, name, x, y):
        self.plots[name] = np.column_stack([np.asarray(x, float), np.asarray(y, float)])

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)

    @property
    def failures(self):
        return [a["name"] for a in self.assertions if not a["passed"]]

    def to_dict(self):
        return jsonable({"schema_version": SCHEMA_VERSION, "experiment": self.experiment,
                       "seed": self.seed, "assertions": self.assertions,
                       "tables": self.tables, "plots": sorted(self.plots)})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir):
        """Write ``report.json`` and one ``<plot>.csv`` per plot series."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(self.to_json())
        for name, xy in self.plots.items():
            data.save_csv(os.path.join(out_dir, f"{name}.csv"), xy, header=["x", "y"])


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    knobs: dict = field(default_factory=dict)
    out_dir: str = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidArgument(f"unknown experiment {self.experiment!r}; "
                                  f"choose from {', '.join(EXPERIMENTS)}")

    def knob(self, name, default):
        value = self.knobs.get(name)
        return default if value is None else value


# ---------------------------------------------------------------- toy MANN

def toy_protocol(toy, seed=0, iters=9000, hidden_width=15, reg_weight=1.0, order=5,
                 log_every=100):
    """Shallow network versus MANN on one toy data set.

    The shallow network trains with ``reg_weight = 0`` for ``iters`` steps.
    The MANN starts from its weights after two thirds of that budget and
    trains for the remaining third with the CMD penalty switched on.
    """
    cfg = mann.TrainConfig(hidden_width=hidden_width, cmd_order=order, reg_weight=0.0,
                           max_iters=iters, rng_seed=seed)
    switch = 2 * iters // 3
    snapshot, base_loss, mann_loss = {}, [], []

    def base_cb(it, params, loss):
        base_loss.append(loss)
        if it == switch - 1:
            snapshot["params"] = params

    base = mann.train(cfg, toy.source, toy.target, callback=base_cb)
    init = snapshot.get("params")
    if init is None:
        raise InvalidArgument("iters must be >= 2")
    adapted = mann.train(cfg.replace(reg_weight=reg_weight, max_iters=iters - switch),
                         toy.source, toy.target, init=init,
                         callback=lambda it, p, loss: mann_loss.append(loss))

    src, labels = toy.source.inputs, toy.source.labels
    out = {"baseline": base, "mann": adapted}
    for name, params in (("baseline", base), ("mann", adapted)):
        out[name + "_source_acc"] = mann.accuracy(params, src, labels)
        out[name + "_target_acc"] = mann.accuracy(params, toy.target, toy.target_labels)
        out[name + "_hidden_cmd"] = mann.hidden_cmd(params, src, toy.target, order)

    def blocks(trace):
        trace = np.asarray(trace)
        n = len(trace) // log_every
        return trace[:n * log_every].reshape(n, log_every).mean(axis=1)

    out["baseline_loss"], out["mann_loss"] = blocks(base_loss), blocks(mann_loss)
    return out


def _toy_mann(cfg):
    rep = Report("toy-mann", cfg.seed)
    toy = data.gen_toy(cfg.seed, n_per_class=cfg.knob("n_per_class", 213))
    res = toy_protocol(toy, cfg.seed, iters=cfg.knob("iters", 9000),
                       hidden_width=cfg.knob("hidden", 15),
                       reg_weight=cfg.knob("lambda", 1.0), order=cfg.knob("m", 5))
    rep.table("accuracy", ["model", "source_acc", "target_acc", "hidden_cmd"],
              [[name, res[name + "_source_acc"], res[name + "_target_acc"],
                res[name + "_hidden_cmd"]] for name in ("baseline", "mann")])
    rep.check("baseline_source_acc_ge_0.95", res["baseline_source_acc"] >= 0.95,
              value=res["baseline_source_acc"])
    rep.check("mann_target_acc_gt_baseline",
              res["mann_target_acc"] > res["baseline_target_acc"],
              baseline=res["baseline_target_acc"], mann=res["mann_target_acc"])
    n_base = len(res["baseline_loss"])
    rep.plot("loss_baseline", np.arange(n_base) * 100, res["baseline_loss"])
    rep.plot("loss_mann", (2 * n_base // 3 + np.arange(len(res["mann_loss"]))) * 100,
             res["mann_loss"])
    return rep


# -------------------------------------------------------- over-penalization

def _overpenalization(cfg):
    rep = Report("overpenalization", cfg.seed)
    p, qL, qR = data.gen_overpenalization(cfg.seed, cfg.knob("n", 10**6))
    kernel = metrics.KernelSpec("polynomial", degree=2, bias=1.0)
    values = {}
    for name, q in (("qL", qL), ("qR", qR)):
        terms = metrics.cmd_terms(p, q, 4, np.ones(4))
        values["cmd4_p_" + name] = float(terms.sum())
        values["mmd2_p_" + name] = metrics.mmd_squared(p, q, kernel)
        rep.plot("cmd_terms_" + name, np.arange(1, 5), terms)
    rep.table("distances", ["quantity", "sample", "population"],
              [[k, values[k], POPULATION[k]] for k in sorted(values)])
    rep.table("sample_means", ["sample", "mean"],
              [["p", p.mean()], ["qL", qL.mean()], ["qR", qR.mean()]])
    rep.check("cmd_prefers_qR", values["cmd4_p_qL"] > values["cmd4_p_qR"])
    rep.check("mmd_prefers_qL", values["mmd2_p_qL"] < values["mmd2_p_qR"])
    rep.check("cmd4_p_qL_in_[0.015,0.03]", 0.015 <= values["cmd4_p_qL"] <= 0.03)
    rep.check("mmd2_p_qR_in_[0.0008,0.0016]", 0.0008 <= values["mmd2_p_qR"] <= 0.0016)
    return rep


# ---------------------------------------------------------------- bounds demo

DEFAULT_SCALES = (0.0,) + tuple(np.geomspace(1e-4, 1.0, 9))


def bound_constant(m):
    return 2.0 * math.exp((3 * m - 1) / 2.0)


def bounds_demo(seed=0, m=3, grid=None, base_scale=0.5, quad=None):
    """L1 distance versus the moment bound for pairs of maxent densities.

    A random reference ``lam_p`` and a random unit direction ``u`` are drawn;
    for every scale ``s`` in ``grid`` both densities (``lam_p`` and
    ``lam_p + s u``) are refitted from their Legendre moments.  Each row
    reports ``||p - q||_L1``, ``||mu_p - mu_q||_1``, the right side
    ``sqrt(2C) ||mu_p - mu_q||_1`` (the within-family gap is zero), whether
    the precondition ``||mu_p - mu_q||_1 <= 1 / (2C(m+1))`` holds, and
    whether left <= right.
    """
    if not 2 <= m <= maxent.MAX_ORDER:
        raise InvalidArgument(f"m must lie in 2..{maxent.MAX_ORDER}")
    grid = DEFAULT_SCALES if grid is None else tuple(float(s) for s in grid)
    quad = quad or maxent.default_grid()
    rng = data.make_rng(seed)
    lam_p = base_scale * rng.standard_normal(m)
    u = rng.standard_normal(m)
    u /= np.linalg.norm(u)
    basis = maxent.LegendreBasis(m)
    C = bound_constant(m)
    limit = 1.0 / (2.0 * C * (m + 1))

    p = maxent.fit_maxent(maxent.MaxEntModel.from_lambda(lam_p, quad).moments(quad),
                          basis, grid=quad)
    mu_p = p.moments(quad)
    rep = Report("bounds-demo", seed)
    rows = []
    for s in grid:
        target = maxent.MaxEntModel.from_lambda(lam_p + s * u, quad).moments(quad)
        q = maxent.fit_maxent(target, basis, grid=quad)
        left = maxent.l1(p, q, quad)
        dmu = float(np.abs(mu_p - q.moments(quad)).sum())
        right = math.sqrt(2.0 * C) * dmu
        pre = dmu <= limit
        rows.append([s, left, dmu, right, pre, left <= right])
    rep.table("bounds", ["scale", "l1", "moment_diff", "right_side", "precondition",
                         "satisfied"], rows)
    rep.table("constants", ["name", "value"],
              [["m", m], ["C", C], ["precondition_limit", limit]])
    violated = [r[0] for r in rows if r[4] and not r[5]]
    rep.check("bound_holds_under_precondition", not violated, violated_scales=violated)
    rep.check("precondition_met_somewhere", any(r[4] for r in rows))
    rep.plot("l1_vs_moment_diff", [r[2] for r in rows], [r[1] for r in rows])
    return rep


def _bounds_demo(cfg):
    return bounds_demo(cfg.seed, cfg.knob("m", 3), cfg.knob("scales", None))


# ------------------------------------------------------------------- DIPALS

def _rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _dipals_synth(cfg):
    rep = Report("dipals-synth", cfg.seed)
    Xs, ys, Xt, yt = data.gen_dipals(cfg.seed, n=cfg.knob("n", 100), d=cfg.knob("d", 8))
    comps = cfg.knob("components", 3)
    rows, models = [], {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for mode in ("zero", "heuristic"):
            model = dipals.fit(Xs, ys, Xt, dipals.DiplsConfig(comps, mode))
            models[mode] = model
            rows.append([mode, _rmse(dipals.predict(model, Xs), ys),
                         _rmse(dipals.predict(model, Xt), yt),
                         abs(model.var_diff[0])])
    rep.table("rmse", ["gamma_mode", "source_rmse", "target_rmse", "var_diff_first"], rows)
    h = models["heuristic"]
    rep.table("components", ["component", "gamma", "var_diff"],
              [[i + 1, g, v] for i, (g, v) in enumerate(zip(h.gammas, h.var_diff))])
    for mode, model in models.items():
        norms = model.source_norms
        rep.check(f"{mode}_deflation_monotone", bool(np.all(np.diff(norms) <= 1e-9 * norms[0])))
        # first direction, before any deflation: |w' dC w| <= w' Lam w
        w = model.W[:, 0]
        S, T = Xs - Xs.mean(0), Xt - Xt.mean(0)
        dC = (S.T @ S - T.T @ T) / (len(S) - 1)
        bound = float(w @ dipals.lambda_matrix(S, T) @ w)
        rep.check(f"{mode}_regularizer_bound_first_direction",
                  abs(float(w @ dC @ w)) <= bound * (1 + 1e-12), var_diff=float(w @ dC @ w),
                  bound=bound)
    rep.plot("source_norms", np.arange(len(h.source_norms)), h.source_norms)
    return rep


# ------------------------------------------------------------------- ScITSM

def alignment_deviation(domains, model, smooth, smoothing=None):
    """Largest gap between a domain's transformed mean curve and the pooled one.

    Mean curves are smoothed with the same penalty used for fitting.
    """
    curves = np.stack([
        scitsm.smooth_curve(scitsm.transform_domain(dom, model, smoothing).mean(axis=0),
                            smooth)
        for dom in domains])
    return float(np.abs(curves - curves.mean(axis=0)).max()), curves


def _scitsm_synth(cfg):
    rep = Report("scitsm-synth", cfg.seed)
    k, noise = cfg.knob("k", 50), cfg.knob("noise", 0.1)
    smooth = cfg.knob("smooth", 10.0)
    domains = data.gen_multidomain_ts(cfg.seed, cfg.knob("domains", 4), k=k,
                                      d=cfg.knob("d", 2), t=cfg.knob("t", 60), noise=noise)
    model = scitsm.fit(domains, scitsm.CorrectionConfig(), smooth=smooth)
    dev, curves = alignment_deviation(domains, model, smooth)
    before = np.stack([scitsm.smooth_curve(d.data[:, 0].mean(axis=0), smooth)
                       for d in domains])
    tol = 3.0 * noise / math.sqrt(k)
    rep.table("alignment", ["quantity", "value"],
              [["max_deviation_before", float(np.abs(before - before.mean(0)).max())],
               ["max_deviation_after", dev], ["tolerance", tol],
               ["objective", model.objective], ["iterations", model.iterations]])
    rep.check("aligned_within_3_standard_errors", dev <= tol, deviation=dev, tolerance=tol)
    rep.check("solver_converged", model.converged)
    for i, curve in enumerate(curves):
        rep.plot(f"mean_curve_domain{i}", np.arange(len(curve)), curve)
    return rep


# -------------------------------------------------------------------- sweep

def parse_values(text):
    """``"1..7"`` (inclusive integer range) or a comma-separated list of numbers."""
    text = str(text).strip()
    match = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", text)
    if match:
        lo, hi = int(match.group(1)), int(match.group(2))
        if hi < lo:
            raise InvalidArgument(f"empty range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [float(v) if re.search(r"[.eE]", v) else int(v) for v in text.split(",")]
    except ValueError as exc:
        raise InvalidArgument(f"cannot parse values {text!r}") from exc


SWEEP_DEFAULTS = {"m": "1..7", "hidden": "5,10,15,20,30",
                  "lambda": ",".join(repr(float(v)) for v in np.geomspace(0.3, 3.0, 7))}


def _sweep(cfg):
    param = cfg.knob("param", "m")
    if param not in SWEEP_DEFAULTS:
        raise InvalidArgument(f"sweep parameter must be one of {sorted(SWEEP_DEFAULTS)}")
    values = parse_values(cfg.knob("values", SWEEP_DEFAULTS[param]))
    rep = Report("sweep", cfg.seed)
    toy = data.gen_toy(cfg.seed)
    rows = []
    for value in values:
        kw = {"m": {"order": int(value)}, "hidden": {"hidden_width": int(value)},
              "lambda": {"reg_weight": float(value)}}[param]
        res = toy_protocol(toy, cfg.seed, iters=cfg.knob("iters", 9000), **kw)
        rows.append([value, res["baseline_target_acc"], res["mann_target_acc"]])
    rep.table("sensitivity", [param, "baseline_target_acc", "mann_target_acc"], rows)
    accs = np.array([r[2] for r in rows])
    rep.table("summary", ["statistic", "value"],
              [["min", accs.min()], ["max", accs.max()], ["spread", accs.max() - accs.min()]])
    rep.plot(f"accuracy_vs_{param}", [r[0] for r in rows], accs)
    return rep


_RUNNERS = {"toy-mann": _toy_mann, "overpenalization": _overpenalization,
            "bounds-demo": _bounds_demo, "dipals-synth": _dipals_synth,
            "scitsm-synth": _scitsm_synth, "sweep": _sweep}


def run(config):
    """Run one experiment and write its report when ``out_dir`` is set."""
    report = _RUNNERS[config.experiment](config)
    if config.out_dir:
        report.write(config.out_dir)
    return report
