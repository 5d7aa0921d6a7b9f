"""Command-line interface: ``momentda <subcommand> ...``.

Data travel as CSV files (one observation per row), models and reports as
JSON.  Exit codes: 0 success, 1 failed experiment assertions, 2 invalid
input, 3 numerical failure.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import data, dipals, experiments, maxent, mann, metrics, scitsm
from .errors import (ConvergenceFailure, DegenerateComponentError, DivergenceError,
                     IllConditionedError, InvalidArgument, RankError)

EXIT_OK, EXIT_ASSERT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _emit(obj, path=None):
    text = json.dumps(experiments.jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidArgument(f"expected comma-separated numbers, got {text!r}") from exc


# ------------------------------------------------------------------ commands

def cmd_metrics(args):
    Xp, Xq = data.load_csv(args.x), data.load_csv(args.y)
    out = {"metric": args.metric}
    if args.normalize:
        both, (lo, hi) = maxent.minmax_scale(np.vstack([Xp, Xq]))
        Xp, Xq = both[:len(Xp)], both[len(Xp):]
        out["scaler"] = {"lo": lo, "hi": hi}
        args.range = args.range or (0.0, 1.0)
    if args.metric == "cmd":
        weights = (metrics.default_weights(args.range[0], args.range[1], args.m)
                   if args.range else None)
        terms = metrics.cmd_terms(Xp, Xq, args.m, weights, args.cross_variance)
        out.update(value=float(terms.sum()), per_term=terms)
    elif args.metric == "mmd":
        out.update(value=metrics.mmd_squared(Xp, Xq, metrics.KernelSpec.parse(args.kernel)),
                   per_term=[], kernel=args.kernel)
    elif args.metric == "coral":
        out.update(value=metrics.coral(Xp, Xq), per_term=[])
    else:
        out.update(value=metrics.l1_moment_distance(Xp, Xq, args.m), per_term=[])
    _emit(out)
    return EXIT_OK


def cmd_maxent(args):
    X = data.load_csv(args.data)
    if X.shape[1] != 1:
        raise InvalidArgument("maxent expects a single-column CSV")
    out = {}
    if args.normalize:
        X, (lo, hi) = maxent.minmax_scale(X)
        out["scaler"] = {"lo": lo, "hi": hi}
    basis = maxent.LegendreBasis(args.m)
    model = maxent.fit_maxent(maxent.empirical_legendre_moments(X, basis), basis,
                              tol=args.tol, max_iter=args.max_iter)
    out.update({"lambda": model.lam, "log_norm": model.log_norm,
                "entropy": model.entropy(), "fitted_moments": model.moments(),
                "iterations": model.iterations})
    _emit(out, args.out)
    return EXIT_OK


def _finish(report, out_dir):
    if out_dir:
        report.write(out_dir)
    sys.stdout.write(report.to_json())
    if not report.passed:
        sys.stderr.write(json.dumps({"failures": report.failures}) + "\n")
        return EXIT_ASSERT
    return EXIT_OK


def cmd_bounds_demo(args):
    scales = _floats(args.scales) if args.scales else None
    return _finish(experiments.bounds_demo(args.seed, args.m, scales), args.out)


def cmd_mann_train(args):
    X = data.load_csv(args.source)
    labels = data.load_labels(args.labels, args.classes)
    if len(labels) != len(X):
        raise InvalidArgument("labels and source differ in row count")
    source = mann.LabeledBatch(X, labels)
    target = data.load_csv(args.target) if args.target else None
    cfg = mann.TrainConfig(hidden_width=args.hidden, cmd_order=args.m,
                           reg_weight=args.reg_weight if target is not None else 0.0,
                           batch_size=args.batch_size, max_iters=args.iters,
                           optimizer=args.optimizer, learning_rate=args.lr,
                           rng_seed=args.seed)
    init = mann.NetParams.load(args.init) if args.init else None
    if target is None:
        params = mann.sgd_train(cfg, source, init)
    else:
        params = mann.train(cfg, source, target, init)
    params.save(args.out)
    summary = {"model": args.out, "source_accuracy": mann.accuracy(params, X, labels)}
    if target is not None:
        summary["hidden_cmd"] = mann.hidden_cmd(params, X, target, args.m)
    _emit(summary)
    return EXIT_OK


def cmd_mann_eval(args):
    params = mann.NetParams.load(args.model)
    X = data.load_csv(args.data)
    labels = data.load_labels(args.labels, params.shape[2])
    if len(labels) != len(X):
        raise InvalidArgument("labels and data differ in row count")
    _emit({"accuracy": mann.accuracy(params, X, labels), "n": len(X)})
    return EXIT_OK


def _vector(path):
    Y = data.load_csv(path)
    if Y.shape[1] != 1:
        raise InvalidArgument(f"{path} must have a single column")
    return Y[:, 0]


def cmd_dipals(args):
    Xp, Xq, y = data.load_csv(args.train), data.load_csv(args.target), _vector(args.y)
    config = dipals.DiplsConfig(args.components, dipals.DiplsConfig.parse_gamma(args.gamma))
    model = dipals.fit(Xp, y, Xq, config)
    model.save(args.out)
    report = {"model": args.out, "gammas": model.gammas, "var_diff": model.var_diff,
              "rmse_source": float(np.sqrt(np.mean((dipals.predict(model, Xp) - y) ** 2)))}
    if args.target_y:
        yt = _vector(args.target_y)
        report["rmse_target"] = float(np.sqrt(np.mean((dipals.predict(model, Xq) - yt) ** 2)))
    _emit(report)
    return EXIT_OK


def cmd_dipals_predict(args):
    model = dipals.DiplsModel.load(args.model)
    X = data.load_csv(args.data)
    pred = dipals.predict(model, X)
    if args.out:
        data.save_csv(args.out, pred, header=["prediction"])
    out = {"n": len(pred)}
    if args.y:
        out["rmse"] = float(np.sqrt(np.mean((pred - _vector(args.y)) ** 2)))
    if not args.out:
        out["predictions"] = pred
    _emit(out)
    return EXIT_OK


def load_domain_bundle(directory):
    """Domains described by ``<directory>/domains.json``.

    The file holds ``{"domains": [{"rho": [...], "files": ["f0.csv", ...]}, ...]}``
    with one (k, t) CSV per feature, rows being series and columns time steps.
    """
    with open(os.path.join(directory, "domains.json")) as fh:
        spec = json.load(fh)
    entries = spec.get("domains") if isinstance(spec, dict) else None
    if not entries:
        raise InvalidArgument("domains.json needs a non-empty 'domains' list")
    domains = []
    for entry in entries:
        feats = [data.load_csv(os.path.join(directory, f)) for f in entry["files"]]
        if len({f.shape for f in feats}) != 1:
            raise InvalidArgument("feature files of one domain must share their shape")
        domains.append(scitsm.DomainSeries(np.stack(feats, axis=1), entry["rho"]))
    return domains


def _smoothing(args):
    return scitsm.SmoothingConfig(gamma=args.gamma, u=args.u, channel=args.channel,
                                  weight_index=args.weight_index)


def cmd_scitsm_fit(args):
    domains = load_domain_bundle(args.directory)
    cfg = scitsm.CorrectionConfig(n_anchors=args.anchors, alpha=args.alpha, beta=args.beta,
                                  delta=args.delta, u=args.u,
                                  squared_data_term=args.squared_data_term,
                                  max_iter=args.max_iter)
    model = scitsm.fit(domains, cfg, smooth=args.smooth)
    model.save(args.out, _smoothing(args))
    _emit({"model": args.out, "objective": model.objective, "converged": model.converged,
           "iterations": model.iterations, "anchors": model.anchors})
    return EXIT_OK if model.converged else EXIT_NUMERIC


def cmd_scitsm_apply(args):
    model, smoothing = scitsm.CorrectionModel.load(args.model)
    feats = [data.load_csv(f) for f in args.files]
    if len({f.shape for f in feats}) != 1:
        raise InvalidArgument("feature files must share their shape")
    domain = scitsm.DomainSeries(np.stack(feats, axis=1), _floats(args.rho))
    out = scitsm.transform_domain(domain, model, smoothing)
    data.save_csv(args.out, out)
    _emit({"output": args.out, "series": out.shape[0], "length": out.shape[1]})
    return EXIT_OK


def cmd_gen(args):
    os.makedirs(args.out, exist_ok=True)
    path = lambda name: os.path.join(args.out, name)  # noqa: E731
    if args.kind == "toy":
        toy = data.gen_toy(args.seed, args.n or 213)
        data.save_csv(path("source.csv"), toy.source.inputs, ["x1", "x2"])
        data.save_csv(path("source_labels.csv"), toy.source.labels.argmax(1), ["label"])
        data.save_csv(path("target.csv"), toy.target, ["x1", "x2"])
        data.save_csv(path("target_labels.csv"), toy.target_labels, ["label"])
    elif args.kind == "overpenalization":
        for name, sample in zip(("p", "qL", "qR"),
                                data.gen_overpenalization(args.seed, args.n or 10**6)):
            data.save_csv(path(f"{name}.csv"), sample)
    elif args.kind == "dipals":
        Xs, ys, Xt, yt = data.gen_dipals(args.seed, n=args.n or 100)
        for name, arr in (("train", Xs), ("y", ys), ("target", Xt), ("target_y", yt)):
            data.save_csv(path(f"{name}.csv"), arr)
    else:
        domains = data.gen_multidomain_ts(args.seed, k=args.n or 50)
        entries = []
        for i, dom in enumerate(domains):
            files = []
            for f in range(dom.data.shape[1]):
                files.append(f"domain{i}_feature{f}.csv")
                data.save_csv(path(files[-1]), dom.data[:, f, :])
            entries.append({"rho": dom.rho.tolist(), "files": files})
        with open(path("domains.json"), "w") as fh:
            json.dump({"domains": entries}, fh, indent=2, sort_keys=True)
    _emit({"kind": args.kind, "seed": args.seed, "out": args.out})
    return EXIT_OK


def _parse_knobs(pairs):
    knobs = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise InvalidArgument(f"knob {pair!r} must look like name=value")
        try:
            knobs[key] = json.loads(value)
        except json.JSONDecodeError:
            knobs[key] = value
    return knobs


def cmd_run(args):
    knobs = _parse_knobs(args.knob)
    if args.param:
        knobs["param"] = args.param
    if args.values:
        knobs["values"] = args.values
    config = experiments.ExperimentConfig(args.experiment, args.seed, knobs)
    return _finish(experiments.run(config), args.out)


# -------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="momentda",
                                     description="Moment-based domain adaptation tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="distance between two samples")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--metric", choices=["cmd", "mmd", "coral", "l1"], default="cmd")
    p.add_argument("--m", type=int, default=metrics.DEFAULT_ORDER)
    p.add_argument("--range", type=float, nargs=2, metavar=("A", "B"),
                   help="support [A, B]; enables the weights |B-A|^-j")
    p.add_argument("--kernel", default="poly:2:1", help="linear, poly:DEG[:BIAS], gauss:SIGMA")
    p.add_argument("--cross-variance", action="store_true")
    p.add_argument("--normalize", action="store_true",
                   help="joint min-max scaling to [0, 1] first")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("maxent", help="maximum-entropy fit of a 1-column CSV")
    p.add_argument("data")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_maxent)

    p = sub.add_parser("bounds-demo", help="L1 distance versus moment bound")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scales", help="comma-separated perturbation sizes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds_demo)

    p = sub.add_parser("mann-train", help="train a network, optionally with CMD alignment")
    p.add_argument("--source", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--target")
    p.add_argument("--lambda", dest="reg_weight", type=float, default=1.0)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--hidden", type=int, default=15)
    p.add_argument("--optimizer", choices=["sgd", "adagrad", "adadelta"], default="adadelta")
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--classes", type=int)
    p.add_argument("--init", help="model JSON to start from")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mann_train)

    p = sub.add_parser("mann-eval", help="accuracy of a trained network")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_mann_eval)

    p = sub.add_parser("dipals", help="fit domain-invariant PLS")
    p.add_argument("--train", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--target-y", help="target responses, only used for reporting")
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--gamma", default="heuristic", help="value, 'heuristic' or 0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dipals)

    p = sub.add_parser("dipals-predict", help="apply a DIPALS model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--y")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dipals_predict)

    def smoothing_args(p):
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--u", type=int, default=2)
        p.add_argument("--channel", type=int, default=0)
        p.add_argument("--weight-index", choices=["rank", "element"], default="rank")

    p = sub.add_parser("scitsm-fit", help="fit time-series corrections")
    p.add_argument("directory", help="folder with domains.json and feature CSVs")
    p.add_argument("--anchors", type=int, default=10)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=0.9)
    p.add_argument("--smooth", type=float, default=10.0)
    p.add_argument("--squared-data-term", action="store_true")
    p.add_argument("--max-iter", type=int, default=5000)
    smoothing_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scitsm_fit)

    p = sub.add_parser("scitsm-apply", help="correct series of a new domain")
    p.add_argument("files", nargs="+", help="one (k, t) CSV per feature")
    p.add_argument("--model", required=True)
    p.add_argument("--rho", required=True, help="comma-separated parameters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scitsm_apply)

    p = sub.add_parser("gen", help="write a synthetic data set")
    p.add_argument("kind", choices=["toy", "overpenalization", "dipals", "multidomain"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="size knob (per class, sample size or series)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run an experiment and write its report")
    p.add_argument("experiment", choices=experiments.EXPERIMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", choices=sorted(experiments.SWEEP_DEFAULTS))
    p.add_argument("--values", help="'1..7' or a comma-separated list")
    p.add_argument("--knob", action="append", metavar="NAME=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (InvalidArgument, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (ConvergenceFailure, DivergenceError, IllConditionedError,
            DegenerateComponentError, RankError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
