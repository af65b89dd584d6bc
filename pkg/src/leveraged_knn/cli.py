"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or domain error, 3 I/O error.
Every flag can also come from an INI file given with ``--config``: keys
go in a section named after the subcommand (``[train]``, ``[repro ripley]``)
or in ``[common]``, spelled like the flag without its leading dashes.
Flags on the command line override the file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path


from . import serialization as ser
from .classify import FilterSpec, filter_model, predict_classic, predict_leveraged
from .dataset import gen_blobs, gen_ripley, load_csv, minmax_normalize, save_csv
from .errors import DomainError
from .evaluation import cross_validate, evaluate, evaluate_prototypes, margin_stats
from .neighbors import BACKENDS, build_graph, load_graph, save_graph
from .unn import ORACLES, SMOOTHING, SMOOTHING_SCALE, TrainConfig, check_theorem2, train

log = logging.getLogger("leveraged_knn")

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 1, 2, 3
RIPLEY_K, MULTICLASS_K = 9, 11
BLOB_SPREAD = 0.45
SWEEP_FORMAT = "leveraged-knn-sweep"
CV_FORMAT = "leveraged-knn-cv"
META_FORMAT = "leveraged-knn-data-meta"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """ArgumentParser whose errors exit with the usage code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dashed(choices):
    return [c.replace("_", "-") for c in choices]


def _default_threads():
    return os.cpu_count() or 1


# -- argument groups -----------------------------------------------------


def _add_data(p, required_name="--data"):
    p.add_argument(required_name, help="input CSV (header row, one label column)")
    p.add_argument("--label-column", default="label", help="name of the label column (default: %(default)s)")


def _add_knn(p):
    p.add_argument("--k", type=int, default=None,
                   help=f"neighbors (default: {RIPLEY_K} for 2 classes, {MULTICLASS_K} otherwise)")
    p.add_argument("--backend", choices=BACKENDS, default="exhaustive",
                   help="neighbor search backend (default: %(default)s)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: available cores)")


def _add_train(p):
    p.add_argument("--loss", choices=["exp", "squared", "logistic"], default="exp",
                   help="surrogate loss (default: %(default)s)")
    p.add_argument("--iters", type=int, default=None,
                   help="iterations per class (default: number of training examples)")
    p.add_argument("--oracle", choices=_dashed(ORACLES), default="boosting",
                   help="index-choosing oracle (default: %(default)s)")
    p.add_argument("--smoothing", choices=_dashed(SMOOTHING), default="on-zero",
                   help="when to add 1/m to the partial weight sums (default: %(default)s)")
    p.add_argument("--smoothing-scale", choices=_dashed(SMOOTHING_SCALE), default="absolute",
                   help="smoothing mass: absolute 1/m, or scaled by the mean weight (default: %(default)s)")
    p.add_argument("--exact-delta", action="store_true",
                   help="solve each step by 1-D root finding instead of the closed form")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--normalize", action="store_true",
                   help="min-max scale features to [0, 1] using the training set")


def _add_filter(p, default_alpha_tilde=None):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--theta", type=float, default=None,
                   help="keep the top ceil(theta*m) prototypes by squared alpha row norm")
    g.add_argument("--alpha-tilde", type=float, default=default_alpha_tilde,
                   help="keep prototypes with some alpha_jc above this value"
                   + (" (default: %(default)s)" if default_alpha_tilde is not None else ""))
    p.add_argument("--per-class-filter", action="store_true",
                   help="select a separate prototype pool for every class")
    p.add_argument("--exclude-nonpositive", action="store_true",
                   help="in fraction mode, skip prototypes whose alpha has no positive entry")


def build_parser():
    parser = Parser(prog="leveraged-knn", description="Boosted leveraged k-NN classification.")
    parser.add_argument("--config", help="INI file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    leaves = {}

    gen = sub.add_parser("gen", help="generate synthetic data")
    gsub = gen.add_subparsers(dest="generator", metavar="GENERATOR")
    gsub.required = True
    p = gsub.add_parser("ripley", help="two-class Ripley mixture (train and test CSVs)",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--train", type=int, default=250, help="training points")
    p.add_argument("--test", type=int, default=1000, help="test points")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--prefix", default="ripley", help="file name prefix")
    leaves["gen ripley"] = p
    p = gsub.add_parser("blobs", help="overlapping Gaussian blobs, one CSV",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--classes", type=int, default=8, help="number of classes")
    p.add_argument("--per-class", type=int, default=100, help="points per class")
    p.add_argument("--dim", type=int, default=16, help="feature dimension")
    p.add_argument("--spread", type=float, default=BLOB_SPREAD, help="blob standard deviation")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--prefix", default="blobs", help="file name prefix")
    leaves["gen blobs"] = p

    p = sub.add_parser("graph", help="build and cache the leave-self-out neighbor graph")
    _add_data(p)
    _add_knn(p)
    p.add_argument("--normalize", action="store_true", help="min-max scale features first")
    p.add_argument("--out", help="graph JSON to write")
    leaves["graph"] = p

    p = sub.add_parser("train", help="fit leveraging coefficients")
    _add_data(p)
    _add_knn(p)
    _add_train(p)
    p.add_argument("--graph", help="graph cache: reused when it matches, written otherwise")
    p.add_argument("--model", help="model JSON to write")
    p.add_argument("--diagnostics", help="diagnostics CSV (default: <model>.diag.csv)")
    leaves["train"] = p

    p = sub.add_parser("filter", help="keep a subset of a model's prototypes")
    p.add_argument("--model", help="input model JSON")
    p.add_argument("--out", help="filtered model JSON to write")
    _add_filter(p)
    leaves["filter"] = p

    p = sub.add_parser("predict", help="label the rows of a CSV")
    p.add_argument("--model", help="model JSON")
    _add_data(p)
    p.add_argument("--mode", choices=["leveraged", "classic"], default="leveraged",
                   help="leveraged vote or plain majority over the prototypes (default: %(default)s)")
    _add_knn(p)
    p.add_argument("--out", help="predictions CSV to write")
    p.add_argument("--contributions", help="per-neighbor vote CSV to write (leveraged mode)")
    leaves["predict"] = p

    p = sub.add_parser("eval", help="error, confusion matrix and mAP on a labeled CSV")
    p.add_argument("--model", help="model JSON")
    _add_data(p)
    p.add_argument("--mode", choices=["leveraged", "classic"], default="leveraged",
                   help="leveraged vote or plain majority over the prototypes (default: %(default)s)")
    _add_knn(p)
    p.add_argument("--margins", action="store_true", help="add normalized-margin statistics on --data")
    p.add_argument("--out", help="report JSON to write")
    leaves["eval"] = p

    p = sub.add_parser("cv", help="k-fold protocol: train on one fold, test on the rest")
    _add_data(p)
    _add_knn(p)
    _add_train(p)
    _add_filter(p, default_alpha_tilde=0.0)
    p.add_argument("--folds", type=int, default=3, help="number of folds (default: %(default)s)")
    p.add_argument("--out", help="report JSON to write")
    p.add_argument("--traces", help="per-fold CSV to write")
    leaves["cv"] = p

    rep = sub.add_parser("repro", help="end-to-end experiment recipes")
    rsub = rep.add_subparsers(dest="recipe", metavar="RECIPE")
    rsub.required = True
    p = rsub.add_parser("ripley", help="gen, train, filter sweep over theta, eval sweep over k",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--train", type=int, default=250, help="training points")
    p.add_argument("--test", type=int, default=1000, help="test points")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--thetas", default="0.25,0.5,0.75,1", help="comma-separated filter fractions")
    p.add_argument("--ks", default="1,3,5,7,9,11,13,15", help="comma-separated neighbor counts")
    p.add_argument("--loss", choices=["exp", "squared", "logistic"], default="exp", help="surrogate loss")
    p.add_argument("--oracle", choices=_dashed(ORACLES), default="boosting", help="index-choosing oracle")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    p.add_argument("--out-dir", default="ripley_repro", help="output directory")
    leaves["repro ripley"] = p
    return parser, leaves


# -- config file ---------------------------------------------------------


def _apply_config(path, leaves):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    known = set(leaves) | {"common"}
    for section in cp.sections():
        if section not in known:
            raise UsageError(f"config file {path}: unknown section [{section}]")
    for name, p in leaves.items():
        actions = {a.dest: a for a in p._actions if a.dest != "help"}
        values = {}
        for section in ("common", name):
            if not cp.has_section(section):
                continue
            for key, raw in cp.items(section):
                dest = key.replace("-", "_")
                if dest not in actions:
                    if section == "common":
                        continue
                    raise UsageError(f"config file {path}: [{section}] has unknown key {key!r}")
                values[dest] = _convert(actions[dest], raw, section, key)
        if values:
            p.set_defaults(**values)
    # keys in [common] must be meaningful for at least one subcommand
    if cp.has_section("common"):
        every = {a.dest for p in leaves.values() for a in p._actions}
        for key in cp.options("common"):
            if key.replace("-", "_") not in every:
                raise UsageError(f"config file {path}: [common] has unknown key {key!r}")


def _convert(action, raw, section, key):
    if isinstance(action, argparse._StoreTrueAction):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    value = raw.strip()
    if action.type is not None:
        try:
            value = action.type(value)
        except ValueError:
            raise UsageError(f"[{section}] {key}: invalid value {raw!r}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"[{section}] {key}: {value!r} not in {list(action.choices)}")
    return value


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(f"--{n}" for n in missing))


# -- helpers ---------------------------------------------------------------


def _k_for(args, C):
    if args.k is not None:
        if args.k < 1:
            raise DomainError(f"k must be >= 1, got {args.k}")
        return args.k
    return RIPLEY_K if C == 2 else MULTICLASS_K


def _threads(args):
    t = getattr(args, "threads", None)
    return _default_threads() if t is None else max(1, t)


def _train_config(args, k):
    return TrainConfig(
        loss=args.loss, k=k, T=args.iters, oracle=args.oracle, smoothing=args.smoothing,
        exact_delta=args.exact_delta, smoothing_scale=args.smoothing_scale, seed=args.seed,
        threads=_threads(args),
    )


def _filter_spec(args):
    kw = {"per_class": args.per_class_filter, "exclude_nonpositive": args.exclude_nonpositive}
    if args.theta is not None:
        return FilterSpec.fraction(args.theta, **kw)
    if args.alpha_tilde is not None:
        return FilterSpec.threshold(args.alpha_tilde, **kw)
    raise UsageError("give --theta or --alpha-tilde")


def _load_for_model(args, model):
    data = load_csv(args.data, args.label_column, class_names=model.class_names)
    bounds = model.prototypes.meta.get("minmax")
    if bounds is not None:
        data = minmax_normalize(data, bounds)
    return data


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _mkdir(path):
    Path(path).mkdir(parents=True, exist_ok=True)
    return Path(path)


def _report_table(rep):
    rows = [[rep["mode"], rep["n_prototypes"], rep["n_queries"], rep["error_rate"], rep["mAP"], rep["ties"]]]
    return ser.text_table(["mode", "prototypes", "queries", "error", "mAP", "ties"], rows)


# -- subcommands ---------------------------------------------------------------


def cmd_gen(args):
    out = _mkdir(args.out_dir)
    if args.generator == "ripley":
        tr, te = gen_ripley(args.train, args.test, args.seed)
        files = {"train": out / f"{args.prefix}_train.csv", "test": out / f"{args.prefix}_test.csv"}
        save_csv(tr, files["train"])
        save_csv(te, files["test"])
        params = {"train": args.train, "test": args.test}
    else:
        ds = gen_blobs(args.classes, args.per_class, args.dim, args.spread, args.seed)
        files = {"data": out / f"{args.prefix}.csv"}
        save_csv(ds, files["data"])
        params = {"classes": args.classes, "per_class": args.per_class, "dim": args.dim,
                  "spread": args.spread}
    meta = {"format": META_FORMAT, "version": 1, "generator": args.generator,
            "parameters": params, "seed": args.seed,
            "files": {k: v.name for k, v in files.items()}}
    _write_json(out / f"{args.prefix}.meta.json", meta)
    for f in files.values():
        print(f"wrote {f}")
    return EXIT_OK


def _load_training(args):
    ds = load_csv(args.data, args.label_column)
    if args.normalize:
        ds = minmax_normalize(ds)
    return ds


def cmd_graph(args):
    _require(args, "data", "out")
    ds = _load_training(args)
    k = _k_for(args, ds.C)
    g = build_graph(ds, k, backend=args.backend, threads=_threads(args))
    save_graph(g, ds, args.out)
    print(f"graph over {ds.m} examples with k={g.k} written to {args.out}")
    return EXIT_OK


def cmd_train(args):
    _require(args, "data", "model")
    ds = _load_training(args)
    k = _k_for(args, ds.C)
    cfg = _train_config(args, k)
    graph = None
    if args.graph and Path(args.graph).exists():
        graph = load_graph(args.graph, ds, k)
        log.info("reusing graph cache %s", args.graph)
    if graph is None:
        graph = build_graph(ds, k, backend=args.backend, threads=cfg.threads)
        if args.graph:
            save_graph(graph, ds, args.graph)
    model, diag = train(ds, graph, cfg)
    ser.save_model(model, args.model)
    diag_path = args.diagnostics or str(Path(args.model).with_suffix("")) + ".diag.csv"
    ser.save_diagnostics(diag, diag_path)
    t2 = check_theorem2(diag)
    rows = [[ds.class_names[tr.c], tr.iterations, tr.surrogate[0], tr.surrogate[-1], tr.risk01[-1]]
            for tr in diag.traces]
    print(ser.text_table(["class", "iters", "surrogate0", "surrogate", "risk01"], rows))
    print(f"model written to {args.model}; diagnostics to {diag_path}")
    print(f"risk bound check: {'ok' if t2.ok else f'{len(t2.violations)} violations'}")
    return EXIT_OK


def cmd_filter(args):
    _require(args, "model", "out")
    spec = _filter_spec(args)
    model = ser.load_model(args.model)
    kept = filter_model(model, spec)
    ser.save_model(kept, args.out)
    print(f"retained {kept.m} of {model.m} prototypes")
    return EXIT_OK


def cmd_predict(args):
    _require(args, "model", "data", "out")
    model = ser.load_model(args.model)
    data = _load_for_model(args, model)
    threads = _threads(args)
    if args.mode == "classic":
        pred = predict_classic(data.X, model.prototypes, args.k or model.k,
                               backend=args.backend, threads=threads)
    else:
        if args.k is not None:
            model = dataclasses.replace(model, k=args.k)
        want = bool(args.contributions) and model.class_pools is None
        pred = predict_leveraged(data.X, model, contributions=want, backend=args.backend, threads=threads)
        if args.contributions:
            if not want:
                raise DomainError("contributions are not available for per-class filtered models")
            ser.save_contributions(pred, model, args.contributions)
    ser.save_predictions(pred, model.class_names, args.out)
    print(f"{data.m} predictions written to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    _require(args, "model", "data")
    model = ser.load_model(args.model)
    data = _load_for_model(args, model)
    if args.mode == "leveraged" and args.k is not None:
        model = dataclasses.replace(model, k=args.k)
    rep = evaluate(model, data, args.mode, k=args.k, backend=args.backend, threads=_threads(args)).to_dict()
    if args.margins:
        ms = margin_stats(model, data, exclude_self=False)
        ms.pop("normalized_edges")
        rep["margins"] = ms
    print(_report_table(rep))
    if args.out:
        ser.save_report(rep, args.out, "eval")
    return EXIT_OK


def cmd_cv(args):
    _require(args, "data")
    ds = _load_training(args)
    k = _k_for(args, ds.C)
    cfg = _train_config(args, k)
    rep = cross_validate(ds, args.folds, cfg, _filter_spec(args), seed=args.seed, backend=args.backend)
    rows = [[f["fold"], f["theta"], f["unn"]["mAP"], f["knn"]["mAP"], f["knn_sampled"]["mAP"]]
            for f in rep.folds]
    s = rep.summary
    rows.append(["mean", s["theta"], s["unn_mAP"], s["knn_mAP"], s["knn_sampled_mAP"]])
    print(ser.text_table(["fold", "theta", "unn_mAP", "knn_mAP", "knn_sampled_mAP"], rows))
    if args.out:
        ser.save_report(rep.to_dict(), args.out, "cv")
    if args.traces:
        header = ["fold", "theta", "unn_mAP", "unn_error", "knn_mAP", "knn_error",
                  "knn_sampled_mAP", "knn_sampled_error", "train_surrogate"]
        ser.write_table(args.traces, CV_FORMAT, header, (
            [f["fold"], f["theta"], f["unn"]["mAP"], f["unn"]["error_rate"], f["knn"]["mAP"],
             f["knn"]["error_rate"], f["knn_sampled"]["mAP"], f["knn_sampled"]["error_rate"],
             f["train_surrogate"]] for f in rep.folds))
    return EXIT_OK


def _floats(text, what, cast=float):
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def cmd_repro_ripley(args):
    thetas = _floats(args.thetas, "thetas")
    ks = _floats(args.ks, "ks", int)
    out = _mkdir(args.out_dir)
    tr, te = gen_ripley(args.train, args.test, args.seed)
    save_csv(tr, out / "ripley_train.csv")
    save_csv(te, out / "ripley_test.csv")
    threads = _threads(args)
    sweep, summary = [], {}
    for k in ks:
        cfg = TrainConfig(loss=args.loss, k=k, oracle=args.oracle, seed=args.seed, threads=threads)
        graph = build_graph(tr, k)
        model, diag = train(tr, graph, cfg)
        ser.save_diagnostics(diag, out / f"diagnostics_k{k}.csv")
        knn = evaluate_prototypes(tr, te, model.k).error_rate
        for theta in thetas:
            kept = filter_model(model, FilterSpec.fraction(theta))
            err = evaluate(kept, te).error_rate
            sweep.append([k, theta, kept.m, err, knn])
        summary[str(k)] = {"knn_error": knn, "theorem2_ok": check_theorem2(diag).ok}
    header = ["k", "theta", "prototypes", "unn_error", "knn_error"]
    ser.write_table(out / "sweep.csv", SWEEP_FORMAT, header, sweep)
    ser.save_report({"seed": args.seed, "train": args.train, "test": args.test,
                     "per_k": summary, "sweep": [dict(zip(header, r)) for r in sweep]},
                    out / "report.json", "repro-ripley")
    print(ser.text_table(header, sweep))
    print(f"traces written to {out}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen, "graph": cmd_graph, "train": cmd_train, "filter": cmd_filter,
    "predict": cmd_predict, "eval": cmd_eval, "cv": cmd_cv, "repro": cmd_repro_ripley,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, leaves = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            _apply_config(known.config, leaves)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"leveraged-knn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"leveraged-knn: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"leveraged-knn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
