"""Batch command-line front end.

Subcommands: ``train`` (fit a reference model and write its JSON file),
``explain`` (fit an explanation for one instance), ``evaluate`` (run the
intrinsic test suite), ``compare`` (explain with both methods side by side).

Config precedence is flags > config file > defaults; the resolved config is
echoed verbatim into every JSON and SVG artifact together with the package
version.  CSV artifacts keep their bare tabular schema (their sibling JSON
carries the config).  Measured wall-clock seconds from the timing test go
into a separate ``timing_wallclock.json`` sidecar so that every primary
JSON report is byte-identical across reruns with the same config and seed.
"""

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    build_featurizer,
    featurize_records,
    load_dataset,
    make_synthetic_text_dataset,
)
from .errors import InvalidInputError, LipexError
from .evaluation import (
    ablation_flip_rate,
    jaccard_stability,
    reprediction_tracking,
    sanity_check,
    timing_comparison,
    tv_replication,
)
from .explainer import FitConfig, fit, top_k_features
from .lime import fit_lime_all_classes, lime_top_k
from .models import SubprocessModel, load_model, save_model, train_reference
from .pipeline import prepare_bundle
from .svgplot import render_curves, render_heatmap, render_histogram

ALL_TESTS = ("tv", "sanity", "ablation", "tracking", "jaccard", "timing")

DEFAULTS = {
    "format": "csv",
    "out": "lipex_out",
    "seed": None,  # resolved against LIPEX_SEED then 0
    "perturbations": 1000,
    "l2_penalty": 0.001,
    "learning_rate": 0.01,
    "batch_size": 128,
    "max_epochs": 200,
    "k": 5,
    "per_class_k": 5,
    "workers": None,
    "split_ratio": 0.5,
    # train
    "arch": "logistic-regression",
    "hidden_dim": 32,
    "epochs": 30,
    "train_lr": 0.5,
    # evaluate (defaults sized so the full suite finishes in minutes;
    # measured budget recorded in the README)
    "tests": ",".join(ALL_TESTS),
    "instances": 24,
    "delta_grid": "pi/16,pi/8,pi/4,pi/2",
    "sigma_grid": "0,0.1,0.25,0.5,1.0,2.0",
    "trials": 10,
    "rounds": 3,
    "lime_perturbations": None,
}

_PI_TERM = re.compile(r"^\s*(\d+(?:\.\d+)?)?\s*pi\s*(?:/\s*(\d+(?:\.\d+)?))?\s*$")


def parse_angle(token: str) -> float:
    """Accepts plain floats and pi expressions like 'pi/16' or '7pi/30'."""
    m = _PI_TERM.match(token)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    try:
        return float(token)
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse angle {token!r}") from exc


def parse_grid(text: str) -> list:
    return [parse_angle(tok) for tok in str(text).split(",") if tok.strip()]


def _parse_synthetic_spec(spec: str) -> dict:
    params = {"n": 150, "classes": 4, "vocab": 160, "kw": 8, "words": 30}
    if spec and spec != "default":
        for part in spec.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key not in params:
                raise InvalidInputError(f"unknown synthetic parameter {key!r}")
            params[key] = int(value)
    return params


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipex",
        description="Explanation matrices for black-box classifiers",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_dataset=True):
        if need_dataset:
            p.add_argument("--dataset", required=True,
                           help="dataset path (or a synthetic spec with --format synthetic)")
            p.add_argument("--format", default=None,
                           choices=["csv", "jsonl", "segment-manifest-dir", "synthetic"])
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None, help="JSON file of option defaults")
        p.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)

    def model_source(p):
        p.add_argument("--model", default=None, help="model JSON file")
        p.add_argument("--subprocess-cmd", dest="subprocess_cmd", default=None,
                       help="command for an external model speaking the stdio protocol")

    def fit_flags(p):
        p.add_argument("--perturbations", type=int, default=None)
        p.add_argument("--lambda", dest="l2_penalty", type=float, default=None)
        p.add_argument("--lr", dest="learning_rate", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
        p.add_argument("--per-class-k", dest="per_class_k", type=int, default=None)

    p_train = sub.add_parser("train", help="train a reference model")
    common(p_train)
    p_train.add_argument("--arch", default=None,
                         choices=["logistic-regression", "relu-mlp"])
    p_train.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--train-lr", dest="train_lr", type=float, default=None)

    p_explain = sub.add_parser("explain", help="explain one instance")
    common(p_explain)
    model_source(p_explain)
    fit_flags(p_explain)
    p_explain.add_argument("--instance-index", dest="instance_index", type=int,
                           default=None, help="index into the eval split")
    p_explain.add_argument("--text", default=None, help="raw text instance")
    p_explain.add_argument("--k", type=int, default=None,
                           help="restrict CSV/heatmap to the top-k features")
    p_explain.add_argument("--lime", action="store_true",
                           help="also fit the baseline")
    p_explain.add_argument("--heatmap", action="store_true",
                           help="write an SVG heatmap")
    p_explain.add_argument("--lime-perturbations", dest="lime_perturbations",
                           type=int, default=None)

    p_eval = sub.add_parser("evaluate", help="run the evaluation suite")
    common(p_eval)
    model_source(p_eval)
    fit_flags(p_eval)
    p_eval.add_argument("--tests", default=None,
                        help=f"comma list from {{{','.join(ALL_TESTS)}}}")
    p_eval.add_argument("--instances", type=int, default=None)
    p_eval.add_argument("--k", type=int, default=None)
    p_eval.add_argument("--delta-grid", dest="delta_grid", default=None)
    p_eval.add_argument("--sigma-grid", dest="sigma_grid", default=None)
    p_eval.add_argument("--trials", type=int, default=None)
    p_eval.add_argument("--rounds", type=int, default=None)
    p_eval.add_argument("--workers", type=int, default=None)
    p_eval.add_argument("--lime-perturbations", dest="lime_perturbations",
                        type=int, default=None)

    p_cmp = sub.add_parser("compare", help="explain with both methods side by side")
    common(p_cmp)
    model_source(p_cmp)
    fit_flags(p_cmp)
    p_cmp.add_argument("--instance-index", dest="instance_index", type=int, default=None)
    p_cmp.add_argument("--text", default=None)
    p_cmp.add_argument("--k", type=int, default=None)
    p_cmp.add_argument("--heatmap", action="store_true")
    p_cmp.add_argument("--lime-perturbations", dest="lime_perturbations",
                       type=int, default=None)
    return parser


def _resolve_config(args) -> dict:
    """flags > config file > defaults, with LIPEX_SEED as the seed fallback."""
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
    resolved = {"command": args.command, "version": __version__}
    for key, value in vars(args).items():
        if key in ("config",):
            continue
        if value is None and key in file_values:
            value = file_values[key]
        if value is None and key in DEFAULTS:
            value = DEFAULTS[key]
        resolved[key] = value
    if resolved.get("seed") is None:
        resolved["seed"] = int(os.environ.get("LIPEX_SEED", "0"))
    if resolved.get("format") is None:
        resolved["format"] = DEFAULTS["format"]
    return resolved


def _load_data(cfg):
    if cfg["format"] == "synthetic":
        params = _parse_synthetic_spec(cfg["dataset"])
        return make_synthetic_text_dataset(
            n_per_class=params["n"], n_classes=params["classes"],
            vocab_size=params["vocab"], keywords_per_class=params["kw"],
            words_per_doc=params["words"], split_ratio=cfg["split_ratio"],
            seed=cfg["seed"],
        )
    return load_dataset(cfg["dataset"], cfg["format"], cfg["split_ratio"], cfg["seed"])


def _load_model_source(cfg):
    """Returns (model, featurizer, closer)."""
    if cfg.get("subprocess_cmd"):
        model = SubprocessModel(cfg["subprocess_cmd"])
        return model, None, model.close
    if not cfg.get("model"):
        raise InvalidInputError("need --model or --subprocess-cmd")
    model, featurizer = load_model(cfg["model"])
    return model, featurizer, lambda: None


def _fit_config(cfg) -> FitConfig:
    return FitConfig(
        learning_rate=float(cfg["learning_rate"]),
        l2_penalty=float(cfg["l2_penalty"]),
        batch_size=int(cfg["batch_size"]),
        n_perturbations=int(cfg["perturbations"]),
        max_epochs=int(cfg["max_epochs"]),
        seed=int(cfg["seed"]),
    )


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict, cfg: dict) -> None:
    doc = {"version": __version__, "config": _public_config(cfg), **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _public_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def _write_svg(path: Path, svg: str, cfg: dict) -> None:
    stamp = json.dumps({"version": __version__, "config": _public_config(cfg)},
                       sort_keys=True)
    svg = svg.replace("</svg>", f"<desc>{stamp}</desc></svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


def cmd_train(cfg) -> int:
    dataset = _load_data(cfg)
    featurizer = build_featurizer(dataset.train_records())
    X, labels = featurize_records(dataset.train_records(), featurizer)
    model = train_reference(
        X, labels,
        arch=cfg["arch"], class_labels=dataset.class_labels,
        hidden_dim=int(cfg["hidden_dim"]), learning_rate=float(cfg["train_lr"]),
        epochs=int(cfg["epochs"]), seed=int(cfg["seed"]),
    )

    def accuracy(records):
        if not records:
            return None
        Xs, ys = featurize_records(records, featurizer)
        P = model.predict_proba(Xs)
        pred = [model.class_labels[i] for i in P.argmax(axis=1)]
        return float(sum(p == y for p, y in zip(pred, ys)) / len(ys))

    train_acc = accuracy(dataset.train_records())
    eval_acc = accuracy(dataset.eval_records())
    out = _out_dir(cfg)
    model_path = out / "model.json"
    save_model(model, model_path, featurizer)
    _write_json(out / "train_report.json", {
        "model_file": model_path.name,
        "model_fingerprint": model.fingerprint(),
        "train_accuracy": train_acc,
        "eval_accuracy": eval_acc,
        "final_cross_entropy": model.training_history[-1],
    }, cfg)
    print(f"wrote {model_path}")
    print(f"train accuracy: {train_acc:.4f}")
    print(f"eval accuracy: {eval_acc:.4f}" if eval_acc is not None else "eval split empty")
    return 0


def _pick_instance(cfg, dataset_needed=True):
    if cfg.get("text"):
        return cfg["text"]
    if cfg.get("instance_index") is None:
        raise InvalidInputError("need --text or --instance-index")
    dataset = _load_data(cfg)
    records = dataset.eval_records()
    idx = int(cfg["instance_index"])
    if not (0 <= idx < len(records)):
        raise InvalidInputError(
            f"instance index {idx} out of range (eval split has {len(records)})"
        )
    return records[idx][0]


def _explain_once(cfg, with_lime: bool):
    model, featurizer, closer = _load_model_source(cfg)
    try:
        instance = _pick_instance(cfg)
        fit_cfg = _fit_config(cfg)
        bundle = prepare_bundle(
            model, instance, featurizer,
            n_perturbations=fit_cfg.n_perturbations,
            seed=fit_cfg.seed, per_class_k=int(cfg["per_class_k"]),
        )
        expl = fit(bundle, fit_cfg)
        lime_expl = None
        if with_lime:
            lime_expl = fit_lime_all_classes(
                bundle, n_perturbations=cfg.get("lime_perturbations")
            )
        return bundle, expl, lime_expl
    finally:
        closer()


def _heatmap_for(bundle, expl, k=None):
    """Rows ordered by descending predicted class probability."""
    probs = bundle.instance_probs()
    order = sorted(range(len(probs)), key=lambda c: -probs[c])
    if k is not None:
        names = top_k_features(expl, int(order[0]), min(k, expl.n_features)) \
            if expl.method == "lipex" else lime_top_k(expl, int(order[0]), k)
        cols = [expl.feature_names.index(n) for n in names]
    else:
        cols = list(range(expl.n_features))
    matrix = expl.weights[np.ix_(order, cols)] if cols else expl.weights[order]
    row_labels = [f"{expl.class_labels[c]} ({probs[c]:.3f})" for c in order]
    col_labels = [expl.feature_names[j] for j in cols]
    return matrix, row_labels, col_labels


def cmd_explain(cfg) -> int:
    bundle, expl, lime_expl = _explain_once(cfg, with_lime=bool(cfg.get("lime")))
    out = _out_dir(cfg)
    k = cfg.get("k")
    subset = None
    if k is not None:
        k = min(int(k), expl.n_features)
        subset = top_k_features(expl, bundle.predicted_class(), k)
    _write_json(out / "explanation.json", expl.to_json_dict(), cfg)
    (out / "explanation.csv").write_text(expl.to_csv(subset), encoding="utf-8")
    if lime_expl is not None:
        _write_json(out / "lime.json", lime_expl.to_json_dict(), cfg)
        lime_subset = None
        if k is not None:
            lime_subset = lime_top_k(lime_expl, bundle.predicted_class(), k)
        (out / "lime.csv").write_text(lime_expl.to_csv(lime_subset), encoding="utf-8")
    if cfg.get("heatmap"):
        matrix, rows, cols = _heatmap_for(bundle, expl, k)
        _write_svg(out / "heatmap.svg",
                   render_heatmap(matrix, rows, cols, title="explanation matrix"), cfg)
    print(f"wrote explanation artifacts to {out}")
    return 0


def cmd_compare(cfg) -> int:
    bundle, expl, lime_expl = _explain_once(cfg, with_lime=True)
    out = _out_dir(cfg)
    k = int(cfg["k"]) if cfg.get("k") is not None else min(5, expl.n_features)
    k = min(k, expl.n_features)
    predicted = bundle.predicted_class()
    lipex_list = top_k_features(expl, predicted, k)
    lime_list = lime_top_k(lime_expl, predicted, k)
    overlap = set(lipex_list) & set(lime_list)
    union = set(lipex_list) | set(lime_list)
    _write_json(out / "lipex.json", expl.to_json_dict(), cfg)
    _write_json(out / "lime.json", lime_expl.to_json_dict(), cfg)
    (out / "lipex.csv").write_text(expl.to_csv(), encoding="utf-8")
    (out / "lime.csv").write_text(lime_expl.to_csv(), encoding="utf-8")
    _write_json(out / "comparison.json", {
        "k": k,
        "predicted_class": expl.class_labels[predicted],
        "lipex_top_k": lipex_list,
        "lime_top_k": lime_list,
        "jaccard": (len(overlap) / len(union)) if union else 1.0,
    }, cfg)
    if cfg.get("heatmap"):
        matrix, rows, cols = _heatmap_for(bundle, expl, k)
        _write_svg(out / "lipex_heatmap.svg",
                   render_heatmap(matrix, rows, cols, title="explanation matrix"), cfg)
    print(f"wrote comparison artifacts to {out}")
    return 0


def cmd_evaluate(cfg) -> int:
    tests = [t.strip() for t in str(cfg["tests"]).split(",") if t.strip()]
    unknown = [t for t in tests if t not in ALL_TESTS]
    if unknown:
        raise InvalidInputError(f"unknown tests: {unknown}")
    model, featurizer, closer = _load_model_source(cfg)
    out = _out_dir(cfg)
    failures = {}
    artifacts = []
    try:
        dataset = _load_data(cfg)
        instances = [raw for raw, _ in dataset.eval_records()][: int(cfg["instances"])]
        fit_cfg = _fit_config(cfg)
        seed = int(cfg["seed"])
        workers = cfg.get("workers") or os.cpu_count() or 1
        k = int(cfg["k"])
        rounds = int(cfg["rounds"])
        lime_n = cfg.get("lime_perturbations")
        lime_n = int(lime_n) if lime_n is not None else None

        def emit(name, report, svg=None):
            _write_json(out / f"{name}.json", report.to_json_dict(), cfg)
            (out / f"{name}.csv").write_text(report.to_csv(), encoding="utf-8")
            artifacts.extend([f"{name}.json", f"{name}.csv"])
            if svg is not None:
                _write_svg(out / f"{name}.svg", svg, cfg)
                artifacts.append(f"{name}.svg")

        for test in tests:
            try:
                if test == "tv":
                    rep = tv_replication(
                        model, instances, featurizer, fit_config=fit_cfg,
                        per_class_k=int(cfg["per_class_k"]), seed=seed,
                        workers=workers,
                    )
                    hist = rep.aggregates["histogram"]
                    emit("tv", rep, render_histogram(
                        hist["counts"], hist["edges"],
                        title="surrogate vs model: total variation",
                        xlabel="TV distance"))
                elif test == "sanity":
                    rep = sanity_check(
                        model, instances, featurizer,
                        sigma_grid=parse_grid(cfg["sigma_grid"]),
                        trials=int(cfg["trials"]), fit_config=fit_cfg,
                        per_class_k=int(cfg["per_class_k"]), seed=seed,
                        workers=workers,
                    )
                    emit("sanity", rep, render_curves(
                        rep.aggregates["sigma_grid"],
                        {"model drift": rep.aggregates["model_drift"],
                         "surrogate drift": rep.aggregates["lipex_drift"]},
                        title="last-layer noise sanity check",
                        xlabel="sigma", ylabel="mean TV from original"))
                elif test == "ablation":
                    reps = {}
                    for method in ("lipex", "lime"):
                        reps[method] = ablation_flip_rate(
                            model, instances, featurizer, method=method,
                            ks=range(1, k + 1), rounds=rounds, fit_config=fit_cfg,
                            lime_perturbations=lime_n,
                            per_class_k=int(cfg["per_class_k"]), seed=seed,
                            workers=workers,
                        )
                        emit(f"ablation_{method}", reps[method])
                    ks = reps["lipex"].aggregates["ks"]
                    _write_svg(out / "ablation.svg", render_curves(
                        ks,
                        {m: [reps[m].aggregates[f"flip_rate_k{kk}"] for kk in ks]
                         for m in ("lipex", "lime")},
                        title="prediction flip rate under top-K removal",
                        xlabel="K", ylabel="flip rate"), cfg)
                    artifacts.append("ablation.svg")
                elif test == "tracking":
                    rep = reprediction_tracking(
                        model, instances, featurizer, ks=range(1, k + 1),
                        rounds=rounds, fit_config=fit_cfg,
                        per_class_k=int(cfg["per_class_k"]), seed=seed,
                        workers=workers,
                    )
                    ks = rep.aggregates["ks"]
                    emit("tracking", rep, render_curves(
                        ks, {"match rate": [rep.aggregates[f"match_rate_k{kk}"] for kk in ks]},
                        title="model vs surrogate re-prediction agreement",
                        xlabel="K", ylabel="match rate"))
                elif test == "jaccard":
                    rep = jaccard_stability(
                        model, instances, featurizer,
                        deltas=parse_grid(cfg["delta_grid"]), k=k,
                        fit_config=fit_cfg, lime_perturbations=lime_n,
                        per_class_k=int(cfg["per_class_k"]), seed=seed,
                        workers=workers,
                    )
                    emit("jaccard", rep, render_curves(
                        rep.aggregates["deltas"],
                        {"lipex self": rep.aggregates["j_lipex"],
                         "lime self": rep.aggregates["j_lime"],
                         "lipex vs lime": rep.aggregates["j_cross"]},
                        title="top-k stability under angle restriction",
                        xlabel="delta (radians)", ylabel="Jaccard index"))
                elif test == "timing":
                    rep = timing_comparison(
                        model, instances, featurizer, fit_config=fit_cfg,
                        lime_perturbations=lime_n,
                        per_class_k=int(cfg["per_class_k"]), seed=seed,
                    )
                    emit("timing", rep)
                    with open(out / "timing_wallclock.json", "w", encoding="utf-8") as fh:
                        json.dump(rep.volatile, fh, indent=2, sort_keys=True)
                        fh.write("\n")
                    artifacts.append("timing_wallclock.json")
            except LipexError as exc:
                failures[test] = str(exc)
                print(f"[{test}] failed: {exc}", file=sys.stderr)
    finally:
        closer()
    _write_json(out / "run.json", {
        "artifacts": sorted(artifacts),
        "failures": failures,
        "tests": tests,
    }, cfg)
    print(f"wrote {len(artifacts)} artifacts to {out}"
          + (f"; {len(failures)} test(s) failed" if failures else ""))
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    cfg = _resolve_config(args)
    handlers = {
        "train": cmd_train,
        "explain": cmd_explain,
        "evaluate": cmd_evaluate,
        "compare": cmd_compare,
    }
    try:
        return handlers[cfg["command"]](cfg)
    except LipexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
