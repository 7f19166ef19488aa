"""Intrinsic evaluation harness: distribution replication, noise sanity
check, top-K ablation, re-prediction tracking, angle-restricted stability,
and the wall-clock comparison against the baseline.

Every experiment returns an :class:`ExperimentReport` whose aggregates are
recomputable from the per-instance records and whose randomized quantities
all trace back to pre-assigned child seeds, so a report is bit-reproducible
from its config snapshot.  Instances are independent work items and may be
processed by a thread pool; the timing comparison always runs single-worker
to keep wall clocks comparable.  Wall-clock measurements live in
``report.volatile``, which is excluded from the report's deterministic JSON.
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .distributions import total_variation_rows
from .errors import FitDivergenceError, InvalidInputError
from .explainer import FitConfig, fit, surrogate_probs, top_k_features
from .lime import (
    build_lime_data,
    default_budget,
    fit_lime_from_data,
    lime_top_k,
)
from .models import DistortionConfig, distort_last_layer
from .perturbation import materialize
from .pipeline import prepare_bundle
from .seeding import child_seed
from .selection import select

_TAG = {"tv": 1, "sanity": 2, "ablation": 3, "tracking": 4, "jaccard": 5, "timing": 6}


def _py(obj):
    """Recursively convert numpy scalars/arrays so JSON stays canonical."""
    if isinstance(obj, dict):
        return {str(k): _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class ExperimentReport:
    """One experiment's full record: config snapshot, per-instance data,
    aggregates, and a flat table for the CSV mirror."""

    experiment: str
    config: dict
    per_instance: list
    aggregates: dict
    table_columns: list = field(default_factory=list)
    table_rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    volatile: dict = None  # wall-clock measurements; never serialized here

    def to_json_dict(self) -> dict:
        return _py({
            "experiment": self.experiment,
            "config": self.config,
            "per_instance": self.per_instance,
            "aggregates": self.aggregates,
            "table": {"columns": self.table_columns, "rows": self.table_rows},
            "failures": self.failures,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = [",".join(str(c) for c in self.table_columns)]
        for row in self.table_rows:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        return "\n".join(lines) + "\n"

    def write(self, json_path, csv_path=None) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")
        if csv_path is not None:
            with open(csv_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_csv())


def _map_ordered(fn, items, workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _instance_seeds(seed, tag, n):
    return [child_seed(seed, _TAG[tag], 0, i) for i in range(n)]


def _round_chunks(n_items, rounds, seed, tag):
    """Disjoint near-equal instance groups for mean/std over repeat rounds."""
    order = np.random.default_rng(child_seed(seed, _TAG[tag], 99)).permutation(n_items)
    return [chunk.tolist() for chunk in np.array_split(order, rounds)]


def _damaged_bits(vocab, names) -> np.ndarray:
    bits = np.ones(len(vocab), dtype=np.uint8)
    for name in names:
        bits[vocab.unit_index[name]] = 0
    return bits


def _jaccard(a, b) -> float:
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def tv_replication(model, instances, featurizer=None, *, fit_config=FitConfig(),
                   per_class_k: int = 5, seed: int = 0, bins: int = 20,
                   workers: int = 1) -> ExperimentReport:
    """Fit one explanation per instance and histogram the total variation
    between the black box and the surrogate at the instance itself."""
    if len(instances) == 0:
        raise InvalidInputError("need at least one instance")
    seeds = _instance_seeds(seed, "tv", len(instances))
    failures = []

    def run_one(args):
        i, inst = args
        try:
            bundle = prepare_bundle(
                model, inst, featurizer,
                n_perturbations=fit_config.n_perturbations,
                seed=seeds[i], per_class_k=per_class_k,
            )
            expl = fit(bundle, fit_config)
            ones = np.ones(bundle.feats.size)
            tv = float(total_variation_rows(
                surrogate_probs(expl.weights, ones),
                bundle.instance_probs()[None, :],
            )[0])
            return {"instance": i, "seed": seeds[i], "tv": tv,
                    "n_features": bundle.feats.size}
        except FitDivergenceError as exc:
            return {"instance": i, "seed": seeds[i], "error": str(exc)}

    records = _map_ordered(run_one, list(enumerate(instances)), workers)
    values = [r["tv"] for r in records if "tv" in r]
    failures = [r for r in records if "error" in r]
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    values_arr = np.asarray(values)
    aggregates = {
        "count": len(values),
        "median_tv": float(np.median(values_arr)) if values else None,
        "mean_tv": float(values_arr.mean()) if values else None,
        "fraction_below_0.1": float(np.mean(values_arr < 0.1)) if values else None,
        "fraction_below_0.2": float(np.mean(values_arr < 0.2)) if values else None,
        "diverged": len(failures),
        "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
    }
    table_rows = [
        [float(edges[b]), float(edges[b + 1]), int(counts[b])] for b in range(bins)
    ]
    return ExperimentReport(
        experiment="tv_replication",
        config={"fit": fit_config.to_dict(), "per_class_k": per_class_k,
                "seed": seed, "bins": bins, "n_instances": len(instances),
                "model": model.fingerprint()},
        per_instance=records,
        aggregates=aggregates,
        table_columns=["bin_left", "bin_right", "count"],
        table_rows=table_rows,
        failures=failures,
    )


def sanity_check(model, instances, featurizer=None, *, sigma_grid, trials: int = 20,
                 fit_config=FitConfig(), per_class_k: int = 5, seed: int = 0,
                 workers: int = 1) -> ExperimentReport:
    """Distort the model's last layer at increasing noise levels and track,
    per level, the mean drift of the model's output and of the refitted
    surrogate's output from their undistorted values."""
    sigma_grid = [float(s) for s in sigma_grid]
    seeds = _instance_seeds(seed, "sanity", len(instances))

    def build_one(args):
        i, inst = args
        bundle = prepare_bundle(
            model, inst, featurizer,
            n_perturbations=fit_config.n_perturbations,
            seed=seeds[i], per_class_k=per_class_k,
        )
        expl = fit(bundle, fit_config)
        ones = np.ones(bundle.feats.size)
        return bundle, surrogate_probs(expl.weights, ones)[0]

    prepared = _map_ordered(build_one, list(enumerate(instances)), workers)

    records = []
    for si, sigma in enumerate(sigma_grid):
        for t in range(trials):
            dseed = child_seed(seed, _TAG["sanity"], 1, si, t)
            distorted = distort_last_layer(model, DistortionConfig(sigma, dseed))

            def drift_one(item):
                bundle, orig_out = item
                dprobs = distorted.predict_proba(
                    np.asarray(bundle.materialized, dtype=np.float64)
                )
                model_drift = float(total_variation_rows(
                    bundle.instance_probs()[None, :], dprobs[0][None, :])[0])
                dexpl = fit(bundle.with_probs(dprobs), fit_config)
                ones = np.ones(bundle.feats.size)
                new_out = surrogate_probs(dexpl.weights, ones)[0]
                lipex_drift = float(total_variation_rows(
                    orig_out[None, :], new_out[None, :])[0])
                return model_drift, lipex_drift

            drifts = _map_ordered(drift_one, prepared, workers)
            records.append({
                "sigma": sigma, "trial": t, "noise_seed": dseed,
                "model_drift": float(np.mean([d[0] for d in drifts])),
                "lipex_drift": float(np.mean([d[1] for d in drifts])),
            })

    model_curve = [
        float(np.mean([r["model_drift"] for r in records if r["sigma"] == s]))
        for s in sigma_grid
    ]
    lipex_curve = [
        float(np.mean([r["lipex_drift"] for r in records if r["sigma"] == s]))
        for s in sigma_grid
    ]
    if len(sigma_grid) >= 2 and np.std(model_curve) > 0 and np.std(lipex_curve) > 0:
        rho = float(spearmanr(model_curve, lipex_curve).statistic)
    else:
        rho = None
    aggregates = {
        "sigma_grid": sigma_grid,
        "model_drift": model_curve,
        "lipex_drift": lipex_curve,
        "spearman": rho,
        "trials": trials,
    }
    table_rows = [
        [sigma_grid[i], model_curve[i], lipex_curve[i]] for i in range(len(sigma_grid))
    ]
    return ExperimentReport(
        experiment="sanity_check",
        config={"fit": fit_config.to_dict(), "per_class_k": per_class_k,
                "seed": seed, "sigma_grid": sigma_grid, "trials": trials,
                "n_instances": len(instances), "model": model.fingerprint()},
        per_instance=records,
        aggregates=aggregates,
        table_columns=["sigma", "model_drift", "lipex_drift"],
        table_rows=table_rows,
    )


def _explanation_for(bundle, method, fit_config, lime_perturbations,
                     kernel_width, ridge_penalty, lime_seed):
    if method == "lipex":
        expl = fit(bundle, fit_config)
        return expl, lambda c, k: top_k_features(expl, c, k)
    if method == "lime":
        data = build_lime_data(bundle, lime_perturbations, seed=lime_seed)
        expl = fit_lime_from_data(bundle, data, kernel_width, ridge_penalty)
        return expl, lambda c, k: lime_top_k(expl, c, k)
    raise InvalidInputError(f"unknown method {method!r}")


def ablation_flip_rate(model, instances, featurizer=None, *, method: str = "lipex",
                       ks=(1, 2, 3, 4, 5), rounds: int = 3, fit_config=FitConfig(),
                       lime_perturbations: int = None, kernel_width: float = None,
                       ridge_penalty: float = 1.0, per_class_k: int = 5,
                       seed: int = 0, workers: int = 1) -> ExperimentReport:
    """Fraction of instances whose top-1 prediction flips when the method's
    top-K features are removed from the data, reported mean +/- std over
    disjoint rounds of the instance set."""
    ks = [int(k) for k in ks]
    seeds = _instance_seeds(seed, "ablation", len(instances))

    def run_one(args):
        i, inst = args
        bundle = prepare_bundle(
            model, inst, featurizer,
            n_perturbations=fit_config.n_perturbations,
            seed=seeds[i], per_class_k=per_class_k,
        )
        predicted = bundle.predicted_class()
        _, top_k_fn = _explanation_for(
            bundle, method, fit_config, lime_perturbations,
            kernel_width, ridge_penalty, child_seed(seeds[i], 1),
        )
        flips = {}
        for k in ks:
            if k > bundle.feats.size:
                flips[str(k)] = None  # skipped: not enough selected features
                continue
            if k == 0:
                flips[str(k)] = False
                continue
            removed = top_k_fn(predicted, k)
            bits = _damaged_bits(bundle.vocab, removed)
            x = materialize(bundle.vocab, bits, featurizer)
            new = model.predict_proba(np.asarray(x, dtype=np.float64))[0]
            flips[str(k)] = bool(int(np.argmax(new)) != predicted)
        return {"instance": i, "seed": seeds[i], "predicted": predicted,
                "n_features": bundle.feats.size, "flips": flips}

    records = _map_ordered(run_one, list(enumerate(instances)), workers)
    chunks = _round_chunks(len(instances), rounds, seed, "ablation")
    per_round = []
    for chunk in chunks:
        rates = {}
        for k in ks:
            vals = [records[i]["flips"][str(k)] for i in chunk
                    if records[i]["flips"][str(k)] is not None]
            rates[str(k)] = float(np.mean(vals)) if vals else None
        per_round.append(rates)
    aggregates = {"method": method, "ks": ks, "rounds": rounds, "per_round": per_round}
    table_rows = []
    for k in ks:
        vals = [r[str(k)] for r in per_round if r[str(k)] is not None]
        mean = float(np.mean(vals)) if vals else None
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        skipped = sum(1 for rec in records if rec["flips"][str(k)] is None)
        aggregates[f"flip_rate_k{k}"] = mean
        table_rows.append([k, mean, std, skipped])
    return ExperimentReport(
        experiment=f"ablation_flip_rate[{method}]",
        config={"fit": fit_config.to_dict(), "method": method, "ks": ks,
                "rounds": rounds, "per_class_k": per_class_k, "seed": seed,
                "lime_perturbations": lime_perturbations,
                "kernel_width": kernel_width, "n_instances": len(instances),
                "model": model.fingerprint()},
        per_instance=records,
        aggregates=aggregates,
        table_columns=["K", "mean_flip_rate", "std", "skipped"],
        table_rows=table_rows,
    )


def reprediction_tracking(model, instances, featurizer=None, *, ks=(1, 2, 3, 4, 5),
                          rounds: int = 3, fit_config=FitConfig(),
                          per_class_k: int = 5, seed: int = 0,
                          workers: int = 1) -> ExperimentReport:
    """After removing the explanation's top-K features, does the model's new
    argmax agree with the surrogate's new argmax?  The original matrix is
    applied to the damaged reduced vector; no refit happens on damaged data."""
    ks = [int(k) for k in ks]
    seeds = _instance_seeds(seed, "tracking", len(instances))

    def run_one(args):
        i, inst = args
        bundle = prepare_bundle(
            model, inst, featurizer,
            n_perturbations=fit_config.n_perturbations,
            seed=seeds[i], per_class_k=per_class_k,
        )
        predicted = bundle.predicted_class()
        expl = fit(bundle, fit_config)
        matches = {}
        for k in ks:
            if k > bundle.feats.size:
                matches[str(k)] = None
                continue
            removed = top_k_features(expl, predicted, k) if k > 0 else []
            bits = _damaged_bits(bundle.vocab, removed)
            x = materialize(bundle.vocab, bits, featurizer)
            model_new = model.predict_proba(np.asarray(x, dtype=np.float64))[0]
            z = select(bits, bundle.feats)
            surrogate_new = surrogate_probs(expl.weights, z.astype(np.float64))[0]
            matches[str(k)] = bool(
                int(np.argmax(model_new)) == int(np.argmax(surrogate_new))
            )
        return {"instance": i, "seed": seeds[i], "predicted": predicted,
                "n_features": bundle.feats.size, "matches": matches}

    records = _map_ordered(run_one, list(enumerate(instances)), workers)
    chunks = _round_chunks(len(instances), rounds, seed, "tracking")
    per_round = []
    for chunk in chunks:
        rates = {}
        for k in ks:
            vals = [records[i]["matches"][str(k)] for i in chunk
                    if records[i]["matches"][str(k)] is not None]
            rates[str(k)] = float(np.mean(vals)) if vals else None
        per_round.append(rates)
    aggregates = {"ks": ks, "rounds": rounds, "per_round": per_round}
    table_rows = []
    for k in ks:
        vals = [r[str(k)] for r in per_round if r[str(k)] is not None]
        mean = float(np.mean(vals)) if vals else None
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        aggregates[f"match_rate_k{k}"] = mean
        table_rows.append([k, mean, std])
    return ExperimentReport(
        experiment="reprediction_tracking",
        config={"fit": fit_config.to_dict(), "ks": ks, "rounds": rounds,
                "per_class_k": per_class_k, "seed": seed,
                "n_instances": len(instances), "model": model.fingerprint()},
        per_instance=records,
        aggregates=aggregates,
        table_columns=["K", "mean_match_rate", "std"],
        table_rows=table_rows,
    )


def jaccard_stability(model, instances, featurizer=None, *, deltas, k: int = 5,
                      fit_config=FitConfig(), lime_perturbations: int = None,
                      kernel_width: float = None, ridge_penalty: float = 1.0,
                      per_class_k: int = 5, seed: int = 0,
                      workers: int = 1) -> ExperimentReport:
    """Stability of top-k feature lists when perturbations are restricted to
    a maximum angle from the all-ones vector.

    Reference lists use the full budgets; each delta keeps only the sampled
    perturbations within that angle (so the surviving count shrinks with
    delta) and refits both methods on the survivors with the feature set
    held fixed.  Three curves are averaged over instances: the two
    self-Jaccards and the cross-method Jaccard against the reference
    baseline list.
    """
    deltas = [float(d) for d in deltas]
    if any(not (0.0 < d <= np.pi / 2) for d in deltas):
        raise InvalidInputError("every delta must lie in (0, pi/2]")
    seeds = _instance_seeds(seed, "jaccard", len(instances))

    def run_one(args):
        i, inst = args
        bundle = prepare_bundle(
            model, inst, featurizer,
            n_perturbations=fit_config.n_perturbations,
            seed=seeds[i], per_class_k=per_class_k,
        )
        if k > bundle.feats.size:
            return {"instance": i, "seed": seeds[i], "skipped": True}
        predicted = bundle.predicted_class()
        ref_expl = fit(bundle, fit_config)
        ref_lipex = top_k_features(ref_expl, predicted, k)
        lime_data = build_lime_data(
            bundle, lime_perturbations, seed=child_seed(seeds[i], 1)
        )
        ref_lime_expl = fit_lime_from_data(
            bundle, lime_data, kernel_width, ridge_penalty
        )
        ref_lime = lime_top_k(ref_lime_expl, predicted, k)
        by_delta = {}
        for delta in deltas:
            rb = bundle.restrict(delta)
            rd = lime_data.restrict(delta)
            if rb.perturbations.count <= 1 or rd.pset.count <= 1:
                by_delta[repr(delta)] = {
                    "unfittable": True,
                    "lipex_count": rb.perturbations.count,
                    "lime_count": rd.pset.count,
                }
                continue
            d_expl = fit(rb, fit_config)
            d_lipex = top_k_features(d_expl, predicted, k)
            d_lime_expl = fit_lime_from_data(bundle, rd, kernel_width, ridge_penalty)
            d_lime = lime_top_k(d_lime_expl, predicted, k)
            by_delta[repr(delta)] = {
                "lipex_count": rb.perturbations.count,
                "lime_count": rd.pset.count,
                "j_lipex": _jaccard(d_lipex, ref_lipex),
                "j_lime": _jaccard(d_lime, ref_lime),
                "j_cross": _jaccard(d_lipex, ref_lime),
            }
        return {"instance": i, "seed": seeds[i], "predicted": predicted,
                "ref_lipex": ref_lipex, "ref_lime": ref_lime,
                "j_ref_cross": _jaccard(ref_lipex, ref_lime),
                "by_delta": by_delta}

    records = _map_ordered(run_one, list(enumerate(instances)), workers)
    usable = [r for r in records if not r.get("skipped")]
    curves = {"j_lipex": [], "j_lime": [], "j_cross": []}
    counts = {"lipex": [], "lime": [], "unfittable": []}
    for delta in deltas:
        key = repr(float(delta))
        cells = [r["by_delta"][key] for r in usable]
        fitted = [c for c in cells if not c.get("unfittable")]
        for name in ("j_lipex", "j_lime", "j_cross"):
            vals = [c[name] for c in fitted]
            curves[name].append(float(np.mean(vals)) if vals else None)
        counts["lipex"].append(float(np.mean([c["lipex_count"] for c in cells])))
        counts["lime"].append(float(np.mean([c["lime_count"] for c in cells])))
        counts["unfittable"].append(len(cells) - len(fitted))
    aggregates = {
        "deltas": deltas,
        "k": k,
        "j_lipex": curves["j_lipex"],
        "j_lime": curves["j_lime"],
        "j_cross": curves["j_cross"],
        "mean_restricted_counts": counts,
        "skipped_instances": len(records) - len(usable),
    }
    table_rows = [
        [deltas[i], curves["j_lipex"][i], curves["j_lime"][i], curves["j_cross"][i],
         counts["lipex"][i], counts["lime"][i]]
        for i in range(len(deltas))
    ]
    return ExperimentReport(
        experiment="jaccard_stability",
        config={"fit": fit_config.to_dict(), "deltas": deltas, "k": k,
                "per_class_k": per_class_k, "seed": seed,
                "lime_perturbations": lime_perturbations,
                "kernel_width": kernel_width, "n_instances": len(instances),
                "model": model.fingerprint()},
        per_instance=records,
        aggregates=aggregates,
        table_columns=["delta", "j_lipex", "j_lime", "j_cross",
                       "mean_lipex_count", "mean_lime_count"],
        table_rows=table_rows,
    )


def timing_comparison(model, instances, featurizer=None, *, fit_config=FitConfig(),
                      lime_perturbations: int = None, kernel_width: float = None,
                      ridge_penalty: float = 1.0, per_class_k: int = 5,
                      seed: int = 0) -> ExperimentReport:
    """Mean wall-clock per instance for the full matrix-fit pipeline versus
    the all-class baseline, black-box inference counted inside each arm.

    The deterministic report carries the budgets and exact inference-call
    counts; measured seconds go into ``report.volatile`` because wall clocks
    are machine facts, not functions of the seed.
    """
    seeds = _instance_seeds(seed, "timing", len(instances))
    lipex_budget = fit_config.n_perturbations
    records, seconds = [], []
    for i, inst in enumerate(instances):
        t0 = time.perf_counter()
        bundle = None
        lipex_calls = 0
        if lipex_budget > 0:
            bundle = prepare_bundle(
                model, inst, featurizer,
                n_perturbations=lipex_budget,
                seed=seeds[i], per_class_k=per_class_k,
            )
            fit(bundle, fit_config)
            lipex_calls = bundle.perturbations.count
        t1 = time.perf_counter()

        lime_budget = lime_perturbations
        if lime_budget is None:
            if bundle is not None:
                lime_budget = default_budget(bundle.vocab.modality)
            else:
                lime_budget = 0
        if lime_budget > 0 and bundle is None:
            raise InvalidInputError(
                "the baseline arm needs the shared feature selection; "
                "give the matrix arm a positive perturbation budget"
            )
        t2 = time.perf_counter()
        lime_calls = 0
        if lime_budget > 0:
            data = build_lime_data(bundle, lime_budget, seed=child_seed(seeds[i], 1))
            fit_lime_from_data(bundle, data, kernel_width, ridge_penalty)
            lime_calls = data.pset.count
        t3 = time.perf_counter()

        records.append({"instance": i, "seed": seeds[i],
                        "lipex_calls": lipex_calls, "lime_calls": lime_calls})
        seconds.append({"instance": i, "lipex_seconds": t1 - t0,
                        "lime_seconds": t3 - t2})

    aggregates = {
        "lipex_budget": lipex_budget,
        "lime_budget": lime_perturbations,
        "lipex_calls_per_instance": (
            float(np.mean([r["lipex_calls"] for r in records])) if records else 0.0
        ),
        "lime_calls_per_instance": (
            float(np.mean([r["lime_calls"] for r in records])) if records else 0.0
        ),
        "n_instances": len(instances),
    }
    volatile = {
        "per_instance": seconds,
        "lipex_mean_seconds": (
            float(np.mean([s["lipex_seconds"] for s in seconds])) if seconds else 0.0
        ),
        "lime_mean_seconds": (
            float(np.mean([s["lime_seconds"] for s in seconds])) if seconds else 0.0
        ),
    }
    table_rows = [
        ["lipex", aggregates["lipex_calls_per_instance"]],
        ["lime", aggregates["lime_calls_per_instance"]],
    ]
    return ExperimentReport(
        experiment="timing_comparison",
        config={"fit": fit_config.to_dict(), "per_class_k": per_class_k,
                "seed": seed, "lime_perturbations": lime_perturbations,
                "n_instances": len(instances), "model": model.fingerprint()},
        per_instance=records,
        aggregates=aggregates,
        table_columns=["method", "inference_calls_per_instance"],
        table_rows=table_rows,
        volatile=volatile,
    )
