"""Command-line entry point: ``amortclust <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import modelio, pipeline
from .features import FeatureExtractionError, FeatureSpec, read_features_csv, write_features_csv, extract_features
from .modelio import ModelFileError
from .network import affinity_matrix
from .partition import elbow_wcss, kmeans, kmedoids, louvain, spectral_cluster, ward_hierarchical
from .pipeline import ConfigError, DataError, ExperimentConfig, NumericError, PipelineError
from .scenarios import save_collection

log = logging.getLogger("amortclust")


def _common(p: argparse.ArgumentParser, config=True):
    if config:
        p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory")


def _experiment_overrides(p: argparse.ArgumentParser):
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--T", type=int, dest="T", help="series length")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--features", choices=("acf", "qaf"))
    p.add_argument("--model", help="model file to load (or write after training)")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amortclust", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated labeled collections (.npz)")
    _common(p)
    _experiment_overrides(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--stream", choices=("train", "eval"), default="eval")
    p.add_argument("--export-features", action="store_true", help="also write features CSVs")

    p = sub.add_parser("train", help="train an affinity network on simulated data")
    _common(p)
    _experiment_overrides(p)

    p = sub.add_parser("infer", help="affinity matrix CSV from a model and a features CSV")
    _common(p, config=False)
    p.add_argument("--model", required=True)
    p.add_argument("--features-csv", required=True)

    p = sub.add_parser("cluster", help="partition from an affinity or features CSV")
    _common(p, config=False)
    p.add_argument("--method", required=True, choices=pipeline.ALL_METHODS)
    p.add_argument("--k", type=int)
    p.add_argument("--affinity-csv")
    p.add_argument("--features-csv")
    p.add_argument("--model", help="with --features-csv, compute the affinity for spectral/louvain")
    p.add_argument("--restarts", type=int, default=200, help="K-means restarts")

    p = sub.add_parser("evaluate", help="full scenario experiment with ARI report")
    _common(p)
    _experiment_overrides(p)
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(pipeline.ALL_METHODS))
    p.add_argument("--no-true-k", action="store_true", help="give K-requiring methods the elbow suggestion instead of the true K")

    p = sub.add_parser("ingest", help="prices CSV -> log-returns CSV")
    _common(p, config=False)
    p.add_argument("--prices", required=True)

    p = sub.add_parser("app", help="cluster assets of a prices CSV")
    _common(p)
    _experiment_overrides(p)
    p.add_argument("--prices")
    p.add_argument("--k", type=int, help="number of clusters (skips the elbow)")
    p.add_argument("--elbow-rule", choices=("largest_drop", "knee"))

    p = sub.add_parser("elbow", help="WCSS curve and suggested K from a features CSV")
    _common(p, config=False)
    p.add_argument("--features-csv", required=True)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--rule", choices=("largest_drop", "knee"), default="knee")
    return ap


# ------------------------------------------------------------------ helpers

def _load_config(args) -> ExperimentConfig:
    raw = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.seed is not None:
        raw["seed"] = args.seed
    if raw.get("seed") is None:
        raise ConfigError("a master seed is required (--seed or \"seed\" in the config)")
    scen = dict(raw.get("scenario", {}))
    for flag, key in (("scenario", "scenario"), ("T", "T")):
        if getattr(args, flag, None) is not None:
            scen[key] = getattr(args, flag)
    if scen:
        raw["scenario"] = scen
    if getattr(args, "features", None):
        raw["features"] = (FeatureSpec.paper_qaf() if args.features == "qaf" else FeatureSpec()).to_dict()
    tr = dict(raw.get("train", {}))
    if getattr(args, "epochs", None) is not None:
        tr["epochs"] = args.epochs
    if tr:
        raw["train"] = tr
    for flag, key in (("n_train", "n_train"), ("n_eval", "n_eval"), ("model", "model_path"),
                      ("workers", "workers"), ("prices", "prices_csv"), ("k", "k_override"),
                      ("elbow_rule", "elbow_rule")):
        if getattr(args, flag, None) is not None:
            raw[key] = getattr(args, flag)
    if getattr(args, "methods", None):
        raw["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "no_true_k", False):
        raw["supply_true_k"] = False
    if args.out:
        raw["out_dir"] = args.out
    return ExperimentConfig.from_dict(raw)


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_seed(args) -> int:
    if args.seed is None:
        raise ConfigError("--seed is required")
    return args.seed


def _read_features(path):
    try:
        return read_features_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _load_model(path):
    try:
        return modelio.load_params(path)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except ModelFileError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _write_json(obj, path):
    Path(path).write_text(pipeline.dumps_report(obj))


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    stream = pipeline.TRAIN_STREAM if args.stream == "train" else pipeline.EVAL_STREAM
    for k in range(args.count):
        coll = pipeline.simulate_collection(cfg, stream, k)
        save_collection(coll, out / f"collection_{k:05d}.npz")
        if args.export_features:
            ds = extract_features(coll, cfg.features)
            write_features_csv(ds, out / f"features_{k:05d}.csv")
    _write_json({"config": cfg.echo(), "count": args.count, "stream": args.stream}, out / "simulate.json")
    print(f"wrote {args.count} collections to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    target = cfg.model_path or str(out / "model.ancl")
    cfg = dataclasses.replace(cfg, model_path=None, save_model=False)
    params, losses = pipeline.train_network(cfg)
    modelio.save_params(params, target)
    pipeline.write_training_summary(losses, out / "training.json")
    print(f"model written to {target}")
    return 0


def cmd_infer(args) -> int:
    out = _out_dir(args)
    params = _load_model(args.model)
    ds, ids = _read_features(args.features_csv)
    pipeline._check_layout(params, ds.spec)
    A = affinity_matrix(params, ds)
    pipeline.write_matrix_csv(A, out / "affinity.csv", ids)
    print(f"affinity matrix ({ds.n} x {ds.n}) written to {out / 'affinity.csv'}")
    return 0


def cmd_cluster(args) -> int:
    out = _out_dir(args)
    rng = np.random.default_rng(np.random.SeedSequence([_require_seed(args), pipeline.CLUSTER_STREAM]))
    A = ds = None
    if args.features_csv:
        ds, ids = _read_features(args.features_csv)
    if args.affinity_csv:
        try:
            A, ids = pipeline.read_matrix_csv(args.affinity_csv)
        except (OSError, ValueError, IndexError) as exc:
            raise DataError(f"cannot read affinity matrix {args.affinity_csv}: {exc}") from exc
    if args.method in pipeline.PROPOSED:
        if A is None:
            if ds is None or not args.model:
                raise ConfigError(f"--method {args.method} needs --affinity-csv, or --features-csv with --model")
            params = _load_model(args.model)
            pipeline._check_layout(params, ds.spec)
            A = affinity_matrix(params, ds)
    elif ds is None:
        raise ConfigError(f"--method {args.method} needs --features-csv")
    if args.method == "louvain":
        part = louvain(A, rng)
    else:
        if args.k is None:
            raise ConfigError(f"--method {args.method} needs --k")
        if args.method == "spectral":
            part = spectral_cluster(A, args.k, rng)
        elif args.method == "kmeans":
            part = kmeans(ds, args.k, args.restarts, rng)
        elif args.method == "kmedoids":
            part = kmedoids(ds, args.k, rng)
        else:
            part = ward_hierarchical(ds, args.k)
    with open(out / "partition.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cluster"])
        for i, lbl in zip(ids, part.labels):
            w.writerow([i, int(lbl)])
    print(f"{args.method}: {part.K} clusters over {part.n} series")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    report = pipeline.run_scenario_experiment(cfg, out)
    for m, s in report["summary"].items():
        print(f"{m:9s} mean ARI {s['mean']:.4f}  median {s['median']:.4f}")
    return 0


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    rm = pipeline.ingest_prices(args.prices)
    pipeline.write_returns_csv(rm, out / "returns.csv")
    print(f"{rm.returns.shape[0]} returns x {len(rm.assets)} assets written to {out / 'returns.csv'}")
    return 0


def cmd_app(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    report = pipeline.run_application(cfg, out)
    print(f"K = {report['K']} ({report['k_source']})")
    for c, members in report["clusters"].items():
        print(f"  cluster {c}: {' '.join(members)}")
    return 0


def cmd_elbow(args) -> int:
    out = _out_dir(args)
    ds, _ = _read_features(args.features_csv)
    rng = np.random.default_rng(np.random.SeedSequence([_require_seed(args), pipeline.CLUSTER_STREAM]))
    k_max = min(args.k_max, ds.n)
    wcss, K = elbow_wcss(ds, k_max, rng, rule=args.rule)
    pipeline.write_elbow_csv(wcss, out / "elbow.csv")
    _write_json({"wcss": wcss, "suggested_k": K, "rule": args.rule}, out / "elbow.json")
    print(f"suggested K = {K}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate, "train": cmd_train, "infer": cmd_infer, "cluster": cmd_cluster,
    "evaluate": cmd_evaluate, "ingest": cmd_ingest, "app": cmd_app, "elbow": cmd_elbow,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FeatureExtractionError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NumericError.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
