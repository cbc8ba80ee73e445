"""
End-to-end experiments: simulate -> features -> train -> affinities ->
partitions -> ARI report, and the stock-returns application.

All randomness derives from the master seed through independent
``SeedSequence([seed, stream, index])`` streams, so a report is a pure
function of its config.  Wall-clock timings are written to a separate
file to keep ``report.json`` byte-reproducible.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import modelio
from .features import FeatureDataset, FeatureExtractionError, FeatureSpec, extract_features, write_features_csv
from .metrics import ari, compare_methods, summarize
from .network import NetworkParams, TrainConfig, affinity_matrix, train
from .partition import elbow_wcss, kmeans, kmedoids, louvain, spectral_cluster, ward_hierarchical
from .scenarios import LabeledCollection, ScenarioConfig, generate

log = logging.getLogger(__name__)

PROPOSED = ("spectral", "louvain")
BASELINES = ("kmeans", "kmedoids", "ward")
ALL_METHODS = PROPOSED + BASELINES

# independent random streams under one master seed
TRAIN_STREAM, EVAL_STREAM, CLUSTER_STREAM, NET_STREAM = 0, 1, 2, 3


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 2


class DataError(PipelineError):
    exit_code = 3


class NumericError(PipelineError):
    exit_code = 4


class StageError(PipelineError):
    def __init__(self, stage, index, cause):
        super().__init__(f"stage {stage!r} failed on dataset {index}: {cause}")
        self.stage, self.index, self.cause = stage, index, cause
        self.exit_code = getattr(cause, "exit_code", 4 if isinstance(cause, FloatingPointError) else 3)

    def __reduce__(self):
        return type(self), (self.stage, self.index, self.cause)


def stream_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


def _seed_int(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, np.uint64)[0])


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    """Everything a scenario experiment or the application run needs.

    Desk-scale defaults: 2000 training collections replayed for 10 epochs,
    200 evaluation collections.
    """

    seed: int
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    features: FeatureSpec = field(default_factory=FeatureSpec)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))
    n_train: int = 2000
    n_eval: int = 200
    methods: tuple[str, ...] = ALL_METHODS
    supply_true_k: bool = True
    kmeans_restarts: int = 200
    model_path: str | None = None
    save_model: bool = True
    out_dir: str | None = None
    workers: int = 1
    # application only
    prices_csv: str | None = None
    k_override: int | None = None
    elbow_k_max: int = 8
    elbow_rule: str = "knee"

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("a master seed is required")
        self.seed = int(self.seed)
        self.methods = tuple(self.methods)
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if self.elbow_rule not in ("largest_drop", "knee"):
            raise ConfigError(f"unknown elbow rule {self.elbow_rule!r}")
        if self.n_eval < 0 or self.n_train < 0:
            raise ConfigError("n_train and n_eval must be nonnegative")
        if self.needs_network and self.model_path and not Path(self.model_path).exists() and self.n_train == 0:
            raise ConfigError(f"model file {self.model_path} does not exist")

    @property
    def needs_network(self) -> bool:
        return any(m in PROPOSED for m in self.methods)

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "scenario": self.scenario.to_dict(),
            "features": self.features.to_dict(),
            "train": dataclasses.asdict(self.train),
        }
        for f in dataclasses.fields(self):
            if f.name not in d:
                v = getattr(self, f.name)
                d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    def echo(self) -> dict:
        """Config as recorded in reports: output location excluded so reruns
        into different directories produce identical files."""
        d = self.to_dict()
        d.pop("out_dir")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "seed" not in d or d["seed"] is None:
            raise ConfigError("config must set a master seed")
        try:
            if "scenario" in d:
                d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
            if "features" in d:
                d["features"] = FeatureSpec.from_dict(d["features"])
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            names = {f.name for f in dataclasses.fields(cls)}
            extra = set(d) - names
            if extra:
                raise ConfigError(f"unknown config keys: {sorted(extra)}")
            return cls(**d)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


# ---------------------------------------------------------------- training

def simulate_collection(cfg: ExperimentConfig, stream: int, index: int) -> LabeledCollection:
    return generate(cfg.scenario, stream_rng(cfg.seed, stream, index))


def _training_features(cfg: ExperimentConfig):
    for k in range(cfg.n_train):
        try:
            coll = simulate_collection(cfg, TRAIN_STREAM, k)
        except (ValueError, RuntimeError) as exc:
            raise StageError("simulate-train", k, exc) from exc
        try:
            yield extract_features(coll, cfg.features)
        except FeatureExtractionError as exc:
            raise StageError("features-train", k, exc) from exc


def train_network(cfg: ExperimentConfig) -> tuple[NetworkParams, list[float]]:
    """Train on ``cfg.n_train`` simulated collections; returns params and the loss trace."""
    tcfg = dataclasses.replace(cfg.train, seed=_seed_int(cfg.seed, NET_STREAM))
    res = train(_training_features(cfg), tcfg)
    if not res.params.all_finite():
        raise NumericError("training produced non-finite parameters")
    return res.params, res.losses


def obtain_network(cfg: ExperimentConfig, out: Path | None):
    """Load ``cfg.model_path`` when it exists, otherwise train (and optionally save)."""
    if cfg.model_path and Path(cfg.model_path).exists():
        try:
            params = modelio.load_params(cfg.model_path)
        except modelio.ModelFileError as exc:
            raise DataError(f"{cfg.model_path}: {exc}") from exc
        return params, None
    if cfg.n_train < 1:
        raise ConfigError("no model file and n_train = 0")
    params, losses = train_network(cfg)
    target = cfg.model_path or (str(out / "model.ancl") if out is not None else None)
    if cfg.save_model and target:
        modelio.save_params(params, target)
    return params, losses


def _check_layout(params: NetworkParams, spec: FeatureSpec):
    if params.spec is not None and params.spec != spec:
        raise DataError(f"model feature layout {params.spec} does not match configured {spec}")
    if params.dims[0] != spec.dim:
        raise DataError(f"model input dim {params.dims[0]} != feature dim {spec.dim}")


# -------------------------------------------------------------- evaluation

def cluster_collection(ds: FeatureDataset, methods, K: int | None, rng_seed: tuple,
                       params: NetworkParams | None = None, kmeans_restarts: int = 200) -> dict:
    """Partitions of one feature dataset under every requested method.

    ``K`` goes to every K-requiring method; Louvain never receives it.
    Without the true K, experiments pass the elbow suggestion instead.
    Each method gets its own generator derived from ``rng_seed``.
    """
    out = {}
    A = affinity_matrix(params, ds) if params is not None and any(m in PROPOSED for m in methods) else None
    for slot, m in enumerate(ALL_METHODS):
        if m not in methods:
            continue
        rng = np.random.default_rng(np.random.SeedSequence(list(rng_seed) + [slot]))
        if m == "spectral":
            part = spectral_cluster(A, K, rng)
        elif m == "louvain":
            part = louvain(A, rng)
        elif m == "kmeans":
            part = kmeans(ds, K, kmeans_restarts, rng)
        elif m == "kmedoids":
            part = kmedoids(ds, K, rng)
        else:
            part = ward_hierarchical(ds, K)
        out[m] = part.labels
    return out


def _elbow_k(cfg: ExperimentConfig, ds: FeatureDataset, index: int) -> int:
    rng = stream_rng(cfg.seed, CLUSTER_STREAM, index)
    return elbow_wcss(ds, min(cfg.elbow_k_max, ds.n), rng, rule=cfg.elbow_rule)[1]


def _eval_one(args):
    cfg, params, k = args
    try:
        coll = simulate_collection(cfg, EVAL_STREAM, k)
    except (ValueError, RuntimeError) as exc:
        raise StageError("simulate-eval", k, exc) from exc
    try:
        ds = extract_features(coll, cfg.features)
    except FeatureExtractionError as exc:
        raise StageError("features", k, exc) from exc
    K = coll.K if cfg.supply_true_k else _elbow_k(cfg, ds, k)
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            parts = cluster_collection(ds, cfg.methods, K, (cfg.seed, CLUSTER_STREAM, k), params,
                                       cfg.kmeans_restarts)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        raise StageError("cluster", k, NumericError(str(exc))) from exc
    scores = {m: ari(lbl, coll.labels) for m, lbl in parts.items()}
    n_found = {m: int(lbl.max()) + 1 for m, lbl in parts.items()}
    return {"n": coll.n, "K": coll.K, "ari": scores, "k_found": n_found}


def run_scenario_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Full simulation study at the configured scale; writes report files when ``out_dir`` is set."""
    out = Path(out_dir or cfg.out_dir) if (out_dir or cfg.out_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    params, losses = (None, None)
    if cfg.needs_network:
        params, losses = obtain_network(cfg, out)
        _check_layout(params, cfg.features)
    timings["network_s"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    jobs = [(cfg, params, k) for k in range(cfg.n_eval)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(_eval_one, jobs, chunksize=8))
    else:
        rows = [_eval_one(j) for j in jobs]
    timings["evaluation_s"] = time.perf_counter() - t1

    report = build_report(cfg, rows)
    if out is not None:
        write_report(report, rows, cfg, out)
        (out / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
        if losses is not None:
            write_training_summary(losses, out / "training.json")
    log.info("experiment finished: %s", {k: round(v, 2) for k, v in timings.items()})
    return report


def write_training_summary(losses, path) -> None:
    tenth = max(1, len(losses) // 10)
    summary = {
        "steps": len(losses),
        "loss_first_decile": float(np.mean(losses[:tenth])),
        "loss_last_decile": float(np.mean(losses[-tenth:])),
        "losses": [float(v) for v in losses],
    }
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def build_report(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    methods = [m for m in ALL_METHODS if m in cfg.methods]
    aris = {m: [r["ari"][m] for r in rows] for m in methods}
    summary = {}
    for m in methods:
        if aris[m]:
            mean, median = summarize(aris[m])
            summary[m] = {"mean": mean, "median": median}
    comparisons = []
    for a in (m for m in PROPOSED if m in methods):
        for b in (m for m in BASELINES if m in methods):
            if not rows:
                continue
            st = compare_methods(aris[a], aris[b])
            comparisons.append({"proposed": a, "alternative": b, **st.as_dict()})
    report = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "n_eval": len(rows),
        "methods": methods,
        "ari": aris,
        "summary": summary,
        "comparisons": comparisons,
        "true_k": [r["K"] for r in rows],
        "n_series": [r["n"] for r in rows],
        "k_found": {m: [r["k_found"][m] for r in rows] for m in methods},
    }
    return report


def write_report(report: dict, rows, cfg: ExperimentConfig, out: Path) -> None:
    (out / "report.json").write_text(dumps_report(report))
    with open(out / "ari.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "n", "K"] + list(report["methods"]))
        for k, r in enumerate(rows):
            w.writerow([k, r["n"], r["K"]] + [repr(float(r["ari"][m])) for m in report["methods"]])


# --------------------------------------------------------------- ingestion

@dataclass
class ReturnsMatrix:
    assets: list[str]
    returns: np.ndarray  # (T, m)

    def series(self) -> np.ndarray:
        """(m, T) array, one row per asset."""
        return self.returns.T.copy()


_DATE_HEADERS = {"date", "time", "timestamp", "datetime"}


def ingest_prices(csv_path) -> ReturnsMatrix:
    """Column-wise log-returns ``ln(P_t / P_{t-1})`` from a price CSV.

    The header names the assets; a leading date/time column is ignored.
    Every price must be a positive finite number.
    """
    try:
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {csv_path}: {exc}") from exc
    if not rows:
        raise DataError(f"{csv_path}: empty file")
    header = [h.strip() for h in rows[0]]
    skip = 1 if header and header[0].lower() in _DATE_HEADERS else 0
    assets = header[skip:]
    if not assets:
        raise DataError(f"{csv_path}: no asset columns")
    prices = np.empty((len(rows) - 1, len(assets)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{csv_path}: row {r} has {len(row)} cells, header has {len(header)}")
        for c, cell in enumerate(row[skip:]):
            where = f"row {r}, column {c + skip + 1} ({assets[c]})"
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan", "null"):
                raise DataError(f"{csv_path}: missing price at {where}")
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{csv_path}: non-numeric price {cell!r} at {where}") from None
            if not (v > 0 and math.isfinite(v)):
                raise DataError(f"{csv_path}: nonpositive or non-finite price {cell!r} at {where}")
            prices[r - 2, c] = v
    if prices.shape[0] < 2:
        raise DataError(f"{csv_path}: need at least 2 rows of prices")
    return ReturnsMatrix(assets, np.diff(np.log(prices), axis=0))


def write_returns_csv(rm: ReturnsMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(rm.assets)
        for row in rm.returns:
            w.writerow([repr(float(v)) for v in row])


# ------------------------------------------------------------- application

def run_application(cfg: ExperimentConfig, out_dir=None, params: NetworkParams | None = None) -> dict:
    """Cluster the assets of ``cfg.prices_csv`` by their QAF dependence structure.

    Prices -> log-returns -> features -> affinity matrix -> K from the WCSS
    elbow on the feature vectors (unless ``k_override``) -> spectral partition.
    """
    if not cfg.prices_csv:
        raise ConfigError("application run needs prices_csv")
    out = Path(out_dir or cfg.out_dir) if (out_dir or cfg.out_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rm = ingest_prices(cfg.prices_csv)
    if params is None:
        params, _ = obtain_network(cfg, out)
    _check_layout(params, cfg.features)
    try:
        ds = extract_features(rm.series(), cfg.features)
    except FeatureExtractionError as exc:
        raise DataError(f"asset {rm.assets[exc.index]}: {exc.cause}") from exc
    A = affinity_matrix(params, ds)
    n = ds.n
    wcss = None
    if cfg.k_override is not None:
        K = int(cfg.k_override)
        if not 1 <= K <= n:
            raise ConfigError(f"k_override {K} outside 1..{n}")
    else:
        k_max = min(cfg.elbow_k_max, n)
        wcss, K = elbow_wcss(ds, k_max, stream_rng(cfg.seed, CLUSTER_STREAM, 0), rule=cfg.elbow_rule)
    part = spectral_cluster(A, K, stream_rng(cfg.seed, CLUSTER_STREAM, 1))
    clusters = {}
    for c in range(part.K):
        clusters[str(c + 1)] = [rm.assets[i] for i in np.flatnonzero(part.labels == c)]
    report = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "n_assets": n,
        "T": int(rm.returns.shape[0]),
        "K": K,
        "k_source": "override" if cfg.k_override is not None else "elbow",
        "elbow_wcss": wcss,
        "labels": dict(zip(rm.assets, part.labels.tolist())),
        "clusters": clusters,
        "cluster_sizes": {c: len(v) for c, v in clusters.items()},
    }
    if out is not None:
        (out / "report.json").write_text(dumps_report(report))
        write_features_csv(ds, out / "features.csv", ids=rm.assets)
        write_matrix_csv(A, out / "affinity.csv", rm.assets)
        with open(out / "partition.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "cluster"])
            for a, lbl in zip(rm.assets, part.labels):
                w.writerow([a, int(lbl)])
        if wcss is not None:
            write_elbow_csv(wcss, out / "elbow.csv")
    return report


def write_matrix_csv(A, path, ids=None) -> None:
    n = A.shape[0]
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + ids)
        for i in range(n):
            w.writerow([ids[i]] + [repr(float(v)) for v in A[i]])


def read_matrix_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    A = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if A.shape != (len(ids), len(ids)):
        raise DataError(f"{path}: affinity matrix is not square")
    return A, ids


def write_elbow_csv(wcss, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "wcss"])
        for k, v in enumerate(wcss, start=1):
            w.writerow([k, repr(float(v))])
