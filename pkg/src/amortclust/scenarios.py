"""
Partition priors and labeled time-series collections for the four
simulation scenarios.

Scenario 1: fixed n and K, Dirichlet-categorical labels, AR(3) clusters.
Scenario 2: n ~ U{10..200}, CRP(alpha ~ Exp(1)) labels, AR(3) clusters.
Scenario 3: n ~ U{10..100}, CRP(alpha ~ Exp(0.5)) labels, GARCH(1,1)
            clusters with per-series Student-t degrees of freedom.
Scenario 4: fair mixture of Scenario 2 and a SETAR(2,1,1) analogue.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .simulate import (
    ARSpec,
    GARCHSpec,
    SETARSpec,
    durbin_levinson,
    simulate_ar,
    simulate_garch,
    simulate_setar,
)

MAX_REJECTIONS = 1_000_000


class RejectionLimitError(RuntimeError):
    pass


@dataclass
class LabeledCollection:
    """n series of common length T with ground-truth cluster labels."""

    series: np.ndarray  # (n, T)
    labels: np.ndarray  # (n,) ints in [0, K)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.series = np.atleast_2d(np.asarray(self.series, dtype=float))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.series.shape[0] != self.labels.shape[0]:
            raise ValueError("series and labels disagree on n")
        K = self.K
        if K < 2 or np.unique(self.labels).size != K or self.labels.min() != 0:
            raise ValueError("labels must be contiguous ids 0..K-1 with K >= 2")

    @property
    def n(self) -> int:
        return self.series.shape[0]

    @property
    def T(self) -> int:
        return self.series.shape[1]

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1


@dataclass
class PartitionDraw:
    labels: np.ndarray
    weights: np.ndarray | None = None
    concentration: float | None = None

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1


@dataclass
class ScenarioConfig:
    """Prior ranges for one scenario.

    Defaults reproduce the published simulation designs; ``n`` and ``K``
    are only read by Scenario 1, ``setar_prob`` only by Scenario 4.
    ``n_range`` and ``crp_rate`` override the CRP scenarios' size and
    concentration priors (``None`` keeps the scenario's own default).
    """

    scenario: int = 1
    T: int = 500
    n: int = 20
    K: int = 2
    n_range: tuple[int, int] | None = None
    crp_rate: float | None = None
    kappa_range: tuple[float, float] = (-1.0, 1.0)
    sigma2_range: tuple[float, float] = (0.1, 2.0)
    omega_range: tuple[float, float] = (1e-6, 1e-4)
    alpha_range: tuple[float, float] = (0.01, 0.30)
    beta_low: float = 0.70
    nu_choices: tuple[float, ...] = (3, 4, 5, 6, 7, 8, 10000)
    setar_phi_range: tuple[float, float] = (-1.0, 1.0)
    threshold_range: tuple[float, float] = (-0.75, 0.75)
    setar_prob: float = 0.5

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4):
            raise ValueError(f"unknown scenario {self.scenario}")
        if self.T < 10:
            raise ValueError(f"series length must be >= 10, got {self.T}")
        for name in ("kappa_range", "sigma2_range", "omega_range", "alpha_range",
                     "setar_phi_range", "threshold_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: lower bound {lo} must be < upper bound {hi}")
        if self.n_range is not None:
            lo, hi = self.n_range
            if not 2 <= lo <= hi:
                raise ValueError(f"n_range must satisfy 2 <= lo <= hi, got {self.n_range}")
            self.n_range = (int(lo), int(hi))
        if self.crp_rate is not None and not self.crp_rate > 0:
            raise ValueError("crp_rate must be positive")
        if not 0 <= self.setar_prob <= 1:
            raise ValueError("setar_prob must be a probability")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        for key in ("n_range", "kappa_range", "sigma2_range", "omega_range", "alpha_range",
                    "nu_choices", "setar_phi_range", "threshold_range"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def canonical_labels(labels) -> np.ndarray:
    """Relabel so cluster ids appear in first-occurrence order 0, 1, 2, ..."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.ravel()]


def sample_exponential(rate: float, rng: np.random.Generator) -> float:
    # inverse CDF of a single uniform, identical on every platform
    return -np.log1p(-rng.random()) / rate


def sample_dirichlet_categorical(n: int, K: int, rng: np.random.Generator) -> PartitionDraw:
    """Symmetric Dirichlet(1_K) weights, then i.i.d. categorical labels.

    Draws realizing fewer than ``K`` distinct labels are rejected.  The
    returned weights are reordered to match the canonical labels.
    """
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    for _ in range(MAX_REJECTIONS):
        weights = rng.dirichlet(np.ones(K))
        raw = rng.choice(K, size=n, p=weights)
        if np.unique(raw).size == K:
            labels = canonical_labels(raw)
            order = np.empty(K, dtype=np.int64)
            order[labels] = raw
            return PartitionDraw(labels=labels, weights=weights[order])
    raise RejectionLimitError("Dirichlet-categorical rejection did not terminate")


@njit(cache=True)
def _crp_seating(u, concentration, labels, counts):
    n = u.shape[0]
    counts[:] = 0
    K = 0
    for i in range(n):
        # customer i (0-based) sees i seated customers
        threshold = u[i] * (i + concentration)
        acc = 0.0
        chosen = K
        for c in range(K):
            acc += counts[c]
            if threshold < acc:
                chosen = c
                break
        labels[i] = chosen
        counts[chosen] += 1
        if chosen == K:
            K += 1
    return K


@njit(cache=True)
def _crp_first_accepted(U, concentration, min_k):
    n = U.shape[1]
    labels = np.empty(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    for row in range(U.shape[0]):
        if _crp_seating(U[row], concentration, labels, counts) >= min_k:
            return row, labels
    return -1, labels


def sample_crp(n: int, concentration: float, rng: np.random.Generator, reject_single: bool = True) -> PartitionDraw:
    """Chinese restaurant process partition of ``n`` items.

    Customer ``i`` joins an existing table with probability proportional to
    its size, or opens a new one with probability proportional to
    ``concentration``.  With ``reject_single`` (the default) single-cluster
    draws are discarded and redrawn, at most ``MAX_REJECTIONS`` times.
    """
    if n < 2 and reject_single:
        raise ValueError("need n >= 2 to obtain K >= 2")
    if not concentration > 0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    min_k = 2 if reject_single else 1
    attempts, batch = 0, 1
    while attempts < MAX_REJECTIONS:
        # batches grow geometrically so near-degenerate concentrations stay cheap
        batch = min(batch, MAX_REJECTIONS - attempts)
        row, labels = _crp_first_accepted(rng.random((batch, n)), float(concentration), min_k)
        if row >= 0:
            return PartitionDraw(labels=labels, concentration=concentration)
        attempts += batch
        batch = min(batch * 4, 1 << 16)
    raise RejectionLimitError("CRP rejection did not terminate")


def _sample_kappa(cfg, rng):
    lo, hi = cfg.kappa_range
    while True:
        kappa = rng.uniform(lo, hi, size=3)
        if np.all(np.abs(kappa) < 1):
            return kappa


def _ar_collection(labels, cfg, rng, T):
    K = int(labels.max()) + 1
    specs = []
    for _ in range(K):
        phi = durbin_levinson(_sample_kappa(cfg, rng))
        sigma2 = rng.uniform(*cfg.sigma2_range)
        specs.append(ARSpec(phi, sigma2))
    series = np.stack([simulate_ar(specs[k], T, rng) for k in labels])
    meta = {"family": "ar", "params": [{"phi": list(s.phi), "sigma2": s.sigma2} for s in specs]}
    return series, meta


def _crp_labels(cfg, rng, n_default, rate_default):
    lo, hi = cfg.n_range or n_default
    n = int(rng.integers(lo, hi + 1))
    concentration = sample_exponential(cfg.crp_rate or rate_default, rng)
    draw = sample_crp(n, concentration, rng)
    return draw.labels, concentration


def generate_scenario1(n: int, K: int, T: int, rng: np.random.Generator,
                       cfg: ScenarioConfig | None = None) -> LabeledCollection:
    cfg = dataclasses.replace(cfg or ScenarioConfig(), scenario=1, n=n, K=K, T=T)
    draw = sample_dirichlet_categorical(cfg.n, cfg.K, rng)
    series, meta = _ar_collection(draw.labels, cfg, rng, cfg.T)
    meta.update(scenario=1, weights=draw.weights.tolist())
    return LabeledCollection(series, draw.labels, meta)


def generate_scenario2(T: int, rng: np.random.Generator,
                       cfg: ScenarioConfig | None = None) -> LabeledCollection:
    cfg = dataclasses.replace(cfg or ScenarioConfig(), scenario=2, T=T)
    labels, conc = _crp_labels(cfg, rng, (10, 200), 1.0)
    series, meta = _ar_collection(labels, cfg, rng, cfg.T)
    meta.update(scenario=2, concentration=conc)
    return LabeledCollection(series, labels, meta)


def generate_scenario3(T: int, rng: np.random.Generator,
                       cfg: ScenarioConfig | None = None) -> LabeledCollection:
    cfg = dataclasses.replace(cfg or ScenarioConfig(), scenario=3, T=T)
    labels, conc = _crp_labels(cfg, rng, (10, 100), 0.5)
    K = int(labels.max()) + 1
    thetas = []
    for _ in range(K):
        omega = rng.uniform(*cfg.omega_range)
        alpha = rng.uniform(*cfg.alpha_range)
        beta = rng.uniform(cfg.beta_low, 1.0 - alpha)
        thetas.append((omega, alpha, beta))
    nus = rng.choice(np.asarray(cfg.nu_choices, dtype=float), size=labels.size)
    series = np.stack([
        simulate_garch(GARCHSpec(*thetas[k], nu=nu), cfg.T, rng) for k, nu in zip(labels, nus)
    ])
    meta = {
        "scenario": 3,
        "family": "garch",
        "concentration": conc,
        "params": [{"omega": o, "alpha": a, "beta": b} for o, a, b in thetas],
        "nu": nus.tolist(),
    }
    return LabeledCollection(series, labels, meta)


def _setar_collection(cfg, rng):
    labels, conc = _crp_labels(cfg, rng, (10, 200), 1.0)
    K = int(labels.max()) + 1
    specs = []
    for _ in range(K):
        while True:
            phi = rng.uniform(*cfg.setar_phi_range, size=2)
            if np.all(np.abs(phi) < 1):
                break
        specs.append(SETARSpec(phi[0], phi[1], rng.uniform(*cfg.threshold_range)))
    series = np.stack([simulate_setar(specs[k], cfg.T, rng) for k in labels])
    meta = {
        "scenario": 4,
        "family": "setar",
        "concentration": conc,
        "params": [dataclasses.asdict(s) for s in specs],
    }
    return LabeledCollection(series, labels, meta)


def generate_scenario4(T: int, rng: np.random.Generator,
                       cfg: ScenarioConfig | None = None) -> LabeledCollection:
    cfg = dataclasses.replace(cfg or ScenarioConfig(), scenario=4, T=T)
    if rng.random() < cfg.setar_prob:
        return _setar_collection(cfg, rng)
    coll = generate_scenario2(T, rng, cfg)
    coll.meta["scenario"] = 4
    return coll


def generate(cfg: ScenarioConfig, rng: np.random.Generator) -> LabeledCollection:
    """Draw one collection from the scenario named in ``cfg``."""
    if cfg.scenario == 1:
        return generate_scenario1(cfg.n, cfg.K, cfg.T, rng, cfg)
    gen = {2: generate_scenario2, 3: generate_scenario3, 4: generate_scenario4}[cfg.scenario]
    return gen(cfg.T, rng, cfg)


def collection_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for collection ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def save_collection(coll: LabeledCollection, path) -> None:
    """Write ``series`` (n, T), ``labels`` (n,) and JSON ``meta`` to an .npz file."""
    np.savez(path, series=coll.series, labels=coll.labels,
             meta=np.array(json.dumps(coll.meta, sort_keys=True)))


def load_collection(path) -> LabeledCollection:
    with np.load(path, allow_pickle=False) as z:
        return LabeledCollection(z["series"], z["labels"], json.loads(str(z["meta"])))
