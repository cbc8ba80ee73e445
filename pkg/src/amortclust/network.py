"""
Pairwise co-membership network.

Each feature vector goes through a shared embedding ``d -> 64 -> 64``
(ReLU between the two affine layers); the two embeddings are summed, and
the sum goes through a head ``64 -> 256 -> 1`` (ReLU, then sigmoid).
Summation makes ``forward_pair(a, b) == forward_pair(b, a)`` bit for bit.

Everything is plain numpy in float64.  Batched routines take ``(m, d)``
arrays of left/right vectors and return ``(m,)`` probabilities.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .features import FeatureDataset, FeatureSpec

log = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")
EPS_CLAMP = 1e-7
FULL_PAIRS_MAX_N = 32
PAIRS_PER_DATASET = 512


class DimensionError(ValueError):
    pass


@dataclass
class NetworkParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    W4: np.ndarray
    b4: np.ndarray
    spec: FeatureSpec | None = None

    def __post_init__(self):
        d, E = self.W1.shape
        H = self.W3.shape[1]
        expected = {"W1": (d, E), "b1": (E,), "W2": (E, E), "b2": (E,),
                    "W3": (E, H), "b3": (H,), "W4": (H, 1), "b4": (1,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.spec is not None and self.spec.dim != d:
            raise DimensionError(f"feature layout has dim {self.spec.dim}, network expects {d}")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(input dim, embedding width, head width)."""
        return self.W1.shape[0], self.W1.shape[1], self.W3.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def with_arrays(self, arrays: dict) -> "NetworkParams":
        return replace(self, **arrays)

    def copy(self) -> "NetworkParams":
        return self.with_arrays({k: v.copy() for k, v in self.arrays().items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())


def init_network(d: int, rng: np.random.Generator, embed_width: int = 64, head_width: int = 256,
                 spec: FeatureSpec | None = None) -> NetworkParams:
    """Uniform(+-sqrt(6/fan_in)) weights, zero biases."""
    if d < 1:
        raise ValueError("feature dimension must be >= 1")

    def w(fan_in, fan_out):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return NetworkParams(
        W1=w(d, embed_width), b1=np.zeros(embed_width),
        W2=w(embed_width, embed_width), b2=np.zeros(embed_width),
        W3=w(embed_width, head_width), b3=np.zeros(head_width),
        W4=w(head_width, 1), b4=np.zeros(1),
        spec=spec,
    )


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _rowwise(X, W):
    # unblocked product: each output row depends only on its input row, so
    # results do not change with batch size or row order (BLAS does not promise this)
    return np.einsum("ij,jk->ik", X, W)


def _embed(params, X, mm=np.matmul):
    a1 = mm(X, params.W1) + params.b1
    h1 = np.maximum(a1, 0.0)
    return a1, h1, mm(h1, params.W2) + params.b2


def _check_dim(params, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.W1.shape[0]:
        raise DimensionError(f"feature dim {X.shape[1]} != network input dim {params.W1.shape[0]}")
    return X


def _head_logits(params, s, mm=np.matmul):
    a3 = mm(s, params.W3) + params.b3
    h3 = np.maximum(a3, 0.0)
    return a3, h3, (mm(h3, params.W4) + params.b4)[:, 0]


def forward_pairs(params: NetworkParams, Xi, Xj) -> np.ndarray:
    """Co-membership probabilities for rows ``Xi[m]`` paired with ``Xj[m]``."""
    Xi, Xj = _check_dim(params, Xi), _check_dim(params, Xj)
    s = _embed(params, Xi, _rowwise)[2] + _embed(params, Xj, _rowwise)[2]
    return _sigmoid(_head_logits(params, s, _rowwise)[2])


def forward_pair(params: NetworkParams, psi_i, psi_j) -> float:
    return float(forward_pairs(params, psi_i, psi_j)[0])


def bce_loss(p, y):
    """Binary cross-entropy with ``p`` clamped to ``[1e-7, 1 - 1e-7]``."""
    p = np.clip(p, EPS_CLAMP, 1.0 - EPS_CLAMP)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def loss_and_gradient(params: NetworkParams, Xi, Xj, y) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BCE over a batch of pairs and its gradient w.r.t. every parameter.

    The logit gradient is ``(p - y) / m``; outside the clamp interval this is
    the unclamped loss's gradient, which keeps saturated mistakes trainable.
    """
    Xi, Xj = _check_dim(params, Xi), _check_dim(params, Xj)
    y = np.asarray(y, dtype=float).ravel()
    m = y.size
    a1i, h1i, ei = _embed(params, Xi)
    a1j, h1j, ej = _embed(params, Xj)
    s = ei + ej
    a3, h3, z = _head_logits(params, s)
    p = _sigmoid(z)
    loss = float(np.mean(bce_loss(p, y)))

    dz = (p - y) / m
    g = {"W4": h3.T @ dz[:, None], "b4": np.array([dz.sum()])}
    da3 = np.outer(dz, params.W4[:, 0]) * (a3 > 0)
    g["W3"] = s.T @ da3
    g["b3"] = da3.sum(axis=0)
    ds = da3 @ params.W3.T
    # shared embedding: both branches receive ds
    g["W2"] = h1i.T @ ds + h1j.T @ ds
    g["b2"] = 2.0 * ds.sum(axis=0)
    dh = ds @ params.W2.T
    da1i = dh * (a1i > 0)
    da1j = dh * (a1j > 0)
    g["W1"] = Xi.T @ da1i + Xj.T @ da1j
    g["b1"] = da1i.sum(axis=0) + da1j.sum(axis=0)
    return loss, g


def pair_gradient(params: NetworkParams, psi_i, psi_j, y) -> dict[str, np.ndarray]:
    return loss_and_gradient(params, psi_i, psi_j, [y])[1]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    pairs_per_dataset: int = PAIRS_PER_DATASET
    full_pairs_max_n: int = FULL_PAIRS_MAX_N
    embed_width: int = 64
    head_width: int = 256
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.pairs_per_dataset < 1:
            raise ValueError("pairs per dataset (batch size) must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        arrays = params.arrays()
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(params: NetworkParams, grads: dict, state: AdamState,
              config: TrainConfig | None = None) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state (inputs untouched)."""
    config = config or TrainConfig()
    b1, b2 = config.beta1, config.beta2
    t = state.step + 1
    new_arrays, m_new, v_new = {}, {}, {}
    for k, w in params.arrays().items():
        g = grads[k]
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_arrays[k] = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        m_new[k], v_new[k] = m, v
    return params.with_arrays(new_arrays), AdamState(m_new, v_new, t)


def sample_pairs(labels, rng: np.random.Generator, max_pairs: int = PAIRS_PER_DATASET,
                 full_max_n: int = FULL_PAIRS_MAX_N) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Training pairs ``(i, j, y)`` for one collection.

    All unordered pairs when ``n <= full_max_n``; otherwise ``max_pairs``
    pairs, at most half of them positive and half negative, topping up
    from the other class when one runs short.
    """
    labels = np.asarray(labels)
    n = labels.size
    i, j = np.triu_indices(n, k=1)
    y = (labels[i] == labels[j]).astype(float)
    if n <= full_max_n or i.size <= max_pairs:
        return i, j, y
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    n_pos = min(pos.size, max_pairs // 2)
    n_neg = min(neg.size, max_pairs - n_pos)
    n_pos = min(pos.size, max_pairs - n_neg)
    take = np.concatenate([
        rng.choice(pos, size=n_pos, replace=False),
        rng.choice(neg, size=n_neg, replace=False),
    ])
    take.sort()
    return i[take], j[take], y[take]


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list[float] = field(default_factory=list)
    state: AdamState | None = None


def train(datasets: Iterable[FeatureDataset], config: TrainConfig | None = None,
          params: NetworkParams | None = None, progress_every: int = 0) -> TrainResult:
    """One pair minibatch and one Adam step per dataset, ``config.epochs`` passes.

    With a single epoch the stream is consumed lazily; more epochs replay
    the same datasets in the same order.

    Parameters
    ----------
    datasets : iterable of FeatureDataset
        Labeled feature datasets sharing one layout.
    config : TrainConfig, optional
    params : NetworkParams, optional
        Starting point; initialized from ``config.seed`` when omitted.

    Returns
    -------
    TrainResult
        Final params, per-dataset batch losses and the Adam state.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    state = None
    layout = None
    losses: list[float] = []
    if config.epochs > 1:
        datasets = list(datasets)
    stream = (ds for _ in range(config.epochs) for ds in datasets)
    n_seen = 0
    for n_seen, ds in enumerate(stream, start=1):
        idx = (n_seen - 1) % len(datasets) if config.epochs > 1 else n_seen - 1
        if ds.labels is None:
            raise ValueError(f"dataset {idx} has no labels")
        if layout is None:
            layout = ds.spec
            if params is None:
                params = init_network(ds.d, rng, config.embed_width, config.head_width, spec=ds.spec)
            elif params.spec is None:
                params = replace(params, spec=ds.spec)
            state = AdamState.zeros_like(params)
        elif ds.spec != layout:
            raise DimensionError(f"dataset {idx} feature layout {ds.spec} != {layout}")
        i, j, y = sample_pairs(ds.labels, rng, config.pairs_per_dataset, config.full_pairs_max_n)
        loss, grads = loss_and_gradient(params, ds.values[i], ds.values[j], y)
        params, state = adam_step(params, grads, state, config)
        losses.append(loss)
        if progress_every and n_seen % progress_every == 0:
            log.info("step %d: mean loss (last %d) %.4f", n_seen, progress_every,
                     np.mean(losses[-progress_every:]))
    if params is None:
        raise ValueError("empty dataset stream")
    return TrainResult(params, losses, state)


def affinity_matrix(params: NetworkParams, features) -> np.ndarray:
    """Symmetric n x n matrix of co-membership probabilities with unit diagonal."""
    X = features.values if isinstance(features, FeatureDataset) else features
    X = _check_dim(params, X)
    n = X.shape[0]
    A = np.eye(n)
    if n < 2:
        return A
    E = _embed(params, X, _rowwise)[2]
    i, j = np.triu_indices(n, k=1)
    # embeddings computed once; the pair sum order matches forward_pair
    p = _sigmoid(_head_logits(params, E[i] + E[j], _rowwise)[2])
    A[i, j] = p
    A[j, i] = p
    return A
