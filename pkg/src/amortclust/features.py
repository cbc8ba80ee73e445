"""
Serial-dependence features: sample autocorrelations (ACF) and quantile
autocorrelations (QAF).

QAF entries are laid out lexicographically by ``(tau, tau', lag)``; the
network's input ordering depends on this, so the layout is part of the
model file.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np


class DegenerateSeriesError(ValueError):
    """Raised for inputs the estimator is undefined on (e.g. constant series)."""


class FeatureExtractionError(ValueError):
    def __init__(self, index, cause):
        super().__init__(f"series {index}: {cause}")
        self.index = index
        self.cause = cause

    def __reduce__(self):
        # picklable across worker processes
        return type(self), (self.index, self.cause)


@dataclass(frozen=True)
class FeatureSpec:
    kind: str = "acf"
    lags: tuple[int, ...] = (1, 2, 3)
    levels: tuple[float, ...] = ()

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lags", tuple(int(l) for l in self.lags))
        object.__setattr__(self, "levels", tuple(float(t) for t in self.levels))
        if kind not in ("acf", "qaf"):
            raise ValueError(f"feature kind must be 'acf' or 'qaf', got {self.kind!r}")
        if not self.lags or any(l < 1 for l in self.lags) or any(np.diff(self.lags) <= 0):
            raise ValueError(f"lags must be positive and strictly increasing: {self.lags}")
        if kind == "qaf":
            lv = self.levels
            if not lv or any(not 0 < t < 1 for t in lv) or any(np.diff(lv) <= 0):
                raise ValueError(f"levels must be strictly increasing in (0, 1): {lv}")
        elif self.levels:
            raise ValueError("ACF features take no quantile levels")

    @classmethod
    def paper_qaf(cls) -> "FeatureSpec":
        return cls("qaf", (1, 2, 3), (0.1, 0.5, 0.9))

    @property
    def dim(self) -> int:
        if self.kind == "acf":
            return len(self.lags)
        return len(self.levels) ** 2 * len(self.lags)

    def layout(self) -> list[tuple]:
        """Index -> ``(lag,)`` for ACF or ``(tau, tau', lag)`` for QAF."""
        if self.kind == "acf":
            return [(l,) for l in self.lags]
        return list(itertools.product(self.levels, self.levels, self.lags))

    def column_names(self) -> list[str]:
        return [f"{self.kind}_" + "_".join(f"{v:g}" for v in entry) for entry in self.layout()]

    def validate_length(self, T: int) -> None:
        if max(self.lags) >= T:
            raise ValueError(f"max lag {max(self.lags)} must be < series length {T}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lags": list(self.lags), "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(d["kind"], tuple(d["lags"]), tuple(d.get("levels", ())))


@dataclass
class FeatureDataset:
    values: np.ndarray  # (n, d)
    spec: FeatureSpec
    labels: np.ndarray | None = None
    names: list[str] | None = field(default=None)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.spec.dim:
            raise ValueError(f"feature width {self.values.shape[1]} != layout dim {self.spec.dim}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def acf(series, lags) -> np.ndarray:
    """Sample autocorrelations with the 1/T-normalized (biased) estimator.

    ``rho(l) = sum_{t<=T-l} (x_{t+l}-m)(x_t-m) / sum_t (x_t-m)^2``.
    Lag 0 returns exactly 1.
    """
    x = np.asarray(series, dtype=float)
    T = x.size
    lags = np.atleast_1d(np.asarray(lags, dtype=int))
    if lags.size and (lags.max() >= T or lags.min() < 0):
        raise ValueError(f"lags must lie in [0, {T - 1}]")
    xc = x - x.mean()
    denom = np.dot(xc, xc)
    if not denom > 0:
        raise DegenerateSeriesError("ACF undefined for a constant series")
    out = np.empty(lags.size)
    for k, l in enumerate(lags):
        out[k] = 1.0 if l == 0 else np.dot(xc[l:], xc[:-l]) / denom
    return out


def empirical_quantile(series, tau: float) -> float:
    """Linear interpolation between order statistics at 1-based position 1 + (T-1)*tau."""
    if not 0 < tau < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {tau}")
    x = np.asarray(series, dtype=float)
    if x.size < 1:
        raise ValueError("empty series")
    return float(np.quantile(x, tau, method="linear"))


def qaf(series, levels, lags) -> np.ndarray:
    """Quantile autocorrelations over ``levels x levels x lags``.

    ``[(1/T) sum_{t<=T-l} 1(x_t <= q_tau) 1(x_{t+l} <= q_tau') - tau tau']
    / sqrt(tau(1-tau) tau'(1-tau'))``, centered at the nominal ``tau tau'``.
    """
    x = np.asarray(series, dtype=float)
    T = x.size
    levels = np.asarray(levels, dtype=float)
    lags = np.asarray(lags, dtype=int)
    if lags.max() >= T:
        raise ValueError(f"max lag {lags.max()} must be < series length {T}")
    q = np.quantile(x, levels, method="linear")
    below = (x[None, :] <= q[:, None]).astype(float)  # (m, T)
    scale = np.sqrt(np.outer(levels * (1 - levels), levels * (1 - levels)))
    centre = np.outer(levels, levels)
    out = np.empty((levels.size, levels.size, lags.size))
    for k, l in enumerate(lags):
        joint = below[:, : T - l] @ below[:, l:].T / T
        out[:, :, k] = (joint - centre) / scale
    return out.ravel()


def features_for(series, spec: FeatureSpec) -> np.ndarray:
    if spec.kind == "acf":
        return acf(series, spec.lags)
    return qaf(series, spec.levels, spec.lags)


def extract_features(collection, spec: FeatureSpec) -> FeatureDataset:
    """Apply ``spec`` to every series, preserving order and carrying labels.

    ``collection`` is a ``LabeledCollection`` or an (n, T) array / list of series.
    """
    labels = getattr(collection, "labels", None)
    series = getattr(collection, "series", collection)
    rows = []
    for i, x in enumerate(series):
        try:
            spec.validate_length(len(x))
            rows.append(features_for(x, spec))
        except ValueError as exc:
            raise FeatureExtractionError(i, exc) from exc
    values = np.vstack(rows) if rows else np.empty((0, spec.dim))
    return FeatureDataset(values, spec, labels)


def write_features_csv(ds: FeatureDataset, path, ids=None) -> None:
    """One row per series; columns ``id``, optional ``label``, then feature names."""
    ids = list(ids) if ids is not None else [str(i) for i in range(ds.n)]
    header = ["id"] + (["label"] if ds.labels is not None else []) + ds.spec.column_names()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            lab = [int(ds.labels[i])] if ds.labels is not None else []
            w.writerow([ids[i]] + lab + [repr(float(v)) for v in ds.values[i]])


def read_features_csv(path) -> tuple[FeatureDataset, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    has_label = len(header) > 1 and header[1] == "label"
    feat_cols = header[2:] if has_label else header[1:]
    spec = spec_from_columns(feat_cols)
    start = 2 if has_label else 1
    values = np.array([[float(v) for v in r[start:]] for r in body]).reshape(len(body), spec.dim)
    labels = np.array([int(r[1]) for r in body]) if has_label else None
    return FeatureDataset(values, spec, labels), [r[0] for r in body]


def spec_from_columns(cols: list[str]) -> FeatureSpec:
    parts = [c.split("_") for c in cols]
    kind = parts[0][0]
    if kind == "acf":
        return FeatureSpec("acf", tuple(int(p[1]) for p in parts))
    levels = sorted({float(p[1]) for p in parts})
    lags = sorted({int(p[3]) for p in parts})
    spec = FeatureSpec("qaf", tuple(lags), tuple(levels))
    if spec.column_names() != cols:
        raise ValueError("QAF columns are not in the canonical (tau, tau', lag) order")
    return spec
