"""Activity-recognition harness around synthetic and real IMU windows.

Covers category assignment by embedding similarity, the high/low dynamic
split, sliding windows, a 22-feature-per-axis descriptor, a deterministic
2-D PCA projection, a logistic-regression classifier, balanced accuracy
and the per-category change in L_acc between two denoisers.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.neural_network import MLPClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from . import kernels
from .diffusion import DenoiserParams, NoiseSchedule, heldout_acc, t_grid
from .imu import ImuSignal
from .text import Embedder

# ---------------------------------------------------------------------------
# categories

CATEGORY_NAMES = ("dancing", "jumping", "lying", "running", "sitting", "stair climbing", "standing", "walking")
OTHER = "other"
DEFAULT_TAU = 0.45
HIGH_DYNAMIC = frozenset({"running", "jumping", "dancing"})
LOW_DYNAMIC = frozenset({"lying", "walking", "stair climbing", "sitting", "standing", OTHER})


class DynamicClass(str, enum.Enum):
    High = "High"
    Low = "Low"


@dataclass(frozen=True)
class CategorySet:
    names: tuple
    embeddings: np.ndarray
    threshold: float = DEFAULT_TAU
    other_label: str = OTHER

    def __post_init__(self):
        names = tuple(self.names)
        emb = np.asarray(self.embeddings, dtype=float)
        if len(set(names)) != len(names):
            raise ValueError("category names must be distinct")
        if emb.shape[0] != len(names) or emb.ndim != 2:
            raise ValueError("need one embedding row per category")
        if not np.allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-9):
            raise ValueError("category embeddings must be unit norm")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "embeddings", emb)

    @classmethod
    def from_embedder(cls, embedder: Embedder | None = None, names=CATEGORY_NAMES, threshold: float = DEFAULT_TAU) -> "CategorySet":
        embedder = embedder or Embedder()
        rows = []
        for n in names:
            v = np.asarray(embedder(n), dtype=float)
            rows.append(v / np.linalg.norm(v))
        return cls(tuple(names), np.array(rows), threshold)


def assign_category(embedding, cats: CategorySet) -> str:
    """Most cosine-similar category, or ``other`` if the best is below tau.

    Similarity equal to tau passes; ties go to the earlier category.
    """
    e = np.asarray(embedding, dtype=float).reshape(-1)
    n = np.linalg.norm(e)
    if n == 0:
        raise ValueError("embedding must be nonzero")
    sims = cats.embeddings @ (e / n)
    k = int(np.argmax(sims))  # first maximum wins
    return cats.names[k] if sims[k] >= cats.threshold else cats.other_label


def dynamic_class(label: str) -> DynamicClass:
    key = label.lower()
    if key in HIGH_DYNAMIC:
        return DynamicClass.High
    if key in LOW_DYNAMIC:
        return DynamicClass.Low
    raise ValueError(f"unknown activity label {label!r}")


# ---------------------------------------------------------------------------
# windows


@dataclass
class WindowedDataset:
    windows: np.ndarray  # (K, W, C)
    labels: list
    sources: list
    window_len: int
    overlap: float

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=float)
        if self.windows.ndim != 3 or self.windows.shape[1] != self.window_len:
            raise ValueError("windows must be (K, W, C) with W == window_len")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must lie in [0, 1)")
        if not len(self.labels) == len(self.sources) == len(self.windows):
            raise ValueError("labels and sources must match the window count")

    def __len__(self) -> int:
        return len(self.windows)

    @classmethod
    def concat(cls, parts: Sequence["WindowedDataset"]) -> "WindowedDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        w, ov = parts[0].window_len, parts[0].overlap
        if any(p.window_len != w for p in parts):
            raise ValueError("window lengths differ")
        return cls(
            np.concatenate([p.windows for p in parts]),
            [lab for p in parts for lab in p.labels],
            [s for p in parts for s in p.sources],
            w, ov,
        )


def window_stride(W: int, overlap: float) -> int:
    return max(1, math.ceil(W * (1.0 - overlap) - 1e-12))


def segment_windows(signal, W: int = 40, overlap: float = 0.5, label=None, source=None, channels: str = "accel") -> WindowedDataset:
    """Sliding windows of ``W`` samples; the trailing partial window is dropped.

    ``signal`` is an :class:`ImuSignal` (``channels`` picks "accel", "gyro"
    or "all") or a plain ``(len, C)`` array.
    """
    if W < 1:
        raise ValueError("W must be >= 1")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    if isinstance(signal, ImuSignal):
        data = {"accel": signal.accel, "gyro": signal.gyro, "all": signal.channels}[channels]
        source = source if source is not None else signal.placement_name
    else:
        data = np.asarray(signal, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
    n = data.shape[0]
    if n < W:
        raise ValueError(f"signal of length {n} is shorter than the window ({W})")
    stride = window_stride(W, overlap)
    starts = np.arange(0, n - W + 1, stride)
    wins = np.stack([data[s : s + W] for s in starts])
    return WindowedDataset(wins, [label] * len(starts), [source] * len(starts), W, overlap)


# ---------------------------------------------------------------------------
# features

FEATURE_NAMES = (
    "mean", "std", "min", "max", "median", "iqr", "rms", "mean_abs_diff1",
    "mean_abs_diff2", "zero_crossing_rate", "line_length", "acf_1", "acf_5",
    "acf_10", "acf_first_below_1_over_e", "dominant_freq", "dominant_amp_frac",
    "spectral_centroid", "spectral_entropy_8", "longest_run_above_mean",
    "local_maxima", "skew_proxy",
)
N_FEATURES = len(FEATURE_NAMES)
# kernel column for each time-domain feature above
_KERNEL_COLS = {
    "mean": 0, "std": 1, "min": 2, "max": 3, "rms": 4, "mean_abs_diff1": 5,
    "mean_abs_diff2": 6, "zero_crossing_rate": 7, "line_length": 8, "acf_1": 9,
    "acf_5": 10, "acf_10": 11, "acf_first_below_1_over_e": 12,
    "longest_run_above_mean": 13, "local_maxima": 14,
}


def _spectral(x):
    """Spectral features of rows of ``x`` (B, W), DC excluded."""
    b, w = x.shape
    y = x - x.mean(axis=1, keepdims=True)
    power = np.abs(np.fft.rfft(y, axis=1))[:, 1:] ** 2
    total = power.sum(axis=1)
    has = total > 1e-20 * np.maximum(1.0, np.abs(x).max(axis=1)) ** 2 * w
    safe = np.where(has, total, 1.0)
    k = np.arange(1, power.shape[1] + 1)
    dom = np.where(has, np.argmax(power, axis=1) + 1, 0).astype(float)
    frac = np.where(has, power.max(axis=1, initial=0.0) / safe, 0.0)
    centroid = np.where(has, power @ k / safe, 0.0)
    nb = min(8, power.shape[1])
    if nb > 1:
        bins = np.stack([c.sum(axis=1) for c in np.array_split(power, nb, axis=1)], axis=1) / safe[:, None]
        logs = np.log(np.where(bins > 0, bins, 1.0))
        ent = np.where(has, -(bins * logs).sum(axis=1) / math.log(nb), 0.0)
    else:
        ent = np.zeros(b)
    return dom, frac, centroid, ent


def axis_features(x) -> np.ndarray:
    """22 features for each row of a ``(B, W)`` array -> ``(B, 22)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] < 4:
        raise ValueError("windows need at least 4 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("window contains non-finite values")
    td = kernels.window_time_features(x)
    med = np.median(x, axis=1)
    q75, q25 = np.percentile(x, [75, 25], axis=1)
    dom, frac, centroid, ent = _spectral(x)
    std = td[:, 1]
    skew = np.where(std > 0, (td[:, 0] - med) / np.where(std > 0, std, 1.0), 0.0)
    extra = {
        "median": med, "iqr": q75 - q25, "dominant_freq": dom, "dominant_amp_frac": frac,
        "spectral_centroid": centroid, "spectral_entropy_8": ent, "skew_proxy": skew,
    }
    cols = [td[:, _KERNEL_COLS[n]] if n in _KERNEL_COLS else extra[n] for n in FEATURE_NAMES]
    return np.stack(cols, axis=1)


def extract_features(window) -> np.ndarray:
    """Per-axis features of a ``(W, C)`` window, concatenated (``22 * C``)."""
    window = np.asarray(window, dtype=float)
    if window.ndim == 1:
        window = window[:, None]
    return axis_features(window.T).reshape(-1)


def features_matrix(windows) -> np.ndarray:
    """Feature rows for a ``(K, W, C)`` batch, same layout as :func:`extract_features`."""
    w = np.asarray(windows, dtype=float)
    k, n, c = w.shape
    f = axis_features(np.ascontiguousarray(w.transpose(0, 2, 1)).reshape(k * c, n))
    return f.reshape(k, c * N_FEATURES)


# ---------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class Projection:
    mean: np.ndarray
    axes: np.ndarray  # (2, F)
    eigenvalues: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.axes.T


def fit_projection(X) -> Projection:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise ValueError("need at least 2 points of dimension >= 2")
    mu = X.mean(axis=0)
    Xc = X - mu
    if not np.any(Xc):
        raise ValueError("data has rank 0")
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:2]
    axes = vecs[:, order].T.copy()
    for a in axes:
        if a[np.argmax(np.abs(a))] < 0:
            a *= -1.0
    return Projection(mu, axes, vals[order])


def project_2d(features) -> np.ndarray:
    """Deterministic PCA to 2-D (largest-magnitude loading of each axis positive)."""
    X = np.asarray(features, dtype=float)
    return fit_projection(X).transform(X)


# ---------------------------------------------------------------------------
# classifier


@dataclass
class ClassifierModel:
    pipeline: object
    classes: tuple
    kind: str

    def predict(self, X) -> np.ndarray:
        return self.pipeline.predict(np.asarray(X, dtype=float))


def train_classifier(X, y, kind: str = "logistic", seed: int = 0, C: float = 1.0, max_iter: int = 2000) -> ClassifierModel:
    """Standardise features and fit a multinomial classifier.

    Rows are put into a canonical order first, so the fitted model does not
    depend on the order the training windows arrive in.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(str)
    classes = tuple(sorted(set(y.tolist())))
    if len(classes) < 2:
        raise ValueError("training data must contain at least 2 classes")
    order = np.lexsort(tuple(X.T[::-1]) + (y,))
    X, y = X[order], y[order]
    if kind == "logistic":
        est = LogisticRegression(C=C, max_iter=max_iter)
    elif kind == "mlp":
        est = MLPClassifier(hidden_layer_sizes=(64,), max_iter=max_iter, random_state=int(seed) % 2**32)
    else:
        raise ValueError(f"unknown classifier kind {kind!r}")
    pipe = make_pipeline(StandardScaler(), est)
    pipe.fit(X, y)
    return ClassifierModel(pipe, classes, kind)


def balanced_accuracy(preds, truth) -> float:
    """Mean per-class recall over the classes present in ``truth``."""
    preds = np.asarray(preds).astype(str)
    truth = np.asarray(truth).astype(str)
    if len(truth) == 0:
        raise ValueError("empty input")
    if preds.shape != truth.shape:
        raise ValueError("preds and truth must have equal length")
    recalls = [float(np.mean(preds[truth == c] == c)) for c in np.unique(truth)]
    return math.fsum(recalls) / len(recalls)  # exact sum: independent of class order


def confusion_matrix(preds, truth, labels=None) -> tuple[list, np.ndarray]:
    """Rows are true classes, columns predictions."""
    preds = np.asarray(preds).astype(str)
    truth = np.asarray(truth).astype(str)
    labels = list(labels) if labels is not None else sorted(set(truth.tolist()) | set(preds.tolist()))
    idx = {lab: i for i, lab in enumerate(labels)}
    M = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(truth, preds):
        M[idx[t], idx[p]] += 1
    return labels, M


# ---------------------------------------------------------------------------
# loss-change report


@dataclass
class DeltaRow:
    category: str
    n: int
    base: float | None
    refined: float | None

    @property
    def delta(self) -> float | None:
        return None if self.n == 0 else self.refined - self.base

    def to_dict(self) -> dict:
        return {"category": self.category, "n": self.n, "base_lacc": self.base,
                "refined_lacc": self.refined, "delta": self.delta}


@dataclass
class DeltaReport:
    rows: list
    overall_base: float
    overall_refined: float

    @property
    def overall_delta(self) -> float:
        return self.overall_refined - self.overall_base

    @property
    def relative_change(self) -> float:
        return self.overall_delta / self.overall_base if self.overall_base else 0.0

    def row(self, category: str) -> DeltaRow:
        return next(r for r in self.rows if r.category == category)

    def group_abs_delta(self, group: DynamicClass) -> float | None:
        """Sample-weighted |mean delta| over present categories of one dynamic class."""
        rows = [r for r in self.rows if r.n and dynamic_class(r.category) is group]
        if not rows:
            return None
        n = sum(r.n for r in rows)
        return abs(sum(r.delta * r.n for r in rows) / n)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "overall_base_lacc": self.overall_base,
            "overall_refined_lacc": self.overall_refined,
            "overall_delta": self.overall_delta,
            "relative_change": self.relative_change,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["category", "n", "base_lacc", "refined_lacc", "delta"])
            for r in self.rows:
                w.writerow([r.category, r.n] + ["" if v is None else f"{v:.10g}" for v in (r.base, r.refined, r.delta)])


def loss_delta_report(model_base: DenoiserParams, model_refined: DenoiserParams, eval_set, cats: CategorySet,
                      schedule: NoiseSchedule, grid=None, seed: int = 0, labels=None) -> DeltaReport:
    """Per-category mean L_acc of both models and ``delta = refined - base``.

    ``eval_set`` holds (motion, condition[, mask]) tuples; each item's
    category comes from its condition embedding via :func:`assign_category`
    unless ``labels`` is given. Both models see the same noise on the fixed
    timestep grid. Categories with no items are reported with ``n = 0``.
    """
    if not eval_set:
        raise ValueError("evaluation set is empty")
    grid = t_grid(schedule.T) if grid is None else grid
    if labels is None:
        labels = [assign_category(item[1].embedding, cats) for item in eval_set]
    labels = np.asarray(labels)
    base = heldout_acc(model_base, eval_set, schedule, grid, seed)
    ref = heldout_acc(model_refined, eval_set, schedule, grid, seed)
    rows = []
    for name in tuple(cats.names) + (cats.other_label,):
        sel = labels == name
        n = int(sel.sum())
        rows.append(DeltaRow(name, n, float(base[sel].mean()) if n else None, float(ref[sel].mean()) if n else None))
    return DeltaReport(rows, float(base.mean()), float(ref.mean()))


# ---------------------------------------------------------------------------
# report


@dataclass
class EvalReport:
    balanced_accuracy: list
    confusion_labels: list
    confusion: np.ndarray
    loss_delta: DeltaReport | None = None
    projection: list = field(default_factory=list)  # (x, y, source, label)
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.balanced_accuracy))

    @property
    def std(self) -> float:
        return float(np.std(self.balanced_accuracy))

    def to_dict(self) -> dict:
        return {
            "balanced_accuracy": {"runs": list(map(float, self.balanced_accuracy)), "mean": self.mean, "std": self.std},
            "confusion": {"labels": list(self.confusion_labels), "matrix": np.asarray(self.confusion).tolist()},
            "loss_delta": self.loss_delta.to_dict() if self.loss_delta else None,
            **self.extra,
        }

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        with open(out / "confusion.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred"] + list(self.confusion_labels))
            for lab, row in zip(self.confusion_labels, np.asarray(self.confusion)):
                w.writerow([lab] + [int(v) for v in row])
        with open(out / "projection.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "source", "label"])
            for x, y, src, lab in self.projection:
                w.writerow([f"{x:.10g}", f"{y:.10g}", src, lab])
        if self.loss_delta:
            self.loss_delta.write_csv(out / "loss_delta.csv")
