"""Lightweight dialect classifier: mean-pooled features into a one-hidden-
layer tanh network with a softmax head, trained by mini-batch gradient
descent with momentum on the cross-entropy loss.

Training is single-threaded and fully determined by the seed; models are
immutable after training. Model files use the "MD01" format described in
:func:`save_model`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import Dataset, ToolkitError
from .features import FeatureSequence

MODEL_MAGIC = b"MD01"


class TrainingError(ToolkitError):
    """Training cannot proceed or diverged."""


class ModelError(ToolkitError):
    """Invalid model input or corrupt model file."""


@dataclass
class ClassifierModel:
    """Immutable-after-training predictor over a fixed, ordered label set."""

    w1: np.ndarray  # (F, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, C)
    b2: np.ndarray  # (C,)
    labels: tuple[str, ...]
    pooling: str = "mean"

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        if len(self.labels) < 2:
            raise ModelError("label set must contain at least two classes")
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"non-finite weights in {name}")
            setattr(self, name, arr)
        if self.w2.shape[1] != len(self.labels):
            raise ModelError("output layer width does not match label count")

    @property
    def feature_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden_units(self) -> int:
        return int(self.w1.shape[1])


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. epochs=None resolves to 6 on natural-only data
    and 3 when resynthesized material is present."""

    learning_rate: float = 1e-3
    epochs: int | None = None
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9
    hidden_units: int = 128

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise TrainingError("learning rate must be nonnegative")
        if self.epochs is not None and self.epochs < 1:
            raise TrainingError("epochs must be positive")
        if self.batch_size < 1 or self.hidden_units < 1:
            raise TrainingError("batch size and hidden units must be positive")


def pool(feat: FeatureSequence) -> np.ndarray:
    """Arithmetic mean over frames."""
    return feat.frames.mean(axis=0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _forward(model: ClassifierModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hidden = np.tanh(x @ model.w1 + model.b1)
    probs = _softmax(hidden @ model.w2 + model.b2)
    return hidden, probs


def _batch_loss_and_grads(model, x, y_idx):
    n = x.shape[0]
    hidden, probs = _forward(model, x)
    loss = float(-np.mean(np.log(probs[np.arange(n), y_idx])))
    d_logits = probs.copy()
    d_logits[np.arange(n), y_idx] -= 1.0
    d_logits /= n
    grads = {
        "w2": hidden.T @ d_logits,
        "b2": d_logits.sum(axis=0),
    }
    d_hidden = (d_logits @ model.w2.T) * (1.0 - hidden**2)
    grads["w1"] = x.T @ d_hidden
    grads["b1"] = d_hidden.sum(axis=0)
    return loss, grads


def _pooled_matrix(
    dataset: Dataset, features: Mapping[str, FeatureSequence]
) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    targets = []
    for rec in dataset.records:
        if rec.id not in features:
            raise TrainingError(f"no features for record {rec.id!r}", record_id=rec.id)
        vec = pool(features[rec.id])
        if rows and vec.size != rows[0].size:
            raise TrainingError(
                f"record {rec.id!r}: feature dim {vec.size} differs from {rows[0].size}",
                record_id=rec.id,
            )
        rows.append(vec)
        targets.append(dataset.labels.index(rec.dialect))
    return np.vstack(rows), np.asarray(targets, dtype=np.int64)


def train(
    dataset: Dataset,
    features: Mapping[str, FeatureSequence],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[ClassifierModel, list[float]]:
    """Train a classifier; returns the model and the per-epoch mean loss.

    Weights initialize uniformly in +-1/sqrt(fan_in) (biases at zero) and
    epochs shuffle with the same seeded generator, so equal arguments give
    bit-identical models. Per-epoch loss is the mean over samples of the
    batch losses measured before each update.
    """
    if not dataset.records:
        raise TrainingError("cannot train on an empty dataset")
    x, y_idx = _pooled_matrix(dataset, features)
    n, dim = x.shape
    epochs = cfg.epochs
    if epochs is None:
        resynth = any(r.provenance != "natural" for r in dataset.records)
        epochs = 3 if resynth else 6

    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_units
    c = len(dataset.labels)
    model = ClassifierModel(
        w1=rng.uniform(-1.0, 1.0, size=(dim, h)) / np.sqrt(dim),
        b1=np.zeros(h),
        w2=rng.uniform(-1.0, 1.0, size=(h, c)) / np.sqrt(h),
        b2=np.zeros(c),
        labels=dataset.labels,
    )
    velocity = {k: np.zeros_like(getattr(model, k)) for k in ("w1", "b1", "w2", "b2")}

    trace: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            loss, grads = _batch_loss_and_grads(model, x[idx], y_idx[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"NaN loss at epoch {epoch} batch {batch_no}")
            total += loss * idx.size
            for name, grad in grads.items():
                velocity[name] = cfg.momentum * velocity[name] + grad
                setattr(model, name, getattr(model, name) - cfg.learning_rate * velocity[name])
        trace.append(total / n)
    return model, trace


def predict(model: ClassifierModel, feat: FeatureSequence) -> tuple[str, np.ndarray]:
    """Predict the label of one utterance; ties resolve to the lowest index."""
    x = pool(feat)
    if x.size != model.feature_dim:
        raise ModelError(f"feature dim {x.size} does not match model dim {model.feature_dim}")
    _, probs = _forward(model, x[None, :])
    probs = probs[0]
    return model.labels[int(np.argmax(probs))], probs


def grad_check(
    model: ClassifierModel,
    sample: FeatureSequence | np.ndarray,
    label: str,
    h: float = 1e-5,
    n_coords: int = 100,
    seed: int = 0,
) -> float:
    """Compare analytic cross-entropy gradients against central differences.

    Checks a seeded random subset of up to n_coords parameter coordinates
    and returns the maximum relative error.
    """
    x = pool(sample) if isinstance(sample, FeatureSequence) else np.asarray(sample, dtype=np.float64)
    y_idx = np.asarray([model.labels.index(label)])
    x2 = x[None, :]

    _, analytic = _batch_loss_and_grads(model, x2, y_idx)
    names = ("w1", "b1", "w2", "b2")
    sizes = [getattr(model, name).size for name in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_coords, total), replace=False)

    def loss_at() -> float:
        hidden = np.tanh(x2 @ model.w1 + model.b1)
        probs = _softmax(hidden @ model.w2 + model.b2)
        return float(-np.log(probs[0, y_idx[0]]))

    max_rel = 0.0
    bounds = np.cumsum(sizes)
    for flat in np.sort(chosen):
        part = int(np.searchsorted(bounds, flat, side="right"))
        offset = int(flat - (bounds[part - 1] if part > 0 else 0))
        arr = getattr(model, names[part])
        pos = np.unravel_index(offset, arr.shape)
        original = arr[pos]
        arr[pos] = original + h
        loss_plus = loss_at()
        arr[pos] = original - h
        loss_minus = loss_at()
        arr[pos] = original
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        exact = analytic[names[part]][pos]
        rel = abs(exact - numeric) / max(abs(exact) + abs(numeric), 1e-6)
        max_rel = max(max_rel, rel)
    return max_rel


def save_model(model: ClassifierModel, path: str | Path) -> None:
    """Write "MD01": magic, labels, dims, then w1/b1/w2/b2 as float64 LE."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = [MODEL_MAGIC, struct.pack("<I", len(model.labels))]
    for label in model.labels:
        enc = label.encode("utf-8")
        out.append(struct.pack("<H", len(enc)))
        out.append(enc)
    out.append(struct.pack("<II", model.feature_dim, model.hidden_units))
    for name in ("w1", "b1", "w2", "b2"):
        out.append(getattr(model, name).astype("<f8").tobytes())
    path.write_bytes(b"".join(out))


def load_model(path: str | Path) -> ClassifierModel:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise ModelError(f"{path}: bad magic {raw[:4]!r}")
    pos = 4
    (n_labels,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    labels = []
    for _ in range(n_labels):
        (ln,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        labels.append(raw[pos : pos + ln].decode("utf-8"))
        pos += ln
    dim, hidden = struct.unpack_from("<II", raw, pos)
    pos += 8
    shapes = [(dim, hidden), (hidden,), (hidden, n_labels), (n_labels,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        end = pos + count * 8
        if end > len(raw):
            raise ModelError(f"{path}: truncated weight payload")
        arrays.append(np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy())
        pos = end
    if pos != len(raw):
        raise ModelError(f"{path}: trailing bytes after weights")
    return ClassifierModel(arrays[0], arrays[1], arrays[2], arrays[3], tuple(labels))


def write_loss_trace(trace: list[float], path: str | Path) -> None:
    """Two-column text file: epoch index and mean loss."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{epoch}\t{loss:.10f}" for epoch, loss in enumerate(trace)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
