"""Frame-level k-nearest-neighbor voice conversion.

Each source frame is replaced by the mean of its k most cosine-similar
frames in the target speaker's matching set, so converted utterances keep
their content (frame-by-frame structure) while taking on the target's
frame statistics. Conversion stays in feature space end to end.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import (
    ConversionPlan,
    Dataset,
    SplitPurityError,
    ToolkitError,
    VoicePool,
    resynthesized_record,
)
from .features import FeatureSequence

DEFAULT_MIN_POOL_WARN = 6000  # ~one minute of matching material at 100 frames/s


class ConversionError(ToolkitError):
    """kNN conversion cannot proceed (bad dims, k too large, bad plan pair)."""


class PoolSizeWarning(UserWarning):
    """Matching set is smaller than the recommended minimum."""


@dataclass
class MatchingSet:
    """Concatenated frame pool of one target speaker."""

    speaker_id: str
    pool: np.ndarray
    source_count: int

    def __post_init__(self) -> None:
        self.pool = np.asarray(self.pool, dtype=np.float64)
        if self.pool.ndim != 2 or self.pool.shape[0] < 1:
            raise ConversionError("matching set must be a nonempty 2-D frame matrix")
        if not np.all(np.isfinite(self.pool)):
            raise ConversionError("matching set contains non-finite values")

    @property
    def size(self) -> int:
        return int(self.pool.shape[0])

    @property
    def dim(self) -> int:
        return int(self.pool.shape[1])


@dataclass(frozen=True)
class VCConfig:
    k: int = 4
    min_pool_warn: int = DEFAULT_MIN_POOL_WARN
    epsilon: float = 1e-12

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConversionError("k must be at least 1")
        if self.epsilon <= 0:
            raise ConversionError("epsilon must be positive")


def build_matching_set(
    speaker_id: str,
    segments: Iterable[FeatureSequence],
    min_pool_warn: int = DEFAULT_MIN_POOL_WARN,
) -> MatchingSet:
    """Concatenate a speaker's feature segments, in input order, into one pool."""
    segments = list(segments)
    if not segments:
        raise ConversionError(f"no segments given for target speaker {speaker_id!r}")
    dim = segments[0].dim
    for seg in segments:
        if seg.dim != dim:
            raise ConversionError(
                f"target speaker {speaker_id!r}: dimension mismatch ({seg.dim} vs {dim})"
            )
    pool = np.vstack([seg.frames for seg in segments])
    if pool.shape[0] < min_pool_warn:
        warnings.warn(
            f"matching set for {speaker_id!r} has {pool.shape[0]} frames "
            f"(< {min_pool_warn}); conversion quality may suffer",
            PoolSizeWarning,
            stacklevel=2,
        )
    return MatchingSet(speaker_id, pool, len(segments))


def knn_convert(src: FeatureSequence, target: MatchingSet, cfg: VCConfig = VCConfig()) -> FeatureSequence:
    """Convert a sequence into the target voice, frame by frame.

    Output frame t is the arithmetic mean of the k pool frames most
    cosine-similar to source frame t. Norms are guarded by epsilon, so a
    zero frame has similarity 0 against everything. Ties break toward the
    lowest pool row index. The source is never mutated.
    """
    if src.dim != target.dim:
        raise ConversionError(f"dimension mismatch: source {src.dim} vs pool {target.dim}")
    if cfg.k > target.size:
        raise ConversionError(f"k={cfg.k} exceeds matching-set size {target.size}")
    query = src.frames
    pool = target.pool
    qn = query / np.maximum(np.linalg.norm(query, axis=1, keepdims=True), cfg.epsilon)
    pn = pool / np.maximum(np.linalg.norm(pool, axis=1, keepdims=True), cfg.epsilon)
    sims = qn @ pn.T
    # Stable sort on negated similarities: equal scores keep ascending row order.
    order = np.argsort(-sims, axis=1, kind="stable")[:, : cfg.k]
    converted = pool[order].mean(axis=1)
    return FeatureSequence(
        converted,
        src.frame_rate,
        f"{src.config_id}+vc:{target.speaker_id}",
    )


def execute_plan(
    plan: ConversionPlan,
    dataset: Dataset,
    features: Mapping[str, FeatureSequence],
    voices: VoicePool,
    cfg: VCConfig = VCConfig(),
    threads: int = 1,
) -> tuple[Dataset, dict[str, FeatureSequence]]:
    """Resynthesize every planned (source, target) pair.

    Labels are copied from the source records; output ids are suffixed with
    the target speaker. Only train-split sources are converted, and results
    are assembled in plan order regardless of scheduling.
    """
    jobs = []
    for src_id, target_id in plan.pairs:
        record = dataset.record(src_id)
        if record.split != "train":
            raise SplitPurityError(
                f"pair ({src_id!r} -> {target_id!r}): refusing to convert "
                f"{record.split}-split material; evaluation inputs stay natural",
                record_id=src_id,
            )
        if src_id not in features:
            raise ConversionError(
                f"pair ({src_id!r} -> {target_id!r}): no features for source id",
                record_id=src_id,
            )
        material = voices.material(target_id)
        if not isinstance(material, MatchingSet):
            raise ConversionError(
                f"pair ({src_id!r} -> {target_id!r}): voice pool does not hold a "
                "built matching set for the target"
            )
        jobs.append((record, features[src_id], material))

    def run(job):
        record, feat, material = job
        try:
            return knn_convert(feat, material, cfg)
        except ConversionError as exc:
            raise ConversionError(
                f"pair ({record.id!r} -> {material.speaker_id!r}): {exc}",
                record_id=record.id,
            ) from None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            converted = list(pool.map(run, jobs))
    else:
        converted = [run(job) for job in jobs]

    out_records = []
    out_features: dict[str, FeatureSequence] = {}
    for (record, _, material), feat in zip(jobs, converted):
        new_record = resynthesized_record(record, material.speaker_id)
        out_records.append(new_record)
        out_features[new_record.id] = feat
    return Dataset(out_records, dataset.labels), out_features
