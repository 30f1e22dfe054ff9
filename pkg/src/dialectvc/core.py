"""Dataset model: labeled utterances, manifests, voice pools, conversion plans.

A dataset is an ordered collection of utterance records over a closed label
set, fixed when the dataset is loaded. Records point at waveform or feature
files on disk; no audio is touched here. Target-voice assignment policies
turn a dataset plus a pool of target voices into a conversion plan, and
training sets are assembled by concatenating natural and resynthesized data.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

DEFAULT_LABELS: tuple[str, ...] = ("msa", "gulf", "levantine", "maghrebi", "egyptian")
SPLITS: tuple[str, ...] = ("train", "dev", "test")
POLICIES: tuple[str, ...] = (
    "fixed_single",
    "uniform_draw",
    "per_voice_full",
    "unbiased_shared",
    "biased_disjoint",
)

MANIFEST_KEYS = ("id", "source", "dialect", "speaker", "domain", "split", "provenance", "target_speaker")

PROVENANCE_NATURAL = "natural"
PROVENANCE_RESYNTH = "resynthesized"
_AUGMENTED_RE = re.compile(r"^augmented:[A-Za-z0-9_+.-]+$")

# Joins a source record id with the target speaker id in resynthesized ids.
VC_ID_SEP = "__vc_"


class ToolkitError(ValueError):
    """Base error; carries the offending record id when one exists."""

    def __init__(self, message: str, record_id: str | None = None):
        super().__init__(message)
        self.record_id = record_id


class ManifestError(ToolkitError):
    """Malformed manifest file or record violating dataset invariants."""


class DatasetError(ToolkitError):
    """Invalid dataset composition (label mismatch, id collision, ...)."""


class PlanError(ToolkitError):
    """A conversion plan cannot be built or resolved."""


class SplitPurityError(ToolkitError):
    """Resynthesized or augmented material leaked into a dev/test split."""


def is_modified(provenance: str) -> bool:
    return provenance != PROVENANCE_NATURAL


@dataclass(frozen=True)
class UtteranceRecord:
    """One labeled speech sample plus bookkeeping metadata."""

    id: str
    source: str
    dialect: str
    speaker: str
    domain: str
    split: str
    provenance: str = PROVENANCE_NATURAL
    target_speaker: str | None = None

    def validate(self, labels: Sequence[str]) -> None:
        if not self.id:
            raise ManifestError("record id must be nonempty")
        if self.dialect not in labels:
            raise ManifestError(
                f"record {self.id!r}: unknown label {self.dialect!r} (label set: {', '.join(labels)})",
                record_id=self.id,
            )
        if self.split not in SPLITS:
            raise ManifestError(
                f"record {self.id!r}: split must be one of {SPLITS}, got {self.split!r}",
                record_id=self.id,
            )
        if self.provenance == PROVENANCE_NATURAL:
            if self.target_speaker is not None:
                raise ManifestError(
                    f"record {self.id!r}: natural records must not carry a target_speaker",
                    record_id=self.id,
                )
        elif self.provenance == PROVENANCE_RESYNTH:
            if not self.target_speaker:
                raise ManifestError(
                    f"record {self.id!r}: resynthesized records require a target_speaker",
                    record_id=self.id,
                )
        elif _AUGMENTED_RE.match(self.provenance):
            if self.target_speaker is not None:
                raise ManifestError(
                    f"record {self.id!r}: augmented records must not carry a target_speaker",
                    record_id=self.id,
                )
        else:
            raise ManifestError(
                f"record {self.id!r}: bad provenance {self.provenance!r} "
                "(expected natural, resynthesized, or augmented:<kind>)",
                record_id=self.id,
            )


@dataclass
class Dataset:
    """Ordered utterance records over a fixed, closed label set.

    An empty record list is permitted so that set algebra composes (for
    example concatenating with an empty resynthesized set); loading from a
    manifest still rejects empty files.
    """

    records: list[UtteranceRecord]
    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        if not self.labels:
            raise DatasetError("label set must be nonempty")
        if len(set(self.labels)) != len(self.labels):
            raise DatasetError("label set contains duplicates")
        self._index: dict[str, UtteranceRecord] = {}
        for rec in self.records:
            rec.validate(self.labels)
            if rec.id in self._index:
                raise DatasetError(f"duplicate record id {rec.id!r}", record_id=rec.id)
            self._index[rec.id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def record(self, record_id: str) -> UtteranceRecord:
        try:
            return self._index[record_id]
        except KeyError:
            raise PlanError(f"unresolvable record id {record_id!r}", record_id=record_id) from None

    def subset(
        self,
        split: str | None = None,
        domain: str | None = None,
        dialect: str | None = None,
    ) -> "Dataset":
        recs = [
            r
            for r in self.records
            if (split is None or r.split == split)
            and (domain is None or r.domain == domain)
            and (dialect is None or r.dialect == dialect)
        ]
        return Dataset(recs, self.labels)

    def domains(self) -> tuple[str, ...]:
        seen: list[str] = []
        for r in self.records:
            if r.domain not in seen:
                seen.append(r.domain)
        return tuple(seen)


def load_manifest(path: str | Path, labels: Sequence[str] = DEFAULT_LABELS) -> Dataset:
    """Load a dataset from a UTF-8 manifest, one flat JSON object per line.

    Record order equals file order. Unknown keys are rejected; errors name
    the offending line.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    records: list[UtteranceRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed line ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: malformed line (expected a key/value object)")
            unknown = set(obj) - set(MANIFEST_KEYS)
            if unknown:
                raise ManifestError(f"{path}:{lineno}: unknown keys {sorted(unknown)}")
            missing = {k for k in MANIFEST_KEYS if k != "target_speaker"} - set(obj)
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing keys {sorted(missing)}")
            for key, value in obj.items():
                if not isinstance(value, str):
                    raise ManifestError(f"{path}:{lineno}: key {key!r} must be a string")
            try:
                records.append(UtteranceRecord(**obj))
            except TypeError:
                raise ManifestError(f"{path}:{lineno}: malformed record") from None
    if not records:
        raise ManifestError(f"manifest is empty: {path}")
    try:
        return Dataset(records, tuple(labels))
    except DatasetError as exc:
        raise ManifestError(f"{path}: {exc}", record_id=exc.record_id) from None


def save_manifest(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in dataset.records:
            obj = {
                "id": rec.id,
                "source": rec.source,
                "dialect": rec.dialect,
                "speaker": rec.speaker,
                "domain": rec.domain,
                "split": rec.split,
                "provenance": rec.provenance,
            }
            if rec.target_speaker is not None:
                obj["target_speaker"] = rec.target_speaker
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


@dataclass
class VoicePool:
    """Ordered pool of target voices: (speaker_id, matching material).

    The material slot holds whatever stage-appropriate reference is at hand:
    a path to matching-set audio/features while planning, or a built
    MatchingSet when converting.
    """

    voices: list[tuple[str, Any]]

    def __post_init__(self) -> None:
        if not self.voices:
            raise PlanError("voice pool is empty")
        ids = [sid for sid, _ in self.voices]
        if len(set(ids)) != len(ids):
            raise PlanError("voice pool contains duplicate speaker ids")

    def __len__(self) -> int:
        return len(self.voices)

    @property
    def speaker_ids(self) -> tuple[str, ...]:
        return tuple(sid for sid, _ in self.voices)

    def material(self, speaker_id: str) -> Any:
        for sid, mat in self.voices:
            if sid == speaker_id:
                return mat
        raise PlanError(f"unknown target speaker {speaker_id!r}", record_id=speaker_id)


@dataclass(frozen=True)
class ConversionPlan:
    """Source-record to target-speaker assignments under a named policy."""

    pairs: tuple[tuple[str, str], ...]
    policy: str
    seed: int


def assign_targets(
    dataset: Dataset,
    pool: VoicePool,
    policy: str,
    seed: int,
    dialect_speakers: Mapping[str, Sequence[str]] | None = None,
) -> ConversionPlan:
    """Assign a target voice to every train-split record under a policy.

    Conversion applies to training material only, so dev/test records are
    never planned. Policies:

    - fixed_single: the pool's one voice is used for every record.
    - uniform_draw: one voice per record, drawn uniformly (seeded).
    - per_voice_full: every record paired with every voice (T x N pairs).
    - unbiased_shared: uniform_draw where all dialects share the whole pool.
    - biased_disjoint: each record draws only from its own dialect's voices,
      given as an explicit dialect -> speakers partition of the pool.
    """
    if policy not in POLICIES:
        raise PlanError(f"unknown policy {policy!r} (expected one of {', '.join(POLICIES)})")
    if not dataset.records:
        raise PlanError("cannot assign targets for an empty dataset")
    sources = [r for r in dataset.records if r.split == "train"]
    if not sources:
        raise PlanError("dataset has no train-split records to assign")

    voice_ids = pool.speaker_ids
    pairs: list[tuple[str, str]] = []

    if policy == "fixed_single":
        if len(voice_ids) != 1:
            raise PlanError(f"fixed_single requires a pool of exactly one voice, got {len(voice_ids)}")
        pairs = [(r.id, voice_ids[0]) for r in sources]
    elif policy in ("uniform_draw", "unbiased_shared"):
        rng = np.random.default_rng(seed)
        draws = rng.integers(0, len(voice_ids), size=len(sources))
        pairs = [(r.id, voice_ids[int(j)]) for r, j in zip(sources, draws)]
    elif policy == "per_voice_full":
        pairs = [(r.id, v) for r in sources for v in voice_ids]
    else:  # biased_disjoint
        partition = _check_partition(dataset.labels, voice_ids, dialect_speakers)
        rng = np.random.default_rng(seed)
        for r in sources:
            candidates = partition[r.dialect]
            j = int(rng.integers(0, len(candidates)))
            pairs.append((r.id, candidates[j]))

    return ConversionPlan(tuple(pairs), policy, seed)


def _check_partition(
    labels: Sequence[str],
    voice_ids: Sequence[str],
    dialect_speakers: Mapping[str, Sequence[str]] | None,
) -> dict[str, tuple[str, ...]]:
    if dialect_speakers is None:
        raise PlanError("biased_disjoint requires an explicit dialect -> speakers map")
    known = set(voice_ids)
    partition: dict[str, tuple[str, ...]] = {}
    seen: set[str] = set()
    for label in labels:
        speakers = tuple(dialect_speakers.get(label, ()))
        if not speakers:
            raise PlanError(f"incomplete partition: dialect {label!r} has no target speakers")
        for sid in speakers:
            if sid not in known:
                raise PlanError(f"incomplete partition: speaker {sid!r} not in the voice pool")
            if sid in seen:
                raise PlanError(f"incomplete partition: speaker {sid!r} serves two dialects")
            seen.add(sid)
        partition[label] = speakers
    return partition


def concat_train(natural: Dataset, resynth: Dataset) -> Dataset:
    """Concatenate natural and resynthesized data into one training set.

    Natural records precede resynthesized ones; resynthesized ids already
    carry their target-speaker suffix, so uniqueness holds unless the caller
    concatenates the same resynthesis twice.
    """
    if natural.labels != resynth.labels:
        raise DatasetError(
            f"label-set mismatch: {natural.labels} vs {resynth.labels}"
        )
    for rec in resynth.records:
        if rec.provenance != PROVENANCE_RESYNTH:
            raise DatasetError(
                f"record {rec.id!r}: expected resynthesized provenance, got {rec.provenance!r}",
                record_id=rec.id,
            )
    return merge_datasets(natural, resynth)


def merge_datasets(first: Dataset, *rest: Dataset) -> Dataset:
    """Union of datasets with id-uniqueness and label-set checks."""
    merged = list(first.records)
    for ds in rest:
        if ds.labels != first.labels:
            raise DatasetError(f"label-set mismatch: {first.labels} vs {ds.labels}")
        merged.extend(ds.records)
    try:
        return Dataset(merged, first.labels)
    except DatasetError as exc:
        raise DatasetError(f"id collision while merging: {exc}", record_id=exc.record_id) from None


def resynthesized_record(source: UtteranceRecord, target_speaker: str) -> UtteranceRecord:
    """Derive the resynthesized twin of a record for a given target voice."""
    new_id = f"{source.id}{VC_ID_SEP}{target_speaker}"
    return replace(
        source,
        id=new_id,
        source=f"{new_id}.ft",
        speaker=target_speaker,
        provenance=PROVENANCE_RESYNTH,
        target_speaker=target_speaker,
    )
