"""Synthetic-corpus oracle for the speaker-bias effect.

The generator produces feature sequences with a fully known factorization:
frame = codebook[code] + speaker_offset + noise, where each dialect has its
own code distribution (content) and each speaker a fixed additive offset
(identity). Because train speakers are disjoint across dialects, speaker
identity is a perfect shortcut for the dialect label, which a classifier
will exploit unless conversion removes it.

The bias experiment trains three conditions identically and evaluates all
of them on natural unseen-speaker test data:

- baseline_natural: natural training data (shortcut available);
- vc_unbiased: training data converted against a shared target-voice pool
  (shortcut removed), natural data excluded;
- vc_biased: converted against dialect-disjoint target pools (shortcut
  deliberately re-injected), natural data excluded.

All randomness derives from (seed, entity kind, entity name), so results
are reproducible regardless of generation or scheduling order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .classifier import TrainConfig, train
from .core import DEFAULT_LABELS, Dataset, ToolkitError, UtteranceRecord, VoicePool, assign_targets
from .evaluation import Metrics, evaluate, relative_delta
from .features import FeatureSequence
from .seeding import derive_seed
from .vc import MatchingSet, VCConfig, execute_plan

IN_DOMAIN = "studio"
SHIFTED_DOMAIN = "field"

SYNTH_FRAME_RATE = 100.0
SYNTH_CONFIG_ID = "synth-v1"

_CODEBOOK_MAX_COSINE = 0.5
_CODEBOOK_MAX_TRIES = 10000


class GenerationError(ToolkitError):
    """Corpus generation failed (for example codebook rejection sampling)."""


class BiasPremiseWarning(UserWarning):
    """Speaker offsets do not dominate frame noise; the bias effect may vanish."""


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    dialect_separation is the Dirichlet concentration of per-dialect code
    distributions (smaller = sharper, more separable dialects). The speaker
    shortcut is observable only while speaker_sigma exceeds frame_noise;
    configurations that break that premise are allowed (for ablations) but
    warned about.
    """

    n_dialects: int = 5
    speakers_per_dialect_train: int = 6
    speakers_test: int = 4
    utterances_per_speaker: int = 30
    frames_per_utterance: int = 60
    feature_dim: int = 24
    codebook_size: int = 16
    dialect_separation: float = 0.35
    speaker_sigma: float = 0.8
    frame_noise: float = 0.1
    domain_shift: float = 0.3
    seed: int = 0
    # Held-out conversion material: shared pool size and per-dialect pool
    # size for the biased condition (scaled-down analogues of 12 and 12x5).
    target_speakers_shared: int = 4
    target_speakers_per_dialect: int = 4
    matching_utterances_per_target: int = 10
    # Target voices are out-of-corpus speakers (think audiobook narrators vs
    # broadcast speech): their offsets scale at a multiple of speaker_sigma.
    # Frame-level matching tolerates a large constant shift of the whole
    # pool, while the injected shortcut must dominate the classifier.
    voice_offset_scale: float = 4.0

    def __post_init__(self) -> None:
        positive = (
            self.n_dialects,
            self.speakers_per_dialect_train,
            self.speakers_test,
            self.utterances_per_speaker,
            self.frames_per_utterance,
            self.feature_dim,
            self.codebook_size,
            self.target_speakers_shared,
            self.target_speakers_per_dialect,
            self.matching_utterances_per_target,
        )
        if any(v < 1 for v in positive):
            raise GenerationError("all corpus sizes must be at least 1")
        if self.dialect_separation <= 0:
            raise GenerationError("dialect_separation must be positive")
        if self.speaker_sigma < 0 or self.frame_noise < 0 or self.domain_shift < 0:
            raise GenerationError("sigmas must be nonnegative")
        if self.voice_offset_scale < 0:
            raise GenerationError("voice_offset_scale must be nonnegative")
        if self.speaker_sigma <= self.frame_noise:
            warnings.warn(
                f"speaker_sigma ({self.speaker_sigma}) does not exceed frame_noise "
                f"({self.frame_noise}); the speaker shortcut will not dominate",
                BiasPremiseWarning,
                stacklevel=2,
            )

    def dialect_names(self) -> tuple[str, ...]:
        if self.n_dialects == len(DEFAULT_LABELS):
            return DEFAULT_LABELS
        return tuple(f"d{i}" for i in range(self.n_dialects))


@dataclass
class SynthCorpus:
    """Generated corpus plus the ground-truth factors behind it."""

    dataset: Dataset
    features: dict[str, FeatureSequence]
    shared_voices: VoicePool
    disjoint_voices: VoicePool
    dialect_speakers: dict[str, tuple[str, ...]]
    codebook: np.ndarray
    code_distributions: dict[str, np.ndarray]
    speaker_offsets: dict[str, np.ndarray]
    domain_offsets: dict[str, np.ndarray]


def _unit_codebook(cfg: SynthConfig) -> np.ndarray:
    """Seeded random unit vectors with pairwise cosine below 0.5, by rejection."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "codebook"))
    accepted: list[np.ndarray] = []
    tries = 0
    while len(accepted) < cfg.codebook_size:
        tries += 1
        if tries > _CODEBOOK_MAX_TRIES:
            raise GenerationError(
                f"codebook rejection sampling failed after {_CODEBOOK_MAX_TRIES} tries; "
                f"feature_dim {cfg.feature_dim} is too small for {cfg.codebook_size} codes"
            )
        vec = rng.normal(size=cfg.feature_dim)
        vec /= np.linalg.norm(vec)
        if all(float(np.dot(vec, prev)) < _CODEBOOK_MAX_COSINE for prev in accepted):
            accepted.append(vec)
    return np.vstack(accepted)


def _utterance_frames(
    cfg: SynthConfig,
    codebook: np.ndarray,
    code_dist: np.ndarray,
    offset: np.ndarray,
    utt_id: str,
) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(cfg.seed, "utt", utt_id))
    codes = rng.choice(cfg.codebook_size, size=cfg.frames_per_utterance, p=code_dist)
    noise = rng.normal(0.0, cfg.frame_noise, size=(cfg.frames_per_utterance, cfg.feature_dim))
    return codebook[codes] + offset + noise


def _matching_material(
    cfg: SynthConfig, codebook: np.ndarray, offset: np.ndarray, speaker_id: str
) -> MatchingSet:
    """Target-voice material draws codes uniformly: dialect-neutral content."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "voice", speaker_id))
    n = cfg.matching_utterances_per_target * cfg.frames_per_utterance
    codes = rng.integers(0, cfg.codebook_size, size=n)
    noise = rng.normal(0.0, cfg.frame_noise, size=(n, cfg.feature_dim))
    return MatchingSet(speaker_id, codebook[codes] + offset + noise, cfg.matching_utterances_per_target)


def gen_corpus(cfg: SynthConfig) -> SynthCorpus:
    """Generate the synthetic corpus plus held-out conversion material.

    Train speakers are disjoint across dialects and test speakers are
    unseen. Every test utterance also gets a shifted-domain copy with a
    per-domain offset added.
    """
    dialects = cfg.dialect_names()
    codebook = _unit_codebook(cfg)

    code_distributions = {
        d: np.random.default_rng(derive_seed(cfg.seed, "dialect", d)).dirichlet(
            np.full(cfg.codebook_size, cfg.dialect_separation)
        )
        for d in dialects
    }

    def speaker_offset(speaker_id: str, sigma: float | None = None) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(cfg.seed, "speaker", speaker_id))
        sigma = cfg.speaker_sigma if sigma is None else sigma
        return rng.normal(0.0, 1.0, size=cfg.feature_dim) * sigma

    voice_sigma = cfg.speaker_sigma * cfg.voice_offset_scale

    domain_offsets = {
        SHIFTED_DOMAIN: np.random.default_rng(
            derive_seed(cfg.seed, "domain", SHIFTED_DOMAIN)
        ).normal(0.0, cfg.domain_shift, size=cfg.feature_dim)
    }

    records: list[UtteranceRecord] = []
    feats: dict[str, FeatureSequence] = {}
    speaker_offsets: dict[str, np.ndarray] = {}

    def add_utterances(dialect: str, speaker_id: str, split: str) -> None:
        offset = speaker_offsets.setdefault(speaker_id, speaker_offset(speaker_id))
        for j in range(cfg.utterances_per_speaker):
            utt_id = f"{speaker_id}_u{j:03d}"
            frames = _utterance_frames(cfg, codebook, code_distributions[dialect], offset, utt_id)
            records.append(
                UtteranceRecord(
                    id=utt_id,
                    source=f"{utt_id}.ft",
                    dialect=dialect,
                    speaker=speaker_id,
                    domain=IN_DOMAIN,
                    split=split,
                )
            )
            feats[utt_id] = FeatureSequence(frames, SYNTH_FRAME_RATE, SYNTH_CONFIG_ID)
            if split == "test":
                shifted_id = f"{utt_id}_{SHIFTED_DOMAIN}"
                records.append(
                    UtteranceRecord(
                        id=shifted_id,
                        source=f"{shifted_id}.ft",
                        dialect=dialect,
                        speaker=speaker_id,
                        domain=SHIFTED_DOMAIN,
                        split="test",
                    )
                )
                feats[shifted_id] = FeatureSequence(
                    frames + domain_offsets[SHIFTED_DOMAIN], SYNTH_FRAME_RATE, SYNTH_CONFIG_ID
                )

    for dialect in dialects:
        for i in range(cfg.speakers_per_dialect_train):
            add_utterances(dialect, f"spk_{dialect}_{i:02d}", "train")
        for i in range(cfg.speakers_test):
            add_utterances(dialect, f"spk_{dialect}_t{i:02d}", "test")

    shared: list[tuple[str, MatchingSet]] = []
    for i in range(cfg.target_speakers_shared):
        sid = f"voice_shared_{i:02d}"
        speaker_offsets[sid] = speaker_offset(sid, voice_sigma)
        shared.append((sid, _matching_material(cfg, codebook, speaker_offsets[sid], sid)))
    shared_voices = VoicePool(shared)

    disjoint: list[tuple[str, MatchingSet]] = []
    dialect_speakers: dict[str, tuple[str, ...]] = {}
    for dialect in dialects:
        ids = tuple(
            f"voice_{dialect}_{i:02d}" for i in range(cfg.target_speakers_per_dialect)
        )
        dialect_speakers[dialect] = ids
        for sid in ids:
            speaker_offsets[sid] = speaker_offset(sid, voice_sigma)
            disjoint.append((sid, _matching_material(cfg, codebook, speaker_offsets[sid], sid)))
    disjoint_voices = VoicePool(disjoint)

    return SynthCorpus(
        dataset=Dataset(records, dialects),
        features=feats,
        shared_voices=shared_voices,
        disjoint_voices=disjoint_voices,
        dialect_speakers=dialect_speakers,
        codebook=codebook,
        code_distributions=code_distributions,
        speaker_offsets=speaker_offsets,
        domain_offsets=domain_offsets,
    )


@dataclass(eq=False)
class ConditionResult:
    in_domain: Metrics
    shifted: Metrics
    train_size: int


@dataclass(eq=False)
class ExperimentReport:
    """Per-condition metrics on both test views plus deltas vs baseline."""

    conditions: dict[str, ConditionResult]
    deltas: dict[str, dict[str, float]]
    seed: int

    def accuracy(self, condition: str, view: str = "in_domain") -> float:
        result = self.conditions[condition]
        metrics = result.in_domain if view == "in_domain" else result.shifted
        return metrics.accuracy

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "conditions": {
                name: {
                    "in_domain": res.in_domain.to_dict(),
                    "shifted": res.shifted.to_dict(),
                    "train_size": res.train_size,
                }
                for name, res in self.conditions.items()
            },
            "deltas": self.deltas,
        }


BASELINE = "baseline_natural"
UNBIASED = "vc_unbiased"
BIASED = "vc_biased"
CONDITIONS = (BASELINE, UNBIASED, BIASED)

# Harness training defaults: identical across conditions, sized for the
# default corpus. Chosen so the baseline saturates on its (shortcut-bearing)
# training data while the unbiased condition has time to fit content.
EXPERIMENT_TRAIN = TrainConfig(learning_rate=1e-3, epochs=30, batch_size=32)
EXPERIMENT_VC = VCConfig(k=4, min_pool_warn=0)


def run_bias_experiment(
    cfg: SynthConfig,
    vc_cfg: VCConfig = EXPERIMENT_VC,
    train_cfg: TrainConfig = EXPERIMENT_TRAIN,
) -> ExperimentReport:
    """Train the three conditions identically and evaluate on natural test data.

    The converted conditions train on resynthesized data only. Per-condition
    training seeds derive from (corpus seed, condition), so a report is
    bit-identical across repeated runs with equal arguments.
    """
    corpus = gen_corpus(cfg)
    train_ds = corpus.dataset.subset(split="train")

    condition_data: dict[str, tuple[Dataset, Mapping[str, FeatureSequence]]] = {
        BASELINE: (train_ds, corpus.features)
    }

    unbiased_plan = assign_targets(
        train_ds, corpus.shared_voices, "unbiased_shared", derive_seed(cfg.seed, "plan", UNBIASED)
    )
    unbiased_ds, unbiased_feats = execute_plan(
        unbiased_plan, train_ds, corpus.features, corpus.shared_voices, vc_cfg
    )
    condition_data[UNBIASED] = (unbiased_ds, unbiased_feats)

    biased_plan = assign_targets(
        train_ds,
        corpus.disjoint_voices,
        "biased_disjoint",
        derive_seed(cfg.seed, "plan", BIASED),
        dialect_speakers=corpus.dialect_speakers,
    )
    biased_ds, biased_feats = execute_plan(
        biased_plan, train_ds, corpus.features, corpus.disjoint_voices, vc_cfg
    )
    condition_data[BIASED] = (biased_ds, biased_feats)

    results: dict[str, ConditionResult] = {}
    for name in CONDITIONS:
        data, feats = condition_data[name]
        cond_cfg = TrainConfig(
            learning_rate=train_cfg.learning_rate,
            epochs=train_cfg.epochs if train_cfg.epochs is not None else EXPERIMENT_TRAIN.epochs,
            batch_size=train_cfg.batch_size,
            seed=derive_seed(cfg.seed, "train", name),
            momentum=train_cfg.momentum,
            hidden_units=train_cfg.hidden_units,
        )
        model, _ = train(data, feats, cond_cfg)
        results[name] = ConditionResult(
            in_domain=evaluate(model, corpus.dataset.subset(domain=IN_DOMAIN), corpus.features),
            shifted=evaluate(model, corpus.dataset.subset(domain=SHIFTED_DOMAIN), corpus.features),
            train_size=len(data),
        )

    deltas = {
        name: {
            "in_domain": relative_delta(
                results[name].in_domain.accuracy_pct, results[BASELINE].in_domain.accuracy_pct
            ),
            "shifted": relative_delta(
                results[name].shifted.accuracy_pct, results[BASELINE].shifted.accuracy_pct
            ),
        }
        for name in (UNBIASED, BIASED)
    }
    return ExperimentReport(results, deltas, cfg.seed)


def render_experiment(report: ExperimentReport) -> str:
    lines = [
        "# speaker-bias experiment (synthetic oracle)",
        "# training: resynthesized-only for converted conditions; evaluation: natural unseen speakers",
        "",
        f"{'condition':<18} {'in-domain%':>11} {'delta%':>8} {'shifted%':>9} {'delta%':>8} {'train n':>8}",
    ]
    lines.append("-" * len(lines[-1]))
    for name in CONDITIONS:
        res = report.conditions[name]
        d_in = report.deltas.get(name, {}).get("in_domain")
        d_sh = report.deltas.get(name, {}).get("shifted")
        lines.append(
            f"{name:<18} {res.in_domain.accuracy_pct:>11.2f} "
            f"{('%+8.2f' % d_in) if d_in is not None else '      --'} "
            f"{res.shifted.accuracy_pct:>9.2f} "
            f"{('%+8.2f' % d_sh) if d_sh is not None else '      --'} "
            f"{res.train_size:>8d}"
        )
    return "\n".join(lines) + "\n"
