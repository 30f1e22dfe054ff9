"""Voice-conversion-driven training toolkit for dialect identification.

Pipeline pieces: dataset manifests and target-assignment policies (core),
log-mel features and a binary feature format (features), frame-level kNN
voice conversion (vc), classical augmentations (augment), a lightweight
trainable classifier (classifier), metrics and per-domain reports
(evaluation), and a synthetic-corpus harness for the speaker-bias
experiment (synthlab). The `dialectvc` command line exposes it end to end.
"""

from .core import (
    DEFAULT_LABELS,
    ConversionPlan,
    Dataset,
    UtteranceRecord,
    VoicePool,
    assign_targets,
    concat_train,
    load_manifest,
    save_manifest,
)
from .features import (
    FeatureConfig,
    FeatureSequence,
    Waveform,
    load_features,
    logmel,
    read_wav,
    save_features,
    write_wav,
)
from .vc import MatchingSet, VCConfig, build_matching_set, execute_plan, knn_convert
from .augment import NoiseSpec, SpecAugmentParams, add_noise, pitch_shift, rir_convolve, spec_augment
from .classifier import ClassifierModel, TrainConfig, grad_check, pool, predict, train
from .evaluation import Metrics, domain_average, domain_report, evaluate, relative_delta
from .synthlab import SynthConfig, gen_corpus, run_bias_experiment

__version__ = "0.1.0"
