"""Few-shot transfer learning for wearable-sensor activity recognition."""

from .data import (
    Episode,
    SequenceBatch,
    SplitSpec,
    balance_classes,
    load_recording,
    sample_episode,
    sliding_window,
    split_domains,
    synth_generate,
)
from .estimators import FewShotClassifier, LSTMClassifier
from .harness import ExperimentConfig, ResultTable, aggregate, emit_report, run_experiment
from .ngd import HitCountTable, ngd, ngd_class_relevance
from .nn import NetworkSizes, feature_extract, init_params, l_rp_norm, loss_and_grads
from .relevance import (
    L21Reconstruction,
    aggregate_classwise,
    cosine_relevance,
    normalize_hard,
    normalize_soft,
    sparse_reconstruction,
)
from .transfer import (
    SourceModel,
    TargetInit,
    fine_tune,
    imprint_weights,
    init_target,
    merge_models,
    nn_classify,
    train_source,
)

__version__ = "0.1.0"
