"""Flow features, incremental intrusion-detection models, and forgetting measurement."""

from .evaluation import (
    ConfusionCounts, EvalSnapshot, ForgettingCurve, UndefinedMetricError, accuracy, auroc,
    build_curve, confusion, f1, forgetting_rate, precision, recall, snapshot,
)
from .features import (
    FEATURE_NAMES, FeatureVector, LabeledSample, SampleSet, extract, extract_batch,
    read_feature_csv, write_feature_csv,
)
from .flows import FilterPolicy, FlowKey, FlowSession, PacketRecord, assemble, filter_packets
from .models import LinearModel, LwfConfig, LwfMlp, MlpModel, lwf_loss, make_model
from .preprocess import (
    BatchStream, ClassWeights, MinMaxScaler, SplitPlan, batches, class_weights, fit_minmax,
    split, transform,
)
from .protocol import ExperimentConfig, dataset_stats, emit_reports, run_protocol

__version__ = "0.1.0"
