"""Online continual learning via Kalman filter recursions over linear
predictor weights, with a learnable forgetting coefficient, Monte-Carlo
softmax classification, and prequential evaluation over chunked streams.
"""

from .classification import (
    ClassifierFilter,
    ClassStepRecord,
    LogitMoments,
    mc_class_probs,
)
from .data_io import (
    FeatureFileHeader,
    FeatureFileReader,
    FeatureFileWriter,
    PiecewiseSeriesSpec,
    SyntheticClassSpec,
    benchmark_series_spec,
    gen_class_stream,
    gen_piecewise_series,
    read_csv_features,
    read_feature_file,
    task_incremental_spec,
    write_feature_file,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DomainError,
    KoclError,
    NumericError,
)
from .filter_core import (
    Hyperparams,
    PsdMatrix,
    excess_quad_form,
    init_state,
    predict_step,
    update_step,
)
from .regression import (
    GaussianPrediction,
    MeanTransition,
    RegressionFilter,
    blr_posterior,
)
from .selfcheck import CheckResult, run_selfcheck
from .stream import (
    OnlineMetrics,
    ReplayBuffer,
    ReplayConfig,
    RunConfig,
    StreamChunk,
    StreamResult,
    TransitionMode,
    chunk_arrays,
    chunk_pairs,
    replay_augment,
    run_chunk,
    run_stream,
)

__version__ = "0.1.0"

__all__ = [
    "ClassifierFilter",
    "ClassStepRecord",
    "LogitMoments",
    "mc_class_probs",
    "FeatureFileHeader",
    "FeatureFileReader",
    "FeatureFileWriter",
    "PiecewiseSeriesSpec",
    "SyntheticClassSpec",
    "benchmark_series_spec",
    "gen_class_stream",
    "gen_piecewise_series",
    "read_csv_features",
    "read_feature_file",
    "task_incremental_spec",
    "write_feature_file",
    "ConfigError",
    "DataFormatError",
    "DomainError",
    "KoclError",
    "NumericError",
    "Hyperparams",
    "PsdMatrix",
    "excess_quad_form",
    "init_state",
    "predict_step",
    "update_step",
    "GaussianPrediction",
    "MeanTransition",
    "RegressionFilter",
    "blr_posterior",
    "OnlineMetrics",
    "ReplayBuffer",
    "ReplayConfig",
    "RunConfig",
    "StreamChunk",
    "StreamResult",
    "TransitionMode",
    "chunk_arrays",
    "chunk_pairs",
    "replay_augment",
    "run_chunk",
    "run_stream",
    "CheckResult",
    "run_selfcheck",
    "__version__",
]
