"""Activity recognition from head-mounted eye tracking and egocentric video.

Three channels (eye-movement symbols, ego-motion symbols, visual words over
CNN frame descriptors) are windowed into normalized histograms, fused into a
single feature vector, and classified with a random forest.
"""

from .core import (
    ActivityLabel,
    AlignmentError,
    EmptyInputError,
    GazeActError,
    GazeSample,
    InsufficientDataError,
    LabelTrack,
    NoFlowError,
    ParameterError,
    ParseError,
    PipelineConfig,
    ProtocolError,
    SessionRecord,
    load_config,
    load_session,
    parse_gaze_log,
    parse_label_csv,
    resample_gaze,
    validate_session,
)
from .encoding import (
    SymbolSequence,
    WaveletCoefficients,
    decode_joint,
    encode_gaze_channel,
    encode_joint,
    estimate_thresholds,
    haar_cwt,
    median_filter,
    quantize,
)
from .evaluation import (
    EvalReport,
    FoldSpec,
    confusion_matrix,
    mean_average_precision,
    run_synthetic_selftest,
    run_two_fold,
)
from .forest import (
    ForestModel,
    ForestParams,
    load_forest,
    predict,
    predict_proba,
    save_forest,
    train_forest,
)
from .fusion import LabeledWindows, WindowFeatures, fuse, label_windows, window_histogram
from .io import read_embeddings, write_embeddings
from .tracking import (
    FlowEstimate,
    TrackedPoint,
    detect_corners,
    encode_motion_channel,
    fb_filter,
    median_flow,
    track_lk,
)
from .vocab import VocabModel, assign_word, assign_words, fit_kmeans, load_vocab, save_vocab

__version__ = "0.1.0"
