"""Pedestrian flock detection from multi-agent trajectory data.

Pipeline: ingest (or synthesize) trajectories -> build labeled pair
datasets and time-binned scenes -> train a sequence classifier on pairwise
features -> evaluate all pairs per scene -> merge positive pairs into
flocks with union-find.
"""

__version__ = "0.1.0"

from .core import GroupAnnotation, PairLabel, Trajectory, TrajectoryPoint
from .core import canonical_pair, normalize_angle
from .ingest import (
    Dataset,
    SyntheticConfig,
    extract_pair_labels,
    generate_synthetic,
    list_singletons,
    load_dataset,
    parse_group_file,
    parse_trajectory_csv,
    write_group_file,
    write_trajectory_csv,
)
from .scenes import (
    PairDatasetSpec,
    RawPairSample,
    SceneBin,
    assign_time_bins,
    build_pair_dataset,
    fill_sequence_blocks,
    interpolate_synthetic_positives,
)
from .features import (
    PairSample,
    ScalerState,
    apply_scalers,
    dtw_distance,
    fast_dtw_distance,
    featurize_pair,
    featurize_sample,
    fit_scalers,
    inter_distance,
    scalar_abs_diffs,
)
from .seqnet import (
    ModelConfig,
    PredictionResult,
    SequenceModel,
    TrainConfig,
    load_checkpoint,
    predict_pair,
    save_checkpoint,
    train,
)
from .aggregate import (
    FlockSet,
    PairPrediction,
    UnionFind,
    aggregate_flocks,
    evaluate_all_pairs,
    size_histogram,
    validate_against_annotations,
)
