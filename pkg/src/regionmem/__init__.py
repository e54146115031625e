"""Region-directed working-memory management for pose-graph maps."""

from .clustering import (
    Cluster,
    ClusterChange,
    ClusteringParams,
    RegionSet,
    assign,
    cluster_rows,
    equivalent_radius,
    global_dispersion,
    on_new_node,
    recompute_cluster,
    scattering,
    try_reassign,
)
from .errors import ConfigError, DataError, RegionmemError
from .evaluate import (
    GtEvent,
    GtThresholds,
    LoopEval,
    RegionPairing,
    RunReport,
    TopkEval,
    build_pairing,
    eval_loops,
    eval_topk,
    gt_matches,
)
from .geometry import Pose2, angle_diff, planar_distance, wrap_angle
from .mapgraph import LOOP_CLOSURE, ODOMETRY, Edge, MapGraph, Node, unit_feature
from .memory import (
    MemoryParams,
    MemoryState,
    UpdateEvents,
    best_hypothesis,
    insert_new_node,
    similarity,
    wm_update,
)
from .predictor import (
    EmaState,
    PredictorModel,
    TrainConfig,
    ema_update,
    focal_loss,
    forward,
    forward_batch,
    load_model,
    save_model,
    top_k,
    train,
)
from .sequences import Frame, gen_synthetic, load_sequence, write_sequence
from .simulate import ModelPredictor, OraclePredictor, RunLog, build_dataset, replay

__version__ = "0.1.0"

__all__ = [
    "Cluster", "ClusterChange", "ClusteringParams", "RegionSet", "assign",
    "cluster_rows", "equivalent_radius", "global_dispersion", "on_new_node",
    "recompute_cluster", "scattering", "try_reassign",
    "ConfigError", "DataError", "RegionmemError",
    "GtEvent", "GtThresholds", "LoopEval", "RegionPairing", "RunReport",
    "TopkEval", "build_pairing", "eval_loops", "eval_topk", "gt_matches",
    "Pose2", "angle_diff", "planar_distance", "wrap_angle",
    "LOOP_CLOSURE", "ODOMETRY", "Edge", "MapGraph", "Node", "unit_feature",
    "MemoryParams", "MemoryState", "UpdateEvents", "best_hypothesis",
    "insert_new_node", "similarity", "wm_update",
    "EmaState", "PredictorModel", "TrainConfig", "ema_update", "focal_loss",
    "forward", "forward_batch", "load_model", "save_model", "top_k", "train",
    "Frame", "gen_synthetic", "load_sequence", "write_sequence",
    "ModelPredictor", "OraclePredictor", "RunLog", "build_dataset", "replay",
    "__version__",
]
