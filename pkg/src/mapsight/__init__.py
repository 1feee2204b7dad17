"""mapsight: deterministic 2D top-down mapping simulation around pluggable
masked-inpainting predictors.

Core capabilities: field-of-view expansion scoring, bootstrap uncertainty for
point predictors, multi-robot exploration policies, and prediction-augmented
goal navigation, all on small semantic rasters.
"""

from .gridmap import (
    BINARY_COLORMAP,
    EXPLORE_COLORMAP,
    Colormap,
    PatchMask,
    RgbImage,
    SemanticGrid,
    expansion_factor,
    footprint_mask,
    grid_to_rgb,
    load_grid,
    load_image,
    periphery_mask,
    rgb_to_grid,
    save_grid,
    save_image,
)
from .metrics import MetricReport, label_accuracy, miou, mse, psnr, ssim
from .predictor import (
    NearestFillEndpoint,
    NoisyOracleEndpoint,
    OracleEndpoint,
    PredictRequest,
    WireEndpoint,
    make_endpoint,
    perturb,
    predict,
    predict_to_grid,
)
from .uncertainty import UncertaintyField, bootstrap_uncertainty, uncertain_cells
from .exploration import (
    BeliefState,
    ExploreParams,
    MissionLog,
    World,
    assign_robots,
    kmeans,
    observe,
    run_mission,
)
from .navigation import Costmap, NavEpisode, NavParams, astar, nav_step, run_episode
from .worldgen import RoomSpec, generate_room, ingest_dataset

__version__ = "0.1.0"

__all__ = [
    "BINARY_COLORMAP",
    "EXPLORE_COLORMAP",
    "BeliefState",
    "Colormap",
    "Costmap",
    "ExploreParams",
    "MetricReport",
    "MissionLog",
    "NavEpisode",
    "NavParams",
    "NearestFillEndpoint",
    "NoisyOracleEndpoint",
    "OracleEndpoint",
    "PatchMask",
    "PredictRequest",
    "RgbImage",
    "RoomSpec",
    "SemanticGrid",
    "UncertaintyField",
    "WireEndpoint",
    "World",
    "assign_robots",
    "astar",
    "bootstrap_uncertainty",
    "expansion_factor",
    "footprint_mask",
    "generate_room",
    "grid_to_rgb",
    "ingest_dataset",
    "kmeans",
    "label_accuracy",
    "load_grid",
    "load_image",
    "make_endpoint",
    "miou",
    "mse",
    "nav_step",
    "observe",
    "periphery_mask",
    "perturb",
    "predict",
    "predict_to_grid",
    "psnr",
    "rgb_to_grid",
    "run_episode",
    "run_mission",
    "save_grid",
    "save_image",
    "ssim",
    "uncertain_cells",
]
