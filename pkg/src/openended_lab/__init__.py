"""Open-ended 3D object category learning: descriptors, distances,
instance-based K-NN memory, offline cross-validation, and the
simulated-teacher protocol."""

__version__ = "0.1.0"

from .descriptor import GoodParams, good_descriptor, reference_frame
from .errors import LabError
from .memory import FeatureView, PerceptualMemory, RecognizerConfig, classify, nearest, teach
from .metrics import METRIC_NAMES, combined_distance, distance, normalize_l1
from .offline_eval import Dataset, cross_validate, grid_search, stratified_folds
from .pointcloud import PointCloud, ShapeSpec, load_cloud, synthesize, transform
from .teacher_sim import ProtocolConfig, RecognizerAgent, run_protocol, run_repeats

__all__ = [
    "Dataset",
    "FeatureView",
    "GoodParams",
    "LabError",
    "METRIC_NAMES",
    "PerceptualMemory",
    "PointCloud",
    "ProtocolConfig",
    "RecognizerAgent",
    "RecognizerConfig",
    "ShapeSpec",
    "classify",
    "combined_distance",
    "cross_validate",
    "distance",
    "good_descriptor",
    "grid_search",
    "load_cloud",
    "nearest",
    "normalize_l1",
    "reference_frame",
    "run_protocol",
    "run_repeats",
    "stratified_folds",
    "synthesize",
    "teach",
    "transform",
]
