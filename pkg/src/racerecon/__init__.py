"""Race reconstruction from panned and zoomed canoe-sprint detection streams."""

from .course import CourseSpec, assign_lane, buoy_world_positions, load_course
from .errors import ConfigError, DataError, NumericError, ReconError
from .geometry import Homography, apply, estimate_dlt, estimate_ransac, invert
from .pipeline import ReconOptions, run_pipeline
from .simulator import CameraScript, LaneScript, NoiseModel, RaceScript, Scenario, generate, truth_profiles

__all__ = [
    "CourseSpec", "assign_lane", "buoy_world_positions", "load_course",
    "ConfigError", "DataError", "NumericError", "ReconError",
    "Homography", "apply", "estimate_dlt", "estimate_ransac", "invert",
    "ReconOptions", "run_pipeline",
    "CameraScript", "LaneScript", "NoiseModel", "RaceScript", "Scenario", "generate", "truth_profiles",
]
