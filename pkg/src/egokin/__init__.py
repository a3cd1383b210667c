"""Kinematic annotation, fusion and curation for egocentric video clips."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core_types import (  # noqa: E402
    ImuSample,
    ImuSequence,
    Pose,
    PoseTrajectory,
    pose_compose,
    pose_inverse,
    pose_relative,
    quat_geodesic_angle,
    quat_normalize,
)

__all__ = [
    "ImuSample",
    "ImuSequence",
    "Pose",
    "PoseTrajectory",
    "pose_compose",
    "pose_inverse",
    "pose_relative",
    "quat_geodesic_angle",
    "quat_normalize",
]
