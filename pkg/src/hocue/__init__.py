"""Hand-object cue fusion for temporally consistent 6DoF object tracking."""

from hocue.geometry import (
    Pose,
    canonical_quat,
    quat_angle,
    quat_from_matrix,
    quat_to_matrix,
    rotation_exp,
    rotation_log,
    slerp,
)

__all__ = [
    "Pose",
    "canonical_quat",
    "quat_angle",
    "quat_from_matrix",
    "quat_to_matrix",
    "rotation_exp",
    "rotation_log",
    "slerp",
]

__version__ = "0.1.0"
