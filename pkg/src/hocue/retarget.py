"""Object trajectory to end-effector targets under a fixed grasp."""

from __future__ import annotations

from dataclasses import dataclass, field

from hocue.geometry import Pose
from hocue.trajectory import Trajectory


@dataclass
class RetargetConfig:
    """``base_from_cam`` places the camera in the robot base frame;
    ``eef_from_obj`` is the object pose expressed in the end-effector frame."""

    base_from_cam: Pose = field(default_factory=Pose)
    eef_from_obj: Pose = field(default_factory=Pose)
    rate_hz: float = 30.0

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")

    def inverse(self) -> "RetargetConfig":
        """Config that maps end-effector targets back to the object trajectory."""
        return RetargetConfig(self.base_from_cam.inverse(), self.eef_from_obj.inverse(), self.rate_hz)


def retarget(traj: Trajectory, cfg: RetargetConfig) -> Trajectory:
    """``T_base_eef(t) = T_base_cam @ T_cam_obj(t) @ inv(T_eef_obj)`` for every frame."""
    if len(traj) == 0:
        raise ValueError("cannot retarget an empty trajectory")
    obj_from_eef = cfg.eef_from_obj.inverse()
    poses = [cfg.base_from_cam @ p @ obj_from_eef for p in traj.poses()]
    return Trajectory.from_poses(traj.frames.copy(), poses, traj.flags.copy())
