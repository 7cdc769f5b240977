"""Receding-horizon trajectory planning through unknown cluttered worlds.

The stack plans two trajectories each cycle: a fast one through the union of
known-free and unknown space, and a backup that brakes to a stop entirely
inside known-free space.  Only pieces that end in a guaranteed stop are ever
committed, so the vehicle always has a safe trajectory to fall back on.
"""

from .mapping import VoxelMap, VoxelState
from .trajectory import CubicInterval, FullState, Trajectory, from_jerk_sequence

__version__ = "0.1.0"

__all__ = [
    "VoxelMap",
    "VoxelState",
    "FullState",
    "CubicInterval",
    "Trajectory",
    "from_jerk_sequence",
    "__version__",
]
