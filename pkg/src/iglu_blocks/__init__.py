"""iglu_blocks: deterministic voxel blocks-world environment and evaluation harness."""

ENGINE_VERSION = "1.0.0"
PROTOCOL_VERSION = 1

from .voxel import (  # noqa: E402,F401
    AIR,
    BLOCKS_PER_COLOR,
    Block,
    BlockColor,
    IDENTITY,
    OutOfZoneError,
    Structure,
    Transform,
    VoxelGrid,
    ZONE_X,
    ZONE_Y,
    ZONE_Z,
    apply_transform,
    grid_from_structure,
    hamming,
    intersection_size,
    structure_from_grid,
)

__version__ = ENGINE_VERSION
