"""Voxel build zone primitives: colors, grids, structures, and symmetry transforms.

The build zone is an 11 x 11 footprint, 9 cells tall.  Coordinates are integer
cell indices (x east, y up, z south).  Six block colors share the zone with
air; structures are canonical sorted sets of colored blocks, and transforms are
the quarter-turn-about-center + integer-translation group used by the matcher.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, NamedTuple

import numpy as np

ZONE_X = 11
ZONE_Y = 9  # height
ZONE_Z = 11
ZONE_CELLS = ZONE_X * ZONE_Y * ZONE_Z
CENTER_X = 5  # rotation pivot column in the x-z plane
CENTER_Z = 5
BLOCKS_PER_COLOR = 20
AIR = 0


class BlockColor(IntEnum):
    """The six placeable block colors.  Code 0 is reserved for air."""

    BLUE = 1
    GREEN = 2
    RED = 3
    ORANGE = 4
    PURPLE = 5
    YELLOW = 6

    @property
    def color_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "BlockColor":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown block color {name!r}") from None


COLOR_NAMES = tuple(c.color_name for c in BlockColor)


class OutOfZoneError(ValueError):
    """A coordinate fell outside the build zone.  Carries the offending triple."""

    def __init__(self, coordinate: tuple[int, int, int]):
        self.coordinate = coordinate
        super().__init__(
            f"coordinate {coordinate} outside the {ZONE_X}x{ZONE_Z}x{ZONE_Y} build zone"
        )


def in_zone(x: int, y: int, z: int) -> bool:
    return 0 <= x < ZONE_X and 0 <= y < ZONE_Y and 0 <= z < ZONE_Z


class Block(NamedTuple):
    x: int
    y: int
    z: int
    color: BlockColor


@dataclass(frozen=True)
class Transform:
    """A zone symmetry: k quarter turns about the vertical center axis, then a translation.

    Rotation happens first, about the (CENTER_X, CENTER_Z) column; dy moves along
    the vertical axis.  Transformed coordinates may leave the zone; callers clip.
    """

    rotation: int = 0
    dx: int = 0
    dy: int = 0
    dz: int = 0

    def __post_init__(self):
        if self.rotation not in (0, 1, 2, 3):
            raise ValueError(f"rotation must be 0..3 quarter turns, got {self.rotation}")

    def apply_point(self, x: int, y: int, z: int) -> tuple[int, int, int]:
        u, v = x - CENTER_X, z - CENTER_Z
        for _ in range(self.rotation):
            u, v = -v, u
        return u + CENTER_X + self.dx, y + self.dy, v + CENTER_Z + self.dz


IDENTITY = Transform(0, 0, 0, 0)


class Structure:
    """An immutable set of colored blocks at distinct integer coordinates.

    Canonical representation: blocks sorted by (x, y, z).  Equality and hashing
    are structural.  Coordinates are not required to lie inside the zone (a
    transformed structure may poke out); grid conversion enforces the zone.
    """

    __slots__ = ("blocks", "_set", "_hash")

    def __init__(self, blocks: Iterable[tuple[int, int, int, int | BlockColor]] = ()):
        norm = sorted(
            Block(int(x), int(y), int(z), BlockColor(color)) for x, y, z, color in blocks
        )
        coords = [(b.x, b.y, b.z) for b in norm]
        if len(set(coords)) != len(coords):
            dup = next(c for i, c in enumerate(coords) if c in coords[:i])
            raise ValueError(f"duplicate block coordinate {dup}")
        object.__setattr__(self, "blocks", tuple(norm))
        object.__setattr__(self, "_set", frozenset(norm))
        object.__setattr__(self, "_hash", hash(self._set))

    def __setattr__(self, name, value):
        raise AttributeError("Structure is immutable")

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    def __contains__(self, block: Block) -> bool:
        return block in self._set

    def __eq__(self, other) -> bool:
        if not isinstance(other, Structure):
            return NotImplemented
        return self._set == other._set

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Structure({len(self.blocks)} blocks)"

    def block_set(self) -> frozenset[Block]:
        return self._set

    def color_counts(self) -> dict[BlockColor, int]:
        counts = {c: 0 for c in BlockColor}
        for b in self.blocks:
            counts[b.color] += 1
        return counts

    def to_literal(self) -> list[list]:
        """Structure literal form: sorted [x, y, z, color_name] rows."""
        return [[b.x, b.y, b.z, b.color.color_name] for b in self.blocks]

    @classmethod
    def from_literal(cls, rows: Iterable) -> "Structure":
        blocks = []
        for row in rows:
            if len(row) != 4:
                raise ValueError(f"structure literal row must be [x, y, z, color], got {row!r}")
            x, y, z, color = row
            blocks.append((x, y, z, BlockColor.from_name(color) if isinstance(color, str) else color))
        return cls(blocks)


def apply_transform(structure: Structure, transform: Transform) -> Structure:
    """Transform every block; colors are preserved, coordinates may leave the zone."""
    return Structure(
        (*transform.apply_point(b.x, b.y, b.z), b.color) for b in structure
    )


def clip_to_zone(structure: Structure) -> Structure:
    return Structure((b.x, b.y, b.z, b.color) for b in structure if in_zone(b.x, b.y, b.z))


def intersection_size(a: Structure, b: Structure) -> int:
    """Number of (coordinate, color) blocks present in both structures."""
    return len(a.block_set() & b.block_set())


class VoxelGrid:
    """Dense 11 x 9 x 11 grid of color codes, indexed [x, y, z].  0 is air."""

    __slots__ = ("cells",)

    SHAPE = (ZONE_X, ZONE_Y, ZONE_Z)

    def __init__(self, cells: np.ndarray | None = None):
        if cells is None:
            cells = np.zeros(self.SHAPE, dtype=np.int8)
        else:
            cells = np.asarray(cells, dtype=np.int8)
            if cells.shape != self.SHAPE:
                raise ValueError(f"grid shape must be {self.SHAPE}, got {cells.shape}")
            if cells.min() < 0 or cells.max() > max(BlockColor):
                raise ValueError("grid cells must be color codes 0..6")
        self.cells = cells

    @classmethod
    def empty(cls) -> "VoxelGrid":
        return cls()

    def get(self, x: int, y: int, z: int) -> int:
        if not in_zone(x, y, z):
            raise OutOfZoneError((x, y, z))
        return int(self.cells[x, y, z])

    def set(self, x: int, y: int, z: int, code: int) -> None:
        if not in_zone(x, y, z):
            raise OutOfZoneError((x, y, z))
        if not (code == AIR or code in BlockColor._value2member_map_):
            raise ValueError(f"invalid color code {code}")
        self.cells[x, y, z] = code

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(self.cells.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return bool(np.array_equal(self.cells, other.cells))

    def block_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def color_counts(self) -> dict[BlockColor, int]:
        return {c: int(np.count_nonzero(self.cells == c)) for c in BlockColor}

    def occupied(self) -> Iterator[Block]:
        for x, y, z in zip(*np.nonzero(self.cells)):
            yield Block(int(x), int(y), int(z), BlockColor(int(self.cells[x, y, z])))

    def to_layers(self) -> list[list[list[int]]]:
        """Canonical nested-list form: layers[y][z][x], y ascending."""
        return [
            [[int(self.cells[x, y, z]) for x in range(ZONE_X)] for z in range(ZONE_Z)]
            for y in range(ZONE_Y)
        ]

    @classmethod
    def from_layers(cls, layers) -> "VoxelGrid":
        arr = np.asarray(layers)
        if arr.shape != (ZONE_Y, ZONE_Z, ZONE_X):
            raise ValueError(f"layer serialization must be {ZONE_Y}x{ZONE_Z}x{ZONE_X}, got {arr.shape}")
        return cls(arr.transpose(2, 0, 1))


def hamming(a: VoxelGrid, b: VoxelGrid) -> int:
    """Count of cells whose color codes differ (air counts as a code)."""
    if a.cells.shape != b.cells.shape:
        raise ValueError("grid dimension mismatch")
    return int(np.count_nonzero(a.cells != b.cells))


def grid_from_structure(structure: Structure) -> VoxelGrid:
    grid = VoxelGrid.empty()
    for b in structure:
        if not in_zone(b.x, b.y, b.z):
            raise OutOfZoneError((b.x, b.y, b.z))
        grid.cells[b.x, b.y, b.z] = b.color
    return grid


def structure_from_grid(grid: VoxelGrid) -> Structure:
    return Structure((b.x, b.y, b.z, b.color) for b in grid.occupied())
