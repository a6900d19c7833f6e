"""Transform-invariant structure matching and the per-step reward rule.

The matcher scores a built structure against a target by taking, over every
zone symmetry (4 quarter turns x integer translations that keep at least one
target block in zone), the size of the color-exact intersection between the
transformed-and-clipped target and the built structure.  `MatchIndex` keeps a
counter per transform so single-block edits update the maximum in O(|target|).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .voxel import (
    CENTER_X,
    CENTER_Z,
    ZONE_X,
    ZONE_Y,
    ZONE_Z,
    BlockColor,
    IDENTITY,
    Structure,
    Transform,
    in_zone,
)

ROTATIONS = 4
DY_MIN, DY_MAX = -(ZONE_Y - 1), ZONE_Y - 1      # -8 .. 8
DX_MIN, DX_MAX = -(ZONE_X - 1), ZONE_X - 1      # -10 .. 10
DZ_MIN, DZ_MAX = -(ZONE_Z - 1), ZONE_Z - 1      # -10 .. 10
_DY_SPAN = DY_MAX - DY_MIN + 1
_DX_SPAN = DX_MAX - DX_MIN + 1
_DZ_SPAN = DZ_MAX - DZ_MIN + 1

REWARD_MATCH_GAIN = "match_gain"
REWARD_MATCH_LOSS = "match_loss"
REWARD_STRAY_PLACE = "stray_place"
REWARD_STRAY_REMOVE = "stray_remove"
REWARD_NEUTRAL = "neutral"


@dataclass(frozen=True)
class RewardEvent:
    """A per-step reward: signed value plus the rule that caused it."""

    value: int
    cause: str


NEUTRAL_REWARD = RewardEvent(0, REWARD_NEUTRAL)


@dataclass(frozen=True)
class MatchResult:
    """Best overlap plus every transform achieving it, in canonical order."""

    max_match: int
    witnesses: tuple[Transform, ...]


class InconsistentEditError(ValueError):
    """An index edit that disagrees with the built structure it tracks."""


def _rotate_xz_arrays(xs: np.ndarray, zs: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    u, v = xs - CENTER_X, zs - CENTER_Z
    for _ in range(k):
        u, v = -v, u
    return u + CENTER_X, v + CENTER_Z


class MatchIndex:
    """Incrementally maintained max-match between a growing build and a fixed target.

    One int32 counter per (rotation, dy, dx, dz) transform holds the current
    color-exact overlap; a boolean mask marks transforms that keep at least one
    target block inside the zone (the legal search space).  Placing or removing
    a single block touches at most 4 * |target| counters.
    """

    def __init__(self, target: Structure):
        self.target = target
        self._built: dict[tuple[int, int, int], BlockColor] = {}
        self._counters = np.zeros((ROTATIONS, _DY_SPAN, _DX_SPAN, _DZ_SPAN), dtype=np.int32)
        self._valid = np.zeros_like(self._counters, dtype=bool)
        # Rotated target coordinates per rotation, grouped by color for edits.
        self._rot_by_color: list[dict[BlockColor, tuple[np.ndarray, np.ndarray, np.ndarray]]] = []
        if len(target):
            txs = np.array([b.x for b in target])
            tys = np.array([b.y for b in target])
            tzs = np.array([b.z for b in target])
            tcs = np.array([int(b.color) for b in target])
            for k in range(ROTATIONS):
                rxs, rzs = _rotate_xz_arrays(txs, tzs, k)
                by_color = {}
                for color in BlockColor:
                    sel = tcs == int(color)
                    if sel.any():
                        by_color[color] = (rxs[sel], tys[sel], rzs[sel])
                self._rot_by_color.append(by_color)
                # A transform is legal if it keeps some target block in zone.  For
                # block (rx, ry, rz) that is the axis-aligned box dy in [-ry, 8-ry],
                # dx in [-rx, 10-rx], dz in [-rz, 10-rz].
                for rx, ry, rz in zip(rxs, tys, rzs):
                    self._valid[
                        k,
                        -ry - DY_MIN : ZONE_Y - 1 - ry - DY_MIN + 1,
                        -rx - DX_MIN : ZONE_X - 1 - rx - DX_MIN + 1,
                        -rz - DZ_MIN : ZONE_Z - 1 - rz - DZ_MIN + 1,
                    ] = True

    # -- queries ---------------------------------------------------------

    def max_match(self) -> int:
        if not self._valid.any():
            return 0
        return int(self._counters[self._valid].max())

    def result(self) -> MatchResult:
        if not self._valid.any():
            return MatchResult(0, (IDENTITY,))
        best = self.max_match()
        hits = np.argwhere((self._counters == best) & self._valid)
        witnesses = tuple(
            Transform(int(k), int(dx) + DX_MIN, int(dy) + DY_MIN, int(dz) + DZ_MIN)
            for k, dy, dx, dz in hits
        )
        return MatchResult(best, witnesses)

    def built_structure(self) -> Structure:
        return Structure((x, y, z, c) for (x, y, z), c in self._built.items())

    # -- edits -----------------------------------------------------------

    def _slots(self, x: int, y: int, z: int, color: BlockColor):
        for k in range(ROTATIONS):
            coords = self._rot_by_color[k].get(color) if self._rot_by_color else None
            if coords is None:
                continue
            rxs, rys, rzs = coords
            yield k, y - rys - DY_MIN, x - rxs - DX_MIN, z - rzs - DZ_MIN

    def place(self, x: int, y: int, z: int, color: BlockColor) -> int:
        """Record a block placement; returns the new max-match."""
        if not in_zone(x, y, z):
            raise InconsistentEditError(f"placement at {(x, y, z)} outside zone")
        key = (x, y, z)
        if key in self._built:
            raise InconsistentEditError(f"cell {key} already occupied")
        self._built[key] = BlockColor(color)
        for k, dyi, dxi, dzi in self._slots(x, y, z, BlockColor(color)):
            self._counters[k, dyi, dxi, dzi] += 1
        return self.max_match()

    def remove(self, x: int, y: int, z: int, color: BlockColor) -> int:
        """Record a block removal; returns the new max-match."""
        key = (x, y, z)
        if self._built.get(key) != BlockColor(color):
            raise InconsistentEditError(f"no {BlockColor(color).color_name} block at {key}")
        del self._built[key]
        for k, dyi, dxi, dzi in self._slots(x, y, z, BlockColor(color)):
            self._counters[k, dyi, dxi, dzi] -= 1
        return self.max_match()

    def bulk_load(self, built: Structure) -> "MatchIndex":
        """Count a whole built structure at once (vectorized); index must be fresh."""
        if self._built:
            raise InconsistentEditError("bulk_load on a non-empty index")
        for b in built:
            self._built[(b.x, b.y, b.z)] = b.color
        if not len(self.target) or not len(built):
            return self
        bxs = np.array([b.x for b in built])
        bys = np.array([b.y for b in built])
        bzs = np.array([b.z for b in built])
        bcs = np.array([int(b.color) for b in built])
        flat = self._counters.reshape(ROTATIONS, -1)
        for k in range(ROTATIONS):
            for color, (rxs, rys, rzs) in self._rot_by_color[k].items():
                sel = bcs == int(color)
                if not sel.any():
                    continue
                dyi = bys[sel][:, None] - rys[None, :] - DY_MIN
                dxi = bxs[sel][:, None] - rxs[None, :] - DX_MIN
                dzi = bzs[sel][:, None] - rzs[None, :] - DZ_MIN
                idx = (dyi * _DX_SPAN + dxi) * _DZ_SPAN + dzi
                flat[k] += np.bincount(idx.ravel(), minlength=flat.shape[1]).astype(np.int32)
        return self


def max_match(built: Structure, target: Structure) -> MatchResult:
    """Full recompute: best color-exact overlap over the whole transform group.

    Empty target gives max 0 with the identity witness.  Witnesses are every
    transform achieving the max, ordered by (rotation, dy, dx, dz) ascending.
    """
    return MatchIndex(target).bulk_load(built).result()


def step_reward(
    prev_built: Structure, new_built: Structure, target: Structure, prev_max: int
) -> tuple[RewardEvent, int]:
    """Reward for a single-block edit, given the previous max-match.

    Returns (event, new_max).  Match changes dominate: +2 on any gain, -2 on any
    loss; otherwise a stray placement costs 1 and a stray removal refunds 1.
    Structures differing by more than one block are rejected.
    """
    added = new_built.block_set() - prev_built.block_set()
    removed = prev_built.block_set() - new_built.block_set()
    if len(added) + len(removed) > 1:
        raise ValueError(
            f"structures differ by more than one block ({len(added)} added, {len(removed)} removed)"
        )
    new_max = max_match(new_built, target).max_match
    event = classify_reward(prev_max, new_max, placed=bool(added), removed=bool(removed))
    return event, new_max


def classify_reward(prev_max: int, new_max: int, *, placed: bool, removed: bool) -> RewardEvent:
    if new_max > prev_max:
        return RewardEvent(2, REWARD_MATCH_GAIN)
    if new_max < prev_max:
        return RewardEvent(-2, REWARD_MATCH_LOSS)
    if placed:
        return RewardEvent(-1, REWARD_STRAY_PLACE)
    if removed:
        return RewardEvent(1, REWARD_STRAY_REMOVE)
    return NEUTRAL_REWARD
