"""Deterministic episode engine for the voxel building zone.

The engine drives a single Builder agent through one episode: it applies the
18 discrete actions, maintains the build grid and inventory, computes the
matching reward after every grid change, advances the sub-goal queue, and
terminates on success, zone exit, or the step budget.

Everything here is integer/float-exact and free of hidden randomness so that
identical action sequences always reproduce identical observation streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .matching import (
    MatchIndex,
    NEUTRAL_REWARD,
    RewardEvent,
    classify_reward,
    max_match,
)
from .tasks import SubgoalQueue, TaskDef
from .voxel import (
    AIR,
    BLOCKS_PER_COLOR,
    ZONE_X,
    ZONE_Y,
    ZONE_Z,
    BlockColor,
    VoxelGrid,
    structure_from_grid,
)

__all__ = [
    "ACTION_NAMES",
    "ACTION_CODES",
    "NUM_ACTIONS",
    "AgentState",
    "ChatEntry",
    "EpisodeConfig",
    "EpisodeOverError",
    "Observation",
    "BuilderEngine",
    "TargetInfo",
    "is_success",
    "settle_height",
    "target_cell",
    "SPAWN_X",
    "SPAWN_Y",
    "SPAWN_Z",
]


# Action vocabulary.  Codes are positional: 0 = noop .. 17 = choose_type_6.
ACTION_NAMES = (
    "noop",
    "step_forward",
    "step_backward",
    "step_right",
    "step_left",
    "turn_up",
    "turn_down",
    "turn_left",
    "turn_right",
    "jump",
    "attack",
    "place_block",
    "choose_type_1",
    "choose_type_2",
    "choose_type_3",
    "choose_type_4",
    "choose_type_5",
    "choose_type_6",
)
ACTION_CODES = {name: code for code, name in enumerate(ACTION_NAMES)}
NUM_ACTIONS = len(ACTION_NAMES)

_MOVE_ACTIONS = frozenset({"step_forward", "step_backward", "step_right", "step_left"})

SPAWN_X, SPAWN_Y, SPAWN_Z = 5, 0, 5

YAW_VALUES = (0, 90, 180, 270)
PITCH_VALUES = (-90, -45, 0, 45, 90)

# Unit horizontal facing per yaw: yaw 0 looks along +z, yaw 90 along +x.
_YAW_XZ = {0: (0.0, 1.0), 90: (1.0, 0.0), 180: (0.0, -1.0), 270: (-1.0, 0.0)}
# Exact sines/cosines for the five pitch notches (avoids cos(90 deg) != 0 noise).
_HALF_SQRT2 = math.sqrt(0.5)
_PITCH_SIN = {-90: -1.0, -45: -_HALF_SQRT2, 0: 0.0, 45: _HALF_SQRT2, 90: 1.0}
_PITCH_COS = {-90: 0.0, -45: _HALF_SQRT2, 0: 1.0, 45: _HALF_SQRT2, 90: 0.0}

END_SUCCESS = "success"
END_EXIT = "exit"
END_MAX_STEPS = "max_steps"

BLOCKED_INVENTORY = "inventory_empty"
BLOCKED_NO_TARGET = "no_target"
BLOCKED_COLLISION = "collision"
BLOCKED_BOUNDARY = "zone_boundary"

CHAT_SPEAKERS = ("architect", "builder")


class EpisodeOverError(RuntimeError):
    """Raised when step() is called after the episode terminated."""


@dataclass
class EpisodeConfig:
    """Knobs for one episode run."""

    task_id: str | None = None
    max_steps: int = 500
    seed: int = 0
    termination_on_exit: bool = True
    eye_height: float = 1.5
    reach: float = 5.0
    ray_step: float = 0.25

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.ray_step <= 0 or self.reach <= 0:
            raise ValueError("reach and ray_step must be positive")


@dataclass
class AgentState:
    """Builder pose, stock, and selection.

    Positions are stored as floats but always hold exact integer cell
    coordinates; the continuous-looking type keeps the pose wire format stable.
    """

    x: float = float(SPAWN_X)
    y: float = float(SPAWN_Y)
    z: float = float(SPAWN_Z)
    yaw: int = 0
    pitch: int = 0
    inventory: dict[BlockColor, int] = field(
        default_factory=lambda: {c: BLOCKS_PER_COLOR for c in BlockColor}
    )
    selected_color: BlockColor = BlockColor.BLUE

    def cell(self) -> tuple[int, int, int]:
        return int(self.x), int(self.y), int(self.z)


@dataclass(frozen=True)
class ChatEntry:
    speaker: str
    text: str


@dataclass(frozen=True)
class TargetInfo:
    """Ray-cast result: the block being looked at and the cell a placement
    would go into.  Either may be None."""

    hit: tuple[int, int, int] | None
    place_at: tuple[int, int, int] | None


@dataclass(frozen=True)
class Observation:
    """Everything the Builder (or a spectator) sees after a step."""

    step_index: int
    pose: tuple[float, float, float, int, int]
    inventory: tuple[int, int, int, int, int, int]
    grid: VoxelGrid
    chat: tuple[ChatEntry, ...]
    current_instruction: str
    last_reward: RewardEvent

    def to_payload(self) -> dict:
        """Plain-data form with a frozen field order, shared by the wire
        protocol and the episode log."""
        x, y, z, yaw, pitch = self.pose
        return {
            "step_index": self.step_index,
            "pose": {"x": x, "y": y, "z": z, "yaw": yaw, "pitch": pitch},
            "inventory": {
                color.color_name: self.inventory[color - 1] for color in BlockColor
            },
            "grid": self.grid.to_layers(),
            "chat": [{"speaker": c.speaker, "text": c.text} for c in self.chat],
            "current_instruction": self.current_instruction,
            "last_reward": {"value": self.last_reward.value, "cause": self.last_reward.cause},
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_payload(), separators=(",", ":"), ensure_ascii=True)


def settle_height(grid: VoxelGrid, x: int, z: int, from_y: int) -> int:
    """Feet height after gravity drops the agent down column (x, z).

    The agent lands on the highest occupied cell whose top face is at or below
    ``from_y``; with nothing underneath it lands on the ground (feet 0).
    """
    for yb in range(min(from_y - 1, ZONE_Y - 1), -1, -1):
        if grid.get(x, yb, z) != AIR:
            return yb + 1
    return 0


def target_cell(
    state: AgentState,
    grid: VoxelGrid,
    *,
    eye_height: float = 1.5,
    reach: float = 5.0,
    ray_step: float = 0.25,
) -> TargetInfo:
    """March a ray from the eye along the view direction and report what it
    lands on.

    The eye sits ``eye_height`` above the agent's cell coordinate.  Samples are
    taken every ``ray_step`` cells out to ``reach``; the first occupied grid
    cell is the hit, and the placement cell is the last in-zone air cell
    crossed before the hit (never one of the agent's own two body cells).
    Dipping below y=0 inside the zone counts as hitting the ground.  With no
    hit at all, the cell at maximum reach is offered for placement only if it
    is empty, in the zone, and supported by the ground or a face-adjacent
    block.
    """
    px, py, pz = int(state.x), int(state.y), int(state.z)
    body = {(px, py, pz), (px, py + 1, pz)}
    ex, ey, ez = state.x, state.y + eye_height, state.z
    fx, fz = _YAW_XZ[state.yaw]
    cos_p = _PITCH_COS[state.pitch]
    dx, dy, dz = fx * cos_p, _PITCH_SIN[state.pitch], fz * cos_p

    steps = round(reach / ray_step)
    last_air: tuple[int, int, int] | None = None
    hit: tuple[int, int, int] | None = None
    hit_ground = False
    cell = (px, py + 1, pz)
    for k in range(1, steps + 1):
        t = k * ray_step
        cx = math.floor(ex + t * dx)
        cy = math.floor(ey + t * dy)
        cz = math.floor(ez + t * dz)
        cell = (cx, cy, cz)
        if not (0 <= cx < ZONE_X and 0 <= cz < ZONE_Z):
            continue
        if cy < 0:
            hit_ground = True
            break
        if cy >= ZONE_Y:
            continue
        if grid.get(cx, cy, cz) != AIR:
            hit = cell
            break
        last_air = cell

    if hit is not None or hit_ground:
        place = last_air if (last_air is not None and last_air not in body) else None
        return TargetInfo(hit, place)

    # Nothing hit: offer the max-reach cell when it can actually hold a block.
    cx, cy, cz = cell
    if not (0 <= cx < ZONE_X and 0 <= cy < ZONE_Y and 0 <= cz < ZONE_Z):
        return TargetInfo(None, None)
    if cell in body or grid.get(cx, cy, cz) != AIR:
        return TargetInfo(None, None)
    supported = cy == 0
    if not supported:
        for nx, ny, nz in (
            (cx + 1, cy, cz),
            (cx - 1, cy, cz),
            (cx, cy + 1, cz),
            (cx, cy - 1, cz),
            (cx, cy, cz + 1),
            (cx, cy, cz - 1),
        ):
            if 0 <= nx < ZONE_X and 0 <= ny < ZONE_Y and 0 <= nz < ZONE_Z:
                if grid.get(nx, ny, nz) != AIR:
                    supported = True
                    break
    return TargetInfo(None, cell if supported else None)


class BuilderEngine:
    """One episode of the building task.

    Construction performs the initial reset, so ``step`` can be called
    immediately; ``reset`` rewinds to the same initial state at any time.
    """

    def __init__(self, task: TaskDef, config: EpisodeConfig | None = None):
        self.task = task
        self.config = config if config is not None else EpisodeConfig()
        self.reset()

    # -- lifecycle -------------------------------------------------------

    def reset(self) -> Observation:
        self.grid = VoxelGrid()
        self.state = AgentState()
        self._index = MatchIndex(self.task.target)
        self._max_match = 0
        self._queue = SubgoalQueue(self.task.subgoals)
        self._completed_subgoals = 0
        self._chat: list[ChatEntry] = []
        self._step_index = 0
        self._done = False
        self._end_reason: str | None = None
        self._jump_primed = False
        self._last_reward = NEUTRAL_REWARD
        self._success = False
        return self._observe()

    # -- introspection ---------------------------------------------------

    @property
    def done(self) -> bool:
        return self._done

    @property
    def step_index(self) -> int:
        return self._step_index

    @property
    def end_reason(self) -> str | None:
        return self._end_reason

    @property
    def max_match_value(self) -> int:
        return self._max_match

    @property
    def success(self) -> bool:
        return self._success

    @property
    def completed_subgoals(self) -> int:
        return self._completed_subgoals

    @property
    def total_subgoals(self) -> int:
        return len(self.task.subgoals)

    @property
    def chat(self) -> tuple[ChatEntry, ...]:
        return tuple(self._chat)

    def built_structure(self):
        return structure_from_grid(self.grid)

    def observation(self) -> Observation:
        return self._observe()

    # -- chat --------------------------------------------------------------

    def add_chat(self, speaker: str, text: str) -> ChatEntry:
        if speaker not in CHAT_SPEAKERS:
            raise ValueError(f"unknown speaker {speaker!r}")
        entry = ChatEntry(speaker, text)
        self._chat.append(entry)
        return entry

    # -- stepping ----------------------------------------------------------

    def step(self, action: int) -> tuple[Observation, RewardEvent, bool, dict]:
        if self._done:
            raise EpisodeOverError(f"episode already ended ({self._end_reason})")
        if not isinstance(action, int) or not 0 <= action < NUM_ACTIONS:
            raise ValueError(f"action code must be in 0..{NUM_ACTIONS - 1}, got {action!r}")
        name = ACTION_NAMES[action]

        info: dict = {}
        reward = NEUTRAL_REWARD
        delta: list[tuple[int, int, int, int]] = []
        exited = False

        climb = self._jump_primed and name in _MOVE_ACTIONS
        self._jump_primed = False

        if name == "noop":
            pass
        elif name in _MOVE_ACTIONS:
            exited = self._move(name, climb, info)
        elif name == "turn_left":
            self.state.yaw = (self.state.yaw - 90) % 360
        elif name == "turn_right":
            self.state.yaw = (self.state.yaw + 90) % 360
        elif name == "turn_up":
            self.state.pitch = min(90, self.state.pitch + 45)
        elif name == "turn_down":
            self.state.pitch = max(-90, self.state.pitch - 45)
        elif name == "jump":
            self._jump_primed = True
        elif name == "attack":
            reward = self._attack(info, delta)
        elif name == "place_block":
            reward = self._place(info, delta)
        else:  # choose_type_1 .. choose_type_6
            self.state.selected_color = BlockColor(action - ACTION_CODES["choose_type_1"] + 1)

        self._step_index += 1
        self._last_reward = reward

        if exited and self.config.termination_on_exit:
            self._done = True
            self._end_reason = END_EXIT
        elif self._success:
            self._done = True
            self._end_reason = END_SUCCESS
            info["success"] = True
        elif self._step_index >= self.config.max_steps:
            self._done = True
            self._end_reason = END_MAX_STEPS

        info["grid_delta"] = tuple(delta)
        return self._observe(), reward, self._done, info

    # -- action helpers ----------------------------------------------------

    def _move(self, name: str, climb: bool, info: dict) -> bool:
        """Apply one horizontal step.  Returns True when the agent left the zone."""
        fx, fz = _YAW_XZ[self.state.yaw]
        if name == "step_forward":
            mx, mz = fx, fz
        elif name == "step_backward":
            mx, mz = -fx, -fz
        elif name == "step_right":
            right_yaw = (self.state.yaw + 90) % 360
            mx, mz = _YAW_XZ[right_yaw]
        else:  # step_left
            left_yaw = (self.state.yaw - 90) % 360
            mx, mz = _YAW_XZ[left_yaw]

        nx = int(self.state.x) + int(mx)
        nz = int(self.state.z) + int(mz)
        if not (0 <= nx < ZONE_X and 0 <= nz < ZONE_Z):
            if self.config.termination_on_exit:
                self.state.x, self.state.z = float(nx), float(nz)
                return True
            info["blocked"] = BLOCKED_BOUNDARY
            return False

        from_y = int(self.state.y) + (1 if climb else 0)
        if climb:
            # The hop itself needs headroom above the current head cell.
            head_above = int(self.state.y) + 2
            if head_above < ZONE_Y and self.grid.get(int(self.state.x), head_above, int(self.state.z)) != AIR:
                from_y = int(self.state.y)
        land = settle_height(self.grid, nx, nz, from_y)
        if land > ZONE_Y - 1:
            info["blocked"] = BLOCKED_COLLISION
            return False
        feet_blocked = self.grid.get(nx, land, nz) != AIR
        head_y = land + 1
        head_blocked = head_y < ZONE_Y and self.grid.get(nx, head_y, nz) != AIR
        if feet_blocked or head_blocked:
            info["blocked"] = BLOCKED_COLLISION
            return False
        self.state.x, self.state.y, self.state.z = float(nx), float(land), float(nz)
        return False

    def _targeting(self) -> TargetInfo:
        return target_cell(
            self.state,
            self.grid,
            eye_height=self.config.eye_height,
            reach=self.config.reach,
            ray_step=self.config.ray_step,
        )

    def _attack(self, info: dict, delta: list) -> RewardEvent:
        ti = self._targeting()
        if ti.hit is None:
            info["blocked"] = BLOCKED_NO_TARGET
            return NEUTRAL_REWARD
        hx, hy, hz = ti.hit
        color = BlockColor(self.grid.get(hx, hy, hz))
        self.grid.set(hx, hy, hz, AIR)
        self.state.inventory[color] += 1
        delta.append((hx, hy, hz, AIR))
        new_max = self._index.remove(hx, hy, hz, int(color))
        reward = classify_reward(self._max_match, new_max, placed=False, removed=True)
        self._max_match = new_max
        # Pulling a block out from underfoot drops the agent.
        ax, ay, az = self.state.cell()
        landed = settle_height(self.grid, ax, az, ay)
        if landed != ay:
            self.state.y = float(landed)
        self._after_grid_change()
        return reward

    def _place(self, info: dict, delta: list) -> RewardEvent:
        ti = self._targeting()
        if ti.place_at is None:
            info["blocked"] = BLOCKED_NO_TARGET
            return NEUTRAL_REWARD
        color = self.state.selected_color
        if self.state.inventory[color] <= 0:
            info["blocked"] = BLOCKED_INVENTORY
            return NEUTRAL_REWARD
        px, py, pz = ti.place_at
        self.grid.set(px, py, pz, int(color))
        self.state.inventory[color] -= 1
        delta.append((px, py, pz, int(color)))
        new_max = self._index.place(px, py, pz, int(color))
        reward = classify_reward(self._max_match, new_max, placed=True, removed=False)
        self._max_match = new_max
        self._after_grid_change()
        return reward

    def _after_grid_change(self) -> None:
        built = structure_from_grid(self.grid)
        while True:
            _, completed = self._queue.advance(built)
            if not completed:
                break
            self._completed_subgoals += 1
        self._success = (
            self._max_match == len(self.task.target)
            and self.grid.block_count() == len(self.task.target)
        )

    # -- observation -------------------------------------------------------

    def _observe(self) -> Observation:
        current = self._queue.current()
        counts = tuple(self.state.inventory[c] for c in BlockColor)
        return Observation(
            step_index=self._step_index,
            pose=(self.state.x, self.state.y, self.state.z, self.state.yaw, self.state.pitch),
            inventory=counts,  # type: ignore[arg-type]
            grid=self.grid.copy(),
            chat=tuple(self._chat),
            current_instruction=current.instruction if current is not None else "",
            last_reward=self._last_reward,
        )


def is_success(built, target) -> bool:
    """True when the build reproduces the target exactly up to a zone
    transform, with no extra blocks."""
    if len(built) != len(target):
        return False
    return max_match(built, target).max_match == len(target)
