"""Built-in Builder agents: a seeded random policy and a greedy oracle.

The oracle plans against the same targeting geometry the engine executes: it
searches standing cells and view angles until the engine's own ray cast says
the placement would land on the block it wants, then walks there and places.
Because it only ever places correct target blocks in the identity frame, every
placement raises the max-match by one (+2 reward each).
"""

from __future__ import annotations

import heapq
import random
from collections import deque

from .engine import (
    ACTION_CODES,
    AgentState,
    BuilderEngine,
    NUM_ACTIONS,
    Observation,
    settle_height,
    target_cell,
)
from .metrics import EpisodeSummary, summarize_episode
from .tasks import TaskDef
from .voxel import AIR, ZONE_X, ZONE_Y, ZONE_Z, VoxelGrid, structure_from_grid

__all__ = [
    "Agent",
    "RandomAgent",
    "GreedyOracle",
    "OracleStuckError",
    "AGENT_KINDS",
    "make_agent",
    "run_episode",
]


class Agent:
    """Minimal agent interface: observe, emit one of the 18 action codes."""

    def reset(self, engine: BuilderEngine) -> None:  # pragma: no cover - trivial
        pass

    def act(self, obs: Observation) -> int:
        raise NotImplementedError


class RandomAgent(Agent):
    """Uniform over all 18 action codes, reproducible from the seed."""

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def act(self, obs: Observation) -> int:
        return self._rng.randrange(NUM_ACTIONS)


class OracleStuckError(RuntimeError):
    """The oracle found no stand/view combination that places a needed block."""


_YAWS = (0, 90, 180, 270)
_PITCHES = (0, -45, -90, 45, 90)
_DIR_TO_YAW = {(0, 1): 0, (1, 0): 90, (0, -1): 180, (-1, 0): 270}


class GreedyOracle(Agent):
    """Builds the current sub-goal block by block in the target's own frame.

    Each replan picks the nearest missing block that already has support,
    finds the closest reachable standing cell from which some yaw/pitch
    combination targets exactly that cell, and queues the walk, the turns,
    the color switch, and the place action.
    """

    def __init__(self, seed: int = 0):
        # Seed accepted for interface parity; the policy is deterministic.
        self._plan: deque[int] = deque()
        self._task: TaskDef | None = None
        self._cfg = None

    def reset(self, engine: BuilderEngine) -> None:
        self._task = engine.task
        self._cfg = engine.config
        self._plan.clear()

    # -- plumbing ---------------------------------------------------------

    def act(self, obs: Observation) -> int:
        if not self._plan:
            self._replan(obs)
        return self._plan.popleft()

    def _goal_blocks(self, grid: VoxelGrid):
        """Missing blocks of the first unfinished cumulative sub-goal (or of
        the full target once all sub-goals are met)."""
        assert self._task is not None
        stages = [sg.cumulative for sg in self._task.subgoals] + [self._task.target]
        for stage in stages:
            missing = [b for b in stage.blocks if grid.get(b.x, b.y, b.z) == AIR]
            if missing:
                return missing
        return []

    def _replan(self, obs: Observation) -> None:
        assert self._task is not None and self._cfg is not None
        grid = obs.grid
        x, y, z, yaw, pitch = obs.pose
        start = (int(x), int(z), int(y))

        missing = self._goal_blocks(grid)
        if not missing:
            # Nothing left to do (episode about to end); idle.
            self._plan.append(ACTION_CODES["noop"])
            return

        placeable = [b for b in missing if _has_support(grid, b.x, b.y, b.z)]
        if not placeable:
            raise OracleStuckError(
                f"task {self._task.task_id}: no missing block has support yet"
            )

        dist, prev = _walk_graph(grid, start)
        ax, az, _ = start
        placeable.sort(key=lambda b: (abs(b.x - ax) + abs(b.z - az), b.y, b.x, b.z))

        reach_budget = int(self._cfg.reach) + 2
        stands = sorted(dist, key=lambda s: (dist[s], s[0], s[1], s[2]))
        for goal in placeable:
            for stand in stands:
                sx, sz, sf = stand
                if abs(sx - goal.x) + abs(sz - goal.z) + abs(sf - goal.y) > reach_budget:
                    continue
                for want_yaw in _YAWS:
                    for want_pitch in _PITCHES:
                        probe = AgentState(
                            x=float(sx), y=float(sf), z=float(sz),
                            yaw=want_yaw, pitch=want_pitch,
                        )
                        ti = target_cell(
                            probe, grid,
                            eye_height=self._cfg.eye_height,
                            reach=self._cfg.reach,
                            ray_step=self._cfg.ray_step,
                        )
                        if ti.place_at == (goal.x, goal.y, goal.z):
                            self._emit_plan(
                                prev, start, stand, yaw, pitch,
                                want_yaw, want_pitch, goal.color,
                            )
                            return
        raise OracleStuckError(
            f"task {self._task.task_id}: no stand cell can target any of "
            f"{[(b.x, b.y, b.z) for b in placeable]}"
        )

    def _emit_plan(self, prev, start, stand, yaw, pitch, want_yaw, want_pitch, color):
        plan: list[int] = []
        # Reconstruct the walk backwards, then emit turns + steps forward.
        edges = []
        node = stand
        while node != start:
            node, direction, jumped = prev[node]
            edges.append((direction, jumped))
        edges.reverse()
        heading = yaw
        for direction, jumped in edges:
            want = _DIR_TO_YAW[direction]
            plan.extend(_turn_actions(heading, want))
            heading = want
            if jumped:
                plan.append(ACTION_CODES["jump"])
            plan.append(ACTION_CODES["step_forward"])
        plan.extend(_turn_actions(heading, want_yaw))
        plan.extend(_pitch_actions(pitch, want_pitch))
        plan.append(ACTION_CODES["choose_type_1"] + int(color) - 1)
        plan.append(ACTION_CODES["place_block"])
        self._plan.extend(plan)


def _has_support(grid: VoxelGrid, x: int, y: int, z: int) -> bool:
    if y == 0:
        return True
    for nx, ny, nz in ((x + 1, y, z), (x - 1, y, z), (x, y + 1, z),
                       (x, y - 1, z), (x, y, z + 1), (x, y, z - 1)):
        if 0 <= nx < ZONE_X and 0 <= ny < ZONE_Y and 0 <= nz < ZONE_Z:
            if grid.get(nx, ny, nz) != AIR:
                return True
    return False


def _body_fits(grid: VoxelGrid, x: int, z: int, feet: int) -> bool:
    if feet > ZONE_Y - 1:
        return False
    if grid.get(x, feet, z) != AIR:
        return False
    head = feet + 1
    return head > ZONE_Y - 1 or grid.get(x, head, z) == AIR


def _walk_graph(grid: VoxelGrid, start: tuple[int, int, int]):
    """Cheapest action counts from the start stand-state over (x, z, feet)
    states; walking costs 1 action, a jump-climb costs 2."""
    dist = {start: 0}
    prev: dict = {}
    heap = [(0, start)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist.get(node, 1 << 30):
            continue
        x, z, feet = node
        headroom = feet + 2 > ZONE_Y - 1 or grid.get(x, feet + 2, z) == AIR
        for direction in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nx, nz = x + direction[0], z + direction[1]
            if not (0 <= nx < ZONE_X and 0 <= nz < ZONE_Z):
                continue
            moves = [(settle_height(grid, nx, nz, feet), False, 1)]
            if headroom and feet + 1 <= ZONE_Y - 1:
                land2 = settle_height(grid, nx, nz, feet + 1)
                if land2 != moves[0][0]:
                    moves.append((land2, True, 2))
            for land, jumped, cost in moves:
                if not _body_fits(grid, nx, nz, land):
                    continue
                nxt = (nx, nz, land)
                nd = d + cost
                if nd < dist.get(nxt, 1 << 30):
                    dist[nxt] = nd
                    prev[nxt] = (node, direction, jumped)
                    heapq.heappush(heap, (nd, nxt))
    return dist, prev


def _turn_actions(have: int, want: int) -> list[int]:
    diff = (want - have) % 360
    if diff == 0:
        return []
    if diff == 90:
        return [ACTION_CODES["turn_right"]]
    if diff == 270:
        return [ACTION_CODES["turn_left"]]
    return [ACTION_CODES["turn_right"], ACTION_CODES["turn_right"]]


def _pitch_actions(have: int, want: int) -> list[int]:
    steps = (want - have) // 45
    if steps > 0:
        return [ACTION_CODES["turn_up"]] * steps
    return [ACTION_CODES["turn_down"]] * (-steps)


AGENT_KINDS = ("random", "greedy_oracle")


def make_agent(kind: str, seed: int = 0) -> Agent:
    if kind == "random":
        return RandomAgent(seed)
    if kind == "greedy_oracle":
        return GreedyOracle(seed)
    raise ValueError(f"unknown agent kind {kind!r} (expected one of {AGENT_KINDS})")


def run_episode(
    task: TaskDef,
    agent: Agent,
    config=None,
    recorder=None,
) -> tuple[EpisodeSummary, BuilderEngine]:
    """Drive one full episode; returns the summary and the finished engine.

    ``recorder`` may be any object with start/record_step/finish hooks (see
    the episode log module); pass None to skip recording.
    """
    engine = BuilderEngine(task, config)
    obs = engine.observation()
    agent.reset(engine)
    if recorder is not None:
        recorder.start(engine)
    g = 0
    while not engine.done:
        action = agent.act(obs)
        obs, reward, done, info = engine.step(action)
        g += reward.value
        if recorder is not None:
            recorder.record_step(engine, action, reward, info, obs, done)
    summary = summarize_episode(
        task_id=task.task_id,
        g=float(g),
        built=structure_from_grid(engine.grid),
        target=task.target,
        steps_used=engine.step_index,
    )
    if recorder is not None:
        recorder.finish(engine, summary)
    return summary, engine
