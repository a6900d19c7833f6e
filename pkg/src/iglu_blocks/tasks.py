"""Task definitions: targets, difficulty, sub-goal decompositions, and the task file format.

A task file is line-oriented UTF-8 text: a fixed header, a target structure
literal, then (instruction, cumulative blocks) sub-goal pairs.  The writer is
canonical (stable bytes), see docs/file-formats.md.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .matching import max_match
from .voxel import (
    BLOCKS_PER_COLOR,
    BlockColor,
    Structure,
    Transform,
    apply_transform,
    in_zone,
)

FORMAT_VERSION = 1
DIFFICULTIES = ("Easy", "Normal", "Hard")
EASY_MAX_SCORE = 12
NORMAL_MAX_SCORE = 30
TASK_SUFFIX = ".task"


class TaskParseError(ValueError):
    """Malformed task file; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class SubGoal:
    instruction: str
    cumulative: Structure


@dataclass(frozen=True)
class TaskDef:
    task_id: str
    target: Structure
    difficulty: str
    subgoals: tuple[SubGoal, ...]
    provenance: str = ""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    severity: str = "error"  # "error" | "warning"


def classify_difficulty(
    target: Structure, *, easy_max: int = EASY_MAX_SCORE, normal_max: int = NORMAL_MAX_SCORE
) -> str:
    """Difficulty score = block count + 3 x distinct colors; thresholds configurable."""
    if len(target) == 0:
        raise ValueError("cannot classify an empty target")
    score = len(target) + 3 * len({b.color for b in target})
    if score <= easy_max:
        return "Easy"
    if score <= normal_max:
        return "Normal"
    return "Hard"


# -- parsing -----------------------------------------------------------------


def _parse_blocks(line_no: int, text: str) -> Structure:
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as err:
        raise TaskParseError(line_no, f"bad structure literal: {err}") from None
    if not isinstance(rows, list):
        raise TaskParseError(line_no, "structure literal must be a list")
    try:
        return Structure.from_literal(rows)
    except ValueError as err:
        raise TaskParseError(line_no, str(err)) from None


def parse_task(text: str) -> TaskDef:
    """Parse a task file; raises TaskParseError with line positions, then validates."""
    lines = text.splitlines()
    fields: dict[str, str] = {}
    subgoals: list[tuple[str, Structure]] = []
    pending_instruction: tuple[int, str] | None = None
    order = ["format_version", "task_id", "difficulty", "provenance", "target"]

    for i, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise TaskParseError(i, f"expected 'key: value', got {line!r}")
        key, value = key.strip(), value.strip()
        if key == "subgoal":
            if "target" not in fields:
                raise TaskParseError(i, "subgoal before target")
            if pending_instruction is not None:
                raise TaskParseError(i, "subgoal missing its blocks line")
            if not value:
                raise TaskParseError(i, "sub-goal instruction must not be empty")
            pending_instruction = (i, value)
        elif key == "blocks":
            if pending_instruction is None:
                raise TaskParseError(i, "blocks line without a preceding subgoal")
            subgoals.append((pending_instruction[1], _parse_blocks(i, value)))
            pending_instruction = None
        elif key in order:
            if key in fields:
                raise TaskParseError(i, f"duplicate {key} line")
            if subgoals or pending_instruction:
                raise TaskParseError(i, f"{key} must appear before sub-goals")
            fields[key] = value
        else:
            raise TaskParseError(i, f"unknown key {key!r}")

    if pending_instruction is not None:
        raise TaskParseError(pending_instruction[0], "subgoal missing its blocks line")
    if fields.get("format_version") != str(FORMAT_VERSION):
        raise TaskParseError(1, f"format_version must be {FORMAT_VERSION}")
    task_id = fields.get("task_id", "")
    if not task_id or not all(c.isalnum() or c in "-_" for c in task_id):
        raise TaskParseError(1, f"bad task_id {task_id!r}")
    if "target" not in fields:
        raise TaskParseError(len(lines) or 1, "missing target")
    target = _parse_blocks(1, fields["target"])

    if "difficulty" in fields:
        difficulty = fields["difficulty"]
        if difficulty not in DIFFICULTIES:
            raise TaskParseError(1, f"difficulty must be one of {DIFFICULTIES}")
    else:
        difficulty = classify_difficulty(target) if len(target) else "Easy"

    if not subgoals:
        # single whole-target sub-goal keeps the queue semantics uniform
        subgoals = [("build the target structure", target)]

    task = TaskDef(
        task_id=task_id,
        target=target,
        difficulty=difficulty,
        subgoals=tuple(SubGoal(instr, cum) for instr, cum in subgoals),
        provenance=fields.get("provenance", ""),
    )
    errors = [v for v in validate_task(task) if v.severity == "error"]
    if errors:
        raise TaskParseError(1, "; ".join(f"{v.code}: {v.message}" for v in errors))
    return task


def write_task(task: TaskDef) -> str:
    """Canonical task file text: fixed key order, compact sorted literals."""
    def literal(s: Structure) -> str:
        return json.dumps(s.to_literal(), separators=(",", ":"))

    out = [f"format_version: {FORMAT_VERSION}", f"task_id: {task.task_id}"]
    out.append(f"difficulty: {task.difficulty}")
    if task.provenance:
        out.append(f"provenance: {task.provenance}")
    out.append(f"target: {literal(task.target)}")
    for sg in task.subgoals:
        out.append(f"subgoal: {sg.instruction}")
        out.append(f"blocks: {literal(sg.cumulative)}")
    return "\n".join(out) + "\n"


def load_task(path: str | Path) -> TaskDef:
    return parse_task(Path(path).read_text(encoding="utf-8"))


# -- validation ---------------------------------------------------------------


def validate_task(task: TaskDef) -> list[Violation]:
    """Structural checks; 'error' severity blocks loading, warnings do not."""
    violations: list[Violation] = []
    if len(task.target) == 0:
        violations.append(Violation("empty_target", "target has no blocks"))
    for b in task.target:
        if not in_zone(b.x, b.y, b.z):
            violations.append(
                Violation("out_of_zone", f"target block at {(b.x, b.y, b.z)} outside the zone")
            )
    for color, count in task.target.color_counts().items():
        if count > BLOCKS_PER_COLOR:
            violations.append(
                Violation(
                    "inventory_exceeded",
                    f"{count} {color.color_name} blocks exceed the {BLOCKS_PER_COLOR}-block inventory",
                )
            )
    if task.difficulty not in DIFFICULTIES:
        violations.append(Violation("bad_difficulty", f"unknown difficulty {task.difficulty!r}"))

    prev: Structure | None = None
    for i, sg in enumerate(task.subgoals):
        if not sg.instruction.strip():
            violations.append(Violation("empty_instruction", f"sub-goal {i} has no instruction"))
        if len(sg.cumulative) == 0:
            violations.append(Violation("subgoal_not_nested", f"sub-goal {i} is empty"))
        if prev is not None:
            if not (prev.block_set() < sg.cumulative.block_set()):
                violations.append(
                    Violation(
                        "subgoal_not_nested",
                        f"sub-goal {i} does not strictly contain sub-goal {i - 1}",
                    )
                )
        prev = sg.cumulative
    if task.subgoals and task.subgoals[-1].cumulative != task.target:
        violations.append(
            Violation("incomplete_decomposition", "final sub-goal does not equal the target")
        )

    # support connectivity: every block reachable from the ground via face adjacency
    if len(task.target) and not violations:
        cells = {(b.x, b.y, b.z) for b in task.target}
        frontier = [c for c in cells if c[1] == 0]
        seen = set(frontier)
        while frontier:
            x, y, z = frontier.pop()
            for nx, ny, nz in (
                (x + 1, y, z), (x - 1, y, z), (x, y + 1, z),
                (x, y - 1, z), (x, y, z + 1), (x, y, z - 1),
            ):
                n = (nx, ny, nz)
                if n in cells and n not in seen:
                    seen.add(n)
                    frontier.append(n)
        floating = len(cells) - len(seen)
        if floating:
            violations.append(
                Violation(
                    "floating_blocks",
                    f"{floating} block(s) have no support path to the ground",
                    severity="warning",
                )
            )
    return violations


# -- sub-goal queue ------------------------------------------------------------


class SubgoalQueue:
    """Cursor over a task's cumulative sub-goals.

    A sub-goal completes when every block of its cumulative structure is present
    in the built structure under a shared witness transform; the witness is fixed
    by the first completion so later sub-goals are judged in the same frame.
    """

    def __init__(self, subgoals: Iterable[SubGoal]):
        self._subgoals = tuple(subgoals)
        self._pos = 0
        self._witness: Transform | None = None

    @property
    def witness(self) -> Transform | None:
        return self._witness

    @property
    def position(self) -> int:
        return self._pos

    @property
    def drained(self) -> bool:
        return self._pos >= len(self._subgoals)

    def current(self) -> SubGoal | None:
        if self.drained:
            return None
        return self._subgoals[self._pos]

    def advance(self, built: Structure) -> tuple[SubGoal | None, bool]:
        """One completion check of the head sub-goal.

        Returns (current sub-goal after the check, whether the head completed).
        Call repeatedly until the flag is False to drain bursts.
        """
        head = self.current()
        if head is None:
            return None, False
        cum = head.cumulative
        if len(built) < len(cum) or len(cum) == 0:
            return head, False
        if self._witness is None:
            res = max_match(built, cum)
            if res.max_match == len(cum):
                self._witness = res.witnesses[0]
                self._pos += 1
                return self.current(), True
            return head, False
        placed = apply_transform(cum, self._witness)
        if all(b in built for b in placed):
            self._pos += 1
            return self.current(), True
        return head, False


# -- bundled tasks -------------------------------------------------------------


def bundled_tasks() -> list[TaskDef]:
    """The tasks shipped inside the package, sorted by task_id."""
    tasks = []
    root = resources.files("iglu_blocks").joinpath("data/tasks")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(TASK_SUFFIX):
            tasks.append(parse_task(entry.read_text(encoding="utf-8")))
    return tasks


def task_library(extra_paths: Iterable[str | Path] = ()) -> dict[str, TaskDef]:
    """Bundled tasks plus any extra task files, keyed by task_id."""
    library = {t.task_id: t for t in bundled_tasks()}
    for path in extra_paths:
        t = load_task(path)
        library[t.task_id] = t
    return library


class UnknownTaskError(KeyError):
    def __init__(self, task_id: str):
        self.task_id = task_id
        super().__init__(f"unknown task_id {task_id!r}")


def get_task(task_id: str, library: dict[str, TaskDef] | None = None) -> TaskDef:
    """Look up a task by id, defaulting to the bundled library."""
    if library is None:
        library = task_library()
    try:
        return library[task_id]
    except KeyError:
        raise UnknownTaskError(task_id) from None
