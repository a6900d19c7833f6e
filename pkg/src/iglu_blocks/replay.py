"""Episode logs and deterministic replay verification.

An episode file (extension ``.iglu-episode``) is line-oriented JSON: a header
line, one line per step, and a footer line.  Interrupted runs therefore leave
a readable prefix.  Timestamps are record-keeping only: canonical
serialization strips them, and replay verification ignores them, so two runs
of the same seed and actions compare bit-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from . import ENGINE_VERSION
from .engine import BuilderEngine, EpisodeConfig
from .matching import RewardEvent
from .metrics import summarize_episode
from .tasks import TaskDef, get_task
from .voxel import ZONE_X, ZONE_Y, ZONE_Z, grid_from_structure, hamming, structure_from_grid

__all__ = [
    "FORMAT_VERSION",
    "EPISODE_SUFFIX",
    "EpisodeHeader",
    "StepRecord",
    "EpisodeFooter",
    "EpisodeRecord",
    "Recorder",
    "ReplayParseError",
    "VersionMismatchError",
    "DivergenceReport",
    "save_record",
    "load_record",
    "record_to_lines",
    "canonical_bytes",
    "replay_verify",
]

FORMAT_VERSION = 1
EPISODE_SUFFIX = ".iglu-episode"
_ZONE_CELLS = ZONE_X * ZONE_Y * ZONE_Z


class ReplayParseError(ValueError):
    """Malformed episode file; carries the 1-based offending line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class VersionMismatchError(RuntimeError):
    def __init__(self, recorded: str, running: str):
        self.recorded = recorded
        self.running = running
        super().__init__(
            f"record written by engine {recorded}, running {running}; "
            "pass allow_version_mismatch=True to replay anyway"
        )


@dataclass(frozen=True)
class EpisodeHeader:
    task_id: str
    seed: int
    config: dict
    engine_version: str = ENGINE_VERSION
    format_version: int = FORMAT_VERSION
    started_at: int = 0  # epoch milliseconds; excluded from comparisons


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    ts_ms: int
    action: int
    reward: int
    cause: str
    grid_delta: tuple[tuple[int, int, int, int], ...]
    pose: tuple[float, float, float, int, int]
    chat_events: tuple[tuple[str, str], ...]
    done: bool


@dataclass(frozen=True)
class EpisodeFooter:
    g: float
    c: int
    rho: float
    hamming_norm: float
    steps_used: int
    end_reason: str
    trailing_chats: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class EpisodeRecord:
    header: EpisodeHeader
    steps: tuple[StepRecord, ...]
    footer: EpisodeFooter | None


class Recorder:
    """Collects an EpisodeRecord from engine callbacks.

    Chat is captured by diffing the observation's chat history, so utterances
    always attach to the first step recorded after them; utterances after the
    final step end up in the footer's trailing list.
    """

    def __init__(self):
        self._header: EpisodeHeader | None = None
        self._steps: list[StepRecord] = []
        self._footer: EpisodeFooter | None = None
        self._chat_seen = 0

    def start(self, engine: BuilderEngine) -> None:
        cfg = engine.config
        self._header = EpisodeHeader(
            task_id=engine.task.task_id,
            seed=cfg.seed,
            config={
                "task_id": cfg.task_id,
                "max_steps": cfg.max_steps,
                "seed": cfg.seed,
                "termination_on_exit": cfg.termination_on_exit,
                "eye_height": cfg.eye_height,
                "reach": cfg.reach,
                "ray_step": cfg.ray_step,
            },
            started_at=_now_ms(),
        )
        self._steps = []
        self._footer = None
        self._chat_seen = 0

    def record_step(self, engine, action: int, reward: RewardEvent, info: dict, obs, done: bool) -> None:
        chats = tuple((c.speaker, c.text) for c in obs.chat[self._chat_seen :])
        self._chat_seen = len(obs.chat)
        self._steps.append(
            StepRecord(
                step_index=obs.step_index,
                ts_ms=_now_ms(),
                action=action,
                reward=reward.value,
                cause=reward.cause,
                grid_delta=tuple(tuple(d) for d in info.get("grid_delta", ())),
                pose=obs.pose,
                chat_events=chats,
                done=done,
            )
        )

    def finish(self, engine: BuilderEngine, summary) -> None:
        trailing = tuple((c.speaker, c.text) for c in engine.chat[self._chat_seen :])
        target_grid = grid_from_structure(engine.task.target)
        self._footer = EpisodeFooter(
            g=summary.g,
            c=summary.c,
            rho=summary.rho,
            hamming_norm=hamming(engine.grid, target_grid) / _ZONE_CELLS,
            steps_used=summary.steps_used,
            end_reason=engine.end_reason or "",
            trailing_chats=trailing,
        )

    @property
    def record(self) -> EpisodeRecord:
        if self._header is None:
            raise RuntimeError("recorder never started")
        return EpisodeRecord(self._header, tuple(self._steps), self._footer)


def _now_ms() -> int:
    return int(time.time() * 1000)


# -- serialization ---------------------------------------------------------------


def _chat_json(events) -> list[dict]:
    return [{"speaker": s, "text": t} for s, t in events]


def record_to_lines(record: EpisodeRecord, *, timestamps: bool = True) -> list[str]:
    """Render the record as its file lines (header, steps, footer).

    With ``timestamps=False`` the wall-clock fields are omitted entirely,
    which is the canonical comparable form.
    """
    h = record.header
    head: dict = {
        "kind": "header",
        "format_version": h.format_version,
        "engine_version": h.engine_version,
        "task_id": h.task_id,
        "seed": h.seed,
        "config": h.config,
    }
    if timestamps:
        head["started_at"] = h.started_at
    lines = [_dump(head)]
    for s in record.steps:
        row: dict = {"kind": "step", "step_index": s.step_index}
        if timestamps:
            row["ts_ms"] = s.ts_ms
        row.update(
            action=s.action,
            reward=s.reward,
            cause=s.cause,
            grid_delta=[list(d) for d in s.grid_delta],
            pose=list(s.pose),
            chat_events=_chat_json(s.chat_events),
            done=s.done,
        )
        lines.append(_dump(row))
    if record.footer is not None:
        f = record.footer
        lines.append(
            _dump(
                {
                    "kind": "footer",
                    "g": f.g,
                    "c": f.c,
                    "rho": f.rho,
                    "hamming_norm": f.hamming_norm,
                    "steps_used": f.steps_used,
                    "end_reason": f.end_reason,
                    "trailing_chats": _chat_json(f.trailing_chats),
                }
            )
        )
    return lines


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def canonical_bytes(record: EpisodeRecord) -> bytes:
    """Timestamp-free byte form; equal iff the episodes are equal."""
    return ("\n".join(record_to_lines(record, timestamps=False)) + "\n").encode()


def save_record(record: EpisodeRecord, path: str | Path) -> Path:
    path = Path(path)
    path.write_text("\n".join(record_to_lines(record)) + "\n", encoding="utf-8")
    return path


def load_record(path: str | Path) -> EpisodeRecord:
    text = Path(path).read_text(encoding="utf-8")
    header: EpisodeHeader | None = None
    steps: list[StepRecord] = []
    footer: EpisodeFooter | None = None
    for line_no, line in enumerate(text.split("\n"), 1):
        if line == "":
            continue  # trailing newline
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayParseError(line_no, f"bad JSON ({exc.msg})") from None
        kind = obj.get("kind")
        if kind == "header":
            if header is not None:
                raise ReplayParseError(line_no, "second header")
            try:
                header = EpisodeHeader(
                    task_id=obj["task_id"],
                    seed=obj["seed"],
                    config=obj["config"],
                    engine_version=obj["engine_version"],
                    format_version=obj["format_version"],
                    started_at=obj.get("started_at", 0),
                )
            except KeyError as exc:
                raise ReplayParseError(line_no, f"header missing {exc}") from None
            if header.format_version != FORMAT_VERSION:
                raise ReplayParseError(line_no, f"unsupported format_version {header.format_version}")
        elif kind == "step":
            if header is None:
                raise ReplayParseError(line_no, "step before header")
            if footer is not None:
                raise ReplayParseError(line_no, "step after footer")
            try:
                steps.append(
                    StepRecord(
                        step_index=obj["step_index"],
                        ts_ms=obj.get("ts_ms", 0),
                        action=obj["action"],
                        reward=obj["reward"],
                        cause=obj["cause"],
                        grid_delta=tuple(tuple(d) for d in obj["grid_delta"]),
                        pose=tuple(obj["pose"]),
                        chat_events=tuple((c["speaker"], c["text"]) for c in obj["chat_events"]),
                        done=obj["done"],
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ReplayParseError(line_no, f"malformed step ({exc})") from None
        elif kind == "footer":
            if header is None:
                raise ReplayParseError(line_no, "footer before header")
            if footer is not None:
                raise ReplayParseError(line_no, "second footer")
            try:
                footer = EpisodeFooter(
                    g=obj["g"],
                    c=obj["c"],
                    rho=obj["rho"],
                    hamming_norm=obj["hamming_norm"],
                    steps_used=obj["steps_used"],
                    end_reason=obj["end_reason"],
                    trailing_chats=tuple((c["speaker"], c["text"]) for c in obj["trailing_chats"]),
                )
            except KeyError as exc:
                raise ReplayParseError(line_no, f"footer missing {exc}") from None
        else:
            raise ReplayParseError(line_no, f"unknown line kind {kind!r}")
    if header is None:
        raise ReplayParseError(1, "missing header")
    if steps and steps[-1].step_index != len(steps):
        raise ReplayParseError(
            len(text.split("\n")), "step indices do not form a 1..n sequence"
        )
    return EpisodeRecord(header, tuple(steps), footer)


# -- verification -----------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceReport:
    step_index: int | None
    field: str
    recorded: object
    actual: object

    def __str__(self) -> str:
        where = "footer" if self.step_index is None else f"step {self.step_index}"
        return f"divergence at {where}, field {self.field}: recorded {self.recorded!r}, got {self.actual!r}"


def replay_verify(
    record: EpisodeRecord,
    library: dict[str, TaskDef] | None = None,
    *,
    allow_version_mismatch: bool = False,
) -> DivergenceReport | None:
    """Re-run the recorded actions and compare everything but timestamps.

    Returns None when the record is faithful, otherwise the first divergence.
    """
    if record.header.engine_version != ENGINE_VERSION and not allow_version_mismatch:
        raise VersionMismatchError(record.header.engine_version, ENGINE_VERSION)
    task = get_task(record.header.task_id, library)
    config = EpisodeConfig(**record.header.config)
    engine = BuilderEngine(task, config)

    g = 0
    for s in record.steps:
        if engine.done:
            return DivergenceReport(s.step_index, "done", False, True)
        for speaker, text in s.chat_events:
            engine.add_chat(speaker, text)
        obs, reward, done, info = engine.step(s.action)
        g += reward.value
        actual = {
            "reward": reward.value,
            "cause": reward.cause,
            "grid_delta": tuple(tuple(d) for d in info["grid_delta"]),
            "pose": obs.pose,
            "done": done,
        }
        recorded = {
            "reward": s.reward,
            "cause": s.cause,
            "grid_delta": s.grid_delta,
            "pose": s.pose,
            "done": s.done,
        }
        for field in ("reward", "cause", "grid_delta", "pose", "done"):
            if actual[field] != recorded[field]:
                return DivergenceReport(s.step_index, field, recorded[field], actual[field])

    if record.footer is not None:
        for speaker, text in record.footer.trailing_chats:
            engine.add_chat(speaker, text)
        summary = summarize_episode(
            task_id=task.task_id,
            g=float(g),
            built=structure_from_grid(engine.grid),
            target=task.target,
            steps_used=engine.step_index,
        )
        target_grid = grid_from_structure(task.target)
        actual_footer = {
            "g": summary.g,
            "c": summary.c,
            "rho": summary.rho,
            "hamming_norm": hamming(engine.grid, target_grid) / _ZONE_CELLS,
            "steps_used": summary.steps_used,
            "end_reason": engine.end_reason or "",
        }
        f = record.footer
        recorded_footer = {
            "g": f.g,
            "c": f.c,
            "rho": f.rho,
            "hamming_norm": f.hamming_norm,
            "steps_used": f.steps_used,
            "end_reason": f.end_reason,
        }
        for field, want in recorded_footer.items():
            if actual_footer[field] != want:
                return DivergenceReport(None, field, want, actual_footer[field])
    return None
