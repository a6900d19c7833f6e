"""Operator command line: run episodes, evaluate logs, replay, validate, serve.

Exit codes: 0 success, 1 usage error, 2 validation failure (bad files or
task definitions), 3 replay divergence.  Every report is available as plain
text or JSON via ``--format``; defaults may be overridden with ``IGLU_``-
prefixed environment variables (e.g. ``IGLU_PORT=9000 iglu serve``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .agents import AGENT_KINDS, make_agent, run_episode
from .engine import EpisodeConfig
from .metrics import (
    completion_rate,
    corpus_bleu,
    corpus_keyword_pr,
    default_lexicon,
    load_lexicon,
    reward_score,
    success_rate,
)
from .protocol import DEFAULT_PORT, ProtocolServer
from .replay import (
    EPISODE_SUFFIX,
    Recorder,
    ReplayParseError,
    VersionMismatchError,
    load_record,
    replay_verify,
    save_record,
)
from .tasks import (
    TASK_SUFFIX,
    UnknownTaskError,
    get_task,
    load_task,
    task_library,
    validate_task,
)

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad arguments; the contract reserves 2 for
    validation failures, so remap usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _env(name: str, fallback, cast=str):
    raw = os.environ.get(f"IGLU_{name}")
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError):
        print(f"warning: ignoring IGLU_{name}={raw!r} (not a valid {cast.__name__})", file=sys.stderr)
        return fallback


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _extra_task_files(dirs) -> tuple[Path, ...]:
    """--task-dir entries may be directories of .task files or single files."""
    files: list[Path] = []
    for entry in dirs:
        path = Path(entry)
        if path.is_dir():
            files.extend(sorted(path.glob(f"*{TASK_SUFFIX}")))
        else:
            files.append(path)
    return tuple(files)


def _emit(args, text_lines: list[str], payload: dict) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for line in text_lines:
            print(line)


# -- run ---------------------------------------------------------------------------


def _cmd_run(args, parser) -> int:
    if args.episodes < 1:
        parser.error("--episodes must be at least 1")
    library = task_library(_extra_task_files(args.task_dir))
    try:
        task = get_task(args.task, library)
    except UnknownTaskError as exc:
        parser.error(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for i in range(args.episodes):
        seed = args.seed + i
        agent = make_agent(args.agent, seed=seed)
        config = EpisodeConfig(task_id=task.task_id, max_steps=args.max_steps, seed=seed)
        recorder = Recorder()
        summary, _engine = run_episode(task, agent, config, recorder=recorder)
        record_path = out_dir / f"{task.task_id}-seed{seed}{EPISODE_SUFFIX}"
        save_record(recorder.record, record_path)
        rows.append((seed, summary, record_path))

    summaries = [s for _, s, _ in rows]
    s_r = reward_score(summaries)
    s_s = success_rate(summaries)
    s_c = completion_rate(summaries)
    text = [
        f"task {task.task_id}",
        f"agent {args.agent}",
        f"episodes {args.episodes}",
        f"S_r {_fmt(s_r)}",
        f"S_s {_fmt(s_s)}",
        f"S_c {_fmt(s_c)}",
    ]
    for seed, s, path in rows:
        text.append(
            f"episode seed {seed}: g {_fmt(s.g)} c {s.c} rho {_fmt(s.rho)} "
            f"steps {s.steps_used} record {path}"
        )
    payload = {
        "task": task.task_id,
        "agent": args.agent,
        "episodes": args.episodes,
        "s_r": round(s_r, 4),
        "s_s": round(s_s, 4),
        "s_c": round(s_c, 4),
        "results": [
            {
                "seed": seed,
                "g": round(s.g, 4),
                "c": s.c,
                "rho": round(s.rho, 4),
                "steps_used": s.steps_used,
                "record": str(path),
            }
            for seed, s, path in rows
        ],
    }
    _emit(args, text, payload)
    return EXIT_OK


# -- eval ---------------------------------------------------------------------------


def _cmd_eval(args, parser) -> int:
    rows = []
    failures = []
    for name in args.files:
        path = Path(name)
        try:
            record = load_record(path)
        except (ReplayParseError, OSError) as exc:
            failures.append(f"{path}: {exc}")
            continue
        if record.footer is None:
            failures.append(f"{path}: episode has no closing summary (crashed run?)")
            continue
        rows.append((path, record))

    text = []
    payload: dict = {"records": len(rows)}
    if rows:
        footers = [r.footer for _, r in rows]
        s_r = sum(f.g for f in footers) / len(footers)
        s_s = sum(f.c for f in footers) / len(footers)
        s_c = sum(1.0 - f.rho for f in footers) / len(footers)
        text = [
            f"records {len(rows)}",
            f"S_r {_fmt(s_r)}",
            f"S_s {_fmt(s_s)}",
            f"S_c {_fmt(s_c)}",
        ]
        payload.update(s_r=round(s_r, 4), s_s=round(s_s, 4), s_c=round(s_c, 4))
        payload["results"] = []
        for path, record in rows:
            f = record.footer
            text.append(
                f"{path}: task {record.header.task_id} g {_fmt(f.g)} c {f.c} "
                f"rho {_fmt(f.rho)} steps {f.steps_used} end {f.end_reason}"
            )
            payload["results"].append(
                {
                    "file": str(path),
                    "task": record.header.task_id,
                    "g": round(f.g, 4),
                    "c": f.c,
                    "rho": round(f.rho, 4),
                    "steps_used": f.steps_used,
                    "end_reason": f.end_reason,
                }
            )
    if failures:
        payload["errors"] = failures
        text.extend(f"error: {line}" for line in failures)
    _emit(args, text, payload)
    return EXIT_VALIDATION if failures else EXIT_OK


# -- replay -------------------------------------------------------------------------


def _cmd_replay(args, parser) -> int:
    library = task_library(_extra_task_files(args.task_dir))
    worst = EXIT_OK
    text = []
    results = []
    for name in args.files:
        path = Path(name)
        try:
            record = load_record(path)
        except (ReplayParseError, OSError) as exc:
            text.append(f"{path}: error: {exc}")
            results.append({"file": str(path), "status": "error", "detail": str(exc)})
            worst = max(worst, EXIT_VALIDATION)
            continue
        try:
            report = replay_verify(
                record, library, allow_version_mismatch=args.allow_version_mismatch
            )
        except (VersionMismatchError, UnknownTaskError) as exc:
            text.append(f"{path}: error: {exc}")
            results.append({"file": str(path), "status": "error", "detail": str(exc)})
            worst = max(worst, EXIT_VALIDATION)
            continue
        if report is None:
            text.append(f"{path}: ok")
            results.append({"file": str(path), "status": "ok"})
        else:
            text.append(f"{path}: {report}")
            results.append(
                {
                    "file": str(path),
                    "status": "divergence",
                    "step_index": report.step_index,
                    "field": report.field,
                    "recorded": report.recorded,
                    "actual": report.actual,
                }
            )
            worst = EXIT_DIVERGENCE
    _emit(args, text, {"results": results})
    return worst


# -- validate-task --------------------------------------------------------------------


def _cmd_validate_task(args, parser) -> int:
    any_bad = False
    text = []
    results = []
    for name in args.files:
        path = Path(name)
        try:
            task = load_task(path)
        except Exception as exc:  # parse failures are reported per file
            any_bad = True
            text.append(f"{path}: error: {exc}")
            results.append({"file": str(path), "status": "error", "detail": str(exc)})
            continue
        violations = validate_task(task)
        if violations:
            if any(v.severity == "error" for v in violations):
                any_bad = True
            for v in violations:
                text.append(f"{path}: {v.severity}: {v.code}: {v.message}")
            results.append(
                {
                    "file": str(path),
                    "status": "invalid" if any(v.severity == "error" for v in violations) else "ok",
                    "violations": [
                        {"code": v.code, "severity": v.severity, "message": v.message}
                        for v in violations
                    ],
                }
            )
        else:
            text.append(f"{path}: ok ({task.task_id}, {len(task.target)} blocks, {task.difficulty})")
            results.append({"file": str(path), "status": "ok", "task_id": task.task_id})
    _emit(args, text, {"results": results})
    return EXIT_VALIDATION if any_bad else EXIT_OK


# -- serve --------------------------------------------------------------------------


def _cmd_serve(args, parser) -> int:
    library = task_library(_extra_task_files(args.task_dir))
    server = ProtocolServer(
        host=args.host,
        port=args.port,
        library=library,
        record_dir=args.record_dir,
        static_dir=args.static_dir,
        idle_timeout=args.idle_timeout,
    )
    host, port = server.start()
    print(f"listening on {host}:{port}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


# -- bleu ---------------------------------------------------------------------------


def _read_lines(path: Path) -> list[str]:
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _cmd_bleu(args, parser) -> int:
    try:
        candidates = _read_lines(Path(args.candidates))
        references = _read_lines(Path(args.references))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if len(candidates) != len(references):
        print(
            f"error: {len(candidates)} candidates but {len(references)} references "
            "(files must be line-aligned)",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    if not candidates:
        print("error: no text pairs to score", file=sys.stderr)
        return EXIT_VALIDATION
    lexicon = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()

    pairs = [(cand, [ref]) for cand, ref in zip(candidates, references)]
    text = [f"pairs {len(pairs)}"]
    payload: dict = {"pairs": len(pairs)}
    for n in (1, 2, 3, 4):
        score = corpus_bleu(pairs, n=n)
        text.append(f"bleu_{n} {_fmt(score)}")
        payload[f"bleu_{n}"] = round(score, 4)
    pr = corpus_keyword_pr([(cand, ref) for cand, ref in zip(candidates, references)], lexicon)
    payload["keyword"] = {}
    for category, (precision, recall) in pr.items():
        p_txt = _fmt(precision) if precision is not None else "n/a"
        r_txt = _fmt(recall) if recall is not None else "n/a"
        text.append(f"keyword {category} precision {p_txt} recall {r_txt}")
        payload["keyword"][category] = {
            "precision": round(precision, 4) if precision is not None else None,
            "recall": round(recall, 4) if recall is not None else None,
        }
    _emit(args, text, payload)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def _add_format(sub) -> None:
    sub.add_argument(
        "--format",
        choices=("text", "json"),
        default=_env("FORMAT", "text"),
        help="report format (default: text)",
    )


def _add_task_dir(sub) -> None:
    sub.add_argument(
        "--task-dir",
        action="append",
        default=[],
        metavar="DIR",
        help="extra directory of .task files (repeatable)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="iglu", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    run = commands.add_parser("run", help="run episodes with a built-in agent")
    run.add_argument("--task", default=_env("TASK", "l5"), help="task id (default: l5)")
    run.add_argument(
        "--agent",
        choices=AGENT_KINDS,
        default=_env("AGENT", "greedy_oracle"),
        help="agent kind",
    )
    run.add_argument("--episodes", type=int, default=_env("EPISODES", 1, int))
    run.add_argument("--seed", type=int, default=_env("SEED", 0, int))
    run.add_argument("--max-steps", type=int, default=_env("MAX_STEPS", 500, int))
    run.add_argument(
        "--out", default=_env("OUT", "episodes"), help="directory for episode records"
    )
    _add_task_dir(run)
    _add_format(run)
    run.set_defaults(func=_cmd_run)

    ev = commands.add_parser("eval", help="aggregate metrics over episode records")
    ev.add_argument("files", nargs="+", metavar="RECORD")
    _add_format(ev)
    ev.set_defaults(func=_cmd_eval)

    rp = commands.add_parser("replay", help="re-run records and verify them")
    rp.add_argument("files", nargs="+", metavar="RECORD")
    rp.add_argument("--allow-version-mismatch", action="store_true")
    _add_task_dir(rp)
    _add_format(rp)
    rp.set_defaults(func=_cmd_replay)

    vt = commands.add_parser("validate-task", help="check task files")
    vt.add_argument("files", nargs="+", metavar="TASK")
    _add_format(vt)
    vt.set_defaults(func=_cmd_validate_task)

    sv = commands.add_parser("serve", help="start the session server")
    sv.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    sv.add_argument("--port", type=int, default=_env("PORT", DEFAULT_PORT, int))
    sv.add_argument("--record-dir", default=_env("RECORD_DIR", None))
    sv.add_argument("--static-dir", default=_env("STATIC_DIR", None))
    sv.add_argument("--idle-timeout", type=float, default=_env("IDLE_TIMEOUT", 600.0, float))
    _add_task_dir(sv)
    sv.set_defaults(func=_cmd_serve)

    bl = commands.add_parser("bleu", help="score instruction text against references")
    bl.add_argument("--candidates", required=True, metavar="FILE")
    bl.add_argument("--references", required=True, metavar="FILE")
    bl.add_argument("--lexicon", default=_env("LEXICON", None), metavar="FILE")
    _add_format(bl)
    bl.set_defaults(func=_cmd_bleu)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
