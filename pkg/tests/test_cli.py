"""Command-line behavior: subcommands, reports, exit codes, env overrides."""

import json
import re
import signal
import subprocess
import sys
import time

import pytest

from iglu_blocks.agents import GreedyOracle, run_episode
from iglu_blocks.cli import main
from iglu_blocks.engine import EpisodeConfig
from iglu_blocks.replay import (
    EpisodeFooter,
    EpisodeHeader,
    EpisodeRecord,
    Recorder,
    load_record,
    replay_verify,
    save_record,
)
from iglu_blocks.tasks import get_task, write_task

from netclient import LineClient


def run_cli(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def make_oracle_record(tmp_path, name="l5-run.iglu-episode"):
    task = get_task("l5")
    recorder = Recorder()
    run_episode(task, GreedyOracle(), EpisodeConfig(task_id="l5"), recorder=recorder)
    path = tmp_path / name
    save_record(recorder.record, path)
    return path


def synthetic_record(tmp_path, name, g, c, rho):
    header = EpisodeHeader(task_id="l5", seed=0, config={"task_id": "l5"})
    footer = EpisodeFooter(
        g=g, c=c, rho=rho, hamming_norm=0.0, steps_used=10, end_reason="max_steps"
    )
    path = tmp_path / name
    save_record(EpisodeRecord(header, (), footer), path)
    return path


# -- run ----------------------------------------------------------------------


def test_run_oracle_on_l5(tmp_path, capsys):
    code, out, _ = run_cli(
        ["run", "--task", "l5", "--agent", "greedy_oracle", "--out", str(tmp_path)], capsys
    )
    assert code == 0
    assert "S_r 10.0000" in out  # five placements, +2 each
    assert "S_s 1.0000" in out
    assert "S_c 1.0000" in out
    record_path = tmp_path / "l5-seed0.iglu-episode"
    assert record_path.exists()
    record = load_record(record_path)
    assert record.footer.c == 1
    assert replay_verify(record) is None


def test_run_is_deterministic(tmp_path, capsys):
    argv = ["run", "--task", "corners", "--agent", "random", "--seed", "3",
            "--episodes", "2", "--out", str(tmp_path)]
    code_a, out_a, _ = run_cli(argv, capsys)
    code_b, out_b, _ = run_cli(argv, capsys)
    assert code_a == code_b == 0
    assert out_a == out_b


def test_run_json_report(tmp_path, capsys):
    code, out, _ = run_cli(
        ["run", "--task", "l5", "--out", str(tmp_path), "--format", "json"], capsys
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["task"] == "l5"
    assert payload["s_s"] == 1.0
    assert payload["s_r"] == 10.0
    assert len(payload["results"]) == 1
    assert payload["results"][0]["seed"] == 0


def test_run_zero_episodes_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--task", "l5", "--episodes", "0", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_run_unknown_task_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--task", "atlantis", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_bad_agent_choice_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--agent", "psychic", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["conquer"])
    assert exc.value.code == 1


def test_run_with_extra_task_dir(tmp_path, capsys):
    task = get_task("l5")
    custom = type(task)(
        task_id="custom-row",
        target=task.target,
        difficulty=task.difficulty,
        subgoals=task.subgoals,
    )
    task_dir = tmp_path / "extra"
    task_dir.mkdir()
    (task_dir / "custom-row.task").write_text(write_task(custom))
    code, out, _ = run_cli(
        ["run", "--task", "custom-row", "--task-dir", str(task_dir), "--out", str(tmp_path)],
        capsys,
    )
    assert code == 0
    assert "task custom-row" in out


# -- eval ---------------------------------------------------------------------


def test_eval_aggregates_records(tmp_path, capsys):
    a = synthetic_record(tmp_path, "a.iglu-episode", g=2.0, c=1, rho=0.0)
    b = synthetic_record(tmp_path, "b.iglu-episode", g=4.0, c=0, rho=1.0 / 3.0)
    code, out, _ = run_cli(["eval", str(a), str(b)], capsys)
    assert code == 0
    assert "S_r 3.0000" in out
    assert "S_s 0.5000" in out
    code, out, _ = run_cli(["eval", str(a), str(b), "--format", "json"], capsys)
    payload = json.loads(out)
    assert payload["s_r"] == 3.0 and payload["s_s"] == 0.5
    assert len(payload["results"]) == 2


def test_eval_reports_bad_files(tmp_path, capsys):
    good = synthetic_record(tmp_path, "good.iglu-episode", g=2.0, c=1, rho=0.0)
    missing = tmp_path / "missing.iglu-episode"
    garbage = tmp_path / "garbage.iglu-episode"
    garbage.write_text("not a record\n")
    code, out, _ = run_cli(["eval", str(good), str(missing), str(garbage)], capsys)
    assert code == 2
    assert "S_r 2.0000" in out  # the good record still scores
    assert out.count("error:") == 2


def test_eval_rejects_footerless_record(tmp_path, capsys):
    header = EpisodeHeader(task_id="l5", seed=0, config={"task_id": "l5"})
    path = tmp_path / "crashed.iglu-episode"
    save_record(EpisodeRecord(header, (), None), path)
    code, out, _ = run_cli(["eval", str(path)], capsys)
    assert code == 2
    assert "no closing summary" in out


# -- replay ---------------------------------------------------------------------


def test_replay_verifies_a_fresh_record(tmp_path, capsys):
    path = make_oracle_record(tmp_path)
    code, out, _ = run_cli(["replay", str(path)], capsys)
    assert code == 0
    assert out.strip().endswith("ok")


def test_replay_flags_a_tampered_record(tmp_path, capsys):
    path = make_oracle_record(tmp_path)
    lines = path.read_text().splitlines()
    for i, line in enumerate(lines):
        row = json.loads(line)
        if row["kind"] == "step" and row["reward"] == 2:
            row["reward"] = -2
            row["cause"] = "match_loss"
            lines[i] = json.dumps(row, separators=(",", ":"))
            break
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(["replay", str(path)], capsys)
    assert code == 3
    assert "divergence" in out
    assert "reward" in out


def test_replay_version_gate(tmp_path, capsys):
    path = make_oracle_record(tmp_path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["engine_version"] = "0.0.1"
    lines[0] = json.dumps(header, separators=(",", ":"))
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(["replay", str(path)], capsys)
    assert code == 2
    assert "0.0.1" in out
    code, out, _ = run_cli(["replay", str(path), "--allow-version-mismatch"], capsys)
    assert code == 0


def test_replay_json_report(tmp_path, capsys):
    path = make_oracle_record(tmp_path)
    code, out, _ = run_cli(["replay", str(path), "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["results"][0]["status"] == "ok"


# -- validate-task -----------------------------------------------------------------


def test_validate_task_accepts_bundled(tmp_path, capsys):
    task_file = tmp_path / "l5.task"
    task_file.write_text(write_task(get_task("l5")))
    code, out, _ = run_cli(["validate-task", str(task_file)], capsys)
    assert code == 0
    assert "ok" in out


def test_validate_task_rejects_broken_file(tmp_path, capsys):
    bad = tmp_path / "bad.task"
    bad.write_text("this is not a task file\n")
    code, out, _ = run_cli(["validate-task", str(bad)], capsys)
    assert code == 2
    assert "error" in out


# -- bleu -------------------------------------------------------------------------


def test_bleu_identity_corpus(tmp_path, capsys):
    text = "place three red blocks in a row\nnow stack two more on the left end\n"
    cands = tmp_path / "cands.txt"
    refs = tmp_path / "refs.txt"
    cands.write_text(text)
    refs.write_text(text)
    code, out, _ = run_cli(["bleu", "--candidates", str(cands), "--references", str(refs)], capsys)
    assert code == 0
    assert "bleu_4 1.0000" in out
    assert "keyword all precision 1.0000 recall 1.0000" in out


def test_bleu_unigram_fixture(tmp_path, capsys):
    cands = tmp_path / "cands.txt"
    refs = tmp_path / "refs.txt"
    cands.write_text("place a red block\n")
    refs.write_text("place the red block\n")
    code, out, _ = run_cli(
        ["bleu", "--candidates", str(cands), "--references", str(refs), "--format", "json"],
        capsys,
    )
    assert code == 0
    assert json.loads(out)["bleu_1"] == 0.75


def test_bleu_misaligned_files(tmp_path, capsys):
    cands = tmp_path / "cands.txt"
    refs = tmp_path / "refs.txt"
    cands.write_text("one line\n")
    refs.write_text("first\nsecond\n")
    code, _, err = run_cli(["bleu", "--candidates", str(cands), "--references", str(refs)], capsys)
    assert code == 2
    assert "line-aligned" in err


# -- environment overrides -----------------------------------------------------------


def test_env_overrides_seed_and_format(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("IGLU_SEED", "7")
    monkeypatch.setenv("IGLU_FORMAT", "json")
    code, out, _ = run_cli(["run", "--task", "l5", "--out", str(tmp_path)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["results"][0]["seed"] == 7
    assert (tmp_path / "l5-seed7.iglu-episode").exists()


def test_env_override_bad_value_falls_back(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("IGLU_EPISODES", "many")
    code, out, err = run_cli(["run", "--task", "l5", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "episodes 1" in out
    assert "IGLU_EPISODES" in err


# -- serve -------------------------------------------------------------------------


def test_serve_command_end_to_end(tmp_path):
    proc = subprocess.Popen(
        [sys.executable, "-m", "iglu_blocks.cli", "serve", "--port", "0",
         "--record-dir", str(tmp_path / "records")],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        match = re.match(r"listening on ([\d.]+):(\d+)", line)
        assert match, line
        host, port = match.group(1), int(match.group(2))
        with LineClient(host, port) as client:
            ack = client.roundtrip("hello", protocol_version=1)
            assert ack["kind"] == "hello_ack"
            obs = client.roundtrip("reset", task_id="l5")
            assert obs["kind"] == "observation"
            assert client.roundtrip("bye")["kind"] == "bye"
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
