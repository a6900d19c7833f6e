"""Session server tests: scripted raw-socket and WebSocket clients."""

import socket
import time

import pytest

from netclient import LineClient, WSClient

from iglu_blocks.agents import GreedyOracle
from iglu_blocks.engine import BuilderEngine, EpisodeConfig
from iglu_blocks.matching import max_match
from iglu_blocks.metrics import summarize_episode
from iglu_blocks.protocol import ProtocolServer
from iglu_blocks.replay import Recorder, canonical_bytes, load_record, replay_verify
from iglu_blocks.tasks import get_task
from iglu_blocks.voxel import Structure, structure_from_grid

# Scripted one-block opener: select red, face +x, look down a notch, place.
# From spawn the placement ray exits the zone floor past (6, 0, 5), so the
# block lands there — a target cell of l5 (reward +2).
PLACE_RED_EAST = (14, 8, 6, 11)


@pytest.fixture()
def server(tmp_path):
    srv = ProtocolServer(record_dir=tmp_path / "records")
    srv.start()
    yield srv
    srv.stop()


def connect(srv, role="builder_agent", **extra):
    client = LineClient(srv.host, srv.port)
    reply = client.roundtrip("hello", protocol_version=1, role=role, **extra)
    assert reply["kind"] == "hello_ack", reply
    return client


# -- handshake ----------------------------------------------------------------


def test_hello_handshake(server):
    with LineClient(server.host, server.port) as c:
        reply = c.roundtrip("hello", protocol_version=1, role="builder_agent")
        assert reply["kind"] == "hello_ack"
        assert reply["protocol_version"] == 1
        assert isinstance(reply["session_id"], str) and reply["session_id"]
        assert reply["role"] == "builder_agent"
        assert reply["attached"] is False
        assert reply["engine_version"]


def test_hello_rejects_bad_version_then_recovers(server):
    with LineClient(server.host, server.port) as c:
        err = c.roundtrip("hello", protocol_version=99)
        assert err["kind"] == "error" and err["code"] == "bad_version"
        err = c.roundtrip("hello", protocol_version=1, role="wizard")
        assert err["kind"] == "error" and err["code"] == "bad_role"
        # Typed errors never cost the connection.
        ok = c.roundtrip("hello", protocol_version=1)
        assert ok["kind"] == "hello_ack"
        again = c.roundtrip("hello", protocol_version=1)
        assert again["kind"] == "error" and again["code"] == "already_greeted"


def test_messages_before_hello_are_rejected(server):
    with LineClient(server.host, server.port) as c:
        for kind in ("list_tasks", "reset", "step", "chat", "observation"):
            reply = c.roundtrip(kind)
            assert reply["kind"] == "error" and reply["code"] == "need_hello", kind


def test_default_role_is_builder_agent(server):
    with LineClient(server.host, server.port) as c:
        reply = c.roundtrip("hello", protocol_version=1)
        assert reply["role"] == "builder_agent"


# -- framing and sequencing -----------------------------------------------------


def test_seq_must_strictly_increase(server):
    with connect(server) as c:
        c.send_raw(b'{"kind":"list_tasks","seq":1}\n')  # reused seq
        err = c.recv()
        assert err["kind"] == "error" and err["code"] == "bad_seq"
        c.send_raw(b'{"kind":"list_tasks"}\n')  # missing seq
        err = c.recv()
        assert err["code"] == "bad_seq"
        c.send_raw(b'{"kind":"list_tasks","seq":40}\n')  # gaps are fine
        ok = c.recv()
        assert ok["kind"] == "task_list"
        c.seq = 40


def test_server_seq_strictly_increases(server):
    with connect(server) as c:
        seqs = [c.roundtrip("list_tasks")["seq"] for _ in range(4)]
        assert all(b > a for a, b in zip(seqs, seqs[1:]))


def test_malformed_json_and_unknown_kind(server):
    with connect(server) as c:
        c.send_raw(b"this is not json\n")
        err = c.recv()
        assert err["kind"] == "error" and err["code"] == "bad_json"
        c.send_raw(b"[1,2,3]\n")
        err = c.recv()
        assert err["code"] == "bad_json"
        reply = c.roundtrip("teleport")
        assert reply["kind"] == "error" and reply["code"] == "bad_kind"
        assert c.roundtrip("list_tasks")["kind"] == "task_list"


def test_unknown_fields_are_ignored(server):
    with connect(server) as c:
        reply = c.roundtrip("list_tasks", flavor="grape", extra={"a": 1})
        assert reply["kind"] == "task_list"


def test_bye_closes_the_connection(server):
    c = connect(server)
    reply = c.roundtrip("bye")
    assert reply["kind"] == "bye"
    assert c.recv() is None
    c.close()


# -- task listing and reset -------------------------------------------------------


def test_list_tasks_rows(server):
    with connect(server) as c:
        reply = c.roundtrip("list_tasks")
        rows = {row["task_id"]: row for row in reply["tasks"]}
        assert "l5" in rows and "pyramid" in rows
        assert rows["l5"]["blocks"] == 5
        assert rows["l5"]["difficulty"] == "Easy"
        assert rows["l5"]["subgoals"] == 2
        ids = [row["task_id"] for row in reply["tasks"]]
        assert ids == sorted(ids)


def test_reset_returns_full_observation(server):
    with connect(server) as c:
        reply = c.roundtrip("reset", task_id="l5")
        assert reply["kind"] == "observation"
        obs = reply["observation"]
        assert obs["step_index"] == 0
        assert obs["pose"] == {"x": 5.0, "y": 0.0, "z": 5.0, "yaw": 0, "pitch": 0}
        assert all(v == 20 for v in obs["inventory"].values())
        assert len(obs["grid"]) == 9
        assert all(len(layer) == 11 and all(len(row) == 11 for row in layer) for layer in obs["grid"])
        assert sum(sum(sum(row) for row in layer) for layer in obs["grid"]) == 0
        assert obs["chat"] == []
        assert obs["current_instruction"] == get_task("l5").subgoals[0].instruction
        assert "target" not in obs  # builders play blind


def test_reset_validation(server):
    with connect(server) as c:
        assert c.roundtrip("reset")["code"] == "bad_request"
        assert c.roundtrip("reset", task_id="no-such")["code"] == "unknown_task"
        assert c.roundtrip("reset", task_id="l5", max_steps=0)["code"] == "bad_request"
        assert c.roundtrip("reset", task_id="l5", max_steps="lots")["code"] == "bad_request"
        assert c.roundtrip("reset", task_id="l5")["kind"] == "observation"


# -- stepping ----------------------------------------------------------------------


def test_step_requires_an_episode(server):
    with connect(server) as c:
        reply = c.roundtrip("step", action=0)
        assert reply["kind"] == "error" and reply["code"] == "no_active_episode"


def test_step_rejects_bad_actions(server):
    with connect(server) as c:
        c.roundtrip("reset", task_id="l5")
        for bad in (18, -1, "place_block", None, True, 2.5):
            reply = c.roundtrip("step", action=bad)
            assert reply["kind"] == "error" and reply["code"] == "bad_action", bad
        ok = c.roundtrip("step", action=0)
        assert ok["kind"] == "step_result"
        assert ok["observation"]["step_index"] == 1  # errors consumed no steps


def test_step_results_carry_deltas_not_grids(server):
    with connect(server) as c:
        c.roundtrip("reset", task_id="l5")
        replies = [c.roundtrip("step", action=a) for a in PLACE_RED_EAST]
        for reply in replies:
            assert reply["kind"] == "step_result"
            assert "grid" not in reply["observation"]
            assert "grid_delta" in reply["observation"]
        for reply in replies[:-1]:
            assert reply["reward"] == 0 and reply["cause"] == "neutral"
            assert reply["observation"]["grid_delta"] == []
        placed = replies[-1]
        assert placed["reward"] == 2 and placed["cause"] == "match_gain"
        assert placed["observation"]["grid_delta"] == [[6, 0, 5, 3]]
        assert placed["done"] is False
        assert placed["info"]["grid_delta"] == [[6, 0, 5, 3]]
        full = c.roundtrip("observation")
        assert full["observation"]["grid"][0][5][6] == 3
        assert full["observation"]["inventory"]["red"] == 19


def test_episode_over_and_reset_recovers(server):
    with connect(server) as c:
        c.roundtrip("reset", task_id="l5", max_steps=2)
        first = c.roundtrip("step", action=0)
        assert first["done"] is False
        second = c.roundtrip("step", action=0)
        assert second["done"] is True
        assert second["info"]["end_reason"] == "max_steps"
        third = c.roundtrip("step", action=0)
        assert third["kind"] == "error" and third["code"] == "episode_over"
        fresh = c.roundtrip("reset", task_id="l5")
        assert fresh["observation"]["step_index"] == 0


# -- chat ---------------------------------------------------------------------------


def test_chat_round_trip_and_validation(server):
    with connect(server) as c:
        assert c.roundtrip("chat", text="hi")["code"] == "no_active_episode"
        c.roundtrip("reset", task_id="l5")
        for bad in ("", "   ", None, 7):
            reply = c.roundtrip("chat", text=bad)
            assert reply["kind"] == "error" and reply["code"] == "empty_chat", bad
        ack = c.roundtrip("chat", text="starting now")
        assert ack["kind"] == "chat_ack"
        assert ack["speaker"] == "builder"
        obs = c.roundtrip("observation")["observation"]
        assert obs["chat"] == [{"speaker": "builder", "text": "starting now"}]


def test_reset_clears_chat_history(server):
    with connect(server) as c:
        c.roundtrip("reset", task_id="l5")
        for i in range(3):
            c.roundtrip("chat", text=f"note {i}")
        assert len(c.roundtrip("observation")["observation"]["chat"]) == 3
        c.roundtrip("reset", task_id="l5")
        assert c.roundtrip("observation")["observation"]["chat"] == []


# -- roles: observers and architects ---------------------------------------------------


def test_observer_watches_but_cannot_act(server):
    with connect(server) as owner:
        sid = owner.session_id = owner.roundtrip("list_tasks")["session_id"]
        owner.roundtrip("reset", task_id="l5")
        with LineClient(server.host, server.port) as obs_conn:
            ack = obs_conn.roundtrip("hello", protocol_version=1, role="observer", session_id=sid)
            assert ack["kind"] == "hello_ack" and ack["attached"] is True
            assert ack["session_id"] == sid

            # Explicit sync request returns the full grid.
            synced = obs_conn.roundtrip("observation")
            assert synced["kind"] == "observation"
            assert "grid" in synced["observation"]

            # The owner's steps are pushed to the observer as deltas.
            for action in PLACE_RED_EAST:
                owner.roundtrip("step", action=action)
            pushes = [obs_conn.recv() for _ in range(4)]
            assert all(p["kind"] == "observation" for p in pushes)
            assert pushes[-1]["reward"] == 2 and pushes[-1]["cause"] == "match_gain"
            assert pushes[-1]["observation"]["grid_delta"] == [[6, 0, 5, 3]]

            assert obs_conn.roundtrip("step", action=0)["code"] == "role_forbidden"
            assert obs_conn.roundtrip("chat", text="go left")["code"] == "role_forbidden"
            assert obs_conn.roundtrip("reset", task_id="l5")["code"] == "role_forbidden"


def test_observer_must_name_a_real_session(server):
    with LineClient(server.host, server.port) as c:
        reply = c.roundtrip("hello", protocol_version=1, role="observer", session_id="nope")
        assert reply["kind"] == "error" and reply["code"] == "unknown_session"
        reply = c.roundtrip("hello", protocol_version=1, role="observer")
        assert reply["kind"] == "error" and reply["code"] == "bad_role"


def test_builder_cannot_attach(server):
    with connect(server) as owner:
        sid = owner.roundtrip("list_tasks")["session_id"]
        with LineClient(server.host, server.port) as c:
            reply = c.roundtrip(
                "hello", protocol_version=1, role="builder_agent", session_id=sid
            )
            assert reply["kind"] == "error" and reply["code"] == "bad_role"


def test_architect_sees_target_and_chats(server):
    with connect(server, role="architect") as arch:
        reply = arch.roundtrip("reset", task_id="l5")
        target = reply["observation"]["target"]
        assert len(target) == 9
        assert target[0][5][5] == 3 and target[2][5][5] == 3  # red row + column
        assert arch.roundtrip("step", action=1)["code"] == "role_forbidden"
        ack = arch.roundtrip("chat", text="build a red row of three")
        assert ack["speaker"] == "architect"


def test_attached_architect_guides_a_builder(server):
    with connect(server) as builder:
        sid = builder.roundtrip("list_tasks")["session_id"]
        builder.roundtrip("reset", task_id="l5")
        with LineClient(server.host, server.port) as arch:
            arch.roundtrip("hello", protocol_version=1, role="architect", session_id=sid)
            synced = arch.roundtrip("observation")
            assert "target" in synced["observation"]  # architect view includes the goal
            ack = arch.roundtrip("chat", text="start with the row")
            assert ack["kind"] == "chat_ack" and ack["speaker"] == "architect"
            pushed = builder.recv()
            assert pushed == {
                "kind": "chat",
                "seq": pushed["seq"],
                "session_id": sid,
                "speaker": "architect",
                "text": "start with the row",
            }
            assert arch.roundtrip("reset", task_id="l5")["code"] == "role_forbidden"
            assert arch.roundtrip("step", action=0)["code"] == "role_forbidden"
        builder_obs = builder.roundtrip("observation")["observation"]
        assert builder_obs["chat"] == [{"speaker": "architect", "text": "start with the row"}]
        assert "target" not in builder_obs


# -- isolation ------------------------------------------------------------------------


def test_sessions_are_isolated(server):
    with connect(server) as a, connect(server) as b:
        a.roundtrip("reset", task_id="l5")
        b.roundtrip("reset", task_id="corners")
        for action in PLACE_RED_EAST:
            a.roundtrip("step", action=action)
        obs_a = a.roundtrip("observation")["observation"]
        obs_b = b.roundtrip("observation")["observation"]
        assert obs_a["step_index"] == 4 and obs_b["step_index"] == 0
        assert obs_a["grid"][0][5][6] == 3
        assert sum(sum(sum(row) for row in layer) for layer in obs_b["grid"]) == 0
        assert obs_a["current_instruction"] != obs_b["current_instruction"]


# -- recording parity -----------------------------------------------------------------


def test_match_info_reports_witness_cells(server):
    with connect(server) as c:
        assert c.roundtrip("match")["code"] == "no_active_episode"
        c.roundtrip("reset", task_id="l5")

        empty = c.roundtrip("match")
        assert empty["kind"] == "match_info"
        assert empty["max_match"] == 0
        assert empty["cells"] == []
        first = max_match(Structure([]), get_task("l5").target).witnesses[0]
        assert empty["witness"] == {
            "rotation": first.rotation,
            "dx": first.dx,
            "dy": first.dy,
            "dz": first.dz,
        }

        for action in PLACE_RED_EAST:
            c.roundtrip("step", action=action)
        got = c.roundtrip("match")
        assert got["max_match"] == 1
        assert got["cells"] == [[6, 0, 5, 3]]
        expected = max_match(Structure([(6, 0, 5, 3)]), get_task("l5").target).witnesses[0]
        assert got["witness"] == {
            "rotation": expected.rotation,
            "dx": expected.dx,
            "dy": expected.dy,
            "dz": expected.dz,
        }


def test_match_info_skips_stray_blocks(server):
    with connect(server) as c:
        c.roundtrip("reset", task_id="l5")
        for action in PLACE_RED_EAST:
            c.roundtrip("step", action=action)
        c.roundtrip("step", action=7)  # face +z again
        c.roundtrip("step", action=17)  # switch to yellow
        stray = c.roundtrip("step", action=11)
        assert stray["cause"] == "stray_place"
        assert stray["info"]["grid_delta"] == [[5, 0, 6, 6]]

        got = c.roundtrip("match")
        assert got["max_match"] == 1
        assert got["cells"] == [[6, 0, 5, 3]]  # the stray yellow is not counted


def test_observer_can_request_match_info(server):
    with connect(server) as owner:
        sid = owner.roundtrip("list_tasks")["session_id"]
        owner.roundtrip("reset", task_id="l5")
        for action in PLACE_RED_EAST:
            owner.roundtrip("step", action=action)
        with LineClient(server.host, server.port) as watcher:
            watcher.roundtrip("hello", protocol_version=1, role="observer", session_id=sid)
            got = watcher.roundtrip("match")
            assert got["kind"] == "match_info"
            assert got["max_match"] == 1


def test_episode_summary_without_recording(tmp_path):
    srv = ProtocolServer()  # no record_dir: summaries must still be served
    srv.start()
    try:
        with LineClient(srv.host, srv.port) as c:
            c.roundtrip("hello", protocol_version=1, role="builder_agent")
            c.roundtrip("reset", task_id="l5", max_steps=1)
            last = c.roundtrip("step", action=0)
            assert last["done"] is True
            info = last["info"]
            assert "record_saved" not in info
            assert info["summary"]["g"] == 0.0
            assert info["summary"]["c"] == 0
            assert info["summary"]["rho"] == 1.0
            assert info["summary"]["hamming_norm"] == pytest.approx(5 / 1089)
            assert info["summary"]["steps_used"] == 1
            assert info["summary"]["end_reason"] == "max_steps"
    finally:
        srv.stop()


def test_attached_push_carries_summary_at_episode_end(server):
    with connect(server) as owner:
        sid = owner.roundtrip("list_tasks")["session_id"]
        owner.roundtrip("reset", task_id="l5", max_steps=2)
        with LineClient(server.host, server.port) as watcher:
            watcher.roundtrip("hello", protocol_version=1, role="observer", session_id=sid)
            owner.roundtrip("step", action=0)
            final = owner.roundtrip("step", action=0)
            assert final["done"] is True
            first = watcher.recv()
            assert first["done"] is False and "summary" not in first
            push = watcher.recv()
            assert push["done"] is True
            assert push["end_reason"] == "max_steps"
            assert push["summary"] == final["info"]["summary"]


def drive_local_episode():
    """In-process reference run: oracle solves l5 after an architect chat."""
    task = get_task("l5")
    engine = BuilderEngine(task, EpisodeConfig(task_id="l5"))
    recorder = Recorder()
    recorder.start(engine)
    agent = GreedyOracle()
    agent.reset(engine)
    obs = engine.observation()
    engine.add_chat("architect", "start with the row")
    actions = []
    g = 0
    while not engine.done:
        action = agent.act(obs)
        actions.append(action)
        obs, reward, done, info = engine.step(action)
        g += reward.value
        recorder.record_step(engine, action, reward, info, obs, done)
    summary = summarize_episode(
        task_id="l5",
        g=float(g),
        built=structure_from_grid(engine.grid),
        target=task.target,
        steps_used=engine.step_index,
    )
    recorder.finish(engine, summary)
    return recorder.record, actions


def test_protocol_episode_matches_in_process_record(server):
    local_record, actions = drive_local_episode()

    with connect(server) as builder:
        sid = builder.roundtrip("list_tasks")["session_id"]
        builder.roundtrip("reset", task_id="l5")
        with LineClient(server.host, server.port) as arch:
            arch.roundtrip("hello", protocol_version=1, role="architect", session_id=sid)
            arch.roundtrip("chat", text="start with the row")
        pushed = builder.recv()
        assert pushed["kind"] == "chat"

        last = None
        for action in actions:
            last = builder.roundtrip("step", action=action)
            assert last["kind"] == "step_result", last
        assert last["done"] is True
        assert last["info"]["success"] is True
        assert last["info"]["end_reason"] == "success"
        assert last["info"]["summary"] == {
            "g": local_record.footer.g,
            "c": 1,
            "rho": 0.0,
            "hamming_norm": 0.0,
            "steps_used": local_record.footer.steps_used,
            "end_reason": "success",
        }
        saved_name = last["info"]["record_saved"]

    remote_record = load_record(server.record_dir / saved_name)
    assert canonical_bytes(remote_record) == canonical_bytes(local_record)
    assert replay_verify(remote_record) is None
    assert remote_record.footer.c == 1
    assert remote_record.footer.g == local_record.footer.g


def test_interrupted_episode_keeps_a_prefix_record(server):
    with connect(server) as c:
        c.roundtrip("reset", task_id="l5")
        for action in PLACE_RED_EAST:
            c.roundtrip("step", action=action)
        c.roundtrip("reset", task_id="l5")  # abandons the first episode
    deadline = time.time() + 2.0
    files = []
    while time.time() < deadline:
        files = sorted(server.record_dir.glob("*.iglu-episode"))
        if files:
            break
        time.sleep(0.05)
    assert files, "no prefix record written"
    prefix = load_record(files[0])
    assert prefix.footer is None
    assert len(prefix.steps) == 4
    assert prefix.steps[-1].grid_delta == ((6, 0, 5, 3),)


# -- websocket and static files ---------------------------------------------------------


def test_websocket_speaks_the_same_protocol(server):
    with WSClient(server.host, server.port) as ws:
        ack = ws.roundtrip("hello", protocol_version=1, role="human_builder")
        assert ack["kind"] == "hello_ack" and ack["role"] == "human_builder"
        reset = ws.roundtrip("reset", task_id="l5")
        assert reset["kind"] == "observation"
        assert len(reset["observation"]["grid"]) == 9
        last = None
        for action in PLACE_RED_EAST:
            last = ws.roundtrip("step", action=action)
        assert last["reward"] == 2 and last["cause"] == "match_gain"
        assert ws.ping(b"stillthere") == b"stillthere"
        bye = ws.roundtrip("bye")
        assert bye["kind"] == "bye"


def test_websocket_and_raw_clients_share_a_session(server):
    with connect(server) as owner:
        sid = owner.roundtrip("list_tasks")["session_id"]
        owner.roundtrip("reset", task_id="l5")
        with WSClient(server.host, server.port) as ws:
            ack = ws.roundtrip("hello", protocol_version=1, role="observer", session_id=sid)
            assert ack["attached"] is True
            owner.roundtrip("step", action=14)
            push = ws.recv()
            assert push["kind"] == "observation"
            assert push["observation"]["step_index"] == 1


def test_static_file_serving(tmp_path):
    site = tmp_path / "site"
    site.mkdir()
    (site / "index.html").write_text("<h1>builder</h1>")
    (site / "app.js").write_text("console.log('hi')")
    srv = ProtocolServer(static_dir=site)
    srv.start()
    try:
        def fetch(path):
            with socket.create_connection((srv.host, srv.port), timeout=5) as s:
                s.sendall(f"GET {path} HTTP/1.1\r\nHost: x\r\n\r\n".encode())
                data = b""
                while True:
                    chunk = s.recv(65536)
                    if not chunk:
                        break
                    data += chunk
            head, _, body = data.partition(b"\r\n\r\n")
            return head.split(b"\r\n")[0], head, body

        status, head, body = fetch("/")
        assert b"200" in status and body == b"<h1>builder</h1>"
        assert b"text/html" in head
        status, head, body = fetch("/app.js")
        assert b"200" in status and b"text/javascript" in head
        status, _, _ = fetch("/missing.html")
        assert b"404" in status
        status, _, _ = fetch("/../protocol.py")
        assert b"404" in status
    finally:
        srv.stop()


def test_idle_timeout_sends_bye():
    srv = ProtocolServer(idle_timeout=0.3)
    srv.start()
    try:
        c = LineClient(srv.host, srv.port)
        c.roundtrip("hello", protocol_version=1)
        time.sleep(0.8)
        notice = c.recv()
        assert notice is not None and notice["kind"] == "bye"
        assert notice["reason"] == "idle_timeout"
        assert c.recv() is None
        c.close()
    finally:
        srv.stop()
