"""Session server: drive episodes over newline-delimited JSON messages.

One connection owns one session and one episode at a time.  Additional
connections may attach to an existing session as ``observer`` (watch only) or
``architect`` (watch + chat); the server pushes observation/chat events to
attached connections as the owner plays.  Browser clients speak the same
message schema over a WebSocket upgrade on the same port, which also serves
static files for the bundled UI.  Each client message is answered by exactly
one reply; malformed or out-of-order traffic gets a typed ``error`` reply and
the connection stays open.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
import uuid
from pathlib import Path

from . import ENGINE_VERSION, PROTOCOL_VERSION
from .engine import BuilderEngine, EpisodeConfig, EpisodeOverError, NUM_ACTIONS, Observation
from .matching import max_match
from .metrics import summarize_episode
from .replay import EPISODE_SUFFIX, Recorder, save_record
from .tasks import TaskDef, task_library
from .voxel import ZONE_CELLS, apply_transform, grid_from_structure, hamming

__all__ = [
    "DEFAULT_PORT",
    "ProtocolServer",
    "ROLES",
    "ATTACH_ROLES",
]

DEFAULT_PORT = 8642

ROLES = ("builder_agent", "human_builder", "architect", "observer")
ATTACH_ROLES = ("architect", "observer")

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_MAX_LINE = 4 * 1024 * 1024
_MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

# Error codes used in error replies.
E_BAD_JSON = "bad_json"
E_BAD_SEQ = "bad_seq"
E_BAD_KIND = "bad_kind"
E_BAD_VERSION = "bad_version"
E_BAD_ROLE = "bad_role"
E_BAD_REQUEST = "bad_request"
E_BAD_ACTION = "bad_action"
E_NEED_HELLO = "need_hello"
E_ALREADY_GREETED = "already_greeted"
E_UNKNOWN_TASK = "unknown_task"
E_UNKNOWN_SESSION = "unknown_session"
E_NO_EPISODE = "no_active_episode"
E_EPISODE_OVER = "episode_over"
E_ROLE_FORBIDDEN = "role_forbidden"
E_EMPTY_CHAT = "empty_chat"


class _ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(message)


# -- transports -----------------------------------------------------------------


class _LineTransport:
    """Raw TCP, one UTF-8 JSON object per newline-terminated line."""

    def __init__(self, sock: socket.socket, initial: bytes = b""):
        self._sock = sock
        self._buf = bytearray(initial)

    def recv_text(self) -> str | None:
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                return line.decode("utf-8", errors="replace").rstrip("\r")
            if len(self._buf) > _MAX_LINE:
                return None
            chunk = self._sock.recv(65536)
            if not chunk:
                return None
            self._buf.extend(chunk)

    def send_text(self, text: str) -> None:
        self._sock.sendall(text.encode("utf-8") + b"\n")

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class _WebSocketTransport:
    """RFC 6455 server side: text frames carrying the same JSON messages."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = bytearray()
        self._closed = False

    def _read_exact(self, n: int) -> bytes | None:
        while len(self._buf) < n:
            chunk = self._sock.recv(65536)
            if not chunk:
                return None
            self._buf.extend(chunk)
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def recv_text(self) -> str | None:
        while True:
            head = self._read_exact(2)
            if head is None:
                return None
            fin_op, mask_len = head
            opcode = fin_op & 0x0F
            if not fin_op & 0x80:
                self.close()  # fragmented frames unsupported
                return None
            masked = bool(mask_len & 0x80)
            length = mask_len & 0x7F
            if length == 126:
                ext = self._read_exact(2)
                if ext is None:
                    return None
                length = struct.unpack(">H", ext)[0]
            elif length == 127:
                ext = self._read_exact(8)
                if ext is None:
                    return None
                length = struct.unpack(">Q", ext)[0]
            if length > _MAX_LINE:
                self.close()
                return None
            mask = b"\x00" * 4
            if masked:
                got = self._read_exact(4)
                if got is None:
                    return None
                mask = got
            payload = self._read_exact(length) if length else b""
            if payload is None:
                return None
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            if opcode == 0x1:  # text
                return payload.decode("utf-8", errors="replace")
            if opcode == 0x9:  # ping -> pong
                self._send_frame(0xA, payload)
                continue
            if opcode == 0xA:  # pong
                continue
            if opcode == 0x8:  # close
                self._send_frame(0x8, b"")
                return None
            self.close()
            return None

    def _send_frame(self, opcode: int, payload: bytes) -> None:
        header = bytearray([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header.append(n)
        elif n < (1 << 16):
            header.append(126)
            header.extend(struct.pack(">H", n))
        else:
            header.append(127)
            header.extend(struct.pack(">Q", n))
        self._sock.sendall(bytes(header) + payload)

    def send_text(self, text: str) -> None:
        if not self._closed:
            self._send_frame(0x1, text.encode("utf-8"))

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


# -- sessions ---------------------------------------------------------------------


class _Connection:
    def __init__(self, transport):
        self.transport = transport
        self.out_seq = 0
        self.in_seq = 0
        self.session: _Session | None = None
        self.role: str | None = None
        self.is_owner = False
        self._send_lock = threading.Lock()
        self.open = True

    def send(self, payload: dict) -> None:
        with self._send_lock:
            if not self.open:
                return
            self.out_seq += 1
            msg = {"kind": payload.pop("kind"), "seq": self.out_seq}
            sid = self.session.sid if self.session is not None else None
            msg["session_id"] = sid
            msg.update(payload)
            try:
                self.transport.send_text(json.dumps(msg, separators=(",", ":")))
            except OSError:
                self.open = False


class _Session:
    def __init__(self, sid: str, owner: _Connection):
        self.sid = sid
        self.owner = owner
        self.engine: BuilderEngine | None = None
        self.task: TaskDef | None = None
        self.recorder: Recorder | None = None
        self.episode_count = 0
        self.g = 0  # cumulative reward of the running episode
        self.attached: list[_Connection] = []
        self.lock = threading.RLock()


class ProtocolServer:
    """Threaded episode server; one handler thread per connection.

    Use as a context manager or call start()/stop().  ``port=0`` binds an
    ephemeral port (the bound address is returned by start()).
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        library: dict[str, TaskDef] | None = None,
        record_dir: str | Path | None = None,
        static_dir: str | Path | None = None,
        idle_timeout: float = 600.0,
    ):
        self.host = host
        self.port = port
        self.library = library if library is not None else task_library()
        self.record_dir = Path(record_dir) if record_dir is not None else None
        self.static_dir = Path(static_dir).resolve() if static_dir is not None else None
        self.idle_timeout = idle_timeout
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._sessions: dict[str, _Session] = {}
        self._conns: set[_Connection] = set()
        self._state_lock = threading.Lock()
        self._stopping = False

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> tuple[str, int]:
        if self.record_dir is not None:
            self.record_dir.mkdir(parents=True, exist_ok=True)
        self._listener = socket.create_server((self.host, self.port))
        # A blocked accept() is not reliably woken by close() from another
        # thread, so poll with a short timeout and check the stop flag.
        self._listener.settimeout(0.25)
        self.host, self.port = self._listener.getsockname()[:2]
        t = threading.Thread(target=self._accept_loop, name="iglu-accept", daemon=True)
        t.start()
        self._threads.append(t)
        return self.host, self.port

    def stop(self) -> None:
        self._stopping = True
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._state_lock:
            conns = list(self._conns)
        for conn in conns:
            conn.open = False
            try:
                conn.transport.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=2.0)

    def __enter__(self) -> "ProtocolServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- accept / sniff -----------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stopping:
            try:
                sock, _addr = self._listener.accept()
            except (TimeoutError, socket.timeout):
                continue
            except OSError:
                return
            sock.settimeout(None)
            t = threading.Thread(target=self._serve_socket, args=(sock,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_socket(self, sock: socket.socket) -> None:
        sock.settimeout(self.idle_timeout)
        try:
            head = sock.recv(4, socket.MSG_PEEK)
        except (OSError, TimeoutError):
            sock.close()
            return
        if not head:
            sock.close()
            return
        is_http = any(
            verb.startswith(head) or head.startswith(verb)
            for verb in (b"GET ", b"HEAD", b"POST")
        )
        if is_http:
            transport = self._handle_http(sock)
            if transport is None:
                return  # static response already sent and closed
        else:
            transport = _LineTransport(sock)
        self._run_connection(_Connection(transport))

    def _handle_http(self, sock: socket.socket):
        """Serve a static file or upgrade to WebSocket; returns a transport
        for upgraded connections, else None."""
        data = bytearray()
        try:
            while b"\r\n\r\n" not in data:
                chunk = sock.recv(65536)
                if not chunk or len(data) > 65536:
                    sock.close()
                    return None
                data.extend(chunk)
        except (OSError, TimeoutError):
            sock.close()
            return None
        head_text = bytes(data).split(b"\r\n\r\n", 1)[0].decode("latin-1")
        lines = head_text.split("\r\n")
        parts = lines[0].split(" ")
        if len(parts) < 3:
            sock.close()
            return None
        method, path = parts[0], parts[1]
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                k, v = line.split(":", 1)
                headers[k.strip().lower()] = v.strip()

        if headers.get("upgrade", "").lower() == "websocket":
            key = headers.get("sec-websocket-key", "")
            accept = base64.b64encode(
                hashlib.sha1((key + _WS_GUID).encode()).digest()
            ).decode()
            sock.sendall(
                (
                    "HTTP/1.1 101 Switching Protocols\r\n"
                    "Upgrade: websocket\r\n"
                    "Connection: Upgrade\r\n"
                    f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
                ).encode()
            )
            return _WebSocketTransport(sock)

        self._serve_static(sock, method, path)
        return None

    def _serve_static(self, sock: socket.socket, method: str, path: str) -> None:
        def respond(status: str, body: bytes, ctype: str = "text/plain; charset=utf-8"):
            head = (
                f"HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n"
            ).encode()
            try:
                sock.sendall(head + (b"" if method == "HEAD" else body))
            except OSError:
                pass
            sock.close()

        if method not in ("GET", "HEAD"):
            respond("405 Method Not Allowed", b"method not allowed")
            return
        path = path.split("?", 1)[0]
        if self.static_dir is None:
            if path == "/":
                respond(
                    "200 OK",
                    b"iglu blocks protocol server; connect a client socket or the web UI\n",
                )
            else:
                respond("404 Not Found", b"not found")
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir)) or not target.is_file():
            respond("404 Not Found", b"not found")
            return
        ctype = _MIME.get(target.suffix.lower(), "application/octet-stream")
        respond("200 OK", target.read_bytes(), ctype)

    # -- connection loop ----------------------------------------------------

    def _run_connection(self, conn: _Connection) -> None:
        with self._state_lock:
            self._conns.add(conn)
        try:
            while not self._stopping:
                try:
                    text = conn.transport.recv_text()
                except (TimeoutError, socket.timeout):
                    conn.send({"kind": "bye", "reason": "idle_timeout"})
                    break
                except OSError:
                    break
                if text is None:
                    break
                if not text.strip():
                    continue
                stop = self._dispatch(conn, text)
                if stop:
                    break
        finally:
            self._drop_connection(conn)

    def _drop_connection(self, conn: _Connection) -> None:
        conn.open = False
        try:
            conn.transport.close()
        except OSError:
            pass
        with self._state_lock:
            self._conns.discard(conn)
        sess = conn.session
        if sess is None:
            return
        with sess.lock:
            if conn.is_owner:
                # Keep the crash prefix when the owner vanishes mid-episode.
                if (
                    sess.recorder is not None
                    and sess.engine is not None
                    and not sess.engine.done
                ):
                    self._save_record(sess)
                for other in list(sess.attached):
                    other.send({"kind": "bye", "reason": "session_closed"})
                sess.attached.clear()
                with self._state_lock:
                    self._sessions.pop(sess.sid, None)
            elif conn in sess.attached:
                sess.attached.remove(conn)

    # -- dispatch -----------------------------------------------------------

    def _dispatch(self, conn: _Connection, text: str) -> bool:
        """Handle one message; returns True when the connection should close."""
        try:
            obj = json.loads(text)
            if not isinstance(obj, dict):
                raise ValueError
        except ValueError:
            conn.send({"kind": "error", "code": E_BAD_JSON, "message": "message is not a JSON object"})
            return False

        seq = obj.get("seq")
        if not isinstance(seq, int) or seq <= conn.in_seq:
            conn.send(
                {
                    "kind": "error",
                    "code": E_BAD_SEQ,
                    "message": f"seq must be an integer > {conn.in_seq}",
                }
            )
            return False
        conn.in_seq = seq

        kind = obj.get("kind")
        try:
            if kind == "hello":
                self._on_hello(conn, obj)
            elif kind == "list_tasks":
                self._require_session(conn)
                self._on_list_tasks(conn)
            elif kind == "reset":
                self._require_session(conn)
                self._on_reset(conn, obj)
            elif kind == "step":
                self._require_session(conn)
                self._on_step(conn, obj)
            elif kind == "chat":
                self._require_session(conn)
                self._on_chat(conn, obj)
            elif kind == "observation":
                self._require_session(conn)
                self._on_observation_request(conn)
            elif kind == "match":
                self._require_session(conn)
                self._on_match(conn)
            elif kind == "bye":
                conn.send({"kind": "bye"})
                return True
            else:
                raise _ProtocolError(E_BAD_KIND, f"unknown kind {kind!r}")
        except _ProtocolError as err:
            conn.send({"kind": "error", "code": err.code, "message": err.message})
        return False

    def _require_session(self, conn: _Connection) -> None:
        if conn.session is None:
            raise _ProtocolError(E_NEED_HELLO, "send hello first")

    # -- handlers -----------------------------------------------------------

    def _on_hello(self, conn: _Connection, obj: dict) -> None:
        if conn.session is not None:
            raise _ProtocolError(E_ALREADY_GREETED, "hello already received")
        version = obj.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise _ProtocolError(
                E_BAD_VERSION, f"protocol_version must be {PROTOCOL_VERSION}"
            )
        role = obj.get("role", "builder_agent")
        if role not in ROLES:
            raise _ProtocolError(E_BAD_ROLE, f"role must be one of {list(ROLES)}")
        attach_to = obj.get("session_id")
        if attach_to is not None:
            if role not in ATTACH_ROLES:
                raise _ProtocolError(
                    E_BAD_ROLE, "only architect or observer may join a session"
                )
            with self._state_lock:
                sess = self._sessions.get(attach_to)
            if sess is None:
                raise _ProtocolError(E_UNKNOWN_SESSION, f"no session {attach_to!r}")
            with sess.lock:
                sess.attached.append(conn)
                conn.session = sess
                conn.role = role
                conn.is_owner = False
        else:
            if role == "observer":
                raise _ProtocolError(
                    E_BAD_ROLE, "observer must attach to an existing session_id"
                )
            sid = uuid.uuid4().hex[:12]
            sess = _Session(sid, conn)
            conn.session = sess
            conn.role = role
            conn.is_owner = True
            with self._state_lock:
                self._sessions[sid] = sess
        conn.send(
            {
                "kind": "hello_ack",
                "role": conn.role,
                "attached": not conn.is_owner,
                "protocol_version": PROTOCOL_VERSION,
                "engine_version": ENGINE_VERSION,
            }
        )

    def _on_list_tasks(self, conn: _Connection) -> None:
        rows = [
            {
                "task_id": t.task_id,
                "difficulty": t.difficulty,
                "blocks": len(t.target),
                "subgoals": len(t.subgoals),
            }
            for t in sorted(self.library.values(), key=lambda t: t.task_id)
        ]
        conn.send({"kind": "task_list", "tasks": rows})

    def _on_reset(self, conn: _Connection, obj: dict) -> None:
        if not conn.is_owner:
            raise _ProtocolError(E_ROLE_FORBIDDEN, f"{conn.role} cannot reset")
        sess = conn.session
        assert sess is not None
        task_id = obj.get("task_id")
        if not isinstance(task_id, str):
            raise _ProtocolError(E_BAD_REQUEST, "reset requires a task_id string")
        task = self.library.get(task_id)
        if task is None:
            raise _ProtocolError(E_UNKNOWN_TASK, f"unknown task {task_id!r}")
        kwargs = {}
        for key in ("max_steps", "seed"):
            if key in obj:
                if not isinstance(obj[key], int):
                    raise _ProtocolError(E_BAD_REQUEST, f"{key} must be an integer")
                kwargs[key] = obj[key]
        if "termination_on_exit" in obj:
            kwargs["termination_on_exit"] = bool(obj["termination_on_exit"])
        try:
            config = EpisodeConfig(task_id=task_id, **kwargs)
        except ValueError as exc:
            raise _ProtocolError(E_BAD_REQUEST, str(exc)) from None
        with sess.lock:
            # A mid-episode reset keeps the interrupted record's prefix.
            if sess.recorder is not None and sess.engine is not None and not sess.engine.done:
                self._save_record(sess)
            sess.task = task
            sess.engine = BuilderEngine(task, config)
            sess.g = 0
            sess.recorder = None
            if self.record_dir is not None:
                sess.recorder = Recorder()
                sess.recorder.start(sess.engine)
            obs = sess.engine.observation()
            conn.send(
                {
                    "kind": "observation",
                    "observation": self._obs_payload(sess, obs, conn, full=True),
                }
            )
            for other in list(sess.attached):
                other.send(
                    {
                        "kind": "observation",
                        "observation": self._obs_payload(sess, obs, other, full=True),
                        "reset": True,
                    }
                )

    def _on_step(self, conn: _Connection, obj: dict) -> None:
        sess = conn.session
        assert sess is not None
        if not conn.is_owner:
            raise _ProtocolError(E_ROLE_FORBIDDEN, f"{conn.role} cannot step")
        if conn.role == "architect":
            raise _ProtocolError(E_ROLE_FORBIDDEN, "the architect gives instructions, not actions")
        with sess.lock:
            if sess.engine is None:
                raise _ProtocolError(E_NO_EPISODE, "reset first")
            if sess.engine.done:
                raise _ProtocolError(E_EPISODE_OVER, "episode finished; reset to continue")
            action = obj.get("action")
            if isinstance(action, bool) or not isinstance(action, int) or not 0 <= action < NUM_ACTIONS:
                raise _ProtocolError(
                    E_BAD_ACTION, f"action must be an integer in 0..{NUM_ACTIONS - 1}"
                )
            try:
                obs, reward, done, info = sess.engine.step(action)
            except EpisodeOverError:  # pragma: no cover - guarded above
                raise _ProtocolError(E_EPISODE_OVER, "episode finished") from None
            if sess.recorder is not None:
                sess.recorder.record_step(sess.engine, action, reward, info, obs, done)
            sess.g += reward.value
            wire_info: dict = {"grid_delta": [list(d) for d in info["grid_delta"]]}
            if "blocked" in info:
                wire_info["blocked"] = info["blocked"]
            if info.get("success"):
                wire_info["success"] = True
            if done:
                wire_info["end_reason"] = sess.engine.end_reason
                summary = summarize_episode(
                    task_id=sess.engine.task.task_id,
                    g=float(sess.g),
                    built=sess.engine.built_structure(),
                    target=sess.task.target,
                    steps_used=sess.engine.step_index,
                )
                wire_info["summary"] = {
                    "g": summary.g,
                    "c": summary.c,
                    "rho": summary.rho,
                    "hamming_norm": hamming(sess.engine.grid, grid_from_structure(sess.task.target))
                    / ZONE_CELLS,
                    "steps_used": summary.steps_used,
                    "end_reason": sess.engine.end_reason,
                }
                if sess.recorder is not None:
                    saved = self._save_record(sess, summary=summary)
                    if saved is not None:
                        wire_info["record_saved"] = saved.name
            payload = {
                "observation": self._obs_payload(
                    sess, obs, conn, full=False, delta=info["grid_delta"]
                ),
                "reward": reward.value,
                "cause": reward.cause,
                "done": done,
                "info": wire_info,
            }
            conn.send({"kind": "step_result", **payload})
            for other in list(sess.attached):
                push = {
                    "kind": "observation",
                    "observation": self._obs_payload(
                        sess, obs, other, full=False, delta=info["grid_delta"]
                    ),
                    "reward": reward.value,
                    "cause": reward.cause,
                    "done": done,
                }
                if done:
                    push["end_reason"] = sess.engine.end_reason
                    push["summary"] = wire_info["summary"]
                other.send(push)

    def _on_chat(self, conn: _Connection, obj: dict) -> None:
        sess = conn.session
        assert sess is not None
        if conn.role == "observer":
            raise _ProtocolError(E_ROLE_FORBIDDEN, "observers cannot chat")
        text = obj.get("text")
        if not isinstance(text, str) or not text.strip():
            raise _ProtocolError(E_EMPTY_CHAT, "chat text must be a nonempty string")
        speaker = "architect" if conn.role == "architect" else "builder"
        with sess.lock:
            if sess.engine is None:
                raise _ProtocolError(E_NO_EPISODE, "reset first")
            sess.engine.add_chat(speaker, text)
            conn.send({"kind": "chat_ack", "speaker": speaker, "text": text})
            targets = [c for c in (sess.owner, *sess.attached) if c is not conn]
            for other in targets:
                other.send({"kind": "chat", "speaker": speaker, "text": text})

    def _on_observation_request(self, conn: _Connection) -> None:
        sess = conn.session
        assert sess is not None
        with sess.lock:
            if sess.engine is None:
                raise _ProtocolError(E_NO_EPISODE, "no episode to observe")
            obs = sess.engine.observation()
            conn.send(
                {
                    "kind": "observation",
                    "observation": self._obs_payload(sess, obs, conn, full=True),
                }
            )

    def _on_match(self, conn: _Connection) -> None:
        """Report the current best overlap: value, canonical witness transform,
        and the built cells it counts (so clients can highlight them without
        doing any matching of their own)."""
        sess = conn.session
        assert sess is not None
        with sess.lock:
            if sess.engine is None:
                raise _ProtocolError(E_NO_EPISODE, "reset first")
            built = sess.engine.built_structure()
            res = max_match(built, sess.task.target)
            witness = res.witnesses[0]
            counted = built.block_set() & apply_transform(sess.task.target, witness).block_set()
            conn.send(
                {
                    "kind": "match_info",
                    "max_match": res.max_match,
                    "witness": {
                        "rotation": witness.rotation,
                        "dx": witness.dx,
                        "dy": witness.dy,
                        "dz": witness.dz,
                    },
                    "cells": sorted([b.x, b.y, b.z, int(b.color)] for b in counted),
                }
            )

    # -- helpers -------------------------------------------------------------

    def _obs_payload(
        self,
        sess: _Session,
        obs: Observation,
        conn: _Connection,
        *,
        full: bool,
        delta: tuple = (),
    ) -> dict:
        payload = obs.to_payload()
        if not full:
            rebuilt = {}
            for key, value in payload.items():
                if key == "grid":
                    rebuilt["grid_delta"] = [list(d) for d in delta]
                else:
                    rebuilt[key] = value
            payload = rebuilt
        if conn.role == "architect" and sess.task is not None:
            payload["target"] = grid_from_structure(sess.task.target).to_layers()
        return payload

    def _save_record(self, sess: _Session, summary=None) -> Path | None:
        """Write the session recorder out; a summary marks the episode finished
        (without one the record is saved as an unfinished crash prefix)."""
        if sess.recorder is None or self.record_dir is None or sess.engine is None:
            return None
        if summary is not None:
            sess.recorder.finish(sess.engine, summary)
        sess.episode_count += 1
        name = f"{sess.sid}-ep{sess.episode_count:03d}{EPISODE_SUFFIX}"
        path = self.record_dir / name
        save_record(sess.recorder.record, path)
        sess.recorder = None
        return path
