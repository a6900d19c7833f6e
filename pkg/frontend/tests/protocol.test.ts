import { describe, expect, it } from "vitest";

import { Connection, ConnectionClosedError, type ServerMessage, type Wire } from "../src/protocol.js";

class FakeWire implements Wire {
  sent: Array<Record<string, unknown>> = [];
  onmessage: ((text: string) => void) | null = null;
  onclose: (() => void) | null = null;
  closed = false;

  send(text: string): void {
    this.sent.push(JSON.parse(text));
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  deliver(obj: Record<string, unknown>): void {
    this.onmessage?.(JSON.stringify(obj));
  }
}

describe("request framing", () => {
  it("numbers client messages from 1 upward", async () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    const p1 = conn.request("hello", { protocol_version: 1, role: "human_builder" });
    const p2 = conn.request("list_tasks");
    expect(wire.sent[0]).toMatchObject({ kind: "hello", seq: 1, protocol_version: 1 });
    expect(wire.sent[1]).toMatchObject({ kind: "list_tasks", seq: 2 });
    wire.deliver({ kind: "hello_ack", seq: 1, role: "human_builder" });
    wire.deliver({ kind: "task_list", seq: 2, tasks: [] });
    expect((await p1).kind).toBe("hello_ack");
    expect((await p2).kind).toBe("task_list");
  });
});

describe("reply correlation", () => {
  it("routes pushes around pending requests", async () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    const pushes: ServerMessage[] = [];
    conn.onpush = (m) => pushes.push(m);

    const step = conn.request("step", { action: 11 });
    wire.deliver({ kind: "chat", seq: 5, speaker: "architect", text: "now the stack" });
    wire.deliver({ kind: "step_result", seq: 6, reward: 2, cause: "match_gain", done: false });

    const reply = await step;
    expect(reply.kind).toBe("step_result");
    expect(pushes).toHaveLength(1);
    expect(pushes[0].kind).toBe("chat");
  });

  it("tells a pushed observation from an observation reply", async () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    const pushes: ServerMessage[] = [];
    conn.onpush = (m) => pushes.push(m);

    const sync = conn.request("observation");
    // step push to an attached connection: carries reward alongside
    wire.deliver({ kind: "observation", seq: 3, observation: {}, reward: 0, cause: "neutral", done: false });
    // reset push: carries the reset flag
    wire.deliver({ kind: "observation", seq: 4, observation: {}, reset: true });
    // the actual reply
    wire.deliver({ kind: "observation", seq: 5, observation: {} });

    const reply = await sync;
    expect(reply.seq).toBe(5);
    expect(pushes.map((p) => p.seq)).toEqual([3, 4]);
  });

  it("resolves the pending request with an error reply", async () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    const step = conn.request("step", { action: 99 });
    wire.deliver({ kind: "error", seq: 9, code: "bad_action", message: "action must be an integer in 0..17" });
    const reply = await step;
    expect(reply.kind).toBe("error");
    expect(reply.code).toBe("bad_action");
  });

  it("treats unsolicited messages as pushes when nothing is pending", () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    const pushes: ServerMessage[] = [];
    conn.onpush = (m) => pushes.push(m);
    wire.deliver({ kind: "bye", seq: 1, reason: "idle_timeout" });
    expect(pushes[0]).toMatchObject({ kind: "bye", reason: "idle_timeout" });
  });

  it("survives unparseable server lines", () => {
    const wire = new FakeWire();
    new Connection(wire);
    expect(() => wire.onmessage?.("{nope")).not.toThrow();
  });
});

describe("connection loss", () => {
  it("rejects in-flight and future requests once closed", async () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    const inFlight = conn.request("list_tasks");
    wire.close();
    await expect(inFlight).rejects.toBeInstanceOf(ConnectionClosedError);
    await expect(conn.request("step", { action: 0 })).rejects.toBeInstanceOf(ConnectionClosedError);
  });

  it("fires onclose exactly once", () => {
    const wire = new FakeWire();
    const conn = new Connection(wire);
    let closes = 0;
    conn.onclose = () => closes++;
    wire.close();
    wire.onclose?.();
    expect(closes).toBe(1);
  });
});
