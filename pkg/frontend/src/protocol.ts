// Thin client for the session server's JSON message protocol.  The transport
// is abstracted behind `Wire` so the same Connection drives a browser
// WebSocket and, in tests, a raw socket adapter.

export interface Wire {
  send(text: string): void;
  close(): void;
  onmessage: ((text: string) => void) | null;
  onclose: (() => void) | null;
}

export interface ServerMessage {
  kind: string;
  seq: number;
  session_id?: string;
  [field: string]: unknown;
}

export class ConnectionClosedError extends Error {
  constructor() {
    super("connection closed");
  }
}

interface PendingRequest {
  kind: string;
  resolve: (msg: ServerMessage) => void;
  reject: (err: Error) => void;
}

/**
 * Matches a server message against the request kind at the head of the
 * in-flight queue.  The server answers every client message exactly once and
 * in order, but may interleave pushes (relayed chat, observations for
 * attached connections, bye); pushed observations always carry `reward` or
 * `reset` alongside, which request replies never do.
 */
function isReplyTo(requestKind: string, msg: ServerMessage): boolean {
  if (msg.kind === "error") return true;
  switch (requestKind) {
    case "hello":
      return msg.kind === "hello_ack";
    case "list_tasks":
      return msg.kind === "task_list";
    case "reset":
    case "observation":
      return msg.kind === "observation" && !("reward" in msg) && !("reset" in msg);
    case "step":
      return msg.kind === "step_result";
    case "chat":
      return msg.kind === "chat_ack";
    case "match":
      return msg.kind === "match_info";
    case "bye":
      return msg.kind === "bye";
    default:
      return false;
  }
}

export class Connection {
  onpush: ((msg: ServerMessage) => void) | null = null;
  onclose: (() => void) | null = null;

  private seq = 0;
  private lastServerSeq = 0;
  private pending: PendingRequest[] = [];
  private closed = false;

  constructor(private wire: Wire) {
    wire.onmessage = (text) => this.handleMessage(text);
    wire.onclose = () => this.handleClose();
  }

  request(kind: string, fields: Record<string, unknown> = {}): Promise<ServerMessage> {
    if (this.closed) return Promise.reject(new ConnectionClosedError());
    this.seq += 1;
    this.wire.send(JSON.stringify({ kind, seq: this.seq, ...fields }));
    return new Promise((resolve, reject) => {
      this.pending.push({ kind, resolve, reject });
    });
  }

  close(): void {
    this.wire.close();
  }

  private handleMessage(text: string): void {
    let msg: ServerMessage;
    try {
      msg = JSON.parse(text);
    } catch {
      console.warn("unparseable server message", text);
      return;
    }
    if (typeof msg.seq === "number") {
      if (msg.seq <= this.lastServerSeq) {
        console.warn(`server seq went backwards: ${msg.seq} after ${this.lastServerSeq}`);
      }
      this.lastServerSeq = msg.seq;
    }
    const head = this.pending[0];
    if (head && isReplyTo(head.kind, msg)) {
      this.pending.shift();
      head.resolve(msg);
      return;
    }
    this.onpush?.(msg);
  }

  private handleClose(): void {
    if (this.closed) return;
    this.closed = true;
    const waiting = this.pending.splice(0);
    for (const req of waiting) req.reject(new ConnectionClosedError());
    this.onclose?.();
  }
}

/** Browser transport: one WebSocket, resolved once open. */
export function webSocketWire(url: string): Promise<Wire> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    const wire: Wire = {
      send: (text) => ws.send(text),
      close: () => ws.close(),
      onmessage: null,
      onclose: null,
    };
    ws.onmessage = (ev) => wire.onmessage?.(String(ev.data));
    ws.onclose = () => wire.onclose?.();
    ws.onopen = () => resolve(wire);
    ws.onerror = () => reject(new Error(`could not reach ${url}`));
  });
}
