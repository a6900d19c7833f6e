import { ACTION_NAMES, COLOR_HEX, COLOR_NAMES, actionForKey, keyLabel } from "./actions.js";
import { Connection, webSocketWire, type ServerMessage } from "./protocol.js";
import { drawIso, drawLayers, isoCanvasSize, layersCanvasSize } from "./render.js";
import { ViewStore } from "./state.js";

const $ = <T extends HTMLElement = HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const store = new ViewStore();
let conn: Connection | null = null;
let attached = false;
let stepsInFlight = 0;

// -- connection --------------------------------------------------------------

async function connect(): Promise<void> {
  const role = $<HTMLSelectElement>("role").value;
  const sessionId = $<HTMLInputElement>("session-id").value.trim();
  store.setConnection("connecting");
  let wire;
  try {
    const scheme = location.protocol === "https:" ? "wss" : "ws";
    wire = await webSocketWire(`${scheme}://${location.host}/`);
  } catch (err) {
    store.setConnection("disconnected");
    showReconnect(`Could not reach the server (${String(err)}).`);
    return;
  }
  conn = new Connection(wire);
  conn.onpush = handlePush;
  conn.onclose = () => {
    store.setConnection("disconnected");
    showReconnect("Connection lost. An interrupted episode is kept as a crash-prefix record.");
  };

  const fields: Record<string, unknown> = { protocol_version: 1, role };
  if (sessionId) fields.session_id = sessionId;
  const ack = await conn.request("hello", fields);
  if (ack.kind === "error") {
    store.applyError(ack);
    store.setConnection("disconnected");
    return;
  }
  attached = ack.attached === true;
  store.applyHello(ack);
  $<HTMLInputElement>("session-id").value = String(ack.session_id);
  hideReconnect();

  const tasks = await conn.request("list_tasks");
  if (tasks.kind === "task_list") {
    store.applyTaskList(tasks);
    fillTaskSelect();
  }

  if (attached) {
    // Joining a running session: pull the current observation once.
    const obs = await conn.request("observation");
    if (obs.kind === "observation") store.applyObservation(obs);
    else store.applyError(obs);
  }
  render();
}

function handlePush(msg: ServerMessage): void {
  switch (msg.kind) {
    case "observation":
      store.applyObservation(msg);
      refreshOverlay();
      break;
    case "chat":
      store.applyChatPush(msg);
      break;
    case "error":
      store.applyError(msg);
      break;
    case "bye":
      store.setConnection("disconnected");
      showReconnect(`Server closed the connection (${String(msg.reason ?? "bye")}).`);
      break;
  }
}

// -- episode control ----------------------------------------------------------

function isBuilder(): boolean {
  return !attached && (store.state.role === "human_builder" || store.state.role === "builder_agent");
}

function ownsSession(): boolean {
  return !attached && store.state.role !== null;
}

async function resetEpisode(): Promise<void> {
  if (!conn || !ownsSession()) return;
  const taskId = $<HTMLSelectElement>("task").value;
  const fields: Record<string, unknown> = { task_id: taskId };
  const seed = $<HTMLInputElement>("seed").value.trim();
  if (seed) fields.seed = Number(seed);
  const reply = await conn.request("reset", fields);
  if (reply.kind === "error") {
    store.applyError(reply);
    return;
  }
  store.applyObservation(reply, true);
  refreshOverlay();
}

async function sendStep(action: number): Promise<void> {
  if (!conn || store.state.done) return;
  stepsInFlight += 1;
  try {
    const reply = await conn.request("step", { action });
    if (reply.kind === "error") {
      store.applyError(reply);
      return;
    }
    store.applyStepResult(reply, action);
    refreshOverlay();
  } finally {
    stepsInFlight -= 1;
  }
}

function refreshOverlay(): void {
  if (!conn || !store.state.overlay) return;
  conn
    .request("match")
    .then((reply) => {
      if (reply.kind === "match_info") store.applyMatchInfo(reply);
    })
    .catch(() => undefined);
}

// -- input --------------------------------------------------------------------

function onKeyDown(ev: KeyboardEvent): void {
  const active = document.activeElement;
  if (active instanceof HTMLInputElement || active instanceof HTMLTextAreaElement) return;
  const action = actionForKey(ev.key);
  if (action === null) return;
  ev.preventDefault();
  if (!isBuilder() || store.state.done || stepsInFlight >= 2) return;
  void sendStep(action);
}

async function sendChat(text: string): Promise<void> {
  if (!conn || !text.trim()) return;
  const reply = await conn.request("chat", { text });
  if (reply.kind === "chat_ack") store.applyChatAck(reply);
  else store.applyError(reply);
}

// -- banners -------------------------------------------------------------------

function showReconnect(message: string): void {
  $("reconnect-text").textContent = message;
  $("reconnect-banner").classList.remove("hidden");
  render();
}

function hideReconnect(): void {
  $("reconnect-banner").classList.add("hidden");
}

// -- rendering ------------------------------------------------------------------

function ctxOf(id: string): CanvasRenderingContext2D {
  const canvas = $<HTMLCanvasElement>(id);
  return canvas.getContext("2d")!;
}

function sizeCanvases(): void {
  const layers = layersCanvasSize();
  const iso = isoCanvasSize();
  for (const id of ["built-layers", "target-layers"]) {
    const c = $<HTMLCanvasElement>(id);
    c.width = layers.width;
    c.height = layers.height;
  }
  for (const id of ["built-iso", "target-iso"]) {
    const c = $<HTMLCanvasElement>(id);
    c.width = iso.width;
    c.height = iso.height;
  }
}

function render(): void {
  const s = store.state;

  $("status-dot").dataset.state = s.connection;
  $("status-text").textContent =
    s.connection === "connected" ? `${s.role} @ ${s.sessionId}` : s.connection;
  $("setup").classList.toggle("hidden", s.connection !== "connected" || !ownsSession());
  $("connect-form").classList.toggle("hidden", s.connection === "connected");

  $("instruction").textContent = s.instruction || "—";
  $("step-index").textContent = String(s.stepIndex);
  $("pose").textContent = s.pose
    ? `x ${s.pose.x.toFixed(1)}  y ${s.pose.y.toFixed(1)}  z ${s.pose.z.toFixed(1)}  ` +
      `yaw ${s.pose.yaw}°  pitch ${s.pose.pitch}°`
    : "—";

  // inventory chips
  const inv = $("inventory");
  inv.innerHTML = "";
  COLOR_NAMES.forEach((name, i) => {
    const chip = document.createElement("span");
    chip.className = "chip";
    if (s.selectedColor === i + 1) chip.classList.add("selected");
    chip.style.setProperty("--chip", COLOR_HEX[i + 1]);
    chip.textContent = `${name} ${s.inventory[name] ?? "–"}`;
    inv.appendChild(chip);
  });

  // reward ticker
  const ticker = $("ticker");
  ticker.innerHTML = "";
  for (const tick of s.ticker.slice(-12).reverse()) {
    const li = document.createElement("li");
    const sign = tick.value > 0 ? "+" : "";
    li.textContent = `#${tick.step} ${sign}${tick.value} ${tick.cause}`;
    li.dataset.tone = tick.value > 0 ? "good" : tick.value < 0 ? "bad" : "flat";
    ticker.appendChild(li);
  }
  $("max-match").textContent =
    s.overlay && s.maxMatch !== null ? `matched cells: ${s.maxMatch}` : "";
  $("blocked").textContent = s.lastBlocked ? `blocked: ${s.lastBlocked}` : "";

  // chat
  const log = $("chat-log");
  log.innerHTML = "";
  for (const line of s.chat) {
    const div = document.createElement("div");
    div.className = `chat-line ${line.speaker}`;
    div.textContent = `${line.speaker}: ${line.text}`;
    log.appendChild(div);
  }
  log.scrollTop = log.scrollHeight;
  const canChat = s.connection === "connected" && s.role !== "observer";
  $<HTMLInputElement>("chat-input").disabled = !canChat;

  // error + done banners
  $("error-banner").classList.toggle("hidden", !s.serverError);
  $("error-text").textContent = s.serverError ?? "";
  $("done-banner").classList.toggle("hidden", !s.done);
  if (s.done && s.summary) {
    $("done-title").textContent = s.endReason === "success" ? "Structure complete!" : "Episode over";
    $("done-title").dataset.tone = s.endReason === "success" ? "good" : "flat";
    $("done-stats").textContent =
      `g = ${s.summary.g}   c = ${s.summary.c}   ρ = ${s.summary.rho.toFixed(4)}   ` +
      `steps = ${s.summary.steps_used}   end: ${s.summary.end_reason}` +
      (s.recordSaved ? `   record: ${s.recordSaved}` : "");
  }

  // grids
  const highlight = s.overlay
    ? new Set(s.matchCells.map(([x, y, z]) => `${x},${y},${z}`))
    : undefined;
  drawLayers(ctxOf("built-layers"), s.grid, { pose: s.pose, highlight });
  drawIso(ctxOf("built-iso"), s.grid, { highlight });
  const showTarget = s.target !== null && s.role === "architect";
  $("target-panel").classList.toggle("hidden", !showTarget);
  if (showTarget && s.target) {
    drawLayers(ctxOf("target-layers"), s.target);
    drawIso(ctxOf("target-iso"), s.target);
  }
}

// -- bootstrap -------------------------------------------------------------------

function fillHelp(): void {
  const body = $("help-body");
  ACTION_NAMES.forEach((name, code) => {
    const row = document.createElement("tr");
    row.innerHTML = `<td>${keyLabel(code)}</td><td>${name}</td><td>${code}</td>`;
    body.appendChild(row);
  });
}

function fillTaskSelect(): void {
  const select = $<HTMLSelectElement>("task");
  select.innerHTML = "";
  for (const task of store.state.tasks) {
    const opt = document.createElement("option");
    opt.value = task.task_id;
    opt.textContent = `${task.task_id} (${task.difficulty}, ${task.blocks} blocks)`;
    select.appendChild(opt);
  }
}

function main(): void {
  sizeCanvases();
  fillHelp();
  store.onchange = render;

  $("connect-btn").addEventListener("click", () => void connect());
  $("reconnect-btn").addEventListener("click", () => {
    hideReconnect();
    void connect();
  });
  $("reset-btn").addEventListener("click", () => void resetEpisode());
  $("again-btn").addEventListener("click", () => void resetEpisode());
  $<HTMLInputElement>("overlay-toggle").addEventListener("change", (ev) => {
    store.setOverlay((ev.target as HTMLInputElement).checked);
    refreshOverlay();
  });
  $("error-dismiss").addEventListener("click", () => store.clearError());

  $<HTMLFormElement>("chat-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = $<HTMLInputElement>("chat-input");
    void sendChat(input.value);
    input.value = "";
  });
  $<HTMLFormElement>("note-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = $<HTMLInputElement>("note-input");
    if (input.value.trim()) {
      void sendChat(`[end-of-episode note] ${input.value.trim()}`);
      input.value = "";
      $("note-thanks").classList.remove("hidden");
    }
  });

  document.addEventListener("keydown", onKeyDown);
  render();
}

main();
