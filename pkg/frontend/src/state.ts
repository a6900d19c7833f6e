// View state, built purely from server messages.  Nothing in here simulates
// the game: rewards, matches, and the grid all arrive over the wire and are
// only copied into place (grid deltas are applied cell by cell).  The DOM
// layer subscribes to onchange and reads `state`.

import type { ServerMessage } from "./protocol.js";

export const ZONE_X = 11;
export const ZONE_Y = 9;
export const ZONE_Z = 11;

export type Grid = number[][][]; // layers [y][z][x], 0 = air

export interface Pose {
  x: number;
  y: number;
  z: number;
  yaw: number;
  pitch: number;
}

export interface ChatLine {
  speaker: string;
  text: string;
}

export interface RewardTick {
  value: number;
  cause: string;
  step: number;
}

export interface EpisodeEndSummary {
  g: number;
  c: number;
  rho: number;
  hamming_norm: number;
  steps_used: number;
  end_reason: string;
}

export interface TaskRow {
  task_id: string;
  difficulty: string;
  blocks: number;
  subgoals: number;
}

export const TICKER_LIMIT = 50;

export interface ViewState {
  connection: "disconnected" | "connecting" | "connected";
  role: string | null;
  sessionId: string | null;
  tasks: TaskRow[];
  stepIndex: number;
  pose: Pose | null;
  inventory: Record<string, number>;
  grid: Grid;
  chat: ChatLine[];
  instruction: string;
  ticker: RewardTick[];
  lastReward: { value: number; cause: string } | null;
  lastBlocked: string | null;
  selectedColor: number | null; // local echo of the last choose_* keypress
  done: boolean;
  endReason: string | null;
  summary: EpisodeEndSummary | null;
  recordSaved: string | null;
  target: Grid | null; // architect connections only
  overlay: boolean;
  matchCells: number[][]; // [x, y, z, color] rows from match_info
  maxMatch: number | null;
  serverError: string | null;
}

export function emptyGrid(): Grid {
  const grid: Grid = [];
  for (let y = 0; y < ZONE_Y; y++) {
    const layer: number[][] = [];
    for (let z = 0; z < ZONE_Z; z++) layer.push(new Array(ZONE_X).fill(0));
    grid.push(layer);
  }
  return grid;
}

export function initialState(): ViewState {
  return {
    connection: "disconnected",
    role: null,
    sessionId: null,
    tasks: [],
    stepIndex: 0,
    pose: null,
    inventory: {},
    grid: emptyGrid(),
    chat: [],
    instruction: "",
    ticker: [],
    lastReward: null,
    lastBlocked: null,
    selectedColor: null,
    done: false,
    endReason: null,
    summary: null,
    recordSaved: null,
    target: null,
    overlay: false,
    matchCells: [],
    maxMatch: null,
    serverError: null,
  };
}

interface ObservationPayload {
  step_index: number;
  pose: Pose;
  inventory: Record<string, number>;
  grid?: number[][][];
  grid_delta?: number[][];
  chat: ChatLine[];
  current_instruction: string;
  last_reward: { value: number; cause: string } | null;
  target?: number[][][];
}

export class ViewStore {
  state: ViewState = initialState();
  onchange: (() => void) | null = null;

  private notify(): void {
    this.onchange?.();
  }

  setConnection(status: ViewState["connection"]): void {
    this.state.connection = status;
    this.notify();
  }

  applyHello(msg: ServerMessage): void {
    this.state.role = String(msg.role);
    this.state.sessionId = String(msg.session_id);
    this.state.connection = "connected";
    this.notify();
  }

  applyTaskList(msg: ServerMessage): void {
    this.state.tasks = (msg.tasks as TaskRow[]) ?? [];
    this.notify();
  }

  /** A fresh episode: wipe everything the previous one accumulated. */
  beginEpisode(): void {
    const s = this.state;
    s.grid = emptyGrid();
    s.chat = [];
    s.ticker = [];
    s.lastReward = null;
    s.lastBlocked = null;
    s.selectedColor = null;
    s.done = false;
    s.endReason = null;
    s.summary = null;
    s.recordSaved = null;
    s.matchCells = [];
    s.maxMatch = null;
    s.serverError = null;
    this.notify();
  }

  /**
   * Fold in an observation — a reset/resync reply (full grid) or a push to an
   * attached connection (full on reset, delta per step, with reward fields
   * alongside).  `isReset` marks explicit reset replies.
   */
  applyObservation(msg: ServerMessage, isReset = false): void {
    if (isReset || msg.reset === true) this.beginEpisode();
    const payload = msg.observation as unknown as ObservationPayload;
    this.foldObservation(payload);
    if (typeof msg.reward === "number") {
      const tick = { value: msg.reward, cause: String(msg.cause), step: this.state.stepIndex };
      this.pushTick(tick);
      this.state.lastReward = { value: tick.value, cause: tick.cause };
    }
    if (msg.done === true) {
      this.state.done = true;
      this.state.endReason = (msg.end_reason as string) ?? null;
      this.state.summary = (msg.summary as EpisodeEndSummary) ?? null;
    }
    this.notify();
  }

  applyStepResult(msg: ServerMessage, action: number): void {
    const payload = msg.observation as unknown as ObservationPayload;
    this.foldObservation(payload);
    const info = (msg.info ?? {}) as Record<string, unknown>;
    const tick = {
      value: msg.reward as number,
      cause: String(msg.cause),
      step: this.state.stepIndex,
    };
    this.pushTick(tick);
    this.state.lastReward = { value: tick.value, cause: tick.cause };
    this.state.lastBlocked = (info.blocked as string) ?? null;
    if (action >= 12 && action <= 17) this.state.selectedColor = action - 11;
    if (msg.done === true) {
      this.state.done = true;
      this.state.endReason = (info.end_reason as string) ?? null;
      this.state.summary = (info.summary as EpisodeEndSummary) ?? null;
      this.state.recordSaved = (info.record_saved as string) ?? null;
    }
    this.notify();
  }

  applyChatPush(msg: ServerMessage): void {
    this.state.chat.push({ speaker: String(msg.speaker), text: String(msg.text) });
    this.notify();
  }

  applyChatAck(msg: ServerMessage): void {
    // Own messages are not echoed back by the server; append from the ack.
    this.state.chat.push({ speaker: String(msg.speaker), text: String(msg.text) });
    this.notify();
  }

  applyMatchInfo(msg: ServerMessage): void {
    this.state.matchCells = (msg.cells as number[][]) ?? [];
    this.state.maxMatch = (msg.max_match as number) ?? null;
    this.notify();
  }

  applyError(msg: ServerMessage): void {
    this.state.serverError = `${msg.code}: ${msg.message}`;
    this.notify();
  }

  clearError(): void {
    this.state.serverError = null;
    this.notify();
  }

  setOverlay(on: boolean): void {
    this.state.overlay = on;
    if (!on) {
      this.state.matchCells = [];
      this.state.maxMatch = null;
    }
    this.notify();
  }

  private pushTick(tick: RewardTick): void {
    this.state.ticker.push(tick);
    if (this.state.ticker.length > TICKER_LIMIT) {
      this.state.ticker.splice(0, this.state.ticker.length - TICKER_LIMIT);
    }
  }

  private foldObservation(payload: ObservationPayload): void {
    const s = this.state;
    s.stepIndex = payload.step_index;
    s.pose = payload.pose;
    s.inventory = payload.inventory;
    s.instruction = payload.current_instruction;
    s.chat = payload.chat.slice();
    if (payload.grid) {
      s.grid = payload.grid;
    } else if (payload.grid_delta) {
      for (const [x, y, z, color] of payload.grid_delta) {
        s.grid[y][z][x] = color;
      }
    }
    if (payload.target) s.target = payload.target;
  }
}
