// View state, built purely from server messages.  Nothing in here simulates
// the game: rewards, matches, and the grid all arrive over the wire and are
// only copied into place (grid deltas are applied cell by cell).  The DOM
// layer subscribes to onchange and reads `state`.
export const ZONE_X = 11;
export const ZONE_Y = 9;
export const ZONE_Z = 11;
export const TICKER_LIMIT = 50;
export function emptyGrid() {
    const grid = [];
    for (let y = 0; y < ZONE_Y; y++) {
        const layer = [];
        for (let z = 0; z < ZONE_Z; z++)
            layer.push(new Array(ZONE_X).fill(0));
        grid.push(layer);
    }
    return grid;
}
export function initialState() {
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
export class ViewStore {
    constructor() {
        this.state = initialState();
        this.onchange = null;
    }
    notify() {
        this.onchange?.();
    }
    setConnection(status) {
        this.state.connection = status;
        this.notify();
    }
    applyHello(msg) {
        this.state.role = String(msg.role);
        this.state.sessionId = String(msg.session_id);
        this.state.connection = "connected";
        this.notify();
    }
    applyTaskList(msg) {
        this.state.tasks = msg.tasks ?? [];
        this.notify();
    }
    /** A fresh episode: wipe everything the previous one accumulated. */
    beginEpisode() {
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
    applyObservation(msg, isReset = false) {
        if (isReset || msg.reset === true)
            this.beginEpisode();
        const payload = msg.observation;
        this.foldObservation(payload);
        if (typeof msg.reward === "number") {
            const tick = { value: msg.reward, cause: String(msg.cause), step: this.state.stepIndex };
            this.pushTick(tick);
            this.state.lastReward = { value: tick.value, cause: tick.cause };
        }
        if (msg.done === true) {
            this.state.done = true;
            this.state.endReason = msg.end_reason ?? null;
            this.state.summary = msg.summary ?? null;
        }
        this.notify();
    }
    applyStepResult(msg, action) {
        const payload = msg.observation;
        this.foldObservation(payload);
        const info = (msg.info ?? {});
        const tick = {
            value: msg.reward,
            cause: String(msg.cause),
            step: this.state.stepIndex,
        };
        this.pushTick(tick);
        this.state.lastReward = { value: tick.value, cause: tick.cause };
        this.state.lastBlocked = info.blocked ?? null;
        if (action >= 12 && action <= 17)
            this.state.selectedColor = action - 11;
        if (msg.done === true) {
            this.state.done = true;
            this.state.endReason = info.end_reason ?? null;
            this.state.summary = info.summary ?? null;
            this.state.recordSaved = info.record_saved ?? null;
        }
        this.notify();
    }
    applyChatPush(msg) {
        this.state.chat.push({ speaker: String(msg.speaker), text: String(msg.text) });
        this.notify();
    }
    applyChatAck(msg) {
        // Own messages are not echoed back by the server; append from the ack.
        this.state.chat.push({ speaker: String(msg.speaker), text: String(msg.text) });
        this.notify();
    }
    applyMatchInfo(msg) {
        this.state.matchCells = msg.cells ?? [];
        this.state.maxMatch = msg.max_match ?? null;
        this.notify();
    }
    applyError(msg) {
        this.state.serverError = `${msg.code}: ${msg.message}`;
        this.notify();
    }
    clearError() {
        this.state.serverError = null;
        this.notify();
    }
    setOverlay(on) {
        this.state.overlay = on;
        if (!on) {
            this.state.matchCells = [];
            this.state.maxMatch = null;
        }
        this.notify();
    }
    pushTick(tick) {
        this.state.ticker.push(tick);
        if (this.state.ticker.length > TICKER_LIMIT) {
            this.state.ticker.splice(0, this.state.ticker.length - TICKER_LIMIT);
        }
    }
    foldObservation(payload) {
        const s = this.state;
        s.stepIndex = payload.step_index;
        s.pose = payload.pose;
        s.inventory = payload.inventory;
        s.instruction = payload.current_instruction;
        s.chat = payload.chat.slice();
        if (payload.grid) {
            s.grid = payload.grid;
        }
        else if (payload.grid_delta) {
            for (const [x, y, z, color] of payload.grid_delta) {
                s.grid[y][z][x] = color;
            }
        }
        if (payload.target)
            s.target = payload.target;
    }
}
