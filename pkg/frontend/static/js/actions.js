// The 18 discrete actions, in wire order (the array index IS the action code).
export const ACTION_NAMES = [
    "noop",
    "step_forward",
    "step_backward",
    "step_right",
    "step_left",
    "turn_up",
    "turn_down",
    "turn_left",
    "turn_right",
    "jump",
    "attack",
    "place_block",
    "choose_blue",
    "choose_green",
    "choose_red",
    "choose_orange",
    "choose_purple",
    "choose_yellow",
];
export const NUM_ACTIONS = ACTION_NAMES.length;
// Block color codes as the grid uses them; 0 is air.
export const COLOR_NAMES = ["blue", "green", "red", "orange", "purple", "yellow"];
export const COLOR_HEX = {
    1: "#4a6fd4",
    2: "#43a047",
    3: "#d64545",
    4: "#ef8f2e",
    5: "#9557c9",
    6: "#e7c944",
};
// One key per action.  Letters are matched case-insensitively so shift/caps
// don't eat inputs; names like "ArrowUp" and " " come straight from
// KeyboardEvent.key.
const KEYMAP = {
    n: 0,
    w: 1,
    s: 2,
    d: 3,
    a: 4,
    ArrowUp: 5,
    ArrowDown: 6,
    ArrowLeft: 7,
    ArrowRight: 8,
    " ": 9,
    q: 10,
    e: 11,
    "1": 12,
    "2": 13,
    "3": 14,
    "4": 15,
    "5": 16,
    "6": 17,
};
export function actionForKey(key) {
    const direct = KEYMAP[key];
    if (direct !== undefined)
        return direct;
    if (key.length === 1) {
        const lower = KEYMAP[key.toLowerCase()];
        if (lower !== undefined)
            return lower;
    }
    return null;
}
export function keyForAction(action) {
    for (const [key, code] of Object.entries(KEYMAP)) {
        if (code === action)
            return key;
    }
    throw new Error(`no key bound for action ${action}`);
}
/** Human-readable key label for the help panel. */
export function keyLabel(action) {
    const key = keyForAction(action);
    if (key === " ")
        return "Space";
    if (key.length === 1)
        return key.toUpperCase();
    return key.replace("Arrow", "Arrow ");
}
