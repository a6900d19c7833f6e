"""Regenerate the bundled task files through the canonical writer."""
from pathlib import Path

from iglu_blocks.tasks import SubGoal, TaskDef, classify_difficulty, validate_task, write_task
from iglu_blocks.voxel import Structure

OUT = Path(__file__).resolve().parent.parent / "src" / "iglu_blocks" / "data" / "tasks"

RECON = "hand-authored reconstruction of a classic collaborative-building shape"


def task(task_id, provenance, subgoals):
    """subgoals: list of (instruction, block list); the last one is the target."""
    target = Structure(subgoals[-1][1])
    t = TaskDef(
        task_id=task_id,
        target=target,
        difficulty=classify_difficulty(target),
        subgoals=tuple(SubGoal(instr, Structure(blocks)) for instr, blocks in subgoals),
        provenance=provenance,
    )
    bad = [v for v in validate_task(t) if v.severity == "error"]
    assert not bad, (task_id, bad)
    warn = [v for v in validate_task(t) if v.severity == "warning"]
    assert not warn, (task_id, warn)
    return t


B, G, R, O, P, Y = 1, 2, 3, 4, 5, 6

l5_row = [(5, 0, 5, R), (6, 0, 5, R), (7, 0, 5, R)]
l5_full = l5_row + [(5, 1, 5, R), (5, 2, 5, R)]

stair_row = [(3, 0, 5, G), (4, 0, 5, G), (5, 0, 5, G)]
stair_mid = stair_row + [(4, 1, 5, G), (5, 1, 5, G)]
stair_full = stair_mid + [(5, 2, 5, G)]

pyramid_base = [(x, 0, z, Y) for x in (4, 5, 6) for z in (4, 5, 6)]
pyramid_full = pyramid_base + [(5, 1, 5, P)]

table_base = [(x, 0, z, O) for x in (4, 5, 6) for z in (4, 5, 6)]
table_row4 = table_base + [(x, 1, 4, G) for x in (4, 5, 6)]
table_row5 = table_row4 + [(x, 1, 5, G) for x in (4, 5, 6)]
table_full = table_row5 + [(x, 1, 6, G) for x in (4, 5, 6)]

heart_left = [
    (3, 0, 5, R), (4, 0, 5, R),
    (2, 0, 4, R), (5, 0, 4, R),
    (2, 0, 3, R),
    (3, 0, 2, R),
    (4, 0, 1, R),
    (5, 0, 0, R),
]
heart_full = heart_left + [
    (6, 0, 5, R), (7, 0, 5, R),
    (8, 0, 4, R),
    (8, 0, 3, R),
    (7, 0, 2, R),
]

l1 = [(2, 0, 2, B), (3, 0, 2, B), (2, 0, 3, B)]
l2 = l1 + [(4, 0, 4, P), (5, 0, 4, P), (4, 0, 5, P)]
l3 = l2 + [(6, 0, 6, Y), (7, 0, 6, Y), (6, 0, 7, Y)]

corner_blocks = [(0, 0, 0, B), (10, 0, 0, G), (0, 0, 10, P), (10, 0, 10, Y)]

def checker(zs):
    return [
        (x, 0, z, R if (x + z) % 2 == 0 else Y)
        for z in zs
        for x in range(3, 8)
    ]

TASKS = [
    task("l5", RECON, [
        ("place three red blocks in a row on the ground in the middle", l5_row),
        ("stack two more red blocks on the west end so it makes an L", l5_full),
    ]),
    task("staircase", "bundled example shape", [
        ("make a row of three green blocks on the ground in the middle", stair_row),
        ("add a second level on the east two blocks", stair_mid),
        ("top the east end with one more block so it looks like stairs", stair_full),
    ]),
    task("pyramid", "bundled example shape", [
        ("lay a three by three yellow square on the ground in the middle", pyramid_base),
        ("put a single purple block on the center of the square", pyramid_full),
    ]),
    task("table", RECON, [
        ("build a three by three orange base in the middle of the zone", table_base),
        ("cover the north row of the base with green blocks", table_row4),
        ("cover the middle row with green too", table_row5),
        ("finish the green table top", table_full),
    ]),
    task("broken-heart", RECON, [
        ("draw the left half of a heart on the floor with red blocks", heart_left),
        ("finish the right side but leave the crack near the bottom open", heart_full),
    ]),
    task("diagonal-ls", RECON, [
        ("place a small blue L shape near the northwest corner on the ground", l1),
        ("add a purple L diagonally next to the blue one", l2),
        ("finish with a yellow L to complete the diagonal", l3),
    ]),
    task("corners", "bundled example shape", [
        ("put one block of a different color in each corner of the zone", corner_blocks),
    ]),
    task("checker-floor", "bundled example shape", [
        ("checker the north row of a five by five square with red and yellow", checker([3])),
        ("extend the checkerboard one more row", checker([3, 4])),
        ("complete the five by five checkerboard", checker([3, 4, 5, 6, 7])),
    ]),
]

OUT.mkdir(parents=True, exist_ok=True)
for t in TASKS:
    path = OUT / f"{t.task_id}.task"
    path.write_text(write_task(t), encoding="utf-8")
    print(f"{t.task_id:14s} {t.difficulty:6s} {len(t.target):3d} blocks  {len(t.subgoals)} subgoals")
