"""Partially observable multi-room gridworld.

The grid is a lattice of rooms separated by one-cell-thick walls; doors sit
in wall cells. Cells are addressed ``(col, row)`` with row 0 at the top.
The agent occupies one floor cell, faces one of N/E/S/W, and carries at
most one object.

Visibility is room-scoped: the agent sees every cell of its current room,
every door cell on that room's walls, and, through any open door, the
cells of the adjoining room (applied transitively). Anything behind a
closed or locked door is invisible.

Primitive dynamics are deterministic and total: an illegal primitive (walk
into a wall, pick up with a full inventory, ...) is a silent no-op that
still consumes a step, so failure reporting is left to the critics rather
than the physics.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from typing import Iterator, Optional

KINDS = ("key", "ball", "box", "door")
CARRYABLE_KINDS = ("key", "ball", "box")
COLORS = ("red", "green", "blue", "purple", "yellow", "grey")
DIRS = ("N", "E", "S", "W")
DIR_VEC = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
DOOR_STATES = ("open", "closed", "locked")
PRIMITIVES = ("forward", "turn_left", "turn_right", "pickup", "drop", "toggle")

LEVELS = ("synth", "bosslevel")
SYNTH_HORIZON = 25
BOSS_HORIZON = 20
DEFAULT_DISCOUNT = 0.99
GENERATOR_MAX_DRAWS = 1000

Cell = tuple[int, int]


@dataclass(frozen=True)
class Layout:
    """Room lattice geometry. Walls live on the grid lines between rooms."""

    rooms_x: int = 1
    rooms_y: int = 1
    room_w: int = 8
    room_h: int = 8

    @property
    def width(self) -> int:
        return self.rooms_x * (self.room_w + 1) + 1

    @property
    def height(self) -> int:
        return self.rooms_y * (self.room_h + 1) + 1

    def in_grid(self, cell: Cell) -> bool:
        col, row = cell
        return 0 <= col < self.width and 0 <= row < self.height

    def is_wall(self, cell: Cell) -> bool:
        col, row = cell
        return col % (self.room_w + 1) == 0 or row % (self.room_h + 1) == 0

    def room_of(self, cell: Cell) -> Optional[tuple[int, int]]:
        """Room coordinates of a floor cell, or None for wall cells."""
        if not self.in_grid(cell) or self.is_wall(cell):
            return None
        col, row = cell
        return (col // (self.room_w + 1), row // (self.room_h + 1))

    def interior_cells(self, room: tuple[int, int]) -> Iterator[Cell]:
        rx, ry = room
        c0 = rx * (self.room_w + 1) + 1
        r0 = ry * (self.room_h + 1) + 1
        for row in range(r0, r0 + self.room_h):
            for col in range(c0, c0 + self.room_w):
                yield (col, row)

    def all_rooms(self) -> Iterator[tuple[int, int]]:
        for ry in range(self.rooms_y):
            for rx in range(self.rooms_x):
                yield (rx, ry)

    def rooms_flanking(self, cell: Cell) -> tuple[tuple[int, int], ...]:
        """Rooms on either side of a wall cell. Corner cells flank none."""
        col, row = cell
        on_v = col % (self.room_w + 1) == 0
        on_h = row % (self.room_h + 1) == 0
        if on_v == on_h:  # floor cell or wall intersection
            return ()
        rooms = []
        if on_v:
            k = col // (self.room_w + 1)
            ry = row // (self.room_h + 1)
            if k - 1 >= 0:
                rooms.append((k - 1, ry))
            if k <= self.rooms_x - 1:
                rooms.append((k, ry))
        else:
            j = row // (self.room_h + 1)
            rx = col // (self.room_w + 1)
            if j - 1 >= 0:
                rooms.append((rx, j - 1))
            if j <= self.rooms_y - 1:
                rooms.append((rx, j))
        return tuple(rooms)


@dataclass(frozen=True)
class WorldObject:
    kind: str
    color: str
    pos: Optional[Cell]  # None while carried
    door_state: Optional[str] = None  # doors only

    def matches(self, kind: str, color: str) -> bool:
        return self.kind == kind and self.color == color

    def label(self) -> str:
        return f"{self.color} {self.kind}"


@dataclass(frozen=True)
class GridState:
    layout: Layout
    objects: tuple[WorldObject, ...]
    agent_pos: Cell
    agent_dir: str
    inventory: Optional[WorldObject] = None
    step_count: int = 0

    def object_at(self, cell: Cell) -> Optional[WorldObject]:
        """Non-door object occupying a cell, if any."""
        for o in self.objects:
            if o.pos == cell and o.kind != "door":
                return o
        return None

    def door_at(self, cell: Cell) -> Optional[WorldObject]:
        for o in self.objects:
            if o.pos == cell and o.kind == "door":
                return o
        return None

    def front_cell(self) -> Cell:
        dx, dy = DIR_VEC[self.agent_dir]
        return (self.agent_pos[0] + dx, self.agent_pos[1] + dy)

    def walkable(self, cell: Cell) -> bool:
        if not self.layout.in_grid(cell):
            return False
        if self.layout.is_wall(cell):
            door = self.door_at(cell)
            return door is not None and door.door_state == "open"
        return self.object_at(cell) is None


def _turned(direction: str, clockwise: bool) -> str:
    i = DIRS.index(direction)
    return DIRS[(i + 1) % 4] if clockwise else DIRS[(i - 1) % 4]


def step_primitive(state: GridState, action: str) -> GridState:
    """Apply one primitive action. Illegal moves are no-ops but still count."""
    if action not in PRIMITIVES:
        raise ValueError(f"unknown primitive {action!r}")
    ns = replace(state, step_count=state.step_count + 1)
    if action == "turn_left":
        return replace(ns, agent_dir=_turned(state.agent_dir, clockwise=False))
    if action == "turn_right":
        return replace(ns, agent_dir=_turned(state.agent_dir, clockwise=True))
    front = state.front_cell()
    if action == "forward":
        if state.walkable(front):
            return replace(ns, agent_pos=front)
        return ns
    if action == "pickup":
        target = state.object_at(front)
        if target is None or state.inventory is not None:
            return ns
        objs = tuple(o for o in state.objects if o is not target)
        return replace(ns, objects=objs, inventory=replace(target, pos=None))
    if action == "drop":
        if state.inventory is None:
            return ns
        if not state.layout.in_grid(front) or state.layout.is_wall(front):
            return ns
        if state.object_at(front) is not None:
            return ns
        placed = replace(state.inventory, pos=front)
        return replace(ns, objects=state.objects + (placed,), inventory=None)
    # toggle
    door = state.door_at(front)
    if door is None:
        return ns
    if door.door_state == "locked":
        inv = state.inventory
        if inv is None or not inv.matches("key", door.color):
            return ns
        new_state = "open"
    elif door.door_state == "closed":
        new_state = "open"
    else:
        new_state = "closed"
    objs = tuple(replace(o, door_state=new_state) if o is door else o for o in state.objects)
    return replace(ns, objects=objs)


# ---------------------------------------------------------------------------
# Observation


@dataclass(frozen=True)
class VisibleObject:
    kind: str
    color: str
    dx: int  # offset from the agent, cols
    dy: int  # offset from the agent, rows
    door_state: Optional[str] = None


@dataclass(frozen=True)
class Observation:
    visible: tuple[VisibleObject, ...]
    inventory: Optional[tuple[str, str]]  # (kind, color)
    room: Optional[tuple[int, int]]  # None while standing in a doorway
    adjacent: tuple[str, str, str, str]  # front, left, right, behind


def visible_rooms(state: GridState) -> frozenset[tuple[int, int]]:
    """Rooms the agent can currently see into (closure over open doors)."""
    layout = state.layout
    here = layout.room_of(state.agent_pos)
    frontier = [here] if here is not None else list(layout.rooms_flanking(state.agent_pos))
    seen = set(frontier)
    doors = [o for o in state.objects if o.kind == "door" and o.pos is not None]
    while frontier:
        room = frontier.pop()
        for d in doors:
            if d.door_state != "open":
                continue
            flanks = layout.rooms_flanking(d.pos)
            if room in flanks:
                for other in flanks:
                    if other not in seen:
                        seen.add(other)
                        frontier.append(other)
    return frozenset(seen)


def _cell_text(state: GridState, cell: Cell) -> str:
    if not state.layout.in_grid(cell):
        return "edge"
    door = state.door_at(cell)
    if door is not None:
        return f"{door.color} door {door.door_state}"
    if state.layout.is_wall(cell):
        return "wall"
    obj = state.object_at(cell)
    if obj is not None:
        return obj.label()
    return "floor"


def observe(state: GridState) -> Observation:
    """Deterministic partial observation of the current state."""
    rooms = visible_rooms(state)
    layout = state.layout
    ax, ay = state.agent_pos
    vis = []
    for o in state.objects:
        if o.pos is None:
            continue
        if o.kind == "door":
            shown = any(r in rooms for r in layout.rooms_flanking(o.pos))
        else:
            shown = layout.room_of(o.pos) in rooms
        if shown:
            vis.append(VisibleObject(o.kind, o.color, o.pos[0] - ax, o.pos[1] - ay, o.door_state))
    vis.sort(key=lambda v: (v.dy, v.dx))
    inventory = None
    if state.inventory is not None:
        inventory = (state.inventory.kind, state.inventory.color)
    i = DIRS.index(state.agent_dir)
    around = []
    for d in (DIRS[i], DIRS[(i - 1) % 4], DIRS[(i + 1) % 4], DIRS[(i + 2) % 4]):
        dx, dy = DIR_VEC[d]
        around.append(_cell_text(state, (ax + dx, ay + dy)))
    return Observation(
        visible=tuple(vis),
        inventory=inventory,
        room=layout.room_of(state.agent_pos),
        adjacent=tuple(around),
    )


def render_observation(obs: Observation) -> str:
    """Canonical single-line rendering used in prompts and memory records."""
    items = ", ".join(
        f"{v.color} {v.kind}"
        + (f" {v.door_state}" if v.door_state else "")
        + f" ({v.dx:+d},{v.dy:+d})"
        for v in obs.visible
    )
    inv = f"{obs.inventory[1]} {obs.inventory[0]}" if obs.inventory else "none"
    room = f"({obs.room[0]},{obs.room[1]})" if obs.room is not None else "doorway"
    f, l, r, b = obs.adjacent
    return (
        f"visible_objects=[{items}]; inventory={inv}; room={room}; "
        f"front={f}; left={l}; right={r}; behind={b}"
    )


# ---------------------------------------------------------------------------
# Goals


@dataclass(frozen=True)
class GoalPredicate:
    """One clause of a goal: goto | carry | open | next_to."""

    op: str
    kind: str
    color: str
    kind2: Optional[str] = None
    color2: Optional[str] = None

    def render(self) -> str:
        if self.op == "next_to":
            return f"next_to({self.color} {self.kind}, {self.color2} {self.kind2})"
        return f"{self.op}({self.color} {self.kind})"


def predicate_holds(state: GridState, pred: GoalPredicate) -> bool:
    if pred.op == "goto":
        front = state.front_cell()
        obj = state.object_at(front) or state.door_at(front)
        return obj is not None and obj.matches(pred.kind, pred.color)
    if pred.op == "carry":
        inv = state.inventory
        return inv is not None and inv.matches(pred.kind, pred.color)
    if pred.op == "open":
        return any(
            o.kind == "door" and o.color == pred.color and o.door_state == "open"
            for o in state.objects
        )
    if pred.op == "next_to":
        firsts = [o for o in state.objects if o.pos and o.matches(pred.kind, pred.color)]
        seconds = [o for o in state.objects if o.pos and o.matches(pred.kind2, pred.color2)]
        for a in firsts:
            for b in seconds:
                if a is b:
                    continue
                if abs(a.pos[0] - b.pos[0]) + abs(a.pos[1] - b.pos[1]) == 1:
                    return True
        return False
    raise ValueError(f"unknown goal predicate {pred.op!r}")


def goal_satisfied(state: GridState, goal_spec: tuple[GoalPredicate, ...]) -> bool:
    """True iff every clause of the goal holds in the given state."""
    return all(predicate_holds(state, p) for p in goal_spec)


# ---------------------------------------------------------------------------
# Task generation


@dataclass(frozen=True)
class TaskInstance:
    seed: int
    level: str
    goal: str
    goal_spec: tuple[GoalPredicate, ...]
    horizon: int
    discount: float  # kept for task-model fidelity; consumed by nothing
    state: GridState


def render_state_record(state: GridState) -> str:
    """One-line snapshot of a state (same style as trace records)."""
    inv = state.inventory.label() if state.inventory else "none"
    objs = sorted((o for o in state.objects if o.pos is not None), key=lambda o: o.pos)
    parts = []
    for o in objs:
        suffix = f":{o.door_state}" if o.door_state else ""
        parts.append(f"{o.color} {o.kind}@({o.pos[0]},{o.pos[1]}){suffix}")
    return (
        f"state width={state.layout.width} height={state.layout.height} "
        f"agent=({state.agent_pos[0]},{state.agent_pos[1]}) dir={state.agent_dir} "
        f"step={state.step_count} inventory={inv} objects=[{'; '.join(parts)}]"
    )


def state_digest(state: GridState) -> str:
    return hashlib.sha256(render_state_record(state).encode()).hexdigest()[:16]


def _free_interior_cell(rng: random.Random, layout: Layout, taken: set[Cell]) -> Cell:
    cells = [c for r in layout.all_rooms() for c in layout.interior_cells(r) if c not in taken]
    cell = rng.choice(cells)
    taken.add(cell)
    return cell


def _perimeter_door_cell(rng: random.Random, layout: Layout, side: str) -> Cell:
    # synth worlds: doors sit on the outer wall of the single room
    if side in ("N", "S"):
        row = 0 if side == "N" else layout.height - 1
        return (rng.randrange(1, 1 + layout.room_w), row)
    col = 0 if side == "W" else layout.width - 1
    return (col, rng.randrange(1, 1 + layout.room_h))


def _draw_synth_world(rng: random.Random, layout: Layout) -> GridState:
    taken: set[Cell] = set()
    agent = _free_interior_cell(rng, layout, taken)
    agent_dir = rng.choice(DIRS)
    objects: list[WorldObject] = []
    n_doors = rng.randint(1, 2)
    for side in rng.sample(("N", "E", "S", "W"), n_doors):
        objects.append(
            WorldObject("door", rng.choice(COLORS), _perimeter_door_cell(rng, layout, side), "closed")
        )
    # distinct door colors keep "open the <color> door" goals unambiguous
    if n_doors == 2 and objects[0].color == objects[1].color:
        others = [c for c in COLORS if c != objects[0].color]
        objects[1] = replace(objects[1], color=rng.choice(others))
    for _ in range(rng.randint(3, 6)):
        kind = rng.choice(CARRYABLE_KINDS)
        color = rng.choice(COLORS)
        objects.append(WorldObject(kind, color, _free_interior_cell(rng, layout, taken)))
    return GridState(layout, tuple(objects), agent, agent_dir)


def _draw_boss_world(rng: random.Random, layout: Layout) -> GridState:
    taken: set[Cell] = set()
    objects: list[WorldObject] = []
    # one door per internal wall so the room graph is a cycle
    door_cells: list[Cell] = []
    span_w, span_h = layout.room_w + 1, layout.room_h + 1
    for k in range(1, layout.rooms_x):
        for ry in range(layout.rooms_y):
            door_cells.append((k * span_w, rng.randrange(ry * span_h + 1, ry * span_h + 1 + layout.room_h)))
    for j in range(1, layout.rooms_y):
        for rx in range(layout.rooms_x):
            door_cells.append((rng.randrange(rx * span_w + 1, rx * span_w + 1 + layout.room_w), j * span_h))
    colors = rng.sample(COLORS, len(door_cells))
    locked_colors: list[str] = []
    for cell, color in zip(door_cells, colors):
        roll = rng.random()
        if roll < 0.25:
            door_state = "open"
        elif roll < 0.80 or locked_colors:
            door_state = "closed"  # at most one locked door per world
        else:
            door_state = "locked"
            locked_colors.append(color)
        objects.append(WorldObject("door", color, cell, door_state))
    for color in locked_colors:
        objects.append(WorldObject("key", color, _free_interior_cell(rng, layout, taken)))
    for _ in range(rng.randint(5, 9)):
        kind = rng.choice(CARRYABLE_KINDS)
        color = rng.choice(COLORS)
        while kind == "key" and color in locked_colors:
            color = rng.choice(COLORS)  # a locked door's key color stays unique
        objects.append(WorldObject(kind, color, _free_interior_cell(rng, layout, taken)))
    agent = _free_interior_cell(rng, layout, taken)
    return GridState(layout, tuple(objects), agent, rng.choice(DIRS))


def _clause_text(pred: GoalPredicate) -> str:
    if pred.op == "goto":
        return f"go to the {pred.color} {pred.kind}"
    if pred.op == "carry":
        return f"pick up the {pred.color} {pred.kind}"
    if pred.op == "open":
        return f"open the {pred.color} door"
    return f"put the {pred.color} {pred.kind} next to the {pred.color2} {pred.kind2}"


def _clause_options(state: GridState) -> dict[str, list[GoalPredicate]]:
    """Goal clauses that can be bound against the objects actually present."""
    on_grid = [o for o in state.objects if o.pos is not None]
    carryable = sorted({(o.kind, o.color) for o in on_grid if o.kind != "door"})
    everything = sorted({(o.kind, o.color) for o in on_grid})
    closed_doors = sorted({o.color for o in on_grid if o.kind == "door" and o.door_state != "open"})
    options: dict[str, list[GoalPredicate]] = {
        "goto": [GoalPredicate("goto", k, c) for k, c in everything],
        "carry": [GoalPredicate("carry", k, c) for k, c in carryable],
        "open": [GoalPredicate("open", "door", c) for c in closed_doors],
        "next_to": [],
    }
    for k1, c1 in carryable:
        for k2, c2 in carryable:
            if (k1, c1) >= (k2, c2):
                continue
            pred = GoalPredicate("next_to", k1, c1, k2, c2)
            if not predicate_holds(state, pred):
                options["next_to"].append(pred)
    return options


_CLAUSE_CAPS = {"goto": 1, "carry": 1, "open": 2, "next_to": 1}


def _descriptors(pred: GoalPredicate) -> set[tuple[str, str]]:
    refs = {(pred.kind, pred.color)}
    if pred.kind2 is not None:
        refs.add((pred.kind2, pred.color2))
    return refs


def _draw_goal(
    rng: random.Random, state: GridState, level: str
) -> Optional[tuple[str, tuple[GoalPredicate, ...]]]:
    options = _clause_options(state)
    ops = [op for op in ("goto", "carry", "open", "next_to") if options[op]]
    if not ops:
        return None
    if level == "synth":
        pred = rng.choice(options[rng.choice(ops)])
        return _clause_text(pred), (pred,)
    n_clauses = rng.randint(2, 3)
    chosen: list[GoalPredicate] = []
    used: set[tuple[str, str]] = set()
    counts: dict[str, int] = {}
    for _ in range(n_clauses):
        usable = [
            op
            for op in ops
            if counts.get(op, 0) < _CLAUSE_CAPS[op]
            and any(not (_descriptors(p) & used) for p in options[op])
        ]
        if not usable:
            break
        op = rng.choice(usable)
        pred = rng.choice([p for p in options[op] if not (_descriptors(p) & used)])
        chosen.append(pred)
        used |= _descriptors(pred)
        counts[op] = counts.get(op, 0) + 1
    if len(chosen) < 2:
        return None
    texts = [_clause_text(p) for p in chosen]
    if len(texts) == 2 and rng.random() < 0.5:
        goal = f"{texts[1]} after you {texts[0]}"
    else:
        goal = ", then ".join(texts)
    return goal, tuple(chosen)


def _expert_solves(state: GridState, goal_spec: tuple[GoalPredicate, ...], horizon: int) -> bool:
    """Replay the expert through the critics; any failure rejects the draw."""
    from . import actions  # runtime import: actions depends on this module

    budget = actions.default_budget(state.layout)
    for _ in range(horizon):
        if goal_satisfied(state, goal_spec):
            return True
        try:
            act = actions.expert_next_action(state, goal_spec)
        except actions.ExpertStuck:
            return False
        if actions.preconditions(act, observe(state)) is not None:
            return False
        state, outcome = actions.execute_macro(state, act, budget)
        if outcome.status != "completed":
            return False
    return goal_satisfied(state, goal_spec)


def generate_task(seed: int, level: str, layout: Optional[Layout] = None) -> TaskInstance:
    """Deterministically generate a solvable task for (seed, level).

    Draws are rejected until the expert policy solves the instance within
    the horizon without a single critic failure; exhausting the draw budget
    signals a generator bug rather than bad luck.
    """
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    if layout is None:
        layout = Layout(1, 1, 8, 8) if level == "synth" else Layout(2, 2, 8, 8)
    horizon = SYNTH_HORIZON if level == "synth" else BOSS_HORIZON
    rng = random.Random(seed)
    for _ in range(GENERATOR_MAX_DRAWS):
        state = _draw_synth_world(rng, layout) if level == "synth" else _draw_boss_world(rng, layout)
        drawn = _draw_goal(rng, state, level)
        if drawn is None:
            continue
        goal, spec = drawn
        if any(predicate_holds(state, p) for p in spec):
            continue
        if not _expert_solves(state, spec, horizon):
            continue
        return TaskInstance(seed, level, goal, spec, horizon, DEFAULT_DISCOUNT, state)
    raise RuntimeError(f"task generator exhausted {GENERATOR_MAX_DRAWS} draws for seed={seed} level={level}")
