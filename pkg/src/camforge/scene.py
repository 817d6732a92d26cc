"""Procedural desk-scale environments and the auto-agent that walks them.

World frame: x east, y up, z north; the floor is the plane y = 0. All
geometry is axis-aligned boxes; a box with zero extent on one axis is a
plane.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from camforge.errors import EmptyScene, InfeasibleSpec

# semantic ids: 0 background, 1..10 object classes, then structure
OBJECT_CLASSES = (
    "sofa", "bed", "table", "chair", "bathtub",
    "basin", "tv", "plant", "lamp", "toy",
)
OBSTACLE_CLASS = 11
FLOOR_CLASS = 12
WALL_CLASS = 13
CEILING_CLASS = 14
BUILDING_CLASS = 15
TARGET_CLASS = 16

DAY_LUX = 20.0
NIGHT_LUX = 2.0

# (x, y, z) footprint in meters and base albedo per object class
_CLASS_SIZE = {
    1: (2.0, 0.85, 0.9), 2: (2.0, 0.6, 1.6), 3: (1.2, 0.75, 0.8),
    4: (0.5, 0.95, 0.5), 5: (1.7, 0.6, 0.8), 6: (0.6, 0.9, 0.5),
    7: (1.0, 1.1, 0.3), 8: (0.5, 1.3, 0.5), 9: (0.4, 1.6, 0.4),
    10: (0.35, 0.35, 0.35),
}
_CLASS_ALBEDO = {
    1: (0.55, 0.25, 0.2), 2: (0.75, 0.7, 0.55), 3: (0.5, 0.35, 0.2),
    4: (0.3, 0.45, 0.6), 5: (0.85, 0.85, 0.85), 6: (0.8, 0.8, 0.75),
    7: (0.15, 0.15, 0.18), 8: (0.2, 0.55, 0.2), 9: (0.85, 0.75, 0.3),
    10: (0.8, 0.2, 0.5),
}
OBSTACLE_ALBEDO = (0.85, 0.65, 0.15)  # gold


class SceneKind(enum.Enum):
    INDOOR = "indoor"
    OUTDOOR_STRIP = "outdoor_strip"
    TARGET = "target"


class Texture(enum.IntEnum):
    FLAT = 0
    CHECKER = 1
    STRIPES = 2
    NOISE = 3


@dataclass(frozen=True)
class SceneSpec:
    kind: SceneKind = SceneKind.INDOOR
    extent_m: tuple[float, float, float] = (15.0, 15.0, 3.0)
    min_room_length_m: float = 5.0
    object_class_count: int = 10
    obstacle_height_m: float = 0.12
    seed: int = 0
    illuminance_lux: float = DAY_LUX
    texture_freq: float = 8.0
    door_width_m: float = 1.0

    def __post_init__(self):
        if self.kind is SceneKind.TARGET:
            raise InfeasibleSpec("colorbar targets come from make_colorbar_target")
        if min(self.extent_m) <= 0:
            raise InfeasibleSpec(f"extent must be positive, got {self.extent_m}")
        if self.kind is SceneKind.INDOOR:
            w, l, _ = self.extent_m
            if self.min_room_length_m > min(w, l):
                raise InfeasibleSpec("min_room_length_m exceeds the extent")
        if not 1 <= self.object_class_count <= len(OBJECT_CLASSES):
            raise InfeasibleSpec("object_class_count must be in [1, 10]")


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    class_id: int
    instance_id: int
    albedo: tuple[float, float, float]
    texture: Texture = Texture.FLAT
    tex_freq: float = 0.0
    tex_contrast: float = 0.0

    def contains_xz(self, x: float, z: float, pad: float = 0.0) -> bool:
        return (self.lo[0] - pad <= x <= self.hi[0] + pad
                and self.lo[2] - pad <= z <= self.hi[2] + pad)

    def contains(self, p) -> bool:
        return all(self.lo[a] < p[a] < self.hi[a] for a in range(3))


@dataclass(frozen=True)
class Light:
    position: tuple[float, float, float]
    intensity: float  # illuminance in lux at 1 m, normal incidence


@dataclass(frozen=True)
class Room:
    x0: float
    z0: float
    x1: float
    z1: float

    @property
    def center(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.z0 + self.z1))

    @property
    def sides(self):
        return (self.x1 - self.x0, self.z1 - self.z0)


@dataclass(frozen=True)
class Door:
    rooms: tuple[int, int]
    axis: int  # 0: wall normal along x (wall at x = coord), 2: along z
    coord: float
    center: float  # position along the wall
    width: float


@dataclass(frozen=True)
class GTBox:
    instance_id: int
    class_id: int
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @property
    def depth(self) -> float:
        """Distance of the near face from the path origin (outdoor strip)."""
        return self.lo[2]


@dataclass(frozen=True)
class SceneInstance:
    kind: SceneKind
    extent_m: tuple[float, float, float]
    primitives: tuple[Box, ...]
    lights: tuple[Light, ...]
    ambient: float
    sky: float
    obstacles: tuple[int, ...]  # instance ids
    gt_boxes: tuple[GTBox, ...]
    rooms: tuple[Room, ...] = ()
    doors: tuple[Door, ...] = ()
    illuminance_lux: float = DAY_LUX
    seed: int = 0

    @cached_property
    def arrays(self) -> dict:
        p = self.primitives
        return {
            "lo": np.array([b.lo for b in p], dtype=np.float64).reshape(-1, 3),
            "hi": np.array([b.hi for b in p], dtype=np.float64).reshape(-1, 3),
            "albedo": np.array([b.albedo for b in p], dtype=np.float64).reshape(-1, 3),
            "texture": np.array([int(b.texture) for b in p], dtype=np.int64),
            "tex_freq": np.array([b.tex_freq for b in p], dtype=np.float64),
            "tex_contrast": np.array([b.tex_contrast for b in p], dtype=np.float64),
            "class_id": np.array([b.class_id for b in p], dtype=np.int64),
            "instance_id": np.array([b.instance_id for b in p], dtype=np.int64),
        }

    def obstacle_box(self, instance_id: int) -> Box:
        for b in self.primitives:
            if b.instance_id == instance_id:
                return b
        raise KeyError(instance_id)

    def room_of(self, x: float, z: float) -> int:
        for i, r in enumerate(self.rooms):
            if r.x0 <= x <= r.x1 and r.z0 <= z <= r.z1:
                return i
        return -1

    def with_illuminance(self, lux: float) -> "SceneInstance":
        """Same geometry under another illumination preset."""
        s = lux / self.illuminance_lux
        lights = tuple(Light(l.position, l.intensity * s) for l in self.lights)
        return SceneInstance(
            self.kind, self.extent_m, self.primitives, lights, self.ambient * s,
            self.sky * s, self.obstacles, self.gt_boxes, self.rooms, self.doors, lux, self.seed,
        )

    def mesh_listing(self) -> str:
        """Plain-text debug dump, one primitive per line."""
        lines = ["# instance class lo_x lo_y lo_z hi_x hi_y hi_z r g b texture freq contrast"]
        for b in self.primitives:
            vals = [*b.lo, *b.hi, *b.albedo]
            lines.append(
                f"{b.instance_id} {b.class_id} " + " ".join(f"{v:.4f}" for v in vals)
                + f" {b.texture.name.lower()} {b.tex_freq:g} {b.tex_contrast:g}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AgentStep:
    x: float
    z: float
    yaw_deg: float
    camera_height_m: float

    @property
    def position(self):
        return (self.x, self.camera_height_m, self.z)


@dataclass(frozen=True)
class AgentPath:
    steps: tuple[AgentStep, ...]
    crossing: tuple[int, ...]  # obstacle instance id crossed at this step, else -1
    approaching: tuple[int, ...]  # obstacle id within the 1 m approach window, else -1

    def __len__(self):
        return len(self.steps)

    def crossing_steps(self) -> dict[int, int]:
        """First crossing step per obstacle id."""
        out: dict[int, int] = {}
        for i, o in enumerate(self.crossing):
            if o >= 0 and o not in out:
                out[o] = i
        return out

    def crossing_events(self):
        """(obstacle id, crossing step, approach steps) for every crossing,
        including repeated crossings of the same obstacle."""
        out = []
        for i, o in enumerate(self.crossing):
            if o >= 0 and (i == 0 or self.crossing[i - 1] != o):
                j = i
                while j > 0 and self.approaching[j - 1] == o:
                    j -= 1
                out.append((o, i, tuple(range(j, i))))
        return out


# ---------------------------------------------------------------- indoor


def _bsp_rooms(rng, w, l, min_len):
    rooms = []

    def split(x0, z0, x1, z1, depth):
        can_x = (x1 - x0) >= 2 * min_len
        can_z = (z1 - z0) >= 2 * min_len
        if not (can_x or can_z) or (depth > 0 and rng.random() < 0.25):
            rooms.append(Room(x0, z0, x1, z1))
            return
        if can_x and can_z:
            axis = 0 if (x1 - x0) >= (z1 - z0) else 2
        else:
            axis = 0 if can_x else 2
        if axis == 0:
            c = round(float(rng.uniform(x0 + min_len, x1 - min_len)), 1)
            split(x0, z0, c, z1, depth + 1)
            split(c, z0, x1, z1, depth + 1)
        else:
            c = round(float(rng.uniform(z0 + min_len, z1 - min_len)), 1)
            split(x0, z0, x1, c, depth + 1)
            split(x0, c, x1, z1, depth + 1)

    split(0.0, 0.0, w, l, 0)
    return rooms


def _shared_walls(rooms, min_overlap):
    """(i, j, axis, coord, a0, a1) for every pair of rooms sharing a wall."""
    out = []
    for i, a in enumerate(rooms):
        for j in range(i + 1, len(rooms)):
            b = rooms[j]
            for lo_a, hi_b, axis in ((a.x1, b.x0, 0), (b.x1, a.x0, 0), (a.z1, b.z0, 2), (b.z1, a.z0, 2)):
                if abs(lo_a - hi_b) > 1e-9:
                    continue
                if axis == 0:
                    s0, s1 = max(a.z0, b.z0), min(a.z1, b.z1)
                else:
                    s0, s1 = max(a.x0, b.x0), min(a.x1, b.x1)
                if s1 - s0 >= min_overlap:
                    out.append((i, j, axis, lo_a, s0, s1))
    return out


def _spanning_doors(rng, rooms, door_w):
    margin = 0.6
    walls = _shared_walls(rooms, door_w + 2 * margin + 0.5)
    order = rng.permutation(len(walls))
    parent = list(range(len(rooms)))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    doors = []
    for k in order:
        i, j, axis, coord, s0, s1 = walls[k]
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        parent[ri] = rj
        c = round(float(rng.uniform(s0 + margin + door_w / 2, s1 - margin - door_w / 2)), 2)
        doors.append(Door((i, j), axis, coord, c, door_w))
    if len({find(i) for i in range(len(rooms))}) != 1:
        raise InfeasibleSpec("rooms could not be connected by doors")
    return doors


def _merge(intervals):
    out = []
    for a0, a1 in sorted(intervals):
        if out and a0 <= out[-1][1] + 1e-9:
            out[-1][1] = max(out[-1][1], a1)
        else:
            out.append([a0, a1])
    return out


def _subtract(intervals, holes):
    out = []
    for a0, a1 in intervals:
        pieces = [(a0, a1)]
        for h0, h1 in holes:
            nxt = []
            for p0, p1 in pieces:
                if h1 <= p0 or h0 >= p1:
                    nxt.append((p0, p1))
                    continue
                if h0 > p0:
                    nxt.append((p0, h0))
                if h1 < p1:
                    nxt.append((h1, p1))
            pieces = nxt
        out.extend(p for p in pieces if p[1] - p[0] > 1e-6)
    return out


def _wall_boxes(rooms, doors, height, thickness, freq, next_id):
    lines: dict[tuple[int, float], list] = {}
    for r in rooms:
        lines.setdefault((0, r.x0), []).append((r.z0, r.z1))
        lines.setdefault((0, r.x1), []).append((r.z0, r.z1))
        lines.setdefault((2, r.z0), []).append((r.x0, r.x1))
        lines.setdefault((2, r.z1), []).append((r.x0, r.x1))
    boxes = []
    h = thickness / 2
    for (axis, coord) in sorted(lines):
        holes = [(d.center - d.width / 2, d.center + d.width / 2)
                 for d in doors if d.axis == axis and abs(d.coord - coord) < 1e-9]
        for a0, a1 in _subtract(_merge(lines[(axis, coord)]), holes):
            if axis == 0:
                lo, hi = (coord - h, 0.0, a0), (coord + h, height, a1)
            else:
                lo, hi = (a0, 0.0, coord - h), (a1, height, coord + h)
            boxes.append(Box(lo, hi, WALL_CLASS, next_id(), (0.7, 0.68, 0.62),
                             Texture.NOISE, freq / 4, 0.6))
    return boxes


def _door_clearance(door: Door, radius: float):
    if door.axis == 0:
        return (door.coord, door.center, radius)
    return (door.center, door.coord, radius)


def _place_objects(rng, rooms, doors, n_classes, freq, next_id):
    boxes, gts = [], []
    clear = [_door_clearance(d, 1.6) for d in doors]
    for r in rooms:
        cx, cz = r.center
        placed: list[Box] = []
        for _ in range(int(rng.integers(4, 9))):
            cls = int(rng.integers(1, n_classes + 1))
            sx, sy, sz = _CLASS_SIZE[cls]
            if rng.random() < 0.5:
                sx, sz = sz, sx
            for _attempt in range(30):
                x0 = float(rng.uniform(r.x0 + 0.3, r.x1 - 0.3 - sx))
                z0 = float(rng.uniform(r.z0 + 0.3, r.z1 - 0.3 - sz))
                x1, z1 = x0 + sx, z0 + sz
                # keep the room center and door approaches walkable
                if x0 - 0.9 < cx < x1 + 0.9 and z0 - 0.9 < cz < z1 + 0.9:
                    continue
                if any(x0 - rad < px < x1 + rad and z0 - rad < pz < z1 + rad for px, pz, rad in clear):
                    continue
                if any(x0 < b.hi[0] + 0.5 and b.lo[0] - 0.5 < x1 and z0 < b.hi[2] + 0.5 and b.lo[2] - 0.5 < z1
                       for b in placed):
                    continue
                iid = next_id()
                albedo = tuple(float(np.clip(a * rng.uniform(0.85, 1.15), 0.02, 0.95)) for a in _CLASS_ALBEDO[cls])
                box = Box((round(x0, 3), 0.0, round(z0, 3)), (round(x1, 3), sy, round(z1, 3)),
                          cls, iid, albedo, Texture.NOISE, freq / 2, 0.45)
                placed.append(box)
                gts.append(GTBox(iid, cls, box.lo, box.hi))
                break
        boxes.extend(placed)
    return boxes, gts


def _generate_indoor(spec: SceneSpec) -> SceneInstance:
    w, l, height = spec.extent_m
    if w < 2 * spec.min_room_length_m and l < 2 * spec.min_room_length_m:
        raise InfeasibleSpec(
            f"extent {w}x{l} cannot fit two rooms of min length {spec.min_room_length_m}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x1D00]))
    counter = iter(range(1, 1 << 30))

    def next_id():
        return next(counter)

    rooms = _bsp_rooms(rng, w, l, spec.min_room_length_m)
    doors = _spanning_doors(rng, rooms, spec.door_width_m)
    freq = spec.texture_freq
    lux = spec.illuminance_lux

    prims = [
        Box((0.0, 0.0, 0.0), (w, 0.0, l), FLOOR_CLASS, next_id(), (0.55, 0.5, 0.45), Texture.NOISE, freq, 0.5),
        Box((0.0, height, 0.0), (w, height, l), CEILING_CLASS, next_id(), (0.8, 0.8, 0.8)),
    ]
    prims += _wall_boxes(rooms, doors, height, 0.1, freq, next_id)

    obstacles = []
    for d in doors:
        iid = next_id()
        hw, th = d.width / 2, 0.1
        if d.axis == 0:
            lo, hi = (d.coord - th, 0.0, d.center - hw), (d.coord + th, spec.obstacle_height_m, d.center + hw)
        else:
            lo, hi = (d.center - hw, 0.0, d.coord - th), (d.center + hw, spec.obstacle_height_m, d.coord + th)
        prims.append(Box(lo, hi, OBSTACLE_CLASS, iid, OBSTACLE_ALBEDO, Texture.STRIPES, freq / 2, 0.3))
        obstacles.append(iid)

    objs, gts = _place_objects(rng, rooms, doors, spec.object_class_count, freq, next_id)
    prims += objs
    lights = tuple(
        Light((r.center[0], height - 0.05, r.center[1]), 0.5 * lux * (height - 0.05) ** 2) for r in rooms
    )
    return SceneInstance(
        SceneKind.INDOOR, tuple(spec.extent_m), tuple(prims), lights, 0.5 * lux, 0.0,
        tuple(obstacles), tuple(gts), tuple(rooms), tuple(doors), lux, spec.seed,
    )


# ---------------------------------------------------------------- outdoor


def _generate_outdoor(spec: SceneSpec) -> SceneInstance:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x0D00]))
    counter = iter(range(1, 1 << 30))
    lux = spec.illuminance_lux
    prims = [
        Box((-80.0, 0.0, -20.0), (80.0, 0.0, 420.0), FLOOR_CLASS, next(counter),
            (0.35, 0.34, 0.33), Texture.NOISE, 0.5, 0.6),
    ]
    gts = []

    def add(lo, hi, cls, albedo, tex, f, c):
        iid = next(counter)
        box = Box(tuple(round(v, 3) for v in lo), tuple(round(v, 3) for v in hi), cls, iid, albedo, tex, f, c)
        prims.append(box)
        gts.append(GTBox(iid, cls, box.lo, box.hi))

    for side in (-1.0, 1.0):
        z = float(rng.uniform(2.0, 4.5))
        while z < 270.0:
            depth = float(rng.uniform(6.0, 20.0))
            near = float(rng.uniform(12.0, 25.0))
            width = float(rng.uniform(6.0, 15.0))
            h = float(rng.uniform(6.0, 30.0))
            x0, x1 = (near, near + width) if side > 0 else (-near - width, -near)
            albedo = tuple(float(v) for v in rng.uniform(0.25, 0.8, 3))
            add((x0, 0.0, z), (x1, h, z + depth), BUILDING_CLASS, albedo, Texture.NOISE,
                float(rng.uniform(0.5, 1.0)), 0.8)
            z += depth + float(rng.uniform(1.0, 6.0))
        # poles and parked cars close to the curb
        z = float(rng.uniform(2.0, 5.0))
        while z < 120.0:
            x = side * float(rng.uniform(4.0, 8.0))
            if rng.random() < 0.5:
                add((x - 0.15, 0.0, z), (x + 0.15, 4.0, z + 0.3), 9, (0.6, 0.6, 0.62), Texture.NOISE, 4.0, 0.5)
            else:
                add((x - 0.9, 0.0, z), (x + 0.9, 1.5, z + 4.2), 4, tuple(float(v) for v in rng.uniform(0.1, 0.9, 3)),
                    Texture.NOISE, 2.0, 0.4)
            z += float(rng.uniform(8.0, 25.0))
    # backdrop across the road
    x = -80.0
    while x < 80.0:
        width = float(rng.uniform(10.0, 30.0))
        z0 = float(rng.uniform(270.0, 300.0))
        add((x, 0.0, z0), (x + width, float(rng.uniform(25.0, 70.0)), z0 + 20.0), BUILDING_CLASS,
            tuple(float(v) for v in rng.uniform(0.3, 0.8, 3)), Texture.NOISE, 0.3, 0.5)
        x += width
    sun = (300.0, 600.0, -200.0)
    r2 = sum(v * v for v in sun)
    return SceneInstance(
        SceneKind.OUTDOOR_STRIP, tuple(spec.extent_m), tuple(prims), (Light(sun, 0.6 * lux * r2),),
        0.4 * lux, 1.6 * lux, (), tuple(gts), (), (), lux, spec.seed,
    )


def generate_scene(spec: SceneSpec) -> SceneInstance:
    """Deterministic procedural scene for ``spec`` (including its seed)."""
    if spec.kind is SceneKind.INDOOR:
        return _generate_indoor(spec)
    return _generate_outdoor(spec)


def make_colorbar_target(n_levels: int, distance_m: float = 0.5, width_m: float = 0.44,
                         height_m: float = 0.2, illuminance_lux: float = DAY_LUX) -> SceneInstance:
    """Fronto-parallel plane of ``n_levels`` uniform grey bars, black to white.

    The target faces a camera at the origin looking along +z and is lit by
    uniform ambient light only.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be >= 2")
    bar = width_m / n_levels
    prims = []
    for k in range(n_levels):
        a = k / (n_levels - 1)
        x0 = -width_m / 2 + k * bar
        prims.append(Box((x0, -height_m / 2, distance_m), (x0 + bar, height_m / 2, distance_m),
                         TARGET_CLASS, k + 1, (a, a, a)))
    return SceneInstance(
        SceneKind.TARGET, (width_m, height_m, distance_m), tuple(prims), (), illuminance_lux, 0.0,
        (), (), illuminance_lux=illuminance_lux,
    )


# ---------------------------------------------------------------- agent


class _Grid:
    def __init__(self, scene: SceneInstance, res: float, inflate: float):
        w, l, _ = scene.extent_m
        self.res = res
        self.nx = int(math.ceil(w / res))
        self.nz = int(math.ceil(l / res))
        xs = (np.arange(self.nx) + 0.5) * res
        zs = (np.arange(self.nz) + 0.5) * res
        gx, gz = np.meshgrid(xs, zs, indexing="ij")
        blocked = (gx < inflate) | (gx > w - inflate) | (gz < inflate) | (gz > l - inflate)
        for b in scene.primitives:
            if b.class_id in (FLOOR_CLASS, CEILING_CLASS, OBSTACLE_CLASS):
                continue
            blocked |= ((gx > b.lo[0] - inflate) & (gx < b.hi[0] + inflate)
                        & (gz > b.lo[2] - inflate) & (gz < b.hi[2] + inflate))
        self.blocked = blocked

    def cell(self, x, z):
        return (min(max(int(x / self.res), 0), self.nx - 1), min(max(int(z / self.res), 0), self.nz - 1))

    def center(self, c):
        return ((c[0] + 0.5) * self.res, (c[1] + 0.5) * self.res)

    def nearest_free(self, x, z):
        c0 = self.cell(x, z)
        if not self.blocked[c0]:
            return c0
        free = np.argwhere(~self.blocked)
        d = (free[:, 0] - c0[0]) ** 2 + (free[:, 1] - c0[1]) ** 2
        return tuple(int(v) for v in free[int(np.argmin(d))])

    def bfs(self, a, b):
        prev = {a: None}
        q = deque([a])
        nbrs = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
        while q:
            c = q.popleft()
            if c == b:
                break
            for dx, dz in nbrs:
                n = (c[0] + dx, c[1] + dz)
                if not (0 <= n[0] < self.nx and 0 <= n[1] < self.nz) or n in prev or self.blocked[n]:
                    continue
                if dx and dz and (self.blocked[c[0] + dx, c[1]] or self.blocked[c[0], c[1] + dz]):
                    continue
                prev[n] = c
                q.append(n)
        if b not in prev:
            return None
        out = []
        c = b
        while c is not None:
            out.append(c)
            c = prev[c]
        return out[::-1]

    def line_free(self, p, q):
        n = int(math.ceil(math.dist(p, q) / (self.res / 2))) + 1
        for t in np.linspace(0.0, 1.0, n):
            if self.blocked[self.cell(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))]:
                return False
        return True

    def route(self, p, q):
        cells = self.bfs(self.nearest_free(*p), self.nearest_free(*q))
        if cells is None:
            return None
        pts = [p] + [self.center(c) for c in cells[1:-1]] + [q]
        # string pulling
        out = [pts[0]]
        i = 0
        while i < len(pts) - 1:
            j = len(pts) - 1
            while j > i + 1 and not self.line_free(pts[i], pts[j]):
                j -= 1
            out.append(pts[j])
            i = j
        return out


def _door_points(door: Door, toward_room: int, scene: SceneInstance, offset: float):
    """Approach point ``offset`` m from the door on the side of ``toward_room``."""
    r = scene.rooms[toward_room]
    if door.axis == 0:
        s = 1.0 if r.center[0] > door.coord else -1.0
        return (door.coord + s * offset, door.center)
    s = 1.0 if r.center[1] > door.coord else -1.0
    return (door.center, door.coord + s * offset)


def _tour(scene: SceneInstance, start: int):
    """Euler tour of the door tree: list of (door index, from room, to room)."""
    adj: dict[int, list] = {i: [] for i in range(len(scene.rooms))}
    for k, d in enumerate(scene.doors):
        a, b = d.rooms
        adj[a].append((k, b))
        adj[b].append((k, a))
    moves = []

    def visit(u, parent):
        for k, v in sorted(adj[u]):
            if v == parent:
                continue
            moves.append((k, u, v))
            visit(v, u)
            moves.append((k, v, u))

    visit(start, -1)
    return moves


def _resample(polyline, step):
    pts = np.asarray(polyline, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-9])
    pts = pts[keep]
    seg = seg[seg > 1e-9]
    s = np.concatenate([[0.0], np.cumsum(seg)])
    samples = np.arange(0.0, s[-1] + 1e-9, step)
    x = np.interp(samples, s, pts[:, 0])
    z = np.interp(samples, s, pts[:, 1])
    return np.stack([x, z], axis=1)


def _outdoor_path(n_steps, rng, step_m):
    steps = tuple(AgentStep(0.0, i * step_m, 0.0, 2.0) for i in range(n_steps))
    return AgentPath(steps, (-1,) * n_steps, (-1,) * n_steps)


def plan_path(scene: SceneInstance, n_steps: int, seed: int, step_m: float = 0.2,
              height_range=(1.0, 2.0)) -> AgentPath:
    """Walk the scene for ``n_steps`` steps of ``step_m`` meters.

    Indoors the agent tours every room through the door tree, stepping over
    each threshold; the camera height is redrawn every step.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not scene.primitives:
        raise EmptyScene("scene has no primitives")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA6E7]))
    if scene.kind is not SceneKind.INDOOR:
        return _outdoor_path(n_steps, rng, step_m)
    if not scene.rooms:
        raise EmptyScene("indoor scene has no rooms")

    grid = _Grid(scene, 0.1, 0.3)
    start = int(rng.integers(len(scene.rooms)))
    moves = _tour(scene, start)
    poly = [scene.rooms[start].center]
    while True:
        for k, u, v in moves:
            d = scene.doors[k]
            a = _door_points(d, u, scene, 1.2)
            c = _door_points(d, v, scene, 0.0)
            b = _door_points(d, v, scene, 1.2)
            leg = grid.route(poly[-1], a)
            if leg is None:
                raise EmptyScene(f"door {k} unreachable")
            poly += leg[1:] + [c, b]
            leg = grid.route(b, scene.rooms[v].center)
            if leg is None:
                raise EmptyScene(f"room {v} unreachable")
            poly += leg[1:]
        if not moves:
            # single room: wander around its center
            x, z = scene.rooms[start].center
            poly += [(x + 1.0, z), (x, z + 1.0), (x - 1.0, z), (x, z - 1.0), (x, z)]
        pts = _resample(poly, step_m)
        if len(pts) >= n_steps + 3:
            break
    pts = pts[: n_steps + 3]
    look = pts[3:] - pts[:-3]
    yaw = np.degrees(np.arctan2(look[:, 0], look[:, 1]))
    heights = rng.uniform(height_range[0], height_range[1], n_steps)

    steps, crossing, approaching = [], [], []
    obstacles = [scene.obstacle_box(o) for o in scene.obstacles]
    for i in range(n_steps):
        x, z = float(pts[i, 0]), float(pts[i, 1])
        steps.append(AgentStep(round(x, 6), round(z, 6), round(float(yaw[i]), 6), round(float(heights[i]), 6)))
        cross = -1
        near = -1
        for ob in obstacles:
            if ob.contains_xz(x, z, pad=0.1):
                cross = ob.instance_id
            elif ob.contains_xz(x, z, pad=1.0):
                near = ob.instance_id
        crossing.append(cross)
        approaching.append(near)
    # the approach window only counts on the way in
    horizon = int(math.ceil(1.5 / step_m))
    for i in range(n_steps):
        o = approaching[i]
        if o >= 0 and o not in crossing[i + 1: i + 1 + horizon]:
            approaching[i] = -1
    return AgentPath(tuple(steps), tuple(crossing), tuple(approaching))

