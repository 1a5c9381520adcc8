"""Shoebox scene generation and flat-shaded observation rendering."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .materials import MaterialSpec, palette_array

ROOM_XY_RANGE = (2.0, 12.0)
ROOM_Z_RANGE = (2.0, 12.0)
WALL_MARGIN = 0.35
BOX_CLEARANCE = 0.25
MAX_BOXES = 3

WALL_NAMES = ("wall_x0", "wall_x1", "wall_y0", "wall_y1", "floor", "ceiling")


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    position: tuple  # min corner (x, y, z)
    size: tuple  # (sx, sy, sz)

    @property
    def max_corner(self):
        return tuple(p + s for p, s in zip(self.position, self.size))

    def contains(self, point, clearance: float = 0.0) -> bool:
        return all(
            p - clearance <= x <= q + clearance
            for x, q, p in zip(point, self.max_corner, self.position)
        )

    @property
    def surface_area(self) -> float:
        sx, sy, sz = self.size
        return 2.0 * (sx * sy + sx * sz + sy * sz)


@dataclass(frozen=True)
class Pose:
    position: tuple  # (x, y, z)
    yaw: float  # radians, 0 = +x


@dataclass(frozen=True)
class SceneSpec:
    room_dims: tuple
    boxes: tuple
    pose: Pose
    seed: int
    pose_variant: int = 0

    @property
    def scene_id(self) -> str:
        return f"scene{self.seed:06d}"

    @property
    def volume(self) -> float:
        lx, ly, lz = self.room_dims
        return lx * ly * lz

    @property
    def wall_area(self) -> float:
        lx, ly, lz = self.room_dims
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    @property
    def surfaces(self) -> tuple:
        """Paintable surface names: six walls plus one group per box."""
        return WALL_NAMES + tuple(f"box{i}" for i in range(len(self.boxes)))

    def validate(self):
        lx, ly, lz = self.room_dims
        p = self.pose.position
        if not (0 < p[0] < lx and 0 < p[1] < ly and 0 < p[2] < lz):
            raise SceneError("pose outside room")
        for box in self.boxes:
            if box.contains(p):
                raise SceneError("pose inside a box")
            if any(c < 0 for c in box.position) or any(
                m > d for m, d in zip(box.max_corner, self.room_dims)
            ):
                raise SceneError("box outside room")


@dataclass(frozen=True)
class MaterialAssignment:
    """surface name -> material id, covering every surface of a scene."""

    mapping: dict

    def validate(self, scene: SceneSpec, n_materials: int):
        missing = set(scene.surfaces) - set(self.mapping)
        if missing:
            raise SceneError(f"assignment missing surfaces: {sorted(missing)}")
        for surf, mid in self.mapping.items():
            if not (0 <= mid < n_materials):
                raise SceneError(f"invalid material id {mid} for {surf}")

    def content_key(self, scene: SceneSpec) -> tuple:
        return tuple(self.mapping[s] for s in scene.surfaces)


@dataclass
class SceneObservation:
    image: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float in [0, 1]
    mask: np.ndarray  # (H, W) int material indices


# Fixed per-surface scene appearance. V must stay independent of the material
# assignment: one image pairs with arbitrary masks, and only M may carry
# material information (otherwise a spatial-only model could read materials
# out of V and the disentanglement evaluation collapses).
SURFACE_BASE_COLORS = {
    "wall_x0": (200, 190, 170),
    "wall_x1": (185, 195, 205),
    "wall_y0": (205, 185, 190),
    "wall_y1": (190, 205, 185),
    "floor": (120, 110, 100),
    "ceiling": (235, 235, 235),
    "box0": (170, 140, 110),
    "box1": (150, 155, 120),
    "box2": (140, 125, 150),
}


def _sample_pose(rng, room_dims, boxes) -> Pose:
    lx, ly, lz = room_dims
    for _ in range(1000):
        pos = (
            rng.uniform(WALL_MARGIN, lx - WALL_MARGIN),
            rng.uniform(WALL_MARGIN, ly - WALL_MARGIN),
            rng.uniform(min(1.2, lz / 2), min(1.8, lz - WALL_MARGIN)),
        )
        if all(not b.contains(pos, clearance=BOX_CLEARANCE) for b in boxes):
            return Pose(pos, float(rng.uniform(0.0, 2.0 * np.pi)))
    raise SceneError("could not place pose outside boxes")


def generate_scene(
    seed: int,
    pose_variant: int = 0,
    xy_range: tuple = ROOM_XY_RANGE,
    z_range: tuple = ROOM_Z_RANGE,
) -> SceneSpec:
    """Deterministic shoebox scene with 0-3 occluder boxes.

    `pose_variant` re-draws only the viewpoint inside the same geometry, so
    variants share a scene_id.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC0FFEE]))
    dims = (
        float(rng.uniform(*xy_range)),
        float(rng.uniform(*xy_range)),
        float(rng.uniform(*z_range)),
    )
    n_boxes = int(rng.integers(0, MAX_BOXES + 1))
    boxes = []
    for _ in range(n_boxes):
        size = tuple(
            float(rng.uniform(0.4, min(1.6, d / 3.0))) for d in dims
        )
        pos = tuple(
            float(rng.uniform(WALL_MARGIN, d - WALL_MARGIN - s))
            for d, s in zip(dims, size)
        )
        boxes.append(Box(pos, size))
    if pose_variant == 0:
        pose_rng = rng
    else:
        pose_rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), 0xC0FFEE, int(pose_variant)])
        )
    pose = _sample_pose(pose_rng, dims, tuple(boxes))
    scene = SceneSpec(dims, tuple(boxes), pose, int(seed), int(pose_variant))
    scene.validate()
    return scene


def all_same_assignment(scene: SceneSpec, material_id: int) -> MaterialAssignment:
    return MaterialAssignment({s: material_id for s in scene.surfaces})


def _ray_room_exit(origin, dirs, room_dims):
    """Distance to the room shell and wall index for rays from inside.

    dirs: (n, 3) unit vectors. Returns (t, wall_idx) with wall_idx in 0..5
    ordered like WALL_NAMES.
    """
    n = dirs.shape[0]
    t_best = np.full(n, np.inf)
    wall = np.zeros(n, dtype=np.int64)
    for axis in range(3):
        d = dirs[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hi = np.where(d > 1e-12, (room_dims[axis] - origin[axis]) / d, np.inf)
            t_lo = np.where(d < -1e-12, (0.0 - origin[axis]) / d, np.inf)
        for t_axis, side in ((t_lo, 0), (t_hi, 1)):
            better = t_axis < t_best
            t_best = np.where(better, t_axis, t_best)
            if axis < 2:
                idx = 2 * axis + side
            else:
                idx = 4 + side  # floor, ceiling
            wall = np.where(better, idx, wall)
    return t_best, wall


def _ray_box_entry(origin, dirs, box: Box):
    """Slab-test entry distance into an axis-aligned box; inf when missed."""
    lo = np.asarray(box.position)
    hi = np.asarray(box.max_corner)
    t_near = np.full(dirs.shape[0], -np.inf)
    t_far = np.full(dirs.shape[0], np.inf)
    for axis in range(3):
        d = dirs[:, axis]
        safe = np.where(np.abs(d) < 1e-12, 1e-12, d)
        t1 = (lo[axis] - origin[axis]) / safe
        t2 = (hi[axis] - origin[axis]) / safe
        parallel = np.abs(d) < 1e-12
        inside_slab = (origin[axis] >= lo[axis]) & (origin[axis] <= hi[axis])
        t_lo_ax = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
        t_hi_ax = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = np.maximum(t_near, t_lo_ax)
        t_far = np.minimum(t_far, t_hi_ax)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    return np.where(hit, t_near, np.inf)


def render_observation(
    scene: SceneSpec,
    assignment: MaterialAssignment,
    catalog: list[MaterialSpec],
    size: int = 128,
) -> SceneObservation:
    """Ray-cast the scene with a 90-degree FoV pinhole camera.

    V colors each hit surface with its fixed scene color modulated by
    distance shading (never by the assignment); depth is true hit distance
    over the room diagonal; M is the hit surface's assigned material index.
    The three outputs are pixel-aligned.
    """
    assignment.validate(scene, len(catalog))
    h = w = size
    origin = np.asarray(scene.pose.position)
    yaw = scene.pose.yaw
    forward = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
    up = np.array([0.0, 0.0, 1.0])

    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    u = (jj.ravel() + 0.5) / w * 2.0 - 1.0
    v = 1.0 - (ii.ravel() + 0.5) / h * 2.0
    dirs = forward[None, :] + u[:, None] * right[None, :] + v[:, None] * up[None, :]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    t_hit, wall_idx = _ray_room_exit(origin, dirs, scene.room_dims)
    surface = wall_idx.copy()  # 0..5 walls, 6+ boxes
    for bi, box in enumerate(scene.boxes):
        t_box = _ray_box_entry(origin, dirs, box)
        closer = t_box < t_hit
        t_hit = np.where(closer, t_box, t_hit)
        surface = np.where(closer, 6 + bi, surface)

    surfaces = scene.surfaces
    material_of_surface = np.array(
        [assignment.mapping[s] for s in surfaces], dtype=np.int64
    )
    mask = material_of_surface[surface]

    diag = float(np.linalg.norm(scene.room_dims))
    depth = np.clip(t_hit / diag, 0.0, 1.0)
    shade = np.clip(0.35 + 0.65 * (1.0 - depth), 0.2, 1.0)
    base = np.array(
        [SURFACE_BASE_COLORS[s] for s in surfaces], dtype=np.float64
    )
    image = np.clip(base[surface] * shade[:, None], 0, 255).astype(np.uint8)

    return SceneObservation(
        image.reshape(h, w, 3), depth.reshape(h, w), mask.reshape(h, w)
    )


def mask_to_palette_image(mask: np.ndarray, catalog: list[MaterialSpec]) -> np.ndarray:
    """Material-index raster -> RGB palette image (the encoders' input form)."""
    return palette_array(catalog)[mask]


def scene_with_pose(scene: SceneSpec, pose: Pose) -> SceneSpec:
    return replace(scene, pose=pose)
