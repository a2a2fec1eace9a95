"""Static planar world: arena bounds, obstacles, collision and depth-ray queries.

All geometry is strictly two-dimensional.  The vehicle flies at a fixed
altitude through a field of full-height obstacles, so the depth camera's
vertical rows carry no independent occlusion information: each row reuses the
planar ray for its column and applies a slant correction of
``planar_distance / cos(elevation)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Point = tuple[float, float]

CYLINDER = "cylinder"
BOX = "box"


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]`` in metres."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise ValueError(f"rectangle has negative extent: {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def contains_rect(self, other: "Rect") -> bool:
        return (self.xmin <= other.xmin and other.xmax <= self.xmax
                and self.ymin <= other.ymin and other.ymax <= self.ymax)

    def sample(self, rng: np.random.Generator) -> Point:
        """Uniform point; degenerate (zero-area) rectangles are fine."""
        return (float(rng.uniform(self.xmin, self.xmax)),
                float(rng.uniform(self.ymin, self.ymax)))

    def corners(self) -> np.ndarray:
        return np.array([(self.xmin, self.ymin), (self.xmax, self.ymin),
                         (self.xmax, self.ymax), (self.xmin, self.ymax)])


@dataclass(frozen=True)
class Obstacle:
    """A full-height obstacle footprint: a disc (``cylinder``) or an oriented box."""

    kind: str
    center: Point
    radius: float = 0.0
    half_extents: Point = (0.0, 0.0)
    yaw: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == CYLINDER:
            if self.radius <= 0.0:
                raise ValueError(f"cylinder radius must be positive, got {self.radius}")
        elif self.kind == BOX:
            if min(self.half_extents) <= 0.0:
                raise ValueError(f"box half extents must be positive, got {self.half_extents}")
        else:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")

    def corners(self) -> np.ndarray:
        """World-frame corner points (boxes only)."""
        if self.kind != BOX:
            raise ValueError("corners() is only defined for box obstacles")
        hx, hy = self.half_extents
        local = np.array([(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([(c, -s), (s, c)])
        return local @ rot.T + np.asarray(self.center)

    def bounding_rect(self) -> Rect:
        if self.kind == CYLINDER:
            cx, cy = self.center
            r = self.radius
            return Rect(cx - r, cy - r, cx + r, cy + r)
        pts = self.corners()
        return Rect(float(pts[:, 0].min()), float(pts[:, 1].min()),
                    float(pts[:, 0].max()), float(pts[:, 1].max()))


@dataclass(frozen=True)
class CameraConfig:
    """Depth camera intrinsics.

    Columns sweep the horizontal field of view left to right, rows sweep the
    vertical field of view top to bottom; each cell's direction is the centre
    of its angular bin.
    """

    h_fov_deg: float = 90.0
    v_fov_deg: float = 60.0
    rows: int = 9
    cols: int = 12
    max_range: float = 10.0

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"camera needs at least one row and column, got {self.rows}x{self.cols}")
        if not (0.0 < self.h_fov_deg < 180.0 and 0.0 < self.v_fov_deg < 180.0):
            raise ValueError("fields of view must lie in (0, 180) degrees")
        if self.max_range <= 0.0:
            raise ValueError(f"max_range must be positive, got {self.max_range}")


@dataclass(frozen=True)
class WorldConfig:
    """Immutable world description shared by every episode of a run."""

    arena: Rect
    obstacles: tuple[Obstacle, ...] = ()
    start_region: Rect = Rect(0.0, 0.0, 0.0, 0.0)
    goal_region: Rect = Rect(0.0, 0.0, 0.0, 0.0)
    goal_radius: float = 0.5
    vehicle_radius: float = 0.3
    altitude: float = 2.0
    camera: CameraConfig = field(default_factory=CameraConfig)

    @property
    def arena_diagonal(self) -> float:
        return math.hypot(self.arena.width, self.arena.height)


# ---------------------------------------------------------------------------
# Point queries


def obstacle_clearance(p: Point, obstacle: Obstacle) -> float:
    """Euclidean distance from ``p`` to the obstacle footprint (0 inside)."""
    px, py = p
    cx, cy = obstacle.center
    if obstacle.kind == CYLINDER:
        return max(0.0, math.hypot(px - cx, py - cy) - obstacle.radius)
    c, s = math.cos(obstacle.yaw), math.sin(obstacle.yaw)
    # Rotate the query point into the box frame.
    lx = c * (px - cx) + s * (py - cy)
    ly = -s * (px - cx) + c * (py - cy)
    hx, hy = obstacle.half_extents
    dx = max(abs(lx) - hx, 0.0)
    dy = max(abs(ly) - hy, 0.0)
    return math.hypot(dx, dy)


def point_in_obstacle(p: Point, obstacle: Obstacle, inflation: float = 0.0) -> bool:
    """True iff ``p`` lies within the footprint inflated by ``inflation`` metres."""
    return obstacle_clearance(p, obstacle) <= inflation


def wall_clearance(p: Point, world: WorldConfig) -> float:
    """Distance from ``p`` to the nearest arena wall; negative outside the arena."""
    a = world.arena
    return min(p[0] - a.xmin, a.xmax - p[0], p[1] - a.ymin, a.ymax - p[1])


def collision(p: Point, world: WorldConfig) -> bool:
    """Vehicle-disc collision test at position ``p``.

    Collides when the disc of ``vehicle_radius`` overlaps any obstacle
    footprint or the arena boundary (leaving the arena also counts).
    """
    if wall_clearance(p, world) <= world.vehicle_radius:
        return True
    return any(point_in_obstacle(p, o, world.vehicle_radius) for o in world.obstacles)


# ---------------------------------------------------------------------------
# Ray queries
#
# All ray casts reduce to first-hit parameters t >= 0 along unit direction
# vectors, vectorized over a fan of directions from a single origin.


def _slab_interval(origin: float, d: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Entry/exit parameters of rays against the slab ``lo <= coord <= hi``.

    ``d`` may contain exact zeros: a ray parallel to the slab either never
    constrains the interval (origin inside) or can never hit (origin outside).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / d
        t2 = (hi - origin) / d
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    zero = d == 0.0
    if zero.any():
        inside = lo <= origin <= hi
        tmin = np.where(zero, -np.inf if inside else np.inf, tmin)
        tmax = np.where(zero, np.inf if inside else -np.inf, tmax)
    return tmin, tmax


def _aabb_hit(ox: float, oy: float, dx: np.ndarray, dy: np.ndarray,
              xlo: float, xhi: float, ylo: float, yhi: float) -> np.ndarray:
    """First boundary crossing of an axis-aligned box (exit if inside), inf if none."""
    txmin, txmax = _slab_interval(ox, dx, xlo, xhi)
    tymin, tymax = _slab_interval(oy, dy, ylo, yhi)
    t_near = np.maximum(txmin, tymin)
    t_far = np.minimum(txmax, tymax)
    hit = (t_near <= t_far) & (t_far >= 0.0)
    t = np.where(t_near >= 0.0, t_near, t_far)
    return np.where(hit, t, np.inf)


def _cylinder_hit(ox: float, oy: float, dx: np.ndarray, dy: np.ndarray,
                  obstacle: Obstacle) -> np.ndarray:
    cx, cy = obstacle.center
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - obstacle.radius ** 2
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_in = -b - sq
    t_out = -b + sq
    t = np.where(t_in >= 0.0, t_in, np.where(t_out >= 0.0, t_out, np.inf))
    return np.where(disc >= 0.0, t, np.inf)


def _box_hit(ox: float, oy: float, dx: np.ndarray, dy: np.ndarray,
             obstacle: Obstacle) -> np.ndarray:
    cx, cy = obstacle.center
    c, s = math.cos(obstacle.yaw), math.sin(obstacle.yaw)
    # Ray in the box frame.
    lx = c * (ox - cx) + s * (oy - cy)
    ly = -s * (ox - cx) + c * (oy - cy)
    ldx = c * dx + s * dy
    ldy = -s * dx + c * dy
    hx, hy = obstacle.half_extents
    return _aabb_hit(lx, ly, ldx, ldy, -hx, hx, -hy, hy)


def _first_hits(ox: float, oy: float, dx: np.ndarray, dy: np.ndarray,
                world: WorldConfig) -> np.ndarray:
    """Unclipped first-hit parameter per ray against walls and obstacles."""
    a = world.arena
    t = _aabb_hit(ox, oy, dx, dy, a.xmin, a.xmax, a.ymin, a.ymax)
    for o in world.obstacles:
        if o.kind == CYLINDER:
            t = np.minimum(t, _cylinder_hit(ox, oy, dx, dy, o))
        else:
            t = np.minimum(t, _box_hit(ox, oy, dx, dy, o))
    return np.maximum(t, 0.0)


def ray_distance(origin: Point, direction: Point, world: WorldConfig,
                 max_range: float) -> float:
    """Distance along a unit-direction ray to the first wall or obstacle surface.

    Clipped to ``max_range`` when nothing is hit sooner.
    """
    norm = math.hypot(direction[0], direction[1])
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector, |d| = {norm}")
    if max_range <= 0.0:
        raise ValueError(f"max_range must be positive, got {max_range}")
    t = _first_hits(origin[0], origin[1], np.array([direction[0]]),
                    np.array([direction[1]]), world)[0]
    return float(min(t, max_range))


def column_azimuths(yaw: float, cam: CameraConfig) -> np.ndarray:
    """World-frame azimuth of each column centre, leftmost column first."""
    h_fov = math.radians(cam.h_fov_deg)
    offsets = h_fov / 2.0 - (np.arange(cam.cols) + 0.5) * h_fov / cam.cols
    return yaw + offsets


def row_elevations(cam: CameraConfig) -> np.ndarray:
    """Elevation of each row centre, topmost row first."""
    v_fov = math.radians(cam.v_fov_deg)
    return v_fov / 2.0 - (np.arange(cam.rows) + 0.5) * v_fov / cam.rows


def render_depth(position: Point, yaw: float, world: WorldConfig,
                 cam: CameraConfig | None = None) -> np.ndarray:
    """Depth image in metres, shape ``(rows, cols)``, every cell in ``(0, max_range]``.

    One planar ray is cast per column; row ``r`` sees that planar distance
    divided by ``cos(elevation_r)`` (slant range to full-height geometry),
    clipped to ``max_range``.
    """
    if cam is None:
        cam = world.camera
    az = column_azimuths(yaw, cam)
    planar = _first_hits(position[0], position[1], np.cos(az), np.sin(az), world)
    planar = np.minimum(planar, cam.max_range)
    slant = planar[None, :] / np.cos(row_elevations(cam))[:, None]
    return np.minimum(slant, cam.max_range)


# ---------------------------------------------------------------------------
# Convex clearance helpers (used by config validation)


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = min(1.0, max(0.0, float((p - a) @ ab) / denom))
    closest = a + t * ab
    return float(np.hypot(*(p - closest)))


def _convex_overlap(pa: np.ndarray, pb: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (touching counts as overlap)."""
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            edge = poly[(i + 1) % n] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            proj_a = pa @ axis
            proj_b = pb @ axis
            if proj_a.max() < proj_b.min() or proj_b.max() < proj_a.min():
                return False
    return True


def convex_distance(pa: np.ndarray, pb: np.ndarray) -> float:
    """Distance between two convex polygons given as (n, 2) corner arrays."""
    if _convex_overlap(pa, pb):
        return 0.0
    best = math.inf
    for poly, other in ((pa, pb), (pb, pa)):
        n = len(other)
        for p in poly:
            for i in range(n):
                best = min(best, _point_segment_distance(p, other[i], other[(i + 1) % n]))
    return best


def rect_obstacle_clearance(rect: Rect, obstacle: Obstacle) -> float:
    """Distance from an axis-aligned rectangle to an obstacle footprint."""
    if obstacle.kind == CYLINDER:
        cx, cy = obstacle.center
        qx = min(max(cx, rect.xmin), rect.xmax)
        qy = min(max(cy, rect.ymin), rect.ymax)
        return max(0.0, math.hypot(cx - qx, cy - qy) - obstacle.radius)
    return convex_distance(rect.corners(), obstacle.corners())
