"""Quasi-static world model: whisker pivots, rigid objects, contact.

Eight rigid rods pivot on torsional springs.  A whisker's state is the 2D
tilt vector (tx, ty): the rod is rotated away from the sensor axis by
angle |t| in planar direction t/|t| (the direction the tip moves).  With
the sensor axis pointing down (-z, whiskers extend below the pivot plane
toward the workspace), the rod axis is

    axis = (sin|t| * tx/|t|, sin|t| * ty/|t|, -cos|t|)

and the marker end sits at pivot - l_l * axis.  The marker's planar
displacement is therefore -l_l sin|t| * t_hat, which the deflection-angle
formula inverts exactly: the render/track/kinematics round trip recovers
|t| to floating-point precision.

Voltage drives a steady-state tilt toward the array center (positive =
retraction); the tilt relaxes toward it exponentially with time constant
damping/spring_stiffness.  Contact with a rigid object pushes the tilt
out along the contact normal to tangency; the torsional spring wound up
by the difference supplies the normal force.

Signed distances are exact for spheres, boxes, and capsules.  The
ellipsoid distance is a first-order approximation (exact zero on the
surface); tangency tolerances are only asserted for spheres.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .core import ActuationParams, ArrayGeometry, CameraModel, SensorConfig

_TILT_EPS = 1e-12
_PUSH_TOL = 1e-6   # mm of residual penetration allowed after correction


class SimulationError(Exception):
    """Degenerate contact geometry, e.g. an object enclosing a pivot."""


# --------------------------------------------------------------------------
# shapes

@dataclass(frozen=True)
class Sphere:
    radius: float


@dataclass(frozen=True)
class Box:
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class Capsule:
    p0: tuple[float, float, float]
    p1: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class Ellipsoid:
    semi_axes: tuple[float, float, float]


@dataclass(frozen=True)
class Composite:
    parts: tuple[tuple[tuple[float, float, float], "Shape"], ...]


Shape = Sphere | Box | Capsule | Ellipsoid | Composite


def sphere_with_stem(radius: float, stem_dir: tuple[float, float, float],
                     stem_len: float, stem_radius: float) -> Composite:
    """Ball plus a capsule stem sticking out along ``stem_dir``."""
    d = np.asarray(stem_dir, dtype=float)
    d = d / np.linalg.norm(d)
    p0 = tuple(radius * 0.8 * d)
    p1 = tuple((radius * 0.8 + stem_len) * d)
    return Composite(parts=(
        ((0.0, 0.0, 0.0), Sphere(radius)),
        ((0.0, 0.0, 0.0), Capsule(p0, p1, stem_radius)),
    ))


def shape_sdf(shape: Shape, p: np.ndarray) -> np.ndarray | float:
    """Signed distance from point(s) ``p`` (shape (..., 3)) to the surface."""
    p = np.asarray(p, dtype=float)
    if isinstance(shape, Sphere):
        return np.linalg.norm(p, axis=-1) - shape.radius
    if isinstance(shape, Box):
        q = np.abs(p) - np.asarray(shape.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside
    if isinstance(shape, Capsule):
        a = np.asarray(shape.p0)
        ab = np.asarray(shape.p1) - a
        t = np.clip(np.tensordot(p - a, ab, axes=(-1, 0)) / float(ab @ ab), 0.0, 1.0)
        closest = a + np.multiply.outer(t, ab)
        return np.linalg.norm(p - closest, axis=-1) - shape.radius
    if isinstance(shape, Ellipsoid):
        r = np.asarray(shape.semi_axes)
        # first-order distance estimate: exact zero on the surface
        k0 = np.linalg.norm(p / r, axis=-1)
        k1 = np.linalg.norm(p / (r * r), axis=-1)
        k1 = np.where(k1 == 0.0, 1.0, k1)
        return np.where(k0 == 0.0, -np.min(r), k0 * (k0 - 1.0) / k1)
    if isinstance(shape, Composite):
        return np.minimum.reduce([shape_sdf(s, p - np.asarray(off)) for off, s in shape.parts])
    raise TypeError(f"unknown shape {shape!r}")


def shape_bounding_radius(shape: Shape) -> float:
    if isinstance(shape, Sphere):
        return shape.radius
    if isinstance(shape, Box):
        return float(np.linalg.norm(shape.half_extents))
    if isinstance(shape, Capsule):
        return max(np.linalg.norm(shape.p0), np.linalg.norm(shape.p1)) + shape.radius
    if isinstance(shape, Ellipsoid):
        return float(max(shape.semi_axes))
    if isinstance(shape, Composite):
        return max(float(np.linalg.norm(off)) + shape_bounding_radius(s) for off, s in shape.parts)
    raise TypeError(f"unknown shape {shape!r}")


# --------------------------------------------------------------------------
# world state

@dataclass(frozen=True)
class RigidObject:
    """A rigid body resting in the workspace, posed by position + yaw."""

    name: str
    shape: Shape
    mass_g: float
    friction_mu: float
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    com_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.mass_g <= 0:
            raise ValueError("mass must be positive")
        if self.friction_mu < 0:
            raise ValueError("friction coefficient must be >= 0")

    def world_to_local(self, p: np.ndarray) -> np.ndarray:
        q = np.asarray(p, dtype=float) - np.asarray(self.position)
        c, s = math.cos(-self.yaw), math.sin(-self.yaw)
        out = q.copy()
        out[..., 0] = c * q[..., 0] - s * q[..., 1]
        out[..., 1] = s * q[..., 0] + c * q[..., 1]
        return out

    def local_to_world(self, p: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        q = np.asarray(p, dtype=float)
        out = q.copy()
        out[..., 0] = c * q[..., 0] - s * q[..., 1]
        out[..., 1] = s * q[..., 0] + c * q[..., 1]
        return out + np.asarray(self.position)

    def sdf_world(self, p: np.ndarray) -> np.ndarray | float:
        return shape_sdf(self.shape, self.world_to_local(p))

    @property
    def com_world(self) -> np.ndarray:
        return self.local_to_world(np.asarray(self.com_offset))

    @property
    def bounding_radius(self) -> float:
        return shape_bounding_radius(self.shape)


@dataclass(eq=False)
class WhiskerState:
    tilt: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tilt_rate: np.ndarray = field(default_factory=lambda: np.zeros(2))
    applied_voltage: float = 0.0


@dataclass(frozen=True)
class Contact:
    """One rod/object contact: where, which way it pushes, how hard."""

    whisker: int
    point: tuple[float, float, float]   # on the object surface, world mm
    normal: tuple[float, float, float]  # direction of the force on the object
    force: float                        # N, >= 0
    s_along_rod: float                  # mm from pivot to the contact


@dataclass(eq=False)
class Scene:
    whiskers: list[WhiskerState]
    object: RigidObject | None = None
    sensor_pose: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sensor_rotation: float = 0.0
    time: float = 0.0
    contacts: tuple[Contact, ...] = ()


def make_scene(config: SensorConfig, obj: RigidObject | None = None,
               sensor_pose=(0.0, 0.0, 0.0), sensor_rotation: float = 0.0) -> Scene:
    n = config.geometry.n_whiskers
    return Scene(
        whiskers=[WhiskerState() for _ in range(n)],
        object=obj,
        sensor_pose=np.asarray(sensor_pose, dtype=float),
        sensor_rotation=sensor_rotation,
    )


def scene_to_dict(scene: Scene) -> dict:
    """JSON-ready snapshot for debugging dumps."""
    return {
        "time": scene.time,
        "sensor_pose": list(map(float, scene.sensor_pose)),
        "sensor_rotation": scene.sensor_rotation,
        "whiskers": [
            {
                "tilt": list(map(float, w.tilt)),
                "tilt_rate": list(map(float, w.tilt_rate)),
                "applied_voltage": w.applied_voltage,
            }
            for w in scene.whiskers
        ],
        "object": None if scene.object is None else {
            "name": scene.object.name,
            "mass_g": scene.object.mass_g,
            "friction_mu": scene.object.friction_mu,
            "position": list(map(float, scene.object.position)),
            "yaw": scene.object.yaw,
        },
        "contacts": [
            {
                "whisker": c.whisker,
                "point": list(c.point),
                "normal": list(c.normal),
                "force": c.force,
            }
            for c in scene.contacts
        ],
    }


# --------------------------------------------------------------------------
# actuation

def steady_state_tilt(voltage: float, params: ActuationParams) -> float:
    """Steady-state radial deflection for a held voltage.

    Positive = retraction toward the array center.  Linear (gain * V,
    magnetic torque balancing the spring), odd in V, clipped just below
    pi/2.
    """
    if abs(voltage) > params.max_voltage:
        raise ValueError(f"|voltage| {abs(voltage):.3f} exceeds max {params.max_voltage:.3f}")
    limit = math.pi / 2 - 1e-6
    return float(np.clip(params.gain * voltage, -limit, limit))


def rod_axis(tilt: np.ndarray) -> np.ndarray:
    """Unit rod direction from pivot toward the tip for a tilt vector."""
    n = float(np.hypot(tilt[0], tilt[1]))
    if n < _TILT_EPS:
        return np.array([0.0, 0.0, -1.0])
    s = math.sin(n) / n
    return np.array([s * tilt[0], s * tilt[1], -math.cos(n)])


def whisker_pivot(azimuth: float, geometry: ArrayGeometry, sensor_pose: np.ndarray) -> np.ndarray:
    return np.asarray(sensor_pose, dtype=float) + geometry.ring_radius * np.array(
        [math.cos(azimuth), math.sin(azimuth), 0.0]
    )


def marker_position(whisker: WhiskerState, azimuth: float,
                    geometry: ArrayGeometry, camera: CameraModel) -> np.ndarray:
    """Pixel position of the whisker's marker for its current tilt.

    The marker end moves -l_l sin|t| * t_hat in sensor-plane mm; mapped to
    pixels through k and added to the neutral marker pixel.
    """
    neutral = camera.center_px + (geometry.ring_radius / camera.k) * np.array(
        [math.cos(azimuth), math.sin(azimuth)]
    )
    t = whisker.tilt
    n = float(np.hypot(t[0], t[1]))
    if n < _TILT_EPS:
        return neutral
    disp_mm = -geometry.l_l * math.sin(n) / n * t
    return neutral + disp_mm / camera.k


def marker_positions(scene: Scene, geometry: ArrayGeometry, camera: CameraModel) -> np.ndarray:
    out = np.empty((len(scene.whiskers), 2))
    for i, w in enumerate(scene.whiskers):
        az = geometry.azimuth(i) + scene.sensor_rotation
        out[i] = marker_position(w, az, geometry, camera)
    return out


# --------------------------------------------------------------------------
# rod-object clearance

def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
    return float(np.linalg.norm(a + t * ab - p))


def _segment_segment_distance(a0, a1, b0, b1) -> float:
    """Closest distance between segments [a0,a1] and [b0,b1]."""
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a < 1e-18 and e < 1e-18:
        return float(np.linalg.norm(r))
    if a < 1e-18:
        t = np.clip(f / e, 0.0, 1.0)
        return float(np.linalg.norm(a0 - (b0 + t * d2)))
    c = d1 @ r
    if e < 1e-18:
        s = np.clip(-c / a, 0.0, 1.0)
        return float(np.linalg.norm(a0 + s * d1 - b0))
    b = d1 @ d2
    den = a * e - b * b
    s = np.clip((b * f - c * e) / den, 0.0, 1.0) if den > 1e-18 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(a0 + s * d1 - (b0 + t * d2)))


_COARSE_N = 33
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _clearance_generic(a: np.ndarray, u: np.ndarray, length: float, shape: Shape) -> tuple[float, float]:
    """min over s in [0, length] of sdf(a + s u), via coarse scan + golden refine."""
    s_grid = np.linspace(0.0, length, _COARSE_N)
    pts = a[None, :] + s_grid[:, None] * u[None, :]
    vals = np.asarray(shape_sdf(shape, pts))
    i = int(np.argmin(vals))
    lo = s_grid[max(i - 1, 0)]
    hi = s_grid[min(i + 1, _COARSE_N - 1)]

    def f(s: float) -> float:
        return float(shape_sdf(shape, a + s * u))

    x1 = hi - _GOLD * (hi - lo)
    x2 = lo + _GOLD * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(48):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLD * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLD * (hi - lo)
            f2 = f(x2)
    s_best = (lo + hi) / 2.0
    return f(s_best), s_best


def _clearance_local(a: np.ndarray, u: np.ndarray, length: float, shape: Shape) -> tuple[float, float]:
    """(min signed distance, arg-min s) of the segment in the shape's local frame."""
    if isinstance(shape, Sphere):
        ab = u * length
        t = float(np.clip(-(a @ ab) / (ab @ ab), 0.0, 1.0))
        s = t * length
        return float(np.linalg.norm(a + s * u)) - shape.radius, s
    if isinstance(shape, Capsule):
        # distance between rod segment and capsule axis; arg-min via projection
        b0 = np.asarray(shape.p0)
        b1 = np.asarray(shape.p1)
        d = _segment_segment_distance(a, a + length * u, b0, b1) - shape.radius
        _, s = _clearance_generic(a, u, length, shape)
        return d, s
    if isinstance(shape, Composite):
        best = (math.inf, 0.0)
        for off, sub in shape.parts:
            d, s = _clearance_local(a - np.asarray(off), u, length, sub)
            if d < best[0]:
                best = (d, s)
        return best
    return _clearance_generic(a, u, length, shape)


def rod_object_clearance(pivot: np.ndarray, axis: np.ndarray, length: float,
                         obj: RigidObject) -> tuple[float, float]:
    """Min clearance (mm, rod-axis to object surface) and its position along the rod."""
    a_local = obj.world_to_local(pivot)
    tip_local = obj.world_to_local(pivot + length * axis)
    u_local = (tip_local - a_local) / length
    return _clearance_local(a_local, u_local, length, obj.shape)


def _sdf_gradient(obj: RigidObject, p: np.ndarray, h: float = 1e-4) -> np.ndarray:
    g = np.empty(3)
    for i in range(3):
        dp = np.zeros(3)
        dp[i] = h
        g[i] = (float(obj.sdf_world(p + dp)) - float(obj.sdf_world(p - dp))) / (2 * h)
    n = np.linalg.norm(g)
    return g / n if n > 0 else np.array([0.0, 0.0, 1.0])


# --------------------------------------------------------------------------
# contact resolution

def resolve_contact(tilt: np.ndarray, azimuth: float, geometry: ArrayGeometry,
                    actuation: ActuationParams, obj: RigidObject | None,
                    sensor_pose: np.ndarray, whisker_index: int = 0,
                    ) -> tuple[np.ndarray, Contact | None]:
    """Push a penetrating rod out to tangency and report the contact.

    Returns the corrected tilt and the Contact (None when the rod is free
    or exactly tangent, which counts as an open contact with zero force).
    The normal force is spring_stiffness * |tilt correction| / lever arm.
    """
    tilt = np.asarray(tilt, dtype=float)
    if obj is None:
        return tilt, None

    pivot = whisker_pivot(azimuth, geometry, sensor_pose)
    rod_r = geometry.rod_radius
    l_u = geometry.l_u

    # cheap reject on the commanded pose
    center = np.asarray(obj.position, dtype=float)
    reach = obj.bounding_radius + rod_r
    axis = rod_axis(tilt)
    if _point_segment_distance(center, pivot, pivot + l_u * axis) > reach:
        return tilt, None

    if float(obj.sdf_world(pivot)) < rod_r:
        raise SimulationError("object encloses a whisker pivot")

    def penetration(t: np.ndarray) -> tuple[float, float]:
        d, s = rod_object_clearance(pivot, rod_axis(t), l_u, obj)
        return rod_r - d, s

    pen0, s0 = penetration(tilt)
    if pen0 <= 0.0:
        return tilt, None

    # push direction: planar part of the outward surface normal at the
    # deepest rod point, with radial fallbacks for degenerate geometry
    q0 = pivot + s0 * rod_axis(tilt)
    grad = _sdf_gradient(obj, q0)
    push = grad[:2].copy()
    if np.linalg.norm(push) < 1e-6:
        push = (q0 - center)[:2]
    if np.linalg.norm(push) < 1e-6:
        push = np.array([math.cos(azimuth), math.sin(azimuth)])
    push /= np.linalg.norm(push)

    def f(alpha: float) -> float:
        return penetration(tilt + alpha * push)[0]

    hi = max(pen0 / max(s0, 1.0), 1e-4)
    for _ in range(40):
        if f(hi) <= 0.0:
            break
        hi *= 2.0
        if hi > math.pi:
            raise SimulationError("cannot push rod out of object")
    alpha = brentq(f, 0.0, hi, xtol=1e-10)
    corrected = tilt + alpha * push
    for _ in range(100):
        pen, s_c = penetration(corrected)
        if pen <= _PUSH_TOL:
            break
        alpha += 1e-8
        corrected = tilt + alpha * push
    else:
        raise SimulationError("contact push-out failed to converge")

    if float(np.hypot(*corrected)) >= math.pi / 2:
        raise SimulationError("contact correction exceeded the pivot range")

    q_axis = pivot + s_c * rod_axis(corrected)
    normal_out = _sdf_gradient(obj, q_axis)        # away from the object
    contact_point = q_axis - rod_r * normal_out
    force = actuation.spring_stiffness * float(np.linalg.norm(tilt - corrected)) / max(s_c, 1e-9)
    contact = Contact(
        whisker=whisker_index,
        point=tuple(map(float, contact_point)),
        normal=tuple(map(float, -normal_out)),     # force pushes into the object
        force=force,
        s_along_rod=float(s_c),
    )
    return corrected, contact


# --------------------------------------------------------------------------
# time stepping

def step(scene: Scene, commands, dt: float, config: SensorConfig,
         contact_cache: dict | None = None) -> Scene:
    """Advance the scene by dt under per-whisker voltage commands.

    Each tilt relaxes exponentially toward its steady-state target (time
    constant damping/spring_stiffness), then contact resolution corrects
    it.  Deterministic: identical inputs give identical output bits.
    ``contact_cache`` (optional dict) memoizes contact solves across
    frames whose inputs repeat, which they do once a gripped whisker has
    settled.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = config.geometry
    act = config.actuation
    commands = np.asarray(commands, dtype=float)
    if commands.shape != (g.n_whiskers,):
        raise ValueError(f"expected {g.n_whiskers} voltage commands")

    decay = math.exp(-dt / act.time_constant)
    new_whiskers: list[WhiskerState] = []
    contacts: list[Contact] = []
    for i, w in enumerate(scene.whiskers):
        v = float(commands[i])
        amp = steady_state_tilt(v, act)
        az = g.azimuth(i) + scene.sensor_rotation
        target = -amp * np.array([math.cos(az), math.sin(az)])
        free = target + (w.tilt - target) * decay

        if scene.object is None:
            corrected, contact = free, None
        elif contact_cache is not None:
            key = (i, free.tobytes(),
                   (np.asarray(scene.object.position) - scene.sensor_pose).tobytes(),
                   scene.object.yaw)
            hit = contact_cache.get(key)
            if hit is None:
                corrected, contact = resolve_contact(
                    free, az, g, act, scene.object, scene.sensor_pose, whisker_index=i)
                contact_cache[key] = (corrected, contact)
            else:
                corrected, contact = hit
        else:
            corrected, contact = resolve_contact(
                free, az, g, act, scene.object, scene.sensor_pose, whisker_index=i)

        if contact is not None:
            contacts.append(contact)
        new_whiskers.append(WhiskerState(
            tilt=np.array(corrected, dtype=float),
            tilt_rate=(np.asarray(corrected) - w.tilt) / dt,
            applied_voltage=v,
        ))

    return Scene(
        whiskers=new_whiskers,
        object=scene.object,
        sensor_pose=scene.sensor_pose.copy(),
        sensor_rotation=scene.sensor_rotation,
        time=scene.time + dt,
        contacts=tuple(contacts),
    )


def dump_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2, sort_keys=True)
