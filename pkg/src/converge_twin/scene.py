"""3D digital twin of the chamber: geometry, placements, trajectories, occlusion.

Coordinates are right-handed, z up, meters, origin at a chamber corner.
Scene values are immutable snapshots; mutating operations return new snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import yaml
from scipy.spatial.transform import Rotation, Slerp

from . import kernels
from .errors import (
    DegenerateRay,
    DegenerateSegment,
    OutOfBounds,
    ParseError,
    UnknownDevice,
    ValidationError,
)

Vec3 = tuple[float, float, float]

DEVICE_KINDS = ("GNB", "UE", "LIS", "CAMERA")
SCHEMA_VERSION = 1


def _vec3(v, name: str) -> Vec3:
    arr = tuple(float(x) for x in v)
    if len(arr) != 3:
        raise ValidationError(f"{name}: expected 3 components, got {len(arr)}")
    return arr  # type: ignore[return-value]


@dataclass(frozen=True)
class Pose:
    """Position plus orientation as a unit quaternion (w, x, y, z)."""

    position: Vec3
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        n = math.sqrt(sum(q * q for q in self.orientation))
        if abs(n - 1.0) > 1e-9:
            raise ValidationError(f"orientation norm {n} not unit within 1e-9")

    @staticmethod
    def at(position, yaw_rad: float = 0.0, pitch_rad: float = 0.0, roll_rad: float = 0.0) -> "Pose":
        rot = Rotation.from_euler("ZYX", [yaw_rad, pitch_rad, roll_rad])
        x, y, z, w = rot.as_quat()
        q = np.array([w, x, y, z])
        q /= np.linalg.norm(q)
        return Pose(_vec3(position, "position"), tuple(q))

    @staticmethod
    def looking(position, forward, up=(0.0, 0.0, 1.0)) -> "Pose":
        """Pose whose local +x axis points along `forward`, local +z near `up`."""
        f = np.asarray(forward, dtype=float)
        nf = np.linalg.norm(f)
        if nf == 0:
            raise ValidationError("forward vector must be non-zero")
        f = f / nf
        u = np.asarray(up, dtype=float)
        u = u - f * (u @ f)
        nu = np.linalg.norm(u)
        if nu < 1e-12:
            u = np.array([0.0, 0.0, 1.0]) if abs(f[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
            u = u - f * (u @ f)
            nu = np.linalg.norm(u)
        u = u / nu
        yaxis = np.cross(u, f)
        rot = Rotation.from_matrix(np.column_stack([f, yaxis, u]))
        x, y, z, w = rot.as_quat()
        q = np.array([w, x, y, z])
        q /= np.linalg.norm(q)
        return Pose(_vec3(position, "position"), tuple(q))

    @staticmethod
    def facing(position, normal, up=(0.0, 0.0, 1.0)) -> "Pose":
        """Pose whose local +z axis points along `normal` (panel-style frames)."""
        n = np.asarray(normal, dtype=float)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ValidationError("normal vector must be non-zero")
        n = n / nn
        u = np.asarray(up, dtype=float)
        xaxis = np.cross(u, n)
        if np.linalg.norm(xaxis) < 1e-12:
            xaxis = np.cross(np.array([1.0, 0.0, 0.0]), n)
            if np.linalg.norm(xaxis) < 1e-12:
                xaxis = np.cross(np.array([0.0, 1.0, 0.0]), n)
        xaxis = xaxis / np.linalg.norm(xaxis)
        yaxis = np.cross(n, xaxis)
        rot = Rotation.from_matrix(np.column_stack([xaxis, yaxis, n]))
        x, y, z, w = rot.as_quat()
        q = np.array([w, x, y, z])
        q /= np.linalg.norm(q)
        return Pose(_vec3(position, "position"), tuple(q))

    def rotation(self) -> Rotation:
        w, x, y, z = self.orientation
        return Rotation.from_quat([x, y, z, w])

    def matrix(self) -> np.ndarray:
        return self.rotation().as_matrix()

    def pos(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class Obstacle:
    id: str
    box_min: Vec3
    box_max: Vec3
    material_loss_db: float = 30.0

    def __post_init__(self):
        if any(lo >= hi for lo, hi in zip(self.box_min, self.box_max)):
            raise ValidationError(f"obstacle {self.id}: box min must be < max componentwise")
        if self.material_loss_db < 0:
            raise ValidationError(f"obstacle {self.id}: material_loss_db must be >= 0")

    @property
    def center(self) -> Vec3:
        return tuple((lo + hi) / 2.0 for lo, hi in zip(self.box_min, self.box_max))  # type: ignore

    @property
    def half_extents(self) -> Vec3:
        return tuple((hi - lo) / 2.0 for lo, hi in zip(self.box_min, self.box_max))  # type: ignore

    def moved_to(self, center) -> "Obstacle":
        c = np.asarray(center, dtype=float)
        h = np.asarray(self.half_extents)
        return replace(self, box_min=tuple(c - h), box_max=tuple(c + h))


@dataclass(frozen=True)
class DevicePlacement:
    device_id: str
    kind: str
    pose: Pose

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ValidationError(f"device {self.device_id}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[tuple[float, Pose], ...]
    interpolation: str = "LINEAR"

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValidationError("trajectory needs at least one waypoint")
        times = [t for t, _ in self.waypoints]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValidationError("trajectory waypoint times must be strictly increasing")
        if self.interpolation not in ("LINEAR", "HOLD"):
            raise ValidationError(f"unknown interpolation {self.interpolation!r}")


@dataclass(frozen=True)
class OcclusionReport:
    occluded: bool
    blockers: tuple[str, ...]
    total_penetration_loss_db: float
    first_hit_distance_m: Optional[float] = None


@dataclass(frozen=True)
class Hit:
    obstacle_id: str
    distance_m: float


@dataclass(frozen=True)
class Scene:
    chamber_dims: Vec3
    obstacles: tuple[Obstacle, ...] = ()
    devices: dict[str, DevicePlacement] = field(default_factory=dict)
    trajectories: dict[str, Trajectory] = field(default_factory=dict)

    def __post_init__(self):
        validate_scene(self)

    def obstacle(self, obstacle_id: str) -> Obstacle:
        for ob in self.obstacles:
            if ob.id == obstacle_id:
                return ob
        raise ValidationError(f"unknown obstacle {obstacle_id!r}")

    def device_position(self, device_id: str) -> np.ndarray:
        if device_id not in self.devices:
            raise UnknownDevice(device_id)
        return self.devices[device_id].pose.pos()

    def devices_of_kind(self, kind: str) -> list[DevicePlacement]:
        return [d for d in self.devices.values() if d.kind == kind]

    def _boxes(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        if not self.obstacles:
            return np.zeros((0, 3)), np.zeros((0, 3)), []
        mins = np.array([ob.box_min for ob in self.obstacles], dtype=float)
        maxs = np.array([ob.box_max for ob in self.obstacles], dtype=float)
        return mins, maxs, [ob.id for ob in self.obstacles]


def _inside_chamber(p, dims) -> bool:
    return all(0.0 <= x <= d for x, d in zip(p, dims))


def validate_scene(scene: Scene) -> None:
    dims = scene.chamber_dims
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ValidationError(f"chamber_dims must be strictly positive, got {dims}")
    seen = set()
    for ob in scene.obstacles:
        if ob.id in seen:
            raise ValidationError(f"duplicate obstacle id {ob.id!r}")
        seen.add(ob.id)
        if not (_inside_chamber(ob.box_min, dims) and _inside_chamber(ob.box_max, dims)):
            raise ValidationError(f"obstacle {ob.id!r} box extends outside the chamber")
    for did, dev in scene.devices.items():
        if did in seen:
            raise ValidationError(f"device id {did!r} collides with an obstacle id")
        seen.add(did)
        if did != dev.device_id:
            raise ValidationError(f"device key {did!r} != device_id {dev.device_id!r}")
        if not _inside_chamber(dev.pose.position, dims):
            raise ValidationError(
                f"device {did!r} position {dev.pose.position} outside chamber {dims}"
            )
    for tid in scene.trajectories:
        if tid not in seen:
            raise ValidationError(f"trajectory target {tid!r} is neither a device nor an obstacle")


# -- loading ----------------------------------------------------------------

def _pose_from_dict(entry: dict, name: str) -> Pose:
    pos = _vec3(entry.get("position", (0, 0, 0)), f"{name}.position")
    if "normal" in entry:
        return Pose.facing(pos, entry["normal"], entry.get("up", (0.0, 0.0, 1.0)))
    if "forward" in entry:
        return Pose.looking(pos, entry["forward"], entry.get("up", (0.0, 0.0, 1.0)))
    yaw = math.radians(float(entry.get("yaw_deg", 0.0)))
    pitch = math.radians(float(entry.get("pitch_deg", 0.0)))
    roll = math.radians(float(entry.get("roll_deg", 0.0)))
    return Pose.at(pos, yaw, pitch, roll)


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a key/value mapping")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version}")
    try:
        dims = _vec3(doc["chamber_dims"], "chamber_dims")
    except KeyError:
        raise ValidationError("chamber_dims: missing")
    try:
        obstacles = []
        for entry in doc.get("obstacles", []) or []:
            obstacles.append(
                Obstacle(
                    id=str(entry["id"]),
                    box_min=_vec3(entry["min"], f"obstacle {entry.get('id')}.min"),
                    box_max=_vec3(entry["max"], f"obstacle {entry.get('id')}.max"),
                    material_loss_db=float(entry.get("material_loss_db", 30.0)),
                )
            )
        devices: dict[str, DevicePlacement] = {}
        for entry in doc.get("devices", []) or []:
            did = str(entry["id"])
            devices[did] = DevicePlacement(
                device_id=did,
                kind=str(entry["kind"]).upper(),
                pose=_pose_from_dict(entry, f"device {did}"),
            )
        trajectories: dict[str, Trajectory] = {}
        for tid, spec in (doc.get("trajectories", {}) or {}).items():
            waypoints = tuple(
                (float(w["t"]), _pose_from_dict(w, f"trajectory {tid} waypoint"))
                for w in spec["waypoints"]
            )
            trajectories[str(tid)] = Trajectory(
                waypoints=waypoints,
                interpolation=str(spec.get("interpolation", "LINEAR")).upper(),
            )
    except KeyError as exc:
        raise ValidationError(f"missing required field {exc.args[0]!r}") from exc
    return Scene(chamber_dims=dims, obstacles=tuple(obstacles), devices=devices,
                 trajectories=trajectories)


def load_scene(source) -> Scene:
    """Build a validated Scene from a YAML path, YAML text, or parsed mapping."""
    if isinstance(source, dict):
        return scene_from_dict(source)
    text = source
    if hasattr(source, "read_text"):
        text = source.read_text()
    elif isinstance(source, str) and "\n" not in source and source.endswith((".yaml", ".yml")):
        with open(source) as fh:
            text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed scenario document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a key/value mapping")
    return scene_from_dict(doc)


# -- mutation ---------------------------------------------------------------

def set_placement(scene: Scene, device_id: str, pose: Pose) -> Scene:
    if device_id not in scene.devices:
        raise UnknownDevice(device_id)
    if not _inside_chamber(pose.position, scene.chamber_dims):
        raise OutOfBounds(f"device {device_id!r} position {pose.position} outside chamber")
    devices = dict(scene.devices)
    devices[device_id] = replace(devices[device_id], pose=pose)
    return replace(scene, devices=devices)


# -- ray and segment queries -------------------------------------------------

def cast_ray(scene: Scene, origin, direction) -> Optional[Hit]:
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0 or not np.isfinite(norm):
        raise DegenerateRay("ray direction must be non-zero")
    d = d / norm
    o = np.asarray(origin, dtype=float)
    mins, maxs, ids = scene._boxes()
    if not ids:
        return None
    dists = kernels.ray_box_distances(o[0], o[1], o[2], d[0], d[1], d[2], mins, maxs)
    best = None
    for i, dist in enumerate(dists):
        if dist >= 0.0 and (best is None or dist < best[1]):
            best = (ids[i], float(dist))
    return Hit(*best) if best else None


def segment_occluded(scene: Scene, a, b) -> OcclusionReport:
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    if np.array_equal(av, bv):
        raise DegenerateSegment("segment endpoints coincide")
    mins, maxs, ids = scene._boxes()
    if not ids:
        return OcclusionReport(False, (), 0.0, None)
    mask = kernels.segment_box_mask(av[0], av[1], av[2], bv[0], bv[1], bv[2], mins, maxs)
    blockers = tuple(sorted(ids[i] for i in range(len(ids)) if mask[i]))
    if not blockers:
        return OcclusionReport(False, (), 0.0, None)
    loss = sum(scene.obstacle(bid).material_loss_db for bid in blockers)
    # symmetric in (a, b): distance from the nearer endpoint to the first box face
    length = float(np.linalg.norm(bv - av))
    first = None
    for bid in blockers:
        ob = scene.obstacle(bid)
        t_in, t_out = _segment_box_interval(av, bv, ob)
        cand = min(max(t_in, 0.0), max(1.0 - t_out, 0.0)) * length
        first = cand if first is None else min(first, cand)
    return OcclusionReport(True, blockers, float(loss), first)


def _segment_box_interval(a: np.ndarray, b: np.ndarray, ob: Obstacle) -> tuple[float, float]:
    d = b - a
    tmin, tmax = -math.inf, math.inf
    for axis in range(3):
        lo, hi = ob.box_min[axis], ob.box_max[axis]
        if d[axis] != 0.0:
            t1 = (lo - a[axis]) / d[axis]
            t2 = (hi - a[axis]) / d[axis]
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
    return tmin, tmax


# -- trajectories ------------------------------------------------------------

def _slerp(p0: Pose, p1: Pose, frac: float) -> tuple[float, float, float, float]:
    r = Rotation.concatenate([p0.rotation(), p1.rotation()])
    interp = Slerp([0.0, 1.0], r)
    x, y, z, w = interp(frac).as_quat()
    q = np.array([w, x, y, z])
    q /= np.linalg.norm(q)
    return tuple(q)  # type: ignore[return-value]


def sample_trajectory(trajectory: Trajectory, t: float) -> Pose:
    wps = trajectory.waypoints
    if t <= wps[0][0]:
        return wps[0][1]
    if t >= wps[-1][0]:
        return wps[-1][1]
    for (t0, p0), (t1, p1) in zip(wps, wps[1:]):
        if t0 <= t < t1:
            if trajectory.interpolation == "HOLD" or t == t0:
                return p0
            frac = (t - t0) / (t1 - t0)
            pos = tuple(
                a + frac * (b - a) for a, b in zip(p0.position, p1.position)
            )
            return Pose(pos, _slerp(p0, p1, frac))  # type: ignore[arg-type]
    return wps[-1][1]


def scene_at_time(scene: Scene, t: float) -> Scene:
    """Snapshot with every trajectory-driven device and obstacle moved to time t."""
    if not scene.trajectories:
        return scene
    devices = dict(scene.devices)
    obstacles = list(scene.obstacles)
    for tid, traj in scene.trajectories.items():
        pose = sample_trajectory(traj, t)
        if tid in devices:
            devices[tid] = replace(devices[tid], pose=pose)
        else:
            for i, ob in enumerate(obstacles):
                if ob.id == tid:
                    obstacles[i] = ob.moved_to(pose.position)
                    break
    return replace(scene, devices=devices, obstacles=tuple(obstacles))
