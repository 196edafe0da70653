"""Synthetic video sensing: pinhole projection of scene obstacles into
device-mounted cameras, occlusion-aware timestamped detections, and
velocity-estimated tracks.

No images are rendered; the twin emits structured detections straight from
geometry with configurable, seeded jitter.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from itertools import product
from typing import Optional

import numpy as np

from .errors import NonMonotonicTimestamp, UnknownCamera, ValidationError
from .scene import Pose, Scene, segment_occluded

VELOCITY_WINDOW = 5


@dataclass(frozen=True)
class CameraModel:
    device_id: str
    pose: Pose
    focal_px: float = 500.0
    image_width_px: int = 1000
    image_height_px: int = 800
    frame_rate_hz: float = 20.0
    noise_std_px: float = 0.0
    noise_std_m: float = 0.0

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValidationError("focal_px must be > 0")
        if self.image_width_px <= 0 or self.image_height_px <= 0:
            raise ValidationError("image dimensions must be > 0")


@dataclass(frozen=True)
class Detection:
    timestamp_s: float
    camera_id: str
    object_id: str
    bbox_px: tuple[float, float, float, float]  # u_min, v_min, u_max, v_max
    world_position_m: tuple[float, float, float]
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class Track:
    object_id: str
    history: tuple[Detection, ...] = ()
    velocity_mps: tuple[float, float, float] = (0.0, 0.0, 0.0)


def project_point(camera: CameraModel, point) -> Optional[tuple[float, float]]:
    """Pinhole projection; camera looks along its local +x axis.

    Returns None for points behind the image plane or outside the image.
    """
    rel = np.asarray(point, dtype=float) - camera.pose.pos()
    local = camera.pose.matrix().T @ rel
    depth, lateral, height = local
    if depth <= 0:
        return None
    u = camera.image_width_px / 2.0 + camera.focal_px * (lateral / depth)
    v = camera.image_height_px / 2.0 - camera.focal_px * (height / depth)
    if not (0.0 <= u <= camera.image_width_px and 0.0 <= v <= camera.image_height_px):
        return None
    return (u, v)


def _detection_rng(seed: int, camera_id: str, t: float) -> np.random.Generator:
    tag = zlib.crc32(camera_id.encode())
    return np.random.default_rng((int(seed), tag, int(round(t * 1e6))))


def detect_objects(scene: Scene, camera: CameraModel, t: float,
                   rng_seed: int = 0) -> list[Detection]:
    """One detection per obstacle whose center is in-frame and unoccluded.

    Visibility uses the obstacle center only; the bbox comes from projecting
    the box corners. Deterministic given (scene, t, seed).
    """
    if camera.device_id not in scene.devices:
        raise UnknownCamera(camera.device_id)
    rng = _detection_rng(rng_seed, camera.device_id, t)
    cam_pos = camera.pose.pos()
    detections = []
    for ob in scene.obstacles:
        center = np.asarray(ob.center)
        uv = project_point(camera, center)
        if uv is None:
            continue
        others = replace(scene, obstacles=tuple(o for o in scene.obstacles if o.id != ob.id),
                         trajectories={})
        occ = segment_occluded(others, cam_pos, center)
        if occ.occluded:
            continue
        corners = [
            project_point(camera, np.array(c))
            for c in product(*zip(ob.box_min, ob.box_max))
        ]
        visible = [c for c in corners if c is not None]
        if visible:
            us = [c[0] for c in visible]
            vs = [c[1] for c in visible]
            bbox = (min(us), min(vs), max(us), max(vs))
        else:
            bbox = (uv[0], uv[1], uv[0], uv[1])
        jitter = rng.normal(0.0, camera.noise_std_m, size=3) if camera.noise_std_m > 0 else np.zeros(3)
        detections.append(
            Detection(
                timestamp_s=t,
                camera_id=camera.device_id,
                object_id=ob.id,
                bbox_px=bbox,
                world_position_m=tuple(center + jitter),
                confidence=1.0,
            )
        )
    return detections


def update_track(track: Track, detection: Detection) -> Track:
    """Append a detection and re-fit velocity over the last few samples."""
    if track.history and detection.timestamp_s <= track.history[-1].timestamp_s:
        raise NonMonotonicTimestamp(
            f"detection at {detection.timestamp_s} not after {track.history[-1].timestamp_s}"
        )
    history = track.history + (detection,)
    window = history[-VELOCITY_WINDOW:]
    if len(window) < 2:
        velocity = (0.0, 0.0, 0.0)
    else:
        ts = np.array([d.timestamp_s for d in window])
        xyz = np.array([d.world_position_m for d in window])
        # per-axis least-squares slope
        slopes = np.polyfit(ts, xyz, 1)[0]
        velocity = tuple(float(s) for s in slopes)
    return Track(object_id=track.object_id, history=history, velocity_mps=velocity)  # type: ignore[arg-type]
