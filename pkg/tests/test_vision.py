import numpy as np
import pytest

from converge_twin.errors import NonMonotonicTimestamp, ValidationError
from converge_twin.scene import Pose, load_scene
from converge_twin.vision import (
    CameraModel,
    Detection,
    Track,
    detect_objects,
    project_point,
    update_track,
)

from .conftest import scene_doc


def cam(noise_std_m=0.0, pose=None):
    return CameraModel(
        device_id="cam",
        pose=pose or Pose.at((0.0, 0.0, 0.0)),  # looking along +x
        focal_px=500.0,
        image_width_px=1000,
        image_height_px=800,
        frame_rate_hz=20.0,
        noise_std_m=noise_std_m,
    )


# -- projection --------------------------------------------------------------

def test_project_reference_point():
    # depth 5, lateral 1: u = 500 + 500 * (1/5) = 600, centered vertically
    assert project_point(cam(), (5.0, 1.0, 0.0)) == pytest.approx((600.0, 400.0))


def test_project_on_axis_hits_image_center():
    assert project_point(cam(), (3.0, 0.0, 0.0)) == pytest.approx((500.0, 400.0))


def test_project_height_moves_v_up():
    u, v = project_point(cam(), (5.0, 0.0, 1.0))
    assert u == pytest.approx(500.0)
    assert v == pytest.approx(400.0 - 100.0)


def test_project_behind_camera_is_none():
    assert project_point(cam(), (-1.0, 0.0, 0.0)) is None


def test_project_outside_frustum_is_none():
    # lateral/depth = 2 would land at u = 1500, outside the 1000 px image
    assert project_point(cam(), (1.0, 2.0, 0.0)) is None


def test_project_respects_pose():
    rotated = cam(pose=Pose.looking((0.0, 0.0, 0.0), (0.0, 1.0, 0.0)))
    assert project_point(rotated, (0.0, 5.0, 0.0)) == pytest.approx((500.0, 400.0))


# -- detection ---------------------------------------------------------------

def vision_scene():
    doc = scene_doc(devices=[
        {"id": "gnb", "kind": "GNB", "position": [1.0, 3.0, 2.0]},
        {"id": "ue", "kind": "UE", "position": [9.0, 3.0, 1.5]},
        {"id": "cam", "kind": "CAMERA", "position": [0.5, 3.0, 1.5],
         "forward": [1.0, 0.0, 0.0]},
    ], obstacles=[
        {"id": "box", "min": [4.0, 2.5, 1.0], "max": [5.0, 3.5, 2.0]},
    ])
    return load_scene(doc)


def test_detect_visible_obstacle():
    scene = vision_scene()
    camera = cam(pose=scene.devices["cam"].pose)
    dets = detect_objects(scene, camera, t=0.0, rng_seed=1)
    assert [d.object_id for d in dets] == ["box"]
    det = dets[0]
    assert det.world_position_m == pytest.approx((4.5, 3.0, 1.5))
    assert det.confidence == 1.0
    u_min, v_min, u_max, v_max = det.bbox_px
    assert u_min < u_max and v_min < v_max


def test_detection_noise_is_deterministic_per_seed():
    scene = vision_scene()
    camera = cam(pose=scene.devices["cam"].pose, noise_std_m=0.05)
    a = detect_objects(scene, camera, t=0.25, rng_seed=9)
    b = detect_objects(scene, camera, t=0.25, rng_seed=9)
    c = detect_objects(scene, camera, t=0.25, rng_seed=10)
    assert a == b
    assert a != c
    assert a[0].world_position_m != (4.5, 3.0, 1.5)  # noise applied


def test_occluded_object_not_detected():
    doc = scene_doc(devices=[
        {"id": "cam", "kind": "CAMERA", "position": [0.5, 3.0, 1.5],
         "forward": [1.0, 0.0, 0.0]},
    ], obstacles=[
        {"id": "screen", "min": [2.0, 1.0, 0.0], "max": [2.2, 5.0, 4.0]},
        {"id": "box", "min": [4.0, 2.5, 1.0], "max": [5.0, 3.5, 2.0]},
    ])
    scene = load_scene(doc)
    camera = cam(pose=scene.devices["cam"].pose)
    dets = detect_objects(scene, camera, t=0.0, rng_seed=1)
    # the screen hides the box; the screen itself is still visible
    assert [d.object_id for d in dets] == ["screen"]


def test_object_behind_camera_not_detected():
    doc = scene_doc(devices=[
        {"id": "cam", "kind": "CAMERA", "position": [6.0, 3.0, 1.5],
         "forward": [1.0, 0.0, 0.0]},
    ], obstacles=[
        {"id": "box", "min": [1.0, 2.5, 1.0], "max": [2.0, 3.5, 2.0]},
    ])
    scene = load_scene(doc)
    dets = detect_objects(scene, cam(pose=scene.devices["cam"].pose), 0.0, 1)
    assert dets == []


# -- tracking ----------------------------------------------------------------

def det_at(t, pos, object_id="obj"):
    return Detection(timestamp_s=t, camera_id="cam", object_id=object_id,
                     bbox_px=(0, 0, 10, 10), world_position_m=tuple(pos))


def test_track_velocity_exact_linear_motion():
    track = Track(object_id="obj")
    for i in range(5):
        track = update_track(track, det_at(float(i), (float(i), 0.0, 0.0)))
    assert track.velocity_mps == pytest.approx((1.0, 0.0, 0.0), abs=1e-9)


def test_track_velocity_noisy_linear_motion():
    rng = np.random.default_rng(2)
    truth_v = np.array([1.2, -0.4, 0.0])
    track = Track(object_id="obj")
    for i in range(20):
        t = 1.0 * i
        pos = np.array([1.0, 3.0, 1.0]) + truth_v * t + rng.normal(0, 0.01, 3)
        track = update_track(track, det_at(t, pos))
    assert np.linalg.norm(np.asarray(track.velocity_mps) - truth_v) < 0.05


def test_track_single_sample_has_zero_velocity():
    track = update_track(Track(object_id="obj"), det_at(0.0, (1, 2, 3)))
    assert track.velocity_mps == (0.0, 0.0, 0.0)
    assert len(track.history) == 1


def test_track_rejects_non_monotonic_timestamps():
    track = update_track(Track(object_id="obj"), det_at(1.0, (1, 2, 3)))
    with pytest.raises(NonMonotonicTimestamp):
        update_track(track, det_at(0.5, (1, 2, 3)))


def test_track_velocity_uses_recent_window():
    # old stationary samples must not dilute the current velocity estimate
    track = Track(object_id="obj")
    for i in range(10):
        track = update_track(track, det_at(0.1 * i, (1.0, 1.0, 1.0)))
    for i in range(10, 20):
        t = 0.1 * i
        track = update_track(track, det_at(t, (1.0 + 2.0 * (t - 1.0), 1.0, 1.0)))
    assert track.velocity_mps[0] == pytest.approx(2.0, abs=1e-6)


def test_detection_confidence_bounds():
    with pytest.raises(ValidationError):
        Detection(0.0, "cam", "obj", (0, 0, 1, 1), (0, 0, 0), confidence=1.5)
