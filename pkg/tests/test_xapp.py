import math

import pytest

from converge_twin.channel import ChannelParams, enumerate_paths, link_state
from converge_twin.errors import ValidationError
from converge_twin.netsim import default_mcs_table, run_scenario
from converge_twin.scenario import builtin_scenario_path, load_scenario
from converge_twin.vision import Detection, Track, update_track
from converge_twin.xapp import (
    BlockagePrediction,
    ProactiveSwitch,
    SwitchPolicy,
    decide_switch,
    evaluate_policies,
    predict_blockage,
)

from .test_channel import lis_setup


def moving_track(speed=(1.0, 0.0, 0.0), start=(0.0, 0.0, 1.0), n=5, dt=0.1,
                 object_id="blocker"):
    track = Track(object_id=object_id)
    for i in range(n):
        t = dt * i
        pos = tuple(s + v * t for s, v in zip(start, speed))
        track = update_track(track, Detection(
            timestamp_s=t, camera_id="cam", object_id=object_id,
            bbox_px=(0, 0, 1, 1), world_position_m=pos))
    return track


LOS = ((2.0, -5.0, 1.0), (2.0, 5.0, 1.0))  # vertical-in-y segment at x = 2


def test_time_to_block_box_edge_arithmetic():
    # box center starts at x = 0 moving +1 m/s; half-width 0.5 reaches the
    # x = 2 crossing when the leading edge arrives: (2 - 0.5) / 1 = 1.5 s
    track = moving_track()
    now = track.history[-1].timestamp_s
    preds = predict_blockage([track], LOS, {"blocker": (0.5, 0.5, 0.5)},
                             horizon_s=5.0, now=now)
    assert len(preds) == 1
    p = preds[0]
    # the track ends at x = 0.4 at t = 0.4; measured from `now` the edge
    # needs (2 - 0.5 - 0.4) / 1 = 1.1 s
    assert p.time_to_block_s == pytest.approx(1.1, abs=0.01)
    assert p.confidence == pytest.approx(math.exp(-p.time_to_block_s / 5.0),
                                         abs=1e-6)
    assert p.crossing_point_m[0] == pytest.approx(1.5, abs=0.01)


def test_time_to_block_from_track_origin():
    # single-sample track at the origin with explicit velocity
    track = Track(object_id="blocker",
                  history=(Detection(0.0, "cam", "blocker", (0, 0, 1, 1),
                                     (0.0, 0.0, 1.0)),),
                  velocity_mps=(1.0, 0.0, 0.0))
    preds = predict_blockage([track], LOS, {"blocker": (0.5, 0.5, 0.5)},
                             horizon_s=5.0, now=0.0)
    assert preds[0].time_to_block_s == pytest.approx(1.5, abs=0.01)


def test_receding_object_never_blocks():
    track = moving_track(speed=(-1.0, 0.0, 0.0))
    preds = predict_blockage([track], LOS, {"blocker": (0.5, 0.5, 0.5)},
                             horizon_s=5.0)
    assert preds[0].time_to_block_s == math.inf
    assert preds[0].confidence == 0.0


def test_crossing_beyond_horizon_is_inf():
    track = moving_track(speed=(0.1, 0.0, 0.0))
    preds = predict_blockage([track], LOS, {"blocker": (0.5, 0.5, 0.5)},
                             horizon_s=2.0, now=0.4)
    assert preds[0].time_to_block_s == math.inf


def test_stale_track_advances_position():
    track = moving_track()
    # 1 s after the last sample the box is 1 m closer to the crossing
    late = predict_blockage([track], LOS, {"blocker": (0.5, 0.5, 0.5)},
                            horizon_s=5.0, now=track.history[-1].timestamp_s + 1.0)
    assert late[0].time_to_block_s == pytest.approx(0.1, abs=0.01)


def test_empty_history_yields_no_prediction():
    preds = predict_blockage([Track(object_id="ghost")], LOS, {}, horizon_s=2.0)
    assert preds == []


def test_prediction_validations():
    with pytest.raises(ValidationError):
        BlockagePrediction("x", -1.0, (0, 0, 0), 0.5)
    with pytest.raises(ValidationError):
        BlockagePrediction("x", 1.0, (0, 0, 0), 1.5)
    with pytest.raises(ValidationError):
        SwitchPolicy(lead_time_s=0.0)


# -- switch decisions --------------------------------------------------------

def _link_and_paths():
    scene, panels, profiles = lis_setup()
    params = ChannelParams()
    link = link_state(scene, "gnb", "ue", params, default_mcs_table(), t=0.0,
                      panels=panels, profiles=profiles, serving_key="DIRECT")
    paths = enumerate_paths(scene, "gnb", "ue", params, panels, profiles)
    return link, paths


def pred(t_block, confidence, path_key="DIRECT"):
    return BlockagePrediction("blocker", t_block, (5.0, 3.0, 1.0), confidence,
                              path_key)


def test_switch_issued_for_imminent_confident_blockage():
    link, paths = _link_and_paths()
    policy = SwitchPolicy(lead_time_s=0.1, confidence_threshold=0.5)
    cmd = decide_switch([pred(0.08, 0.9)], link, paths, policy)
    assert cmd == ProactiveSwitch(target_key="VIA_LIS:lis", object_id="blocker")


def test_no_switch_when_blockage_is_far():
    link, paths = _link_and_paths()
    policy = SwitchPolicy(lead_time_s=0.1, confidence_threshold=0.5)
    assert decide_switch([pred(0.5, 0.9)], link, paths, policy) is None


def test_no_switch_below_confidence_threshold():
    link, paths = _link_and_paths()
    policy = SwitchPolicy(lead_time_s=0.1, confidence_threshold=0.95)
    assert decide_switch([pred(0.08, 0.9)], link, paths, policy) is None


def test_no_switch_for_other_paths_prediction():
    link, paths = _link_and_paths()
    policy = SwitchPolicy()
    assert decide_switch([pred(0.08, 0.9, path_key="VIA_LIS:lis")],
                         link, paths, policy) is None


def test_pending_pair_not_reissued():
    link, paths = _link_and_paths()
    policy = SwitchPolicy()
    pending = frozenset({("blocker", "VIA_LIS:lis")})
    assert decide_switch([pred(0.08, 0.9)], link, paths, policy,
                         pending=pending) is None


def test_no_switch_without_alternatives():
    link, paths = _link_and_paths()
    direct_only = [p for p in paths if p.kind == "DIRECT"]
    assert decide_switch([pred(0.08, 0.9)], link, direct_only,
                         SwitchPolicy()) is None


# -- policy comparison -------------------------------------------------------

def test_flagship_proactive_beats_reactive():
    scenario = load_scenario(builtin_scenario_path("flagship"))
    results = evaluate_policies(scenario)
    assert results["outage_delta_s"] > 0.0
    assert results["throughput_delta_bps"] > 0.0
    assert results["proactive"]["outage_s"] < results["reactive"]["outage_s"]


def test_disabled_prediction_degenerates_to_reactive():
    from dataclasses import replace

    scenario = load_scenario(builtin_scenario_path("flagship"))
    disabled = replace(scenario,
                       switch_policy=replace(scenario.switch_policy,
                                             confidence_threshold=1.01))
    _, proactive = run_scenario(disabled, "PROACTIVE")
    _, reactive = run_scenario(scenario, "REACTIVE")
    for key in ("outage_s", "mean_throughput_bps", "switch_count",
                "switch_latencies_s", "mean_snr_db"):
        assert proactive[key] == reactive[key]
