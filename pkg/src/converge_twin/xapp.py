"""Vision-aided control application: predicts line-of-sight blockage from
object tracks and issues proactive beam-switch commands to the simulator.

The predictor is closed-form constant-velocity geometry; confidence decays as
exp(-time_to_block / horizon).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .channel import LinkState, Path
from .errors import ValidationError
from .vision import Track


@dataclass(frozen=True)
class BlockagePrediction:
    object_id: str
    time_to_block_s: float  # math.inf when no crossing within the horizon
    crossing_point_m: tuple[float, float, float]
    confidence: float
    path_key: str = "DIRECT"  # which path the predicted blockage threatens

    def __post_init__(self):
        if self.time_to_block_s < 0:
            raise ValidationError("time_to_block_s must be >= 0 or inf")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class SwitchPolicy:
    lead_time_s: float = 0.1
    confidence_threshold: float = 0.5
    preferred_fallback: str = "BEST_LIS"  # or "BEST_BEAM"
    horizon_s: float = 2.0
    assumed_blockage_loss_db: float = 30.0

    def __post_init__(self):
        if self.lead_time_s <= 0:
            raise ValidationError("lead_time_s must be > 0")


@dataclass(frozen=True)
class ProactiveSwitch:
    target_key: str  # "DIRECT" or "VIA_LIS:<lis_id>"
    object_id: str = ""


def _segment_hits_box(a, b, center, half) -> bool:
    mins = np.asarray(center, dtype=float) - half
    maxs = np.asarray(center, dtype=float) + half
    mask = kernels.segment_box_mask(
        a[0], a[1], a[2], b[0], b[1], b[2],
        mins.reshape(1, 3), maxs.reshape(1, 3),
    )
    return bool(mask[0])


def _first_crossing(a, b, center0, velocity, half, horizon_s) -> Optional[float]:
    """Earliest t in [0, horizon] at which the moving box meets segment (a, b)."""
    c0 = np.asarray(center0, dtype=float)
    v = np.asarray(velocity, dtype=float)
    if _segment_hits_box(a, b, c0, half):
        return 0.0
    # quick reject against the swept-volume bounding box
    end = c0 + v * horizon_s
    sweep_min = np.minimum(c0, end) - half
    sweep_max = np.maximum(c0, end) + half
    swept = kernels.segment_box_mask(a[0], a[1], a[2], b[0], b[1], b[2],
                                     sweep_min.reshape(1, 3), sweep_max.reshape(1, 3))
    if not swept[0]:
        return None
    steps = 2048
    ts = np.linspace(horizon_s / steps, horizon_s, steps)
    centers = c0[None, :] + ts[:, None] * v[None, :]
    mask = kernels.segment_box_mask(a[0], a[1], a[2], b[0], b[1], b[2],
                                    centers - half, centers + half)
    if not mask.any():
        return None
    idx = int(np.argmax(mask))
    lo = 0.0 if idx == 0 else float(ts[idx - 1])
    hi = float(ts[idx])
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _segment_hits_box(a, b, c0 + v * mid, half):
            hi = mid
        else:
            lo = mid
    return hi


def predict_blockage(tracks: list[Track], los_segment, object_extents: dict,
                     horizon_s: float, now: Optional[float] = None,
                     path_key: str = "DIRECT") -> list[BlockagePrediction]:
    """Constant-velocity extrapolation of each tracked object's box against a
    line-of-sight segment.

    `object_extents` maps object_id to box half-extents. `now` accounts for
    track staleness: positions are advanced from the last detection timestamp.
    """
    a = np.asarray(los_segment[0], dtype=float)
    b = np.asarray(los_segment[1], dtype=float)
    predictions = []
    for track in tracks:
        if not track.history:
            continue
        half = np.asarray(object_extents.get(track.object_id, (0.0, 0.0, 0.0)), dtype=float)
        last = track.history[-1]
        center = np.asarray(last.world_position_m, dtype=float)
        v = np.asarray(track.velocity_mps, dtype=float)
        if now is not None and now > last.timestamp_s:
            center = center + v * (now - last.timestamp_s)
        t_block = _first_crossing(a, b, center, v, half, horizon_s)
        if t_block is None:
            predictions.append(
                BlockagePrediction(track.object_id, math.inf,
                                   tuple(center), 0.0, path_key)
            )
        else:
            predictions.append(
                BlockagePrediction(
                    track.object_id,
                    t_block,
                    tuple(center + v * t_block),
                    math.exp(-t_block / horizon_s),
                    path_key,
                )
            )
    return predictions


def decide_switch(predictions: list[BlockagePrediction], link: LinkState,
                  available_paths: list[Path], policy: SwitchPolicy,
                  pending: frozenset = frozenset()) -> Optional[ProactiveSwitch]:
    """Issue a proactive switch when an imminent, confident blockage threatens
    the serving path and a better-after-blockage alternative exists.

    `pending` holds (object_id, target_key) pairs already commanded; the same
    pair is never re-issued while it is in flight.
    """
    serving = link.serving_path
    relevant = [
        p for p in predictions
        if p.path_key == serving.key
        and p.time_to_block_s <= policy.lead_time_s
        and p.confidence >= policy.confidence_threshold
    ]
    if not relevant:
        return None
    alternatives = [p for p in available_paths if p.key != serving.key]
    if not alternatives:
        return None

    def rank(p: Path):
        prefer_lis = policy.preferred_fallback == "BEST_LIS"
        preferred = (p.kind == "VIA_LIS") == prefer_lis
        return (-p.gain_db, not preferred, p.lis_id or "")

    best = min(alternatives, key=rank)
    if best.gain_db <= serving.gain_db - policy.assumed_blockage_loss_db:
        return None
    trigger = min(relevant, key=lambda p: p.time_to_block_s)
    if (trigger.object_id, best.key) in pending:
        return None
    return ProactiveSwitch(target_key=best.key, object_id=trigger.object_id)


def evaluate_policies(scenario, config=None) -> dict:
    """Run the scenario under both policies with the same seed and report deltas."""
    from .netsim import run_scenario

    _, reactive = run_scenario(scenario, "REACTIVE", config)
    _, proactive = run_scenario(scenario, "PROACTIVE", config)
    return {
        "reactive": reactive,
        "proactive": proactive,
        "outage_delta_s": reactive["outage_s"] - proactive["outage_s"],
        "throughput_delta_bps": proactive["mean_throughput_bps"] - reactive["mean_throughput_bps"],
        "switch_lead_s": proactive.get("switch_lead_s"),
    }
