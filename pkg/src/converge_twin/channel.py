"""Radio link computation: path enumeration (direct and via-LIS), free-space
path loss, penetration loss, noise, SNR, and link-state assembly.

Propagation is geometric line-of-sight plus single-bounce reflections through
configured surfaces; blockage is additive penetration loss per blocker.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, MissingProfile, UnknownDevice, ValidationError
from .ris import (
    SPEED_OF_LIGHT,
    BacksidePanel,
    GAIN_FLOOR_DB,
    PhaseProfile,
    RisPanel,
    WaveContext,
    reflection_gain_db,
)
from .scene import OcclusionReport, Scene, segment_occluded

THERMAL_NOISE_DBM_PER_HZ = -174.0


@dataclass(frozen=True)
class ChannelParams:
    frequency_hz: float = 28e9
    bandwidth_hz: float = 100e6
    tx_power_dbm: float = 30.0
    tx_antenna_gain_dbi: float = 20.0
    rx_antenna_gain_dbi: float = 20.0
    noise_figure_db: float = 7.0
    thermal_noise_density_dbm_per_hz: float = THERMAL_NOISE_DBM_PER_HZ

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValidationError("frequency_hz must be > 0")
        if self.bandwidth_hz <= 0:
            raise ValidationError("bandwidth_hz must be > 0")

    @property
    def wave(self) -> WaveContext:
        return WaveContext(self.frequency_hz)


@dataclass(frozen=True)
class Path:
    kind: str  # "DIRECT" or "VIA_LIS"
    segments: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...]
    total_length_m: float
    occlusion: tuple[OcclusionReport, ...]
    gain_db: float
    lis_id: Optional[str] = None

    @property
    def key(self) -> str:
        return self.kind if self.kind == "DIRECT" else f"VIA_LIS:{self.lis_id}"


@dataclass(frozen=True)
class LinkState:
    serving_path: Path
    rx_power_dbm: float
    snr_db: float
    mcs_index: Optional[int]
    throughput_bps: float
    beam_index: int
    timestamp_s: float


def fspl_db(distance_m: float, frequency_hz: float) -> float:
    """Free-space path loss 20*log10(4*pi*d*f/c)."""
    if distance_m <= 0:
        raise DomainError(f"distance_m must be > 0, got {distance_m}")
    if frequency_hz <= 0:
        raise DomainError(f"frequency_hz must be > 0, got {frequency_hz}")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * frequency_hz / SPEED_OF_LIGHT)


def noise_power_dbm(params: ChannelParams) -> float:
    return (
        params.thermal_noise_density_dbm_per_hz
        + 10.0 * math.log10(params.bandwidth_hz)
        + params.noise_figure_db
    )


def _penetration_db(reports) -> float:
    return sum(r.total_penetration_loss_db for r in reports)


def _direct_path(scene: Scene, tx: np.ndarray, rx: np.ndarray,
                 params: ChannelParams) -> Path:
    occ = segment_occluded(scene, tx, rx)
    d = float(np.linalg.norm(rx - tx))
    gain = (
        params.tx_antenna_gain_dbi
        + params.rx_antenna_gain_dbi
        - fspl_db(d, params.frequency_hz)
        - occ.total_penetration_loss_db
    )
    return Path(
        kind="DIRECT",
        segments=((tuple(tx), tuple(rx)),),
        total_length_m=d,
        occlusion=(occ,),
        gain_db=gain,
    )


def _via_lis_path(scene: Scene, tx: np.ndarray, rx: np.ndarray, lis_id: str,
                  panel: RisPanel, profile: Optional[PhaseProfile],
                  params: ChannelParams) -> Path:
    if profile is None:
        raise MissingProfile(f"via-LIS path through {lis_id!r} requires a phase profile")
    mid = panel.pose.pos()
    occ1 = segment_occluded(scene, tx, mid)
    occ2 = segment_occluded(scene, mid, rx)
    d1 = float(np.linalg.norm(mid - tx))
    d2 = float(np.linalg.norm(rx - mid))
    uin = (tx - mid) / d1
    uout = (rx - mid) / d2
    try:
        refl = reflection_gain_db(panel, profile, uin, uout, params.wave)
    except BacksidePanel:
        refl = GAIN_FLOOR_DB
    gain = (
        params.tx_antenna_gain_dbi
        + params.rx_antenna_gain_dbi
        - fspl_db(d1, params.frequency_hz)
        - fspl_db(d2, params.frequency_hz)
        + refl
        - occ1.total_penetration_loss_db
        - occ2.total_penetration_loss_db
    )
    return Path(
        kind="VIA_LIS",
        segments=((tuple(tx), tuple(mid)), (tuple(mid), tuple(rx))),
        total_length_m=d1 + d2,
        occlusion=(occ1, occ2),
        gain_db=gain,
        lis_id=lis_id,
    )


def path_gain_db(path: Path, ris_profile: Optional[PhaseProfile],
                 params: ChannelParams, panel: Optional[RisPanel] = None) -> float:
    """Recompute a path's end-to-end gain from its geometry."""
    if path.kind == "DIRECT":
        d = path.total_length_m
        return (
            params.tx_antenna_gain_dbi
            + params.rx_antenna_gain_dbi
            - fspl_db(d, params.frequency_hz)
            - _penetration_db(path.occlusion)
        )
    if ris_profile is None:
        raise MissingProfile("via-LIS path requires a phase profile")
    if panel is None:
        raise ValidationError("via-LIS path requires the panel geometry")
    (a, mid), (_, b) = path.segments
    av, midv, bv = (np.asarray(p, dtype=float) for p in (a, mid, b))
    d1 = float(np.linalg.norm(midv - av))
    d2 = float(np.linalg.norm(bv - midv))
    try:
        refl = reflection_gain_db(panel, ris_profile, (midv - av) / d1, (bv - midv) / d2,
                                  params.wave)
    except BacksidePanel:
        refl = GAIN_FLOOR_DB
    return (
        params.tx_antenna_gain_dbi
        + params.rx_antenna_gain_dbi
        - fspl_db(d1, params.frequency_hz)
        - fspl_db(d2, params.frequency_hz)
        + refl
        - _penetration_db(path.occlusion)
    )


def enumerate_paths(scene: Scene, tx_id: str, rx_id: str, params: ChannelParams,
                    panels: Optional[dict[str, RisPanel]] = None,
                    profiles: Optional[dict[str, PhaseProfile]] = None) -> list[Path]:
    """Direct path plus one via-LIS path per surface, sorted by gain descending.

    Ties break DIRECT first, then lowest lis_id.
    """
    panels = panels or {}
    profiles = profiles or {}
    for did in (tx_id, rx_id):
        if did not in scene.devices:
            raise UnknownDevice(did)
    tx = scene.device_position(tx_id)
    rx = scene.device_position(rx_id)
    paths = [_direct_path(scene, tx, rx, params)]
    for lis in sorted(scene.devices_of_kind("LIS"), key=lambda d: d.device_id):
        panel = panels.get(lis.device_id)
        if panel is None:
            continue
        paths.append(
            _via_lis_path(scene, tx, rx, lis.device_id, panel,
                          profiles.get(lis.device_id), params)
        )
    paths.sort(key=lambda p: (-p.gain_db, p.kind != "DIRECT", p.lis_id or ""))
    return paths


def link_state(scene: Scene, tx_id: str, rx_id: str, params: ChannelParams,
               mcs_table, t: float,
               panels: Optional[dict[str, RisPanel]] = None,
               profiles: Optional[dict[str, PhaseProfile]] = None,
               overhead_fraction: float = 0.25,
               beam_index: int = 0,
               serving_key: Optional[str] = None) -> LinkState:
    """Assemble the link state on the max-gain path (or a forced serving path).

    `mcs_table` supplies `lookup(snr_db)` and rate derivation; see the
    simulator's link-adaptation tables.
    """
    paths = enumerate_paths(scene, tx_id, rx_id, params, panels, profiles)
    serving = paths[0]
    if serving_key is not None:
        matches = [p for p in paths if p.key == serving_key]
        if not matches:
            raise ValidationError(f"no enumerated path matches serving key {serving_key!r}")
        serving = matches[0]
    rx_power = params.tx_power_dbm + serving.gain_db
    snr = rx_power - noise_power_dbm(params)
    row = mcs_table.lookup(snr)
    if row is None:
        mcs_index, throughput = None, 0.0
    else:
        mcs_index = row.mcs_index
        throughput = row.spectral_efficiency_bps_per_hz * params.bandwidth_hz * (
            1.0 - overhead_fraction
        )
    return LinkState(
        serving_path=serving,
        rx_power_dbm=rx_power,
        snr_db=snr,
        mcs_index=mcs_index,
        throughput_bps=throughput,
        beam_index=beam_index,
        timestamp_s=t,
    )
