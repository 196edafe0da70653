"""Scenario documents: one YAML file describing the chamber scene plus the
radio, surface, camera, simulation, and control-policy configuration.

Schema version 1; the schema is documented in the repository README.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np
import yaml

from .channel import ChannelParams
from .errors import ParseError, ValidationError
from .netsim import (
    McsRow,
    McsTable,
    SimConfig,
    default_codebook,
    default_mcs_table,
)
from .ris import PhaseProfile, RisPanel, WaveContext, design_steering_profile, quantize_profile
from .scene import Scene, scene_from_dict
from .vision import CameraModel
from .xapp import SwitchPolicy

SCENARIO_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    name: str
    scene: Scene
    params: ChannelParams
    tx_id: str
    rx_id: str
    panels: dict[str, RisPanel] = field(default_factory=dict)
    profiles: dict[str, PhaseProfile] = field(default_factory=dict)
    cameras: dict[str, CameraModel] = field(default_factory=dict)
    sim: SimConfig = field(default_factory=SimConfig)
    switch_policy: SwitchPolicy = field(default_factory=SwitchPolicy)
    doc: dict = field(default_factory=dict)


def _channel_params(doc: dict) -> ChannelParams:
    cfg = doc.get("channel", {}) or {}
    return ChannelParams(
        frequency_hz=float(cfg.get("frequency_hz", 28e9)),
        bandwidth_hz=float(cfg.get("bandwidth_hz", 100e6)),
        tx_power_dbm=float(cfg.get("tx_power_dbm", 30.0)),
        tx_antenna_gain_dbi=float(cfg.get("tx_antenna_gain_dbi", 20.0)),
        rx_antenna_gain_dbi=float(cfg.get("rx_antenna_gain_dbi", 20.0)),
        noise_figure_db=float(cfg.get("noise_figure_db", 7.0)),
    )


def _mcs_table(cfg) -> McsTable:
    if not cfg:
        return default_mcs_table()
    return McsTable(tuple(
        McsRow(float(r["min_snr_db"]), int(r["mcs_index"]),
               float(r["spectral_efficiency_bps_per_hz"]))
        for r in cfg
    ))


def _sim_config(doc: dict) -> SimConfig:
    cfg = doc.get("sim", {}) or {}
    cb = cfg.get("codebook", {}) or {}
    codebook = default_codebook(
        num_beams=int(cb.get("num_beams", 16)),
        gain_dbi=float(cb.get("gain_dbi", 20.0)),
        sweep_dwell_s=float(cb.get("sweep_dwell_s", 0.005)),
    )
    return SimConfig(
        tick_s=float(cfg.get("tick_s", 0.010)),
        duration_s=float(cfg.get("duration_s", 6.0)),
        detection_window_s=float(cfg.get("detection_window_s", 0.040)),
        rng_seed=int(cfg.get("rng_seed", 42)),
        overhead_fraction=float(cfg.get("overhead_fraction", 0.25)),
        mcs_table=_mcs_table(cfg.get("mcs_table")),
        codebook=codebook,
    )


def _switch_policy(doc: dict) -> SwitchPolicy:
    cfg = doc.get("xapp", {}) or {}
    return SwitchPolicy(
        lead_time_s=float(cfg.get("lead_time_s", 0.1)),
        confidence_threshold=float(cfg.get("confidence_threshold", 0.5)),
        preferred_fallback=str(cfg.get("preferred_fallback", "BEST_LIS")).upper(),
        horizon_s=float(cfg.get("horizon_s", 2.0)),
        assumed_blockage_loss_db=float(cfg.get("assumed_blockage_loss_db", 30.0)),
    )


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    scene = scene_from_dict(doc)
    params = _channel_params(doc)
    wave = WaveContext(params.frequency_hz)
    link_cfg = doc.get("link", {}) or {}
    tx_id = str(link_cfg.get("tx", "gnb"))
    rx_id = str(link_cfg.get("rx", "ue"))
    for did in (tx_id, rx_id):
        if did not in scene.devices:
            raise ValidationError(f"link endpoint {did!r} is not a scene device")

    panels: dict[str, RisPanel] = {}
    profiles: dict[str, PhaseProfile] = {}
    for lis_id, cfg in (doc.get("ris_panels", {}) or {}).items():
        lis_id = str(lis_id)
        if lis_id not in scene.devices or scene.devices[lis_id].kind != "LIS":
            raise ValidationError(f"ris_panels entry {lis_id!r} is not an LIS device")
        cfg = cfg or {}
        spacing = cfg.get("spacing_m", "half_wavelength")
        if spacing == "half_wavelength":
            spacing = wave.wavelength_m / 2.0
        panel = RisPanel(
            rows=int(cfg.get("rows", 16)),
            cols=int(cfg.get("cols", 16)),
            spacing_m=float(spacing),
            pose=scene.devices[lis_id].pose,
            element_gain_dbi=float(cfg.get("element_gain_dbi", 5.0)),
        )
        panels[lis_id] = panel
        if cfg.get("auto_steer", True):
            tx = scene.device_position(tx_id)
            rx = scene.device_position(rx_id)
            mid = panel.pose.pos()
            uin = (tx - mid) / np.linalg.norm(tx - mid)
            uout = (rx - mid) / np.linalg.norm(rx - mid)
            profile = design_steering_profile(panel, uin, uout, wave)
            bits = int(cfg.get("quantization_bits", 2))
            if bits >= 1:
                profile = quantize_profile(profile, bits)
            profiles[lis_id] = profile

    cameras: dict[str, CameraModel] = {}
    for cam_id, cfg in (doc.get("cameras", {}) or {}).items():
        cam_id = str(cam_id)
        if cam_id not in scene.devices or scene.devices[cam_id].kind != "CAMERA":
            raise ValidationError(f"cameras entry {cam_id!r} is not a CAMERA device")
        cfg = cfg or {}
        cameras[cam_id] = CameraModel(
            device_id=cam_id,
            pose=scene.devices[cam_id].pose,
            focal_px=float(cfg.get("focal_px", 500.0)),
            image_width_px=int(cfg.get("image_width_px", 1000)),
            image_height_px=int(cfg.get("image_height_px", 800)),
            frame_rate_hz=float(cfg.get("frame_rate_hz", 20.0)),
            noise_std_m=float(cfg.get("noise_std_m", 0.0)),
        )
    # cameras without an explicit config block still sense with defaults
    for dev in scene.devices_of_kind("CAMERA"):
        cameras.setdefault(dev.device_id,
                           CameraModel(device_id=dev.device_id, pose=dev.pose))

    return Scenario(
        name=str(doc.get("name", name)),
        scene=scene,
        params=params,
        tx_id=tx_id,
        rx_id=rx_id,
        panels=panels,
        profiles=profiles,
        cameras=cameras,
        sim=_sim_config(doc),
        switch_policy=_switch_policy(doc),
        doc=doc,
    )


def load_scenario(path) -> Scenario:
    """Load and validate a scenario YAML file."""
    p = FilePath(path)
    try:
        text = p.read_text()
    except OSError:
        raise
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed scenario document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a key/value mapping")
    return scenario_from_dict(doc, name=p.stem)


def builtin_scenario_path(name: str) -> FilePath:
    """Path of a scenario YAML shipped with the package."""
    return FilePath(__file__).parent / "scenarios" / f"{name}.yaml"
