"""Discrete-event simulator: fixed-tick loop that moves devices, recomputes
links, runs the beam-management state machine and link adaptation, and emits
timestamped, space-referenced trace records.

A session has exactly one writer advancing its WorldState; control commands
arrive through a queue drained at tick boundaries. Steps are transactional:
a failing step leaves the previous world value untouched.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import xapp as xapp_mod
from .channel import LinkState, enumerate_paths, noise_power_dbm
from .errors import InvalidCommand, ValidationError
from .scene import Scene, scene_at_time, set_placement
from .trace import TraceRecord
from .vision import Track, detect_objects, update_track
from .xapp import ProactiveSwitch, SwitchPolicy

FSM_MODES = ("TRACKING", "FAILURE_DETECTION", "SWEEPING", "SWITCHING")


# -- link adaptation ---------------------------------------------------------

@dataclass(frozen=True)
class McsRow:
    min_snr_db: float
    mcs_index: int
    spectral_efficiency_bps_per_hz: float


@dataclass(frozen=True)
class McsTable:
    rows: tuple[McsRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise ValidationError("MCS table must be non-empty")
        for a, b in zip(self.rows, self.rows[1:]):
            if not (a.min_snr_db < b.min_snr_db and a.mcs_index < b.mcs_index):
                raise ValidationError("MCS rows must be strictly increasing in SNR and index")

    @property
    def outage_threshold_db(self) -> float:
        return self.rows[0].min_snr_db

    def lookup(self, snr_db: float) -> Optional[McsRow]:
        """Highest row whose threshold is <= snr (closed lower bound); None = outage."""
        best = None
        for row in self.rows:
            if snr_db >= row.min_snr_db:
                best = row
        return best


def default_mcs_table() -> McsTable:
    thresholds = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0)
    efficiencies = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0)
    return McsTable(tuple(
        McsRow(th, i, eff) for i, (th, eff) in enumerate(zip(thresholds, efficiencies))
    ))


def mcs_from_snr(snr_db: float, table: McsTable) -> Optional[McsRow]:
    return table.lookup(snr_db)


def throughput_bps(mcs: Optional[McsRow], bandwidth_hz: float,
                   overhead_fraction: float = 0.25) -> float:
    if not 0.0 <= overhead_fraction < 1.0:
        raise ValidationError("overhead_fraction must lie in [0, 1)")
    if mcs is None:
        return 0.0
    return mcs.spectral_efficiency_bps_per_hz * bandwidth_hz * (1.0 - overhead_fraction)


# -- beam codebook -----------------------------------------------------------

@dataclass(frozen=True)
class Beam:
    beam_index: int
    azimuth_deg: float
    elevation_deg: float
    gain_dbi: float


@dataclass(frozen=True)
class BeamCodebook:
    beams: tuple[Beam, ...]
    sweep_dwell_s: float = 0.005

    def __post_init__(self):
        if not self.beams:
            raise ValidationError("codebook must be non-empty")
        if len({b.beam_index for b in self.beams}) != len(self.beams):
            raise ValidationError("beam indices must be unique")

    def nearest_beam(self, azimuth_deg: float) -> Beam:
        return min(self.beams, key=lambda b: (abs(b.azimuth_deg - azimuth_deg), b.beam_index))


def default_codebook(num_beams: int = 16, gain_dbi: float = 20.0,
                     sweep_dwell_s: float = 0.005) -> BeamCodebook:
    azimuths = np.linspace(-60.0, 60.0, num_beams)
    return BeamCodebook(
        beams=tuple(Beam(i, float(az), 0.0, gain_dbi) for i, az in enumerate(azimuths)),
        sweep_dwell_s=sweep_dwell_s,
    )


@dataclass(frozen=True)
class SimConfig:
    tick_s: float = 0.010
    duration_s: float = 6.0
    detection_window_s: float = 0.040
    rng_seed: int = 42
    overhead_fraction: float = 0.25
    mcs_table: McsTable = field(default_factory=default_mcs_table)
    codebook: BeamCodebook = field(default_factory=default_codebook)

    def __post_init__(self):
        if self.tick_s <= 0:
            raise ValidationError("tick_s must be > 0")


# -- beam-management state machine -------------------------------------------

@dataclass(frozen=True)
class BeamFsmState:
    mode: str = "TRACKING"
    serving_beam: int = 0
    failure_timer_s: float = 0.0
    sweep_progress: float = 0.0
    target: str = "DIRECT"  # serving path key
    pending_target: Optional[str] = None


def beam_fsm_step(state: BeamFsmState, link_ok: bool,
                  command: Optional[ProactiveSwitch], config: SimConfig,
                  candidates: list[str],
                  probe: Callable[[str], bool]) -> tuple[BeamFsmState, list[dict]]:
    """One tick of the beam-management state machine.

    `candidates` lists reachable path keys, direct first; `probe` answers
    whether a candidate currently clears the outage threshold. A
    ProactiveSwitch bypasses failure detection and sweeping entirely.
    """
    events: list[dict] = []
    tick = config.tick_s

    if command is not None:
        if command.target_key not in candidates:
            raise InvalidCommand(f"unknown switch target {command.target_key!r}")
        events.append({
            "event": "proactive_switch", "from": state.mode,
            "target": command.target_key, "object_id": command.object_id,
        })
        return replace(state, mode="SWITCHING", failure_timer_s=0.0,
                       sweep_progress=0.0, pending_target=command.target_key), events

    if state.mode == "TRACKING":
        if link_ok:
            return replace(state, failure_timer_s=0.0), events
        events.append({"event": "fsm_transition", "from": "TRACKING",
                       "to": "FAILURE_DETECTION"})
        return replace(state, mode="FAILURE_DETECTION", failure_timer_s=tick), events

    if state.mode == "FAILURE_DETECTION":
        if link_ok:
            events.append({"event": "fsm_transition", "from": "FAILURE_DETECTION",
                           "to": "TRACKING"})
            return replace(state, mode="TRACKING", failure_timer_s=0.0), events
        timer = min(state.failure_timer_s + tick, config.detection_window_s)
        if timer >= config.detection_window_s:
            events.append({"event": "fsm_transition", "from": "FAILURE_DETECTION",
                           "to": "SWEEPING"})
            return replace(state, mode="SWEEPING", failure_timer_s=timer,
                           sweep_progress=0.0), events
        return replace(state, failure_timer_s=timer), events

    if state.mode == "SWEEPING":
        if link_ok:
            events.append({"event": "fsm_transition", "from": "SWEEPING",
                           "to": "TRACKING"})
            return replace(state, mode="TRACKING", failure_timer_s=0.0,
                           sweep_progress=0.0), events
        n_beams = len(config.codebook.beams)
        n_alt = min(max(len(candidates) - 1, 0), n_beams - 1)
        start = int(state.sweep_progress)
        progress = min(state.sweep_progress + tick / config.codebook.sweep_dwell_s,
                       float(n_beams))
        for beam in range(start, min(int(progress), n_beams)):
            if beam < n_beams - n_alt:
                target = candidates[0]
            else:
                target = candidates[1 + (beam - (n_beams - n_alt))]
            if probe(target):
                events.append({"event": "fsm_transition", "from": "SWEEPING",
                               "to": "SWITCHING", "target": target,
                               "beams_swept": beam + 1})
                return replace(state, mode="SWITCHING", sweep_progress=float(beam + 1),
                               serving_beam=beam, pending_target=target), events
        if progress >= n_beams:
            progress = 0.0  # full sweep found nothing; start over
        return replace(state, sweep_progress=progress), events

    # SWITCHING is completed by the step loop at the next tick boundary
    return state, events


# -- world state and simulator ----------------------------------------------

@dataclass(frozen=True)
class WorldState:
    scene: Scene
    t_s: float = 0.0
    tick_index: int = 0
    fsm: BeamFsmState = field(default_factory=BeamFsmState)
    ris_profiles: dict = field(default_factory=dict)
    pending_commands: tuple = ()
    link: Optional[LinkState] = None
    tracks: dict = field(default_factory=dict)
    xapp_pending: frozenset = frozenset()
    next_frame: dict = field(default_factory=dict)


class Simulator:
    """Single-writer executor advancing one session's WorldState."""

    def __init__(self, scenario, policy: str = "REACTIVE",
                 config: Optional[SimConfig] = None):
        if policy not in ("REACTIVE", "PROACTIVE"):
            raise ValidationError(f"unknown policy {policy!r}")
        self.scenario = scenario
        self.policy = policy
        self.config = config or scenario.sim
        self.params = scenario.params
        self.switch_policy: SwitchPolicy = scenario.switch_policy

    # -- setup

    def initial_world(self) -> WorldState:
        return WorldState(
            scene=self.scenario.scene,
            ris_profiles=dict(self.scenario.profiles),
            next_frame={cid: 1.0 / cam.frame_rate_hz
                        for cid, cam in self.scenario.cameras.items()},
        )

    def initial_records(self, session_id: str = "local") -> list[TraceRecord]:
        records = []
        for lis_id in sorted(self.scenario.profiles):
            profile = self.scenario.profiles[lis_id]
            pos = tuple(self.scenario.scene.device_position(lis_id))
            records.append(TraceRecord(
                session_id=session_id,
                timestamp_s=0.0,
                kind="RIS_PROFILE",
                device_id=lis_id,
                position_m=pos,  # type: ignore[arg-type]
                payload={
                    "rows": profile.shape[0],
                    "cols": profile.shape[1],
                    "quantization_bits": profile.quantization_bits,
                    "phases_rad": [[round(float(p), 6) for p in row]
                                   for row in profile.phases_rad],
                },
            ))
        return records

    # -- command queue

    @staticmethod
    def queue_command(world: WorldState, command: dict) -> WorldState:
        return replace(world, pending_commands=world.pending_commands + (command,))

    def _apply_command(self, scene: Scene, profiles: dict, command: dict) -> Scene:
        ctype = command.get("type")
        if ctype == "placement":
            return set_placement(scene, command["device_id"], command["pose"])
        if ctype == "ris_profile":
            profiles[command["lis_id"]] = command["profile"]
            return scene
        if ctype == "inject_obstacle":
            obstacles = scene.obstacles + (command["obstacle"],)
            trajectories = dict(scene.trajectories)
            if command.get("trajectory") is not None:
                trajectories[command["obstacle"].id] = command["trajectory"]
            return replace(scene, obstacles=obstacles, trajectories=trajectories)
        raise InvalidCommand(f"unknown command type {ctype!r}")

    # -- tick

    def _beam_for(self, scene: Scene, target_key: str) -> int:
        tx = scene.device_position(self.scenario.tx_id)
        if target_key.startswith("VIA_LIS:"):
            aim = scene.device_position(target_key.split(":", 1)[1])
        else:
            aim = scene.device_position(self.scenario.rx_id)
        az = math.degrees(math.atan2(aim[1] - tx[1], aim[0] - tx[0]))
        return self.config.codebook.nearest_beam(az).beam_index

    def step(self, world: WorldState,
             session_id: str = "local") -> tuple[WorldState, list[TraceRecord], list[dict]]:
        cfg = self.config
        tick_index = world.tick_index + 1
        t = round(tick_index * cfg.tick_s, 9)
        events: list[dict] = []
        records: list[TraceRecord] = []

        # 1. drain queued commands, then move trajectory-driven ids
        base_scene = world.scene
        profiles = dict(world.ris_profiles)
        switch_command: Optional[ProactiveSwitch] = None
        for command in world.pending_commands:
            if command.get("type") == "proactive_switch":
                if switch_command is None:
                    switch_command = command["command"]
                continue
            base_scene = self._apply_command(base_scene, profiles, command)
            obstacle = command.get("obstacle")
            events.append({"event": "command_applied", "command": command["type"],
                           "target": command.get("device_id") or command.get("lis_id")
                           or (obstacle.id if obstacle is not None else None)})
        scene = scene_at_time(base_scene, t)

        # 2. complete a pending beam switch at the tick boundary
        fsm = world.fsm
        xapp_pending = world.xapp_pending
        if fsm.mode == "SWITCHING" and fsm.pending_target is not None:
            new_target = fsm.pending_target
            fsm = replace(fsm, mode="TRACKING", target=new_target, pending_target=None,
                          failure_timer_s=0.0, sweep_progress=0.0)
            events.append({"event": "switch_complete", "target": new_target})
            xapp_pending = frozenset(
                p for p in xapp_pending if p[1] != new_target
            )

        # 3. recompute the link on the FSM's serving target
        paths = enumerate_paths(scene, self.scenario.tx_id, self.scenario.rx_id,
                                self.params, self.scenario.panels, profiles)
        by_key = {p.key: p for p in paths}
        serving = by_key.get(fsm.target, paths[0])
        noise = noise_power_dbm(self.params)
        rx_power = self.params.tx_power_dbm + serving.gain_db
        snr = rx_power - noise
        outage_th = cfg.mcs_table.outage_threshold_db
        link_ok = snr >= outage_th
        beam_index = fsm.serving_beam if fsm.mode == "SWEEPING" else self._beam_for(scene, serving.key)
        fsm = replace(fsm, serving_beam=beam_index)

        # 4. vision frames and (under the proactive policy) the control app
        tracks = dict(world.tracks)
        next_frame = dict(world.next_frame)
        frame_detections: dict[str, list] = {}
        for cam_id in sorted(self.scenario.cameras):
            if t + 1e-9 < next_frame[cam_id]:
                continue
            camera = self.scenario.cameras[cam_id]
            camera = replace(camera, pose=scene.devices[cam_id].pose)
            dets = detect_objects(scene, camera, t, cfg.rng_seed)
            next_frame[cam_id] = round(next_frame[cam_id] + 1.0 / camera.frame_rate_hz, 9)
            for det in dets:
                frame_detections.setdefault(det.object_id, []).append(det)
                records.append(TraceRecord(
                    session_id=session_id, timestamp_s=t, kind="DETECTION",
                    device_id=cam_id,
                    position_m=tuple(camera.pose.position),  # type: ignore[arg-type]
                    payload={
                        "object_id": det.object_id,
                        "bbox_px": list(det.bbox_px),
                        "world_position_m": list(det.world_position_m),
                        "confidence": det.confidence,
                    },
                ))
        for object_id, dets in sorted(frame_detections.items()):
            fused = tuple(np.mean([d.world_position_m for d in dets], axis=0))
            merged = replace(dets[0], world_position_m=fused)
            track = tracks.get(object_id, Track(object_id=object_id))
            tracks[object_id] = update_track(track, merged)

        pending_commands: tuple = ()
        if self.policy == "PROACTIVE" and tracks:
            extents = {ob.id: ob.half_extents for ob in scene.obstacles}
            predictions = []
            for segment in serving.segments:
                predictions.extend(xapp_mod.predict_blockage(
                    list(tracks.values()), segment, extents,
                    self.switch_policy.horizon_s, now=t, path_key=serving.key,
                ))
            link_now = LinkState(serving, rx_power, snr, None, 0.0, beam_index, t)
            command = xapp_mod.decide_switch(predictions, link_now, paths,
                                             self.switch_policy, xapp_pending)
            if command is not None:
                xapp_pending = xapp_pending | {(command.object_id, command.target_key)}
                pending_commands = ({"type": "proactive_switch", "command": command},)

        # 5. beam management
        candidates = [p.key for p in sorted(paths, key=lambda p: (p.kind != "DIRECT",
                                                                  p.lis_id or ""))]

        def probe(target_key: str) -> bool:
            path = by_key.get(target_key)
            if path is None:
                return False
            return self.params.tx_power_dbm + path.gain_db - noise >= outage_th

        fsm, fsm_events = beam_fsm_step(fsm, link_ok, switch_command, cfg,
                                        candidates, probe)
        events.extend(fsm_events)

        # 6. link adaptation and trace emission
        row = cfg.mcs_table.lookup(snr)
        throughput = throughput_bps(row, self.params.bandwidth_hz, cfg.overhead_fraction)
        link = LinkState(
            serving_path=serving,
            rx_power_dbm=rx_power,
            snr_db=snr,
            mcs_index=row.mcs_index if row else None,
            throughput_bps=throughput,
            beam_index=beam_index,
            timestamp_s=t,
        )
        rx_pos = tuple(scene.device_position(self.scenario.rx_id))
        records.append(TraceRecord(
            session_id=session_id, timestamp_s=t, kind="RADIO",
            device_id=self.scenario.rx_id,
            position_m=rx_pos,  # type: ignore[arg-type]
            payload={
                "rx_power_dbm": rx_power,
                "snr_db": snr,
                "mcs": link.mcs_index,
                "throughput_bps": throughput,
                "serving_path": serving.key,
                "beam_index": beam_index,
                "fsm_mode": fsm.mode,
            },
        ))
        if events:
            tx_pos = tuple(scene.device_position(self.scenario.tx_id))
            records.append(TraceRecord(
                session_id=session_id, timestamp_s=t, kind="EVENT",
                device_id=self.scenario.tx_id,
                position_m=tx_pos,  # type: ignore[arg-type]
                payload={"events": events},
            ))

        new_world = WorldState(
            scene=base_scene,
            t_s=t,
            tick_index=tick_index,
            fsm=fsm,
            ris_profiles=profiles,
            pending_commands=pending_commands,
            link=link,
            tracks=tracks,
            xapp_pending=xapp_pending,
            next_frame=next_frame,
        )
        return new_world, records, events

    # -- full run

    def run(self, session_id: str = "local",
            on_records: Optional[Callable[[list[TraceRecord]], None]] = None,
            on_events: Optional[Callable[[float, list[dict]], None]] = None,
            should_stop: Optional[Callable[[], bool]] = None,
            command_source: Optional[Callable[[], list[dict]]] = None,
            tick_sleep_s: float = 0.0,
            ) -> tuple[list[TraceRecord], dict]:
        cfg = self.config
        n_ticks = int(round(cfg.duration_s / cfg.tick_s))
        world = self.initial_world()
        all_records = self.initial_records(session_id)
        if on_records and all_records:
            on_records(list(all_records))

        mode_ticks = {mode: 0 for mode in FSM_MODES}
        outage_ticks = 0
        throughput_sum = 0.0
        snr_sum = 0.0
        switch_count = 0
        switch_latencies: list[float] = []
        failure_start: Optional[float] = None
        command_time: Optional[float] = None
        switch_complete_t: Optional[float] = None
        first_direct_outage_after_switch: Optional[float] = None

        for _ in range(n_ticks):
            if should_stop and should_stop():
                break
            if command_source:
                queued = command_source()
                if queued:
                    world = replace(world, pending_commands=world.pending_commands
                                    + tuple(queued))
            if tick_sleep_s > 0:
                time.sleep(tick_sleep_s)
            world, records, events = self.step(world, session_id)
            if on_records and records:
                on_records(records)
            if on_events and events:
                on_events(world.t_s, events)
            all_records.extend(records)
            mode_ticks[world.fsm.mode] += 1
            link = world.link
            assert link is not None
            if link.mcs_index is None:
                outage_ticks += 1
            throughput_sum += link.throughput_bps
            snr_sum += link.snr_db
            for ev in events:
                name = ev.get("event")
                if name == "fsm_transition" and ev.get("to") == "FAILURE_DETECTION":
                    if failure_start is None:
                        failure_start = world.t_s
                elif name == "proactive_switch":
                    command_time = world.t_s
                elif name == "switch_complete":
                    switch_count += 1
                    start = command_time if command_time is not None else failure_start
                    if start is not None:
                        switch_latencies.append(round(world.t_s - start, 9))
                    failure_start = None
                    command_time = None
                    if switch_complete_t is None:
                        switch_complete_t = world.t_s
            if (switch_complete_t is not None
                    and first_direct_outage_after_switch is None
                    and world.fsm.target != "DIRECT"):
                # when would the abandoned direct path have failed?
                scene_now = scene_at_time(world.scene, world.t_s)
                direct = [p for p in enumerate_paths(scene_now, self.scenario.tx_id,
                                                     self.scenario.rx_id, self.params)
                          if p.kind == "DIRECT"]
                if direct and (self.params.tx_power_dbm + direct[0].gain_db
                               - noise_power_dbm(self.params)
                               < cfg.mcs_table.outage_threshold_db):
                    first_direct_outage_after_switch = world.t_s

        ticks_done = sum(mode_ticks.values())
        summary = {
            "policy": self.policy,
            "duration_s": round(ticks_done * cfg.tick_s, 9),
            "ticks": ticks_done,
            "outage_s": round(outage_ticks * cfg.tick_s, 9),
            "mean_throughput_bps": round(throughput_sum / max(ticks_done, 1), 6),
            "mean_snr_db": round(snr_sum / max(ticks_done, 1), 6),
            "switch_count": switch_count,
            "switch_latencies_s": switch_latencies,
            "mode_time_s": {m: round(n * cfg.tick_s, 9) for m, n in mode_ticks.items()},
        }
        if switch_complete_t is not None and first_direct_outage_after_switch is not None:
            summary["switch_lead_s"] = round(
                first_direct_outage_after_switch - switch_complete_t, 9)
        return all_records, summary


def run_scenario(scenario, policy: str = "REACTIVE",
                 config: Optional[SimConfig] = None) -> tuple[list[TraceRecord], dict]:
    """Execute a scenario under the given policy; returns (trace log, summary)."""
    return Simulator(scenario, policy, config).run()
