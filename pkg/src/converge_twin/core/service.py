"""REST surface of the service layer (HTTP/1.1, JSON bodies, all under /v1).

Auth is `Authorization: Bearer <token>`; 401 unknown principal, 403 denied,
404 unknown resource, 409 illegal transition or conflict, 422 validation.
`/v1/healthz` is unauthenticated. Session event streams are server-sent
events resumable via `Last-Event-ID`.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..errors import (
    DuplicateModel,
    IllegalTransition,
    InvalidCommand,
    NonMonotonicTimestamp,
    OutOfBounds,
    ParseError,
    QuotaExceeded,
    SchemaMismatch,
    SessionNotRunning,
    TwinError,
    UnknownDataset,
    UnknownDevice,
    UnknownModel,
    UnknownScenario,
    UnknownSession,
    Unsealed,
    ValidationError,
)
from ..ris import PhaseProfile, design_steering_profile, quantize_profile
from ..scene import Obstacle, Pose, Trajectory
from ..xapp import ProactiveSwitch
from .auth import PolicyStore
from .models import ModelEntry, ModelRegistry, builtin_registry
from .sessions import SessionManager

_STATUS = {
    ValidationError: 422,
    ParseError: 422,
    OutOfBounds: 422,
    UnknownDevice: 422,
    SchemaMismatch: 422,
    NonMonotonicTimestamp: 409,
    IllegalTransition: 409,
    SessionNotRunning: 409,
    InvalidCommand: 409,
    DuplicateModel: 409,
    Unsealed: 409,
    QuotaExceeded: 403,
    UnknownScenario: 404,
    UnknownSession: 404,
    UnknownDataset: 404,
    UnknownModel: 404,
}


def _status_for(exc: TwinError) -> int:
    for cls, status in _STATUS.items():
        if isinstance(exc, cls):
            return status
    return 400


def create_app(manager: SessionManager, policy_store: PolicyStore,
               registry: Optional[ModelRegistry] = None,
               ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="converge-twin core", version="1")
    registry = registry or builtin_registry()
    app.state.manager = manager
    app.state.registry = registry

    @app.exception_handler(TwinError)
    async def twin_error_handler(_request: Request, exc: TwinError):
        return JSONResponse(status_code=_status_for(exc),
                            content={"error": type(exc).__name__, "detail": str(exc)})

    def principal(authorization: Optional[str] = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise_401()
        name = policy_store.principal_for_token(authorization.removeprefix("Bearer "))
        if name is None:
            raise_401()
        return name  # type: ignore[return-value]

    def raise_401():
        from fastapi import HTTPException
        raise HTTPException(status_code=401, detail="unknown principal")

    def authorize(who: str, operation: str, resource: Optional[str] = None) -> None:
        decision = policy_store.authorize(
            who, operation, resource,
            active_sessions=manager.active_session_count(who))
        if not decision:
            from fastapi import HTTPException
            raise HTTPException(status_code=403, detail=decision.reason)

    # -- health

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok"}

    # -- sessions

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict, who: str = Depends(principal)):
        authorize(who, "create_session")
        session = manager.create_session(
            owner=who,
            scenario_ref=str(body.get("scenario_ref", "")),
            policy=str(body.get("policy", "REACTIVE")).upper(),
            realtime=bool(body.get("realtime", False)),
        )
        return session.to_dict()

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str, who: str = Depends(principal)):
        authorize(who, "read_session", session_id)
        return manager.get_session(session_id).to_dict()

    @app.post("/v1/sessions/{session_id}/transition")
    def transition(session_id: str, body: dict, who: str = Depends(principal)):
        authorize(who, "transition_session", session_id)
        wait = bool(body.get("wait", False))
        session = manager.transition_session(
            session_id, str(body.get("target", "")).upper(), wait=wait)
        return session.to_dict()

    # -- control functions (placement, RIS profile, generic commands)

    @app.put("/v1/sessions/{session_id}/placement/{device_id}")
    def put_placement(session_id: str, device_id: str, body: dict,
                      who: str = Depends(principal)):
        authorize(who, "command", session_id)
        scenario = manager.scenario_for(session_id)
        if device_id not in scenario.scene.devices:
            raise UnknownDevice(device_id)
        position = body.get("position")
        if not isinstance(position, (list, tuple)) or len(position) != 3:
            raise ValidationError("position must be a 3-vector")
        if any(not (0.0 <= float(p) <= d)
               for p, d in zip(position, scenario.scene.chamber_dims)):
            raise OutOfBounds(
                f"position {position} outside chamber {scenario.scene.chamber_dims}")
        pose = Pose.at(position, yaw_rad=math.radians(float(body.get("yaw_deg", 0.0))))
        manager.queue_command(session_id, {
            "type": "placement", "device_id": device_id, "pose": pose,
        })
        return {"queued": True, "device_id": device_id,
                "position": [float(p) for p in position]}

    @app.put("/v1/sessions/{session_id}/ris/{lis_id}/profile")
    def put_ris_profile(session_id: str, lis_id: str, body: dict,
                        who: str = Depends(principal)):
        authorize(who, "command", session_id)
        scenario = manager.scenario_for(session_id)
        if lis_id not in scenario.panels:
            raise UnknownDevice(lis_id)
        panel = scenario.panels[lis_id]
        if body.get("preset") == "steer":
            import numpy as np
            tx = scenario.scene.device_position(scenario.tx_id)
            rx = scenario.scene.device_position(scenario.rx_id)
            mid = panel.pose.pos()
            uin = (tx - mid) / np.linalg.norm(tx - mid)
            uout = (rx - mid) / np.linalg.norm(rx - mid)
            profile = design_steering_profile(panel, uin, uout,
                                              scenario.params.wave)
            bits = int(body.get("quantization_bits", 0))
            if bits >= 1:
                profile = quantize_profile(profile, bits)
        else:
            phases = body.get("phases_rad")
            if phases is None:
                raise ValidationError("phases_rad (or preset: steer) is required")
            import numpy as np
            arr = np.asarray(phases, dtype=float)
            if arr.shape != (panel.rows, panel.cols):
                raise ValidationError(
                    f"phases_rad shape {arr.shape} != panel {panel.rows}x{panel.cols}")
            profile = PhaseProfile(arr, int(body.get("quantization_bits", 0)))
        manager.queue_command(session_id, {
            "type": "ris_profile", "lis_id": lis_id, "profile": profile,
        })
        return {"queued": True, "lis_id": lis_id}

    @app.post("/v1/sessions/{session_id}/commands")
    def post_command(session_id: str, body: dict, who: str = Depends(principal)):
        authorize(who, "command", session_id)
        ctype = body.get("type")
        if ctype == "inject_obstacle":
            spec = body.get("obstacle") or {}
            obstacle = Obstacle(
                id=str(spec.get("id", "injected")),
                box_min=tuple(float(v) for v in spec["min"]),
                box_max=tuple(float(v) for v in spec["max"]),
                material_loss_db=float(spec.get("material_loss_db", 30.0)),
            )
            trajectory = None
            if body.get("trajectory"):
                waypoints = tuple(
                    (float(w["t"]), Pose.at(tuple(float(v) for v in w["position"])))
                    for w in body["trajectory"]["waypoints"]
                )
                trajectory = Trajectory(
                    waypoints=waypoints,
                    interpolation=str(body["trajectory"].get(
                        "interpolation", "LINEAR")).upper(),
                )
            manager.queue_command(session_id, {
                "type": "inject_obstacle", "obstacle": obstacle,
                "trajectory": trajectory,
            })
            return {"queued": True, "obstacle_id": obstacle.id}
        if ctype == "proactive_switch":
            manager.queue_command(session_id, {
                "type": "proactive_switch",
                "command": ProactiveSwitch(
                    target_key=str(body.get("target_key", "DIRECT")),
                    object_id=str(body.get("object_id", "operator")),
                ),
            })
            return {"queued": True}
        raise ValidationError(f"unknown command type {ctype!r}")

    # -- event stream

    @app.get("/v1/sessions/{session_id}/events")
    def events(session_id: str, who: str = Depends(principal),
               last_event_id: int = Query(default=0),
               timeout_s: Optional[float] = Query(default=None),
               last_event_id_header: Optional[str] = Header(
                   default=None, alias="Last-Event-ID")):
        authorize(who, "read_session", session_id)
        bus = manager.event_bus(session_id)
        cursor = last_event_id
        if last_event_id_header:
            try:
                cursor = max(cursor, int(last_event_id_header))
            except ValueError:
                pass

        def sse():
            for event_id, payload in bus.stream(cursor, timeout_s=timeout_s):
                data = json.dumps(payload, sort_keys=True, separators=(",", ":"))
                yield f"id: {event_id}\nevent: {payload.get('type', 'message')}\ndata: {data}\n\n"

        return StreamingResponse(sse(), media_type="text/event-stream")

    # -- datasets

    @app.get("/v1/datasets/{dataset_id}/export")
    def export_dataset(dataset_id: str, who: str = Depends(principal),
                       format: str = Query(default="ndjson")):
        authorize(who, "read_dataset", dataset_id)
        if format != "ndjson":
            raise ValidationError(f"unsupported export format {format!r}")
        payload = manager.store.export(dataset_id)
        return Response(content=payload, media_type="application/x-ndjson")

    @app.get("/v1/datasets/{dataset_id}/traces")
    def query_traces(dataset_id: str, who: str = Depends(principal),
                     t0: Optional[float] = None, t1: Optional[float] = None,
                     kind: Optional[str] = None, device: Optional[str] = None):
        authorize(who, "read_dataset", dataset_id)
        records = manager.store.query(dataset_id, t0=t0, t1=t1, kind=kind,
                                      device_id=device)
        return {"records": [r.to_dict() for r in records],
                "count": len(records)}

    # -- models

    @app.post("/v1/models", status_code=201)
    def register_model(body: dict, who: str = Depends(principal)):
        authorize(who, "register_model")
        for key in ("model_id", "version", "input_schema", "output_schema"):
            if key not in body:
                raise ValidationError(f"missing field {key!r}")
        registry.register(ModelEntry(
            model_id=str(body["model_id"]),
            version=str(body["version"]),
            input_schema=body["input_schema"],
            output_schema=body["output_schema"],
            invocation_kind=str(body.get("invocation_kind", "EXTERNAL")).upper(),
        ))
        return {"model_id": body["model_id"], "version": body["version"]}

    @app.post("/v1/models/{model_id}/{version}:invoke")
    def invoke_model(model_id: str, version: str, body: dict,
                     who: str = Depends(principal)):
        authorize(who, "invoke_model", model_id)
        return registry.invoke(model_id, version, body)

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
