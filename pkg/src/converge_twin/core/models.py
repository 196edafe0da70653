"""Model registry and in-process inference dispatch.

Ships one builtin model, `cv-blockage-linear/1`: the constant-velocity
blockage predictor, invocable offline for what-if queries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import jsonschema

from ..errors import DuplicateModel, SchemaMismatch, UnknownModel
from ..vision import Detection, Track, update_track
from ..xapp import predict_blockage

BLOCKAGE_MODEL_ID = "cv-blockage-linear"
BLOCKAGE_MODEL_VERSION = "1"

_BLOCKAGE_INPUT_SCHEMA = {
    "type": "object",
    "required": ["tracks", "los_segment", "horizon_s"],
    "additionalProperties": False,
    "properties": {
        "tracks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["object_id", "samples"],
                "additionalProperties": False,
                "properties": {
                    "object_id": {"type": "string"},
                    "samples": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "array",
                            "minItems": 4,
                            "maxItems": 4,
                            "items": {"type": "number"},
                        },
                    },
                },
            },
        },
        "los_segment": {
            "type": "array",
            "minItems": 2,
            "maxItems": 2,
            "items": {
                "type": "array", "minItems": 3, "maxItems": 3,
                "items": {"type": "number"},
            },
        },
        "extents": {
            "type": "object",
            "additionalProperties": {
                "type": "array", "minItems": 3, "maxItems": 3,
                "items": {"type": "number"},
            },
        },
        "horizon_s": {"type": "number", "exclusiveMinimum": 0},
    },
}

_BLOCKAGE_OUTPUT_SCHEMA = {
    "type": "object",
    "required": ["predictions"],
    "properties": {
        "predictions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["object_id", "time_to_block_s", "confidence"],
            },
        },
    },
}


def _blockage_inference(payload: dict) -> dict:
    tracks = []
    for entry in payload["tracks"]:
        track = Track(object_id=entry["object_id"])
        for t, x, y, z in entry["samples"]:
            det = Detection(
                timestamp_s=float(t),
                camera_id="model-input",
                object_id=entry["object_id"],
                bbox_px=(0.0, 0.0, 0.0, 0.0),
                world_position_m=(float(x), float(y), float(z)),
            )
            track = update_track(track, det)
        tracks.append(track)
    extents = {k: tuple(v) for k, v in payload.get("extents", {}).items()}
    predictions = predict_blockage(
        tracks,
        (payload["los_segment"][0], payload["los_segment"][1]),
        extents,
        float(payload["horizon_s"]),
    )
    return {
        "predictions": [
            {
                "object_id": p.object_id,
                "time_to_block_s": None if math.isinf(p.time_to_block_s)
                else round(p.time_to_block_s, 6),
                "crossing_point_m": [round(c, 6) for c in p.crossing_point_m],
                "confidence": round(p.confidence, 6),
            }
            for p in predictions
        ]
    }


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    version: str
    input_schema: dict
    output_schema: dict
    invocation_kind: str = "EXTERNAL"  # or "BUILTIN"
    handler: Optional[Callable[[dict], dict]] = field(default=None, compare=False)


class ModelRegistry:
    def __init__(self):
        self._entries: dict[tuple[str, str], ModelEntry] = {}

    def register(self, entry: ModelEntry) -> None:
        key = (entry.model_id, entry.version)
        if key in self._entries:
            raise DuplicateModel(f"{entry.model_id}/{entry.version}")
        self._entries[key] = entry

    def get(self, model_id: str, version: str) -> ModelEntry:
        key = (model_id, version)
        if key not in self._entries:
            raise UnknownModel(f"{model_id}/{version}")
        return self._entries[key]

    def list_entries(self) -> list[ModelEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def invoke(self, model_id: str, version: str, payload: dict) -> dict:
        entry = self.get(model_id, version)
        try:
            jsonschema.validate(payload, entry.input_schema)
        except jsonschema.ValidationError as exc:
            raise SchemaMismatch(f"input: {exc.message}") from exc
        if entry.invocation_kind != "BUILTIN" or entry.handler is None:
            raise SchemaMismatch(
                f"model {model_id}/{version} is EXTERNAL and cannot run in-process"
            )
        output = entry.handler(payload)
        try:
            jsonschema.validate(output, entry.output_schema)
        except jsonschema.ValidationError as exc:
            raise SchemaMismatch(f"output: {exc.message}") from exc
        return output


def builtin_registry() -> ModelRegistry:
    registry = ModelRegistry()
    registry.register(ModelEntry(
        model_id=BLOCKAGE_MODEL_ID,
        version=BLOCKAGE_MODEL_VERSION,
        input_schema=_BLOCKAGE_INPUT_SCHEMA,
        output_schema=_BLOCKAGE_OUTPUT_SCHEMA,
        invocation_kind="BUILTIN",
        handler=_blockage_inference,
    ))
    return registry
