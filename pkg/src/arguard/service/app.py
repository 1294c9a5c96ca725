"""HTTP API v1 for the edge service.

Routes:
  POST /v1/sessions                                -> session payload
  POST /v1/sessions/{id}/frames       (multipart raw, aug)
  POST /v1/sessions/{id}/keyobjects/refresh (multipart raw + variant field)
  POST /v1/sessions/{id}/manipulation (multipart raw, aug)
  GET  /v1/sessions/{id}/latency
  GET  /healthz

Frames carry both PNGs in one multipart request to save a round trip. Error
responses use the shared {error, kind} body.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse

from ..errors import (
    ArguardError,
    BackendUnavailable,
    Busy,
    DimensionMismatch,
    EmptyResponse,
    FixtureMiss,
    MalformedResponse,
    NoData,
    NoVerdict,
    Throttled,
    UnknownSession,
)
from ..gateway.backends import Backends
from ..imaging import DiffConfig, Image
from ..obstruction import ObstructionConfig, ObstructionResult
from ..prompts import END_TO_END_STEP2, PromptVariant
from .sessions import ServiceSettings, SessionStore

_STATUS_BY_ERROR = {
    UnknownSession: 404,
    NoData: 404,
    DimensionMismatch: 400,
    EmptyResponse: 502,
    Busy: 409,
    Throttled: 429,
    BackendUnavailable: 502,
    MalformedResponse: 502,
    NoVerdict: 502,
    FixtureMiss: 502,
}


def _status_for(error: ArguardError) -> int:
    for cls, status in _STATUS_BY_ERROR.items():
        if isinstance(error, cls):
            return status
    return 500


def _obstruction_payload(result: ObstructionResult) -> dict:
    return {
        "obstructed": result.obstructed,
        "alpha": result.alpha,
        "content_mask_area": result.content_mask_area,
        "per_object": [
            {"name": r.name, "found": r.found, "ratio": r.ratio, "box": list(r.box) if r.box else None}
            for r in result.per_object
        ],
        "timings_s": result.timings,
    }


def _config_from_payload(payload: dict, defaults: ObstructionConfig) -> ObstructionConfig:
    try:
        return ObstructionConfig(
            alpha=float(payload.get("alpha", defaults.alpha)),
            box_confidence_min=float(
                payload.get("box_confidence_min", defaults.box_confidence_min)
            ),
            diff=DiffConfig(
                tolerance=int(payload.get("diff_tolerance", defaults.diff.tolerance)),
                min_component_area=int(
                    payload.get("min_component_area", defaults.diff.min_component_area)
                ),
            ),
        )
    except (TypeError, ValueError) as exc:
        raise _BadRequest(str(exc)) from exc


class _BadRequest(Exception):
    pass


async def _load_upload(upload: UploadFile) -> Image:
    data = await upload.read()
    try:
        return Image.from_png_bytes(data)
    except Exception as exc:
        raise _BadRequest(f"{upload.filename or 'upload'} is not a decodable PNG: {exc}") from exc


def create_app(backends: Backends, settings: ServiceSettings | None = None) -> FastAPI:
    store = SessionStore(backends, settings)
    app = FastAPI(title="arguard edge service")
    app.state.store = store

    if store.settings.auto_refresh_interval_s is not None:
        stop = threading.Event()

        def _scheduler():
            while not stop.wait(store.settings.auto_refresh_interval_s / 2):
                for state in store.sessions():
                    try:
                        store.maybe_auto_refresh(state)
                    except ArguardError:
                        continue  # refresh failures leave the list unchanged

        thread = threading.Thread(target=_scheduler, name="keyobject-refresh", daemon=True)
        thread.start()
        app.state.refresh_stop = stop

    @app.exception_handler(ArguardError)
    async def _arguard_error(_request: Request, exc: ArguardError):
        return JSONResponse(
            status_code=_status_for(exc), content={"error": str(exc), "kind": exc.kind}
        )

    @app.exception_handler(_BadRequest)
    async def _bad_request(_request: Request, exc: _BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc), "kind": "bad_request"})

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions")
    async def create_session(request: Request):
        body = await request.body()
        payload = {}
        if body:
            import json

            try:
                payload = json.loads(body)
            except json.JSONDecodeError as exc:
                raise _BadRequest(f"body must be JSON: {exc}") from exc
        config = _config_from_payload(payload, store.settings.default_config)
        opacity = payload.get("mitigation_opacity")
        try:
            state = store.create_session(config, opacity=opacity)
        except ValueError as exc:
            raise _BadRequest(str(exc)) from exc
        return state.to_payload()

    @app.post("/v1/sessions/{session_id}/frames")
    async def post_frame(session_id: str, raw: UploadFile = File(...), aug: UploadFile = File(...)):
        raw_image = await _load_upload(raw)
        aug_image = await _load_upload(aug)
        result, directive, record = store.handle_frame(session_id, raw_image, aug_image)
        return {
            "obstruction": _obstruction_payload(result),
            "directive": directive.to_payload(),
            "latency": record.to_payload(),
        }

    @app.post("/v1/sessions/{session_id}/keyobjects/refresh")
    async def refresh_keyobjects(
        session_id: str, raw: UploadFile = File(...), variant: str = Form("standard")
    ):
        if variant == END_TO_END_STEP2:
            raise _BadRequest("end_to_end_step2 is not a key-object refresh variant")
        try:
            prompt_variant = PromptVariant(variant)
        except ValueError as exc:
            raise _BadRequest(str(exc)) from exc
        raw_image = await _load_upload(raw)
        updated = store.trigger_keyobject_refresh(session_id, raw_image, prompt_variant)
        return {"key_objects": list(updated.entries), "last_refreshed": updated.last_refreshed}

    @app.post("/v1/sessions/{session_id}/manipulation")
    async def manipulation_check(
        session_id: str, raw: UploadFile = File(...), aug: UploadFile = File(...)
    ):
        raw_image = await _load_upload(raw)
        aug_image = await _load_upload(aug)
        result, directive = store.handle_manipulation_check(session_id, raw_image, aug_image)
        return {
            "manipulation": {
                "manipulated": result.manipulated,
                "factors": (
                    None
                    if result.factors is None
                    else {
                        "alignment": result.factors.alignment,
                        "style": result.factors.style,
                        "misrepresentation": result.factors.misrepresentation,
                    }
                ),
                "virtual_content": result.virtual_content,
                "key_object": result.key_object,
                "transcript": result.transcript,
            },
            "directive": directive.to_payload(),
        }

    @app.get("/v1/sessions/{session_id}/latency")
    async def latency(session_id: str):
        return store.latency_stats(session_id)

    return app
