"""HTTP/JSON surface of the generation service.

Thin FastAPI layer over Service: every business rule lives in core, this
module only parses bodies, measures request latency, and maps error codes
to statuses. A successful generate whose artifact passed the filters is
queued for screening so the review surfaces see it immediately.
"""

from __future__ import annotations

import time

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..corpus import CorpusError, record_from_json
from ..decode import DecodeError
from ..model import ModelError
from ..quality import QualityError
from .core import PROVENANCE_MODEL, Service, ServiceError, artifact_to_json
from .store import StoreError

_STATUS = {
    "unknown_product": 404,
    "unknown_artifact": 404,
    "model_unavailable": 503,
    "not_eligible": 409,
    "already_reviewed": 409,
}


def create_app(service: Service) -> FastAPI:
    app = FastAPI(title="copyforge", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    def _service_error(_request, exc: ServiceError):
        return JSONResponse(status_code=_STATUS.get(exc.code, 400),
                            content={"error": exc.code, "message": str(exc)})

    @app.exception_handler(CorpusError)
    @app.exception_handler(DecodeError)
    @app.exception_handler(ModelError)
    @app.exception_handler(QualityError)
    @app.exception_handler(StoreError)
    def _domain_error(_request, exc: Exception):
        return JSONResponse(status_code=400,
                            content={"error": "invalid_request",
                                     "message": str(exc)})

    def _parse_int(body: dict, key: str) -> int | None:
        value = body.get(key)
        if value is None:
            return None
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ServiceError("invalid_request", f"{key} must be an integer")

    @app.post("/v1/generate")
    def generate(body: dict):
        record = None
        if body.get("record") is not None:
            try:
                record = record_from_json(body["record"])
            except (KeyError, TypeError) as exc:
                raise ServiceError("invalid_request", f"bad record: {exc}")
        t0 = time.perf_counter()
        art = service.generate_description(
            sku=body.get("sku"), record=record,
            beam_size=_parse_int(body, "beam_size"),
            max_len=_parse_int(body, "max_len"))
        latency_ms = (time.perf_counter() - t0) * 1000.0
        if art.provenance == PROVENANCE_MODEL and art.verdict.accepted:
            service.submit_for_screening(art.artifact_id)
        out = artifact_to_json(art)
        out["latency_ms"] = latency_ms
        return out

    @app.get("/v1/descriptions/{sku}")
    def get_description(sku: str):
        art = service.approved_description(sku)
        if art is None:
            return JSONResponse(status_code=404,
                                content={"error": "not_found",
                                         "message": f"no approved description for {sku!r}"})
        return artifact_to_json(art)

    @app.post("/v1/screening/{artifact_id}/verdict")
    def post_verdict(artifact_id: str, body: dict):
        verdict = body.get("verdict")
        if not isinstance(verdict, str):
            raise ServiceError("invalid_request", "verdict field is required")
        edited = body.get("edited_text")
        if edited is not None and not isinstance(edited, str):
            raise ServiceError("invalid_request", "edited_text must be a string")
        art, rate = service.review(artifact_id, verdict, edited_text=edited)
        out = artifact_to_json(art)
        out["acceptance_rate_today"] = rate
        return out

    @app.get("/v1/screening/pending")
    def pending(limit: int = 50):
        return [artifact_to_json(a) for a in service.pending_artifacts(limit)]

    @app.get("/v1/stats")
    def stats():
        return service.stats()

    @app.post("/v1/events")
    def events(body: dict):
        records = body.get("records")
        if not isinstance(records, list):
            raise ServiceError("invalid_request", "records must be a list")
        return {"appended": service.record_events(records)}

    @app.get("/v1/healthz")
    def healthz():
        version = service.model_version
        return {"status": "ok" if version else "degraded",
                "model_version": version}

    return app
