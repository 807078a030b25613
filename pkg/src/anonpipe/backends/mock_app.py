"""FastAPI application serving the mock backends over the v1 protocol.

Runnable standalone (`anonpipe backends serve-mock`) for cross-language
conformance; the in-process mock client mounts the same app, so both paths
share one contract.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import AnonpipeError, ProtocolError
from .mock import HANDLERS
from .protocol import OPS, PROTOCOL_VERSION, BackendRequest, error_response, ok_response


def create_mock_app() -> FastAPI:
    app = FastAPI(title="anonpipe mock backends", version=__version__)

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "engine": "mock",
            "protocol": PROTOCOL_VERSION,
            "version": __version__,
            "ops": {op: {"model": "mock", "loaded": True} for op in OPS},
        }

    def _dispatch(op: str, req: BackendRequest) -> JSONResponse:
        if req.op != op:
            return JSONResponse(
                error_response(req.request_id, f"op mismatch: body says {req.op!r}").model_dump(
                    mode="json"
                )
            )
        try:
            payload = req.typed_payload()
            result = HANDLERS[op](payload)
        except (AnonpipeError, ProtocolError, ValueError) as exc:
            return JSONResponse(error_response(req.request_id, str(exc)).model_dump(mode="json"))
        return JSONResponse(ok_response(req.request_id, result).model_dump(mode="json"))

    # One POST route per op; fastapi needs distinct closures for the docs.
    for op_name in OPS:

        def make_endpoint(op=op_name):
            def endpoint(req: BackendRequest):
                return _dispatch(op, req)

            endpoint.__name__ = f"op_{op}"
            return endpoint

        app.post(f"/v1/{op_name}")(make_endpoint())

    return app


mock_app = create_mock_app()
