"""Wire protocol, client, and deterministic mock backends for neural services."""

from .client import BackendClient, mock_backend_client
from .protocol import (
    OPS,
    PROTOCOL_VERSION,
    BackendRequest,
    BackendResponse,
    FaceBox,
    decode_image,
    encode_image,
    make_request,
)

__all__ = [
    "OPS",
    "PROTOCOL_VERSION",
    "BackendClient",
    "BackendRequest",
    "BackendResponse",
    "FaceBox",
    "decode_image",
    "encode_image",
    "make_request",
    "mock_backend_client",
]
