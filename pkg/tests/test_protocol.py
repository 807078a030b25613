"""Wire protocol tests: round-trip identity, golden stability, client semantics."""

import json
from pathlib import Path

import numpy as np
import pytest

from anonpipe.backends.client import BackendClient, mock_backend_client
from anonpipe.backends.golden import build_golden_examples, build_golden_requests
from anonpipe.backends.mock import FACE_FILL
from anonpipe.backends.protocol import (
    OPS,
    AnimatePayload,
    AttributesPayload,
    BackendRequest,
    ControlStrengthsModel,
    DetectPayload,
    EmbedPayload,
    FaceBox,
    InpaintParamsModel,
    InpaintPayload,
    LandmarksPayload,
    PromptPairModel,
    canonical_json,
    decode_image,
    encode_image,
    make_request,
    parse_request,
    parse_response,
)
from anonpipe.errors import BackendError, ProtocolError

GOLDEN_DIR = Path(__file__).resolve().parents[1] / "goldens" / "v1"


def random_image(rng, w=None, h=None):
    w = w or int(rng.integers(8, 40))
    h = h or int(rng.integers(8, 40))
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


def random_box(rng, w, h):
    bw = int(rng.integers(2, max(w // 2, 3)))
    bh = int(rng.integers(2, max(h // 2, 3)))
    return FaceBox(
        x=int(rng.integers(0, w - bw)),
        y=int(rng.integers(0, h - bh)),
        w=bw,
        h=bh,
        score=float(rng.uniform(0.1, 1.0)),
    )


def random_payload(op, rng):
    img = random_image(rng)
    h, w = img.shape[:2]
    image = encode_image(img)
    if op == "detect":
        return DetectPayload(image=image)
    if op == "landmarks":
        return LandmarksPayload(image=image, box=random_box(rng, w, h))
    if op == "embed":
        box = random_box(rng, w, h) if rng.random() < 0.5 else None
        return EmbedPayload(image=image, box=box)
    if op == "attributes":
        box = random_box(rng, w, h) if rng.random() < 0.5 else None
        return AttributesPayload(image=image, box=box)
    if op == "inpaint":
        return InpaintPayload(
            image=image,
            face_box=random_box(rng, w, h),
            prompt=PromptPairModel(
                positive=f"portrait {rng.integers(1e6)}", negative="artifacts"
            ),
            params=InpaintParamsModel(
                steps=int(rng.integers(1, 151)),
                guidance=float(rng.uniform(0.5, 20.0)),
                control_strengths=ControlStrengthsModel(
                    mask=float(rng.uniform(0, 1)),
                    lineart=float(rng.uniform(0, 1)),
                    pose=float(rng.uniform(0, 1)),
                ),
                seed=int(rng.integers(0, 2**53)),  # JSON safe-integer wire limit
            ),
        )
    if op == "animate":
        n = int(rng.integers(1, 5))
        return AnimatePayload(
            source=image, driving=[encode_image(random_image(rng, w, h)) for _ in range(n)]
        )
    raise AssertionError(op)


class TestImageCodec:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(0)
        img = random_image(rng)
        assert np.array_equal(decode_image(encode_image(img)), img)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        img = random_image(rng)
        assert encode_image(img) == encode_image(img.copy())

    def test_garbage_rejected(self):
        with pytest.raises(ProtocolError):
            decode_image("not base64 at all!!!")


class TestRoundTrip:
    @pytest.mark.parametrize("op", OPS)
    def test_encode_decode_identity(self, op):
        rng = np.random.default_rng(hash(op) % 2**32)
        for _ in range(50):
            payload = random_payload(op, rng)
            req = make_request(op, payload)
            back = parse_request(req.model_dump_json())
            assert back == req
            assert back.typed_payload() == payload

    def test_payload_op_mismatch_rejected(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError):
            make_request("detect", random_payload("embed", rng))

    def test_unknown_op_rejected(self):
        with pytest.raises(Exception):
            parse_request(json.dumps({"op": "transmogrify", "request_id": "x", "payload": {}}))

    def test_unknown_field_rejected(self):
        raw = json.dumps(
            {"op": "detect", "request_id": "x", "payload": {}, "extra": 1}
        )
        with pytest.raises(ProtocolError):
            parse_request(raw)


class TestGoldenFiles:
    def test_goldens_exist_for_all_ops(self):
        for op in OPS:
            assert (GOLDEN_DIR / f"{op}_request.json").is_file()
            assert (GOLDEN_DIR / f"{op}_response.json").is_file()

    @pytest.mark.parametrize("op", OPS)
    def test_byte_stability(self, op):
        """Canonical re-serialization of the checked-in files is a no-op."""
        for suffix, parse in (("request", parse_request), ("response", parse_response)):
            raw = (GOLDEN_DIR / f"{op}_{suffix}.json").read_bytes()
            assert canonical_json(parse(raw)) == raw

    @pytest.mark.parametrize("op", OPS)
    def test_regenerated_examples_match_files(self, op):
        """The generator still produces exactly the committed bytes."""
        req, resp = build_golden_examples()[op]
        assert canonical_json(req) == (GOLDEN_DIR / f"{op}_request.json").read_bytes()
        assert canonical_json(resp) == (GOLDEN_DIR / f"{op}_response.json").read_bytes()

    def test_golden_requests_have_unique_ids(self):
        ids = [r.request_id for r in build_golden_requests().values()]
        assert len(set(ids)) == len(ids)


class TestClientSemantics:
    def test_mock_client_detect_on_black_image(self):
        client = mock_backend_client()
        assert client.detect(np.zeros((32, 32, 3), np.uint8)) == []

    def test_request_id_mismatch_raises(self):
        import httpx

        def handler(request: httpx.Request) -> httpx.Response:
            body = json.loads(request.read())
            return httpx.Response(
                200,
                json={
                    "request_id": body["request_id"] + "-tampered",
                    "status": "ok",
                    "result": {"faces": []},
                    "error_message": None,
                },
            )

        client = BackendClient(
            http_client=httpx.Client(
                transport=httpx.MockTransport(handler), base_url="http://backend"
            )
        )
        with pytest.raises(ProtocolError, match="request_id"):
            client.detect(np.zeros((8, 8, 3), np.uint8))

    def test_semantic_error_never_retried(self):
        import httpx

        calls = {"n": 0}

        def handler(request: httpx.Request) -> httpx.Response:
            calls["n"] += 1
            body = json.loads(request.read())
            return httpx.Response(
                200,
                json={
                    "request_id": body["request_id"],
                    "status": "error",
                    "result": None,
                    "error_message": "model exploded",
                },
            )

        client = BackendClient(
            http_client=httpx.Client(
                transport=httpx.MockTransport(handler), base_url="http://backend"
            ),
            transport_retries=2,
        )
        with pytest.raises(BackendError, match="model exploded"):
            client.detect(np.zeros((8, 8, 3), np.uint8))
        assert calls["n"] == 1

    def test_transport_failures_retried_then_raise(self):
        import httpx

        calls = {"n": 0}

        def handler(request: httpx.Request) -> httpx.Response:
            calls["n"] += 1
            raise httpx.ConnectError("refused")

        client = BackendClient(
            http_client=httpx.Client(
                transport=httpx.MockTransport(handler), base_url="http://backend"
            ),
            transport_retries=2,
        )
        with pytest.raises(BackendError):
            client.detect(np.zeros((8, 8, 3), np.uint8))
        assert calls["n"] == 3  # initial try + 2 retries

    def test_malformed_response_raises_protocol_error(self):
        import httpx

        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, content=b"this is not json")

        client = BackendClient(
            http_client=httpx.Client(
                transport=httpx.MockTransport(handler), base_url="http://backend"
            )
        )
        with pytest.raises(ProtocolError):
            client.detect(np.zeros((8, 8, 3), np.uint8))

    def test_health_endpoint(self):
        client = mock_backend_client()
        info = client.health()
        assert info["status"] == "ok"
        assert set(info["ops"]) == set(OPS)


class TestMockApp:
    def test_op_body_mismatch_is_semantic_error(self):
        from fastapi.testclient import TestClient

        from anonpipe.backends.mock_app import mock_app

        tc = TestClient(mock_app)
        req = BackendRequest(op="embed", request_id="r1", payload={"image": "AAAA"})
        resp = tc.post("/v1/detect", json=req.model_dump(mode="json"))
        assert resp.status_code == 200
        assert resp.json()["status"] == "error"

    def test_invalid_payload_is_semantic_error(self):
        from fastapi.testclient import TestClient

        from anonpipe.backends.mock_app import mock_app

        tc = TestClient(mock_app)
        req = {"op": "inpaint", "request_id": "r2", "payload": {"image": "AAAA"}}
        resp = tc.post("/v1/inpaint", json=req)
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "error"
        assert body["request_id"] == "r2"


def test_face_fill_constant_documented():
    # The fixture marker tone and the detector band must stay in sync.
    assert FACE_FILL == (198, 152, 118)
