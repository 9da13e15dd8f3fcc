import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from promptstage.backend import (
    BackendConnectionError,
    BackendHTTPError,
    BackendPayloadError,
    FIXED,
    GenerationParams,
    GenerationRequest,
    HttpBackend,
    ImmediateDispatcher,
    MockBackend,
    RANDOM_PER_FRAME,
    RequestValidationError,
    SeedPolicy,
    SimulatedDispatcher,
    ThreadedDispatcher,
    canonical_serialization,
    fnv1a64,
    next_seed,
    request_digest,
    request_from_json,
    request_to_json,
    splitmix64_at,
)
from promptstage.raster import Frame, rgb_to_png_bytes

PARAMS_64 = GenerationParams(width=64, height=64)


def txt_request(positive="a prompt", seed=7, params=PARAMS_64, negative=""):
    return GenerationRequest(kind="txt2img", positive=positive, negative=negative,
                             seed=seed, params=params)


def img_request(denoise=0.5, seed=7, fill=90):
    params = GenerationParams(width=64, height=64, denoising_strength=denoise)
    return GenerationRequest(kind="img2img", positive="p", negative="", seed=seed,
                             params=params, init_image=Frame.filled(64, 64, fill))


# -- seed policy -------------------------------------------------------------

def test_fixed_policy_constant():
    policy = SeedPolicy(mode=FIXED, fixed_seed=42)
    assert [next_seed(policy, i) for i in range(10)] == [42] * 10


def test_random_policy_distinct_indices():
    policy = SeedPolicy(mode=RANDOM_PER_FRAME, fixed_seed=None, rng_seed=1)
    assert next_seed(policy, 0) != next_seed(policy, 1)


def test_random_policy_replayable():
    policy = SeedPolicy(mode=RANDOM_PER_FRAME, fixed_seed=None, rng_seed=1)
    assert next_seed(policy, 5) == next_seed(policy, 5)
    assert next_seed(policy, 5) == splitmix64_at(1, 5)


def test_random_policy_mostly_distinct_over_1000():
    policy = SeedPolicy(mode=RANDOM_PER_FRAME, fixed_seed=None, rng_seed=99)
    seeds = {next_seed(policy, i) for i in range(1000)}
    assert len(seeds) >= 990


def test_fixed_policy_requires_seed():
    with pytest.raises(RequestValidationError):
        SeedPolicy(mode=FIXED, fixed_seed=None)


def test_splitmix_known_width():
    for i in range(100):
        assert 0 <= splitmix64_at(123, i) < 2**64


def test_fnv1a64_reference_values():
    # standard FNV-1a 64 test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


# -- request validation ----------------------------------------------------------

def test_img2img_requires_init_image():
    with pytest.raises(RequestValidationError):
        GenerationRequest(kind="img2img", positive="p", negative="", seed=1, params=PARAMS_64)


def test_txt2img_forbids_init_image():
    with pytest.raises(RequestValidationError):
        GenerationRequest(kind="txt2img", positive="p", negative="", seed=1,
                          params=PARAMS_64, init_image=Frame.filled(64, 64))


def test_init_image_must_match_params_dimensions():
    with pytest.raises(RequestValidationError):
        GenerationRequest(kind="img2img", positive="p", negative="", seed=1,
                          params=PARAMS_64, init_image=Frame.filled(32, 32))


def test_params_validation():
    with pytest.raises(RequestValidationError):
        GenerationParams(width=100)  # not a multiple of 8
    with pytest.raises(RequestValidationError):
        GenerationParams(steps=0)
    with pytest.raises(RequestValidationError):
        GenerationParams(cfg_scale=0)
    with pytest.raises(RequestValidationError):
        GenerationParams(denoising_strength=1.5)


# -- canonical serialization -------------------------------------------------------

def test_canonical_serialization_stable():
    a = canonical_serialization(txt_request())
    b = canonical_serialization(txt_request())
    assert a == b
    assert request_digest(txt_request()) == request_digest(txt_request())


def test_canonical_serialization_covers_every_field():
    base = txt_request()
    variants = [
        txt_request(positive="other"),
        txt_request(negative="bad"),
        txt_request(seed=8),
        txt_request(params=GenerationParams(width=64, height=64, steps=5)),
        txt_request(params=GenerationParams(width=64, height=64, cfg_scale=3.0)),
        txt_request(params=GenerationParams(width=64, height=64, model_name="m")),
    ]
    digests = {request_digest(r) for r in [base] + variants}
    assert len(digests) == len(variants) + 1


def test_canonical_serialization_sees_init_pixels():
    assert request_digest(img_request(fill=90)) != request_digest(img_request(fill=91))


def test_request_json_round_trip():
    request = img_request(denoise=0.25, fill=77)
    restored = request_from_json(json.loads(json.dumps(request_to_json(request))))
    assert canonical_serialization(restored) == canonical_serialization(request)
    assert restored.init_image.same_pixels(request.init_image)


# -- mock backend -----------------------------------------------------------------

def test_mock_deterministic():
    mock = MockBackend()
    a = mock.generate(txt_request())
    b = mock.generate(txt_request())
    assert np.array_equal(a.image, b.image)
    assert a.image.shape == (64, 64, 3)
    assert a.image.dtype == np.uint8


def test_mock_seed_changes_image():
    mock = MockBackend()
    assert not np.array_equal(
        mock.generate(txt_request(seed=1)).image, mock.generate(txt_request(seed=2)).image
    )


def test_mock_zero_denoise_returns_init_image():
    mock = MockBackend()
    request = img_request(denoise=0.0, fill=123)
    result = mock.generate(request)
    expected = np.repeat(request.init_image.pixels[:, :, None], 3, axis=2)
    assert np.array_equal(result.image, expected)


def test_mock_denoise_pulls_away_from_init():
    mock = MockBackend()
    base = np.repeat(img_request(denoise=0.0).init_image.pixels[:, :, None], 3, axis=2)
    low = mock.generate(img_request(denoise=0.2)).image.astype(float)
    high = mock.generate(img_request(denoise=0.9)).image.astype(float)
    assert np.abs(low - base).mean() < np.abs(high - base).mean()


def test_mock_result_is_fast():
    mock = MockBackend()
    result = mock.generate(txt_request())
    assert result.latency_ms < 1000.0
    assert result.backend_id == "mock"
    assert result.request_echo == txt_request()


@settings(max_examples=25, deadline=None)
@given(st.text(max_size=30), st.integers(0, 2**63), st.integers(1, 20))
def test_mock_pure_function_of_request(positive, seed, steps):
    params = GenerationParams(width=32, height=32, steps=steps)
    request = GenerationRequest(kind="txt2img", positive=positive, negative="",
                                seed=seed, params=params)
    mock = MockBackend()
    assert np.array_equal(mock.generate(request).image, MockBackend().generate(request).image)


# -- HTTP backend against a stub server ------------------------------------------------

class _StubHandler(BaseHTTPRequestHandler):
    fixed_png = None
    requests_seen = []
    status = 200

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        type(self).requests_seen.append((self.path, payload))
        if self.status != 200:
            self.send_response(self.status)
            self.end_headers()
            self.wfile.write(b"boom")
            return
        body = json.dumps({"images": [base64.b64encode(self.fixed_png).decode("ascii")]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    rgb = np.zeros((64, 64, 3), dtype=np.uint8)
    rgb[:, :, 1] = 200
    _StubHandler.fixed_png = rgb_to_png_bytes(rgb)
    _StubHandler.requests_seen = []
    _StubHandler.status = 200
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, rgb
    server.shutdown()


def test_http_txt2img_wire_format(stub_server):
    server, rgb = stub_server
    backend = HttpBackend(f"http://127.0.0.1:{server.server_address[1]}")
    result = backend.generate(txt_request(positive="pos", negative="neg", seed=11))
    path, payload = _StubHandler.requests_seen[0]
    assert path == "/sdapi/v1/txt2img"
    assert payload == {
        "prompt": "pos",
        "negative_prompt": "neg",
        "seed": 11,
        "steps": 4,
        "cfg_scale": 2.0,
        "width": 64,
        "height": 64,
    }
    assert np.array_equal(result.image, rgb)
    assert result.latency_ms >= 0.0


def test_http_img2img_wire_format(stub_server):
    server, rgb = stub_server
    backend = HttpBackend(f"http://127.0.0.1:{server.server_address[1]}")
    request = img_request(denoise=0.4)
    result = backend.generate(request)
    path, payload = _StubHandler.requests_seen[0]
    assert path == "/sdapi/v1/img2img"
    assert payload["denoising_strength"] == 0.4
    assert isinstance(payload["init_images"], list) and len(payload["init_images"]) == 1
    base64.b64decode(payload["init_images"][0])  # decodes cleanly
    assert np.array_equal(result.image, rgb)


def test_http_error_status_raises_typed_error(stub_server):
    server, _ = stub_server
    _StubHandler.status = 500
    backend = HttpBackend(f"http://127.0.0.1:{server.server_address[1]}")
    with pytest.raises(BackendHTTPError):
        backend.generate(txt_request())


def test_http_connection_failure_raises_typed_error():
    backend = HttpBackend("http://127.0.0.1:9", timeout_s=0.2)
    with pytest.raises(BackendConnectionError):
        backend.generate(txt_request())


def test_http_dimension_mismatch_rejected(stub_server):
    server, _ = stub_server
    backend = HttpBackend(f"http://127.0.0.1:{server.server_address[1]}")
    request = txt_request(params=GenerationParams(width=128, height=128))
    with pytest.raises(BackendPayloadError):
        backend.generate(request)


# -- dispatchers -------------------------------------------------------------------

def test_immediate_dispatcher_completes_synchronously():
    dispatcher = ImmediateDispatcher(MockBackend())
    assert dispatcher.try_submit(txt_request(), now=0.0)
    completions = dispatcher.poll(now=0.0)
    assert len(completions) == 1
    assert dispatcher.in_flight == 0


def test_threaded_dispatcher_respects_in_flight_limit():
    class SlowBackend:
        backend_id = "slow"

        def __init__(self):
            self.release = threading.Event()

        def generate(self, request):
            self.release.wait(timeout=5.0)
            return MockBackend().generate(request)

    backend = SlowBackend()
    dispatcher = ThreadedDispatcher(backend, in_flight_limit=1)
    try:
        assert dispatcher.try_submit(txt_request(seed=1), now=0.0)
        assert not dispatcher.try_submit(txt_request(seed=2), now=0.0)
        backend.release.set()
        deadline = 50
        completions = []
        while not completions and deadline:
            completions = dispatcher.poll(now=0.0)
            deadline -= 1
            threading.Event().wait(0.05)
        assert len(completions) == 1
        assert dispatcher.try_submit(txt_request(seed=3), now=0.0)
    finally:
        backend.release.set()
        dispatcher.close()


def test_simulated_dispatcher_releases_after_latency():
    dispatcher = SimulatedDispatcher(MockBackend(), latency_s=0.5)
    assert dispatcher.try_submit(txt_request(), now=0.0)
    assert not dispatcher.try_submit(txt_request(), now=0.1)
    assert dispatcher.poll(now=0.4) == []
    completions = dispatcher.poll(now=0.5)
    assert len(completions) == 1
    assert dispatcher.in_flight == 0
