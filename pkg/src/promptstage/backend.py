"""Backend-agnostic generation: request/result types, seed policy, a
deterministic mock, and an Automatic1111-compatible HTTP client.

The mock is the offline oracle for the whole system: it hashes a canonical
serialization of the request and grows a value-noise image from that hash,
so identical requests are byte-identical and any request change shows up in
the pixels. For img2img it blends the init image with the noise by
denoising strength, which makes strength 0 return the input exactly.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass
from queue import Empty, Queue

import numpy as np
import requests as _requests

from .raster import Frame, frame_to_png_bytes, png_bytes_to_frame, png_bytes_to_rgb, rgb_to_png_bytes

U64 = np.uint64
_MASK64 = (1 << 64) - 1
_SPLITMIX_GOLDEN = 0x9E3779B97F4A7C15


class BackendError(Exception):
    """Base for failures talking to a generation backend."""


class BackendConnectionError(BackendError):
    pass


class BackendHTTPError(BackendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")
        self.status = status


class BackendPayloadError(BackendError):
    pass


class RequestValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Deterministic 64-bit generators

def splitmix64_at(seed: int, index: int) -> int:
    """The index-th output of a splitmix64 stream seeded with `seed`."""
    z = (seed + (index + 1) * _SPLITMIX_GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def splitmix64_block(seed: int, count: int) -> np.ndarray:
    """Vectorized splitmix64 outputs 0..count-1 as a uint64 array."""
    idx = np.arange(1, count + 1, dtype=U64)
    z = U64(seed & _MASK64) + idx * U64(_SPLITMIX_GOLDEN)
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


# ---------------------------------------------------------------------------
# Request / result types

@dataclass(frozen=True)
class GenerationParams:
    steps: int = 4
    cfg_scale: float = 2.0
    width: int = 512
    height: int = 512
    denoising_strength: float = 0.75
    model_name: str = ""

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise RequestValidationError(f"steps must be >= 1, got {self.steps}")
        if self.cfg_scale <= 0:
            raise RequestValidationError(f"cfg_scale must be > 0, got {self.cfg_scale}")
        if self.width % 8 or self.height % 8 or self.width <= 0 or self.height <= 0:
            raise RequestValidationError(
                f"width/height must be positive multiples of 8, got {self.width}x{self.height}"
            )
        if not (0.0 <= self.denoising_strength <= 1.0):
            raise RequestValidationError(
                f"denoising_strength {self.denoising_strength} outside [0, 1]"
            )


FIXED = "fixed"
RANDOM_PER_FRAME = "random_per_frame"


@dataclass(frozen=True)
class SeedPolicy:
    mode: str = FIXED
    fixed_seed: int | None = 0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in (FIXED, RANDOM_PER_FRAME):
            raise RequestValidationError(f"unknown seed policy mode {self.mode!r}")
        if self.mode == FIXED and self.fixed_seed is None:
            raise RequestValidationError("fixed seed policy requires fixed_seed")


def next_seed(policy: SeedPolicy, frame_index: int) -> int:
    """Seed for a given frame: constant in fixed mode, replayable stream in
    random mode (the frame index alone determines the value)."""
    if policy.mode == FIXED:
        assert policy.fixed_seed is not None
        return policy.fixed_seed
    return splitmix64_at(policy.rng_seed, frame_index)


def seed_policy_from_json(data: dict) -> SeedPolicy:
    mode = str(data.get("mode", FIXED))
    if mode == FIXED:
        return SeedPolicy(mode=FIXED, fixed_seed=int(data["fixed_seed"]))
    return SeedPolicy(mode=RANDOM_PER_FRAME, fixed_seed=None, rng_seed=int(data.get("rng_seed", 0)))


def seed_policy_to_json(policy: SeedPolicy) -> dict:
    if policy.mode == FIXED:
        return {"mode": FIXED, "fixed_seed": policy.fixed_seed}
    return {"mode": RANDOM_PER_FRAME, "rng_seed": policy.rng_seed}


TXT2IMG = "txt2img"
IMG2IMG = "img2img"


@dataclass(frozen=True)
class GenerationRequest:
    kind: str
    positive: str
    negative: str
    seed: int
    params: GenerationParams
    init_image: Frame | None = None

    def __post_init__(self) -> None:
        if self.kind not in (TXT2IMG, IMG2IMG):
            raise RequestValidationError(f"unknown request kind {self.kind!r}")
        if self.kind == IMG2IMG and self.init_image is None:
            raise RequestValidationError("img2img request requires init_image")
        if self.kind == TXT2IMG and self.init_image is not None:
            raise RequestValidationError("txt2img request must not carry init_image")
        if self.init_image is not None and (
            self.init_image.width != self.params.width or self.init_image.height != self.params.height
        ):
            raise RequestValidationError(
                f"init_image {self.init_image.width}x{self.init_image.height} does not match "
                f"requested {self.params.width}x{self.params.height}"
            )


@dataclass(frozen=True)
class GenerationResult:
    image: np.ndarray  # (height, width, 3) uint8
    request_echo: GenerationRequest
    latency_ms: float
    backend_id: str


def init_image_digest(frame: Frame | None) -> str:
    if frame is None:
        return ""
    h = hashlib.sha256()
    h.update(f"{frame.width}x{frame.height}:".encode("ascii"))
    h.update(frame.tobytes())
    return h.hexdigest()


def canonical_serialization(request: GenerationRequest) -> bytes:
    """Stable byte form of a request: fixed field order, digest for pixels."""
    p = request.params
    fields = [
        ("kind", request.kind),
        ("positive", request.positive),
        ("negative", request.negative),
        ("seed", request.seed),
        ("steps", p.steps),
        ("cfg_scale", p.cfg_scale),
        ("width", p.width),
        ("height", p.height),
        ("denoising_strength", p.denoising_strength if request.kind == IMG2IMG else None),
        ("model_name", p.model_name),
        ("init_digest", init_image_digest(request.init_image)),
    ]
    return json.dumps(dict(fields), separators=(",", ":")).encode("utf-8")


def request_digest(request: GenerationRequest) -> str:
    return hashlib.sha256(canonical_serialization(request)).hexdigest()


def request_to_json(request: GenerationRequest) -> dict:
    """Full JSON form, sufficient to re-submit the identical request."""
    p = request.params
    data = {
        "kind": request.kind,
        "positive": request.positive,
        "negative": request.negative,
        "seed": request.seed,
        "params": {
            "steps": p.steps,
            "cfg_scale": p.cfg_scale,
            "width": p.width,
            "height": p.height,
            "denoising_strength": p.denoising_strength,
            "model_name": p.model_name,
        },
        "init_image_png": None,
    }
    if request.init_image is not None:
        data["init_image_png"] = base64.b64encode(frame_to_png_bytes(request.init_image)).decode("ascii")
    return data


def request_from_json(data: dict) -> GenerationRequest:
    params = GenerationParams(**data["params"])
    init = None
    if data.get("init_image_png"):
        init = png_bytes_to_frame(base64.b64decode(data["init_image_png"]))
    return GenerationRequest(
        kind=data["kind"],
        positive=data["positive"],
        negative=data["negative"],
        seed=int(data["seed"]),
        params=params,
        init_image=init,
    )


# ---------------------------------------------------------------------------
# Deterministic mock backend

_NOISE_LATTICE = 8  # control points per axis (lattice is _NOISE_LATTICE+1 squared)


def _value_noise(height: int, width: int, seed: int, channels: int = 3) -> np.ndarray:
    """Smooth noise: separable bilinear interpolation of a random lattice."""
    g = _NOISE_LATTICE
    lattice_vals = splitmix64_block(seed, (g + 1) * (g + 1) * channels)
    lattice = (lattice_vals & U64(0xFF)).astype(np.float32).reshape(g + 1, g + 1, channels)
    ys = np.linspace(0, g, height, endpoint=False, dtype=np.float32)
    xs = np.linspace(0, g, width, endpoint=False, dtype=np.float32)
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    rows = lattice[y0] * (1 - fy) + lattice[y0 + 1] * fy  # (height, g+1, channels)
    return rows[:, x0] * (1 - fx) + rows[:, x0 + 1] * fx


class MockBackend:
    """Pure function of the request; see module docstring."""

    backend_id = "mock"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        seed = fnv1a64(canonical_serialization(request))
        p = request.params
        if request.kind == IMG2IMG:
            assert request.init_image is not None
            base = np.repeat(request.init_image.pixels[:, :, None], 3, axis=2)
            d = p.denoising_strength
            if d == 0.0:
                image = base.copy()
            else:
                noise = _value_noise(p.height, p.width, seed)
                blended = np.float32(1.0 - d) * base.astype(np.float32) + np.float32(d) * noise
                image = np.clip(np.floor(blended + np.float32(0.5)), 0, 255).astype(np.uint8)
        else:
            noise = _value_noise(p.height, p.width, seed)
            image = np.clip(np.floor(noise + 0.5), 0, 255).astype(np.uint8)
        latency_ms = (time.perf_counter() - start) * 1000.0
        return GenerationResult(
            image=image, request_echo=request, latency_ms=latency_ms, backend_id=self.backend_id
        )


# ---------------------------------------------------------------------------
# Automatic1111-compatible HTTP backend

class HttpBackend:
    """Client for an Automatic1111-style web API.

    POSTs JSON to {base_url}/sdapi/v1/txt2img or /sdapi/v1/img2img and
    decodes the first base64 PNG of the response's `images` list.
    """

    def __init__(self, base_url: str, timeout_s: float = 10.0, backend_id: str = "a1111",
                 session: _requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.backend_id = backend_id
        self._session = session or _requests.Session()

    def _payload(self, request: GenerationRequest) -> tuple[str, dict]:
        p = request.params
        payload = {
            "prompt": request.positive,
            "negative_prompt": request.negative,
            "seed": request.seed,
            "steps": p.steps,
            "cfg_scale": p.cfg_scale,
            "width": p.width,
            "height": p.height,
        }
        if request.kind == IMG2IMG:
            assert request.init_image is not None
            payload["denoising_strength"] = p.denoising_strength
            payload["init_images"] = [
                base64.b64encode(frame_to_png_bytes(request.init_image)).decode("ascii")
            ]
            return f"{self.base_url}/sdapi/v1/img2img", payload
        return f"{self.base_url}/sdapi/v1/txt2img", payload

    def generate(self, request: GenerationRequest) -> GenerationResult:
        url, payload = self._payload(request)
        start = time.perf_counter()
        try:
            response = self._session.post(url, json=payload, timeout=self.timeout_s)
        except _requests.RequestException as exc:
            raise BackendConnectionError(f"POST {url} failed: {exc}") from exc
        if not (200 <= response.status_code < 300):
            raise BackendHTTPError(response.status_code, response.text)
        try:
            images = response.json()["images"]
            png = base64.b64decode(images[0])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendPayloadError(f"unexpected response shape: {exc}") from exc
        image = png_bytes_to_rgb(png)
        if image.shape[0] != request.params.height or image.shape[1] != request.params.width:
            raise BackendPayloadError(
                f"backend returned {image.shape[1]}x{image.shape[0]}, "
                f"requested {request.params.width}x{request.params.height}"
            )
        latency_ms = (time.perf_counter() - start) * 1000.0
        return GenerationResult(
            image=image, request_echo=request, latency_ms=latency_ms, backend_id=self.backend_id
        )


def result_to_png_bytes(result: GenerationResult) -> bytes:
    return rgb_to_png_bytes(result.image)


# ---------------------------------------------------------------------------
# Submission/completion decoupling
#
# The pipeline loop never blocks on generation: it offers a request to a
# dispatcher, which accepts it only while an in-flight slot is free, and
# later hands back completions through poll(). Three dispatchers share the
# contract: immediate (deterministic replays/batch), threaded (live), and
# simulated-latency (tests that model a slow backend on a fake clock).

@dataclass(frozen=True)
class BackendFailure:
    request: GenerationRequest
    error: str


Completion = GenerationResult | BackendFailure


class ImmediateDispatcher:
    """Runs the backend synchronously inside try_submit; zero latency."""

    def __init__(self, backend):
        self.backend = backend
        self._completed: list[Completion] = []

    @property
    def in_flight(self) -> int:
        return 0

    def try_submit(self, request: GenerationRequest, now: float) -> bool:
        try:
            self._completed.append(self.backend.generate(request))
        except BackendError as exc:
            self._completed.append(BackendFailure(request=request, error=str(exc)))
        return True

    def poll(self, now: float) -> list[Completion]:
        out = self._completed
        self._completed = []
        return out

    def close(self) -> None:
        pass


class ThreadedDispatcher:
    """Worker thread executes submissions; completions come back via queue."""

    def __init__(self, backend, in_flight_limit: int = 1):
        if in_flight_limit < 1:
            raise RequestValidationError("in_flight_limit must be >= 1")
        self.backend = backend
        self.in_flight_limit = in_flight_limit
        self._submissions: Queue = Queue()
        self._completions: Queue = Queue()
        self._in_flight = 0
        self._lock = threading.Lock()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    @property
    def in_flight(self) -> int:
        with self._lock:
            return self._in_flight

    def try_submit(self, request: GenerationRequest, now: float) -> bool:
        with self._lock:
            if self._in_flight >= self.in_flight_limit:
                return False
            self._in_flight += 1
        self._submissions.put(request)
        return True

    def poll(self, now: float) -> list[Completion]:
        out: list[Completion] = []
        while True:
            try:
                out.append(self._completions.get_nowait())
            except Empty:
                break
        if out:
            with self._lock:
                self._in_flight -= len(out)
        return out

    def _run(self) -> None:
        while True:
            request = self._submissions.get()
            if request is None:
                return
            try:
                self._completions.put(self.backend.generate(request))
            except BackendError as exc:
                self._completions.put(BackendFailure(request=request, error=str(exc)))
            except Exception as exc:  # defensive: a worker death would stall the loop
                self._completions.put(BackendFailure(request=request, error=f"internal: {exc}"))

    def close(self) -> None:
        self._submissions.put(None)
        self._worker.join(timeout=2.0)


class SimulatedDispatcher:
    """Deterministic fixed-latency dispatcher driven by the caller's clock."""

    def __init__(self, backend, latency_s: float, in_flight_limit: int = 1):
        self.backend = backend
        self.latency_s = latency_s
        self.in_flight_limit = in_flight_limit
        self._pending: list[tuple[float, GenerationRequest]] = []

    @property
    def in_flight(self) -> int:
        return len(self._pending)

    def try_submit(self, request: GenerationRequest, now: float) -> bool:
        if len(self._pending) >= self.in_flight_limit:
            return False
        self._pending.append((now + self.latency_s, request))
        return True

    def poll(self, now: float) -> list[Completion]:
        ready = [(t, r) for t, r in self._pending if t <= now]
        self._pending = [(t, r) for t, r in self._pending if t > now]
        out: list[Completion] = []
        for _, request in ready:
            try:
                out.append(self.backend.generate(request))
            except BackendError as exc:
                out.append(BackendFailure(request=request, error=str(exc)))
        return out

    def close(self) -> None:
        pass
