"""8-bit raster images: grayscale frames plus PGM and PNG I/O."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image


class RasterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Frame:
    """Single-channel 8-bit image, row-major.

    ``pixels`` is always a C-contiguous uint8 array of shape (height, width).
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 2 or arr.size == 0:
            raise RasterError(f"frame pixels must be a non-empty 2-D array, got shape {arr.shape}")
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, value: int = 255) -> "Frame":
        return cls(np.full((height, width), value, dtype=np.uint8))

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def same_pixels(self, other: "Frame") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)


def frame_from_list(width: int, height: int, values) -> Frame:
    """Build a frame from a flat row-major list (test convenience)."""
    arr = np.asarray(values, dtype=np.uint8).reshape(height, width)
    return Frame(arr)


# ---------------------------------------------------------------------------
# PGM (P5, binary, maxval 255) for arena test fixtures

def save_pgm(frame: Frame, path) -> None:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frame.tobytes())


def load_pgm(path) -> Frame:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise RasterError(f"{path}: not a binary PGM (P5) file")
    # header = magic, width, height, maxval; comments start with '#'
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise RasterError(f"{path}: unsupported maxval {maxval}")
    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise RasterError(f"{path}: truncated pixel data")
    return Frame(np.frombuffer(raw, dtype=np.uint8).reshape(height, width))


# ---------------------------------------------------------------------------
# PNG, used on the backend wire and for saved artifacts

def frame_to_png_bytes(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def rgb_to_png_bytes(image: np.ndarray) -> bytes:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise RasterError(f"expected (h, w, 3) uint8 image, got {image.shape} {image.dtype}")
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_rgb(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise RasterError(f"undecodable PNG payload: {exc}") from exc
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def png_bytes_to_frame(data: bytes) -> Frame:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise RasterError(f"undecodable PNG payload: {exc}") from exc
    return Frame(np.asarray(img.convert("L"), dtype=np.uint8))
