"""Frame sources feeding the pipeline, plus the clocks that pace it.

A replay source plays back a recorded .npz frame stack; the synthetic source
renders a deterministic moving shadow, handy for demos and load tests. Live
camera capture is deliberately just an interface here: plug in anything that
yields Frames.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

import numpy as np

from .raster import Frame


class SourceError(ValueError):
    pass


class ReplaySource:
    """Plays back frames saved with save_replay(), in order, once."""

    def __init__(self, path):
        data = np.load(Path(path))
        if "frames" not in data:
            raise SourceError(f"{path}: missing 'frames' array")
        frames = data["frames"]
        if frames.ndim != 3 or frames.dtype != np.uint8:
            raise SourceError(f"{path}: frames must be (n, height, width) uint8")
        self._frames = frames
        self._index = 0

    def __len__(self) -> int:
        return self._frames.shape[0]

    def read(self) -> Frame | None:
        if self._index >= self._frames.shape[0]:
            return None
        frame = Frame(self._frames[self._index])
        self._index += 1
        return frame


def save_replay(path, frames: list[Frame]) -> None:
    if not frames:
        raise SourceError("cannot save an empty replay")
    stack = np.stack([f.pixels for f in frames])
    np.savez_compressed(Path(path), frames=stack)


class SyntheticSource:
    """Deterministic moving dark blob on a white field (a stand-in shadow).

    The blob follows a Lissajous path whose phase comes from the seed, so
    different seeds give different but reproducible motion.
    """

    def __init__(self, width: int = 512, height: int = 512, seed: int = 0,
                 radius_frac: float = 0.18, speed: float = 0.02):
        if width <= 0 or height <= 0:
            raise SourceError("synthetic source dimensions must be positive")
        self.width = width
        self.height = height
        self.seed = seed
        self.radius = max(2.0, radius_frac * min(width, height))
        self.speed = speed
        self._index = 0
        ys, xs = np.mgrid[0:height, 0:width]
        self._ys = ys.astype(np.float32)
        self._xs = xs.astype(np.float32)

    def frame_at(self, index: int) -> Frame:
        t = index * self.speed
        phase = (self.seed % 997) * 0.1
        cx = self.width * (0.5 + 0.35 * np.sin(t + phase))
        cy = self.height * (0.5 + 0.35 * np.sin(1.7 * t + 2.0 * phase))
        dist2 = (self._xs - cx) ** 2 + (self._ys - cy) ** 2
        pixels = np.where(dist2 <= self.radius**2, 10, 250).astype(np.uint8)
        return Frame(pixels)

    def read(self) -> Frame:
        frame = self.frame_at(self._index)
        self._index += 1
        return frame


class CameraSource:
    """Extension point; wire a capture driver in by matching read()."""

    def __init__(self, device: int = 0):
        raise SourceError(
            "camera capture is not built in; use a replay file or synthetic source, "
            "or supply any object with read() -> Frame"
        )


def make_source(config: dict):
    kind = config.get("kind", "synthetic")
    if kind == "replay":
        return ReplaySource(config["path"])
    if kind == "synthetic":
        return SyntheticSource(
            width=int(config.get("width", 512)),
            height=int(config.get("height", 512)),
            seed=int(config.get("seed", 0)),
        )
    if kind == "camera":
        return CameraSource(device=int(config.get("device", 0)))
    raise SourceError(f"unknown frame source kind {kind!r}")


# ---------------------------------------------------------------------------
# Clocks

class WallClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class LogicalClock:
    """Deterministic clock for replays.

    Time only moves when advance() is called; every query nudges it forward
    by a nanoscale epsilon so that consecutive reads (artifact timestamps,
    for instance) are distinct yet reproducible across runs.
    """

    QUERY_EPSILON = 1e-9

    def __init__(self, start: float = 0.0):
        self._time = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            self._time += self.QUERY_EPSILON
            return self._time

    def advance(self, dt: float) -> None:
        with self._lock:
            self._time += dt

    def sleep(self, seconds: float) -> None:
        self.advance(max(0.0, seconds))
