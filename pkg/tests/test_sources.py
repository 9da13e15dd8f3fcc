import numpy as np
import pytest

from promptstage.raster import Frame, RasterError, frame_to_png_bytes, png_bytes_to_frame, png_bytes_to_rgb, rgb_to_png_bytes
from promptstage.sources import (
    CameraSource,
    LogicalClock,
    ReplaySource,
    SourceError,
    SyntheticSource,
    make_source,
    save_replay,
)


# -- frames and PNG ------------------------------------------------------------

def test_frame_rejects_bad_shapes():
    with pytest.raises(RasterError):
        Frame(np.zeros((0, 4), dtype=np.uint8))
    with pytest.raises(RasterError):
        Frame(np.zeros(16, dtype=np.uint8))


def test_frame_png_round_trip():
    frame = Frame(np.random.default_rng(0).integers(0, 256, (20, 30), dtype=np.uint8))
    assert png_bytes_to_frame(frame_to_png_bytes(frame)).same_pixels(frame)


def test_rgb_png_round_trip():
    image = np.random.default_rng(1).integers(0, 256, (16, 24, 3), dtype=np.uint8)
    assert np.array_equal(png_bytes_to_rgb(rgb_to_png_bytes(image)), image)


def test_undecodable_png_rejected():
    with pytest.raises(RasterError):
        png_bytes_to_rgb(b"definitely not a png")


# -- replay ---------------------------------------------------------------------

def test_replay_round_trip(tmp_path):
    frames = [Frame.filled(8, 6, v) for v in (0, 100, 255)]
    path = tmp_path / "replay.npz"
    save_replay(path, frames)
    source = ReplaySource(path)
    assert len(source) == 3
    out = [source.read() for _ in range(4)]
    assert out[3] is None
    for original, read in zip(frames, out):
        assert read.same_pixels(original)


def test_empty_replay_rejected(tmp_path):
    with pytest.raises(SourceError):
        save_replay(tmp_path / "x.npz", [])


# -- synthetic -------------------------------------------------------------------

def test_synthetic_is_deterministic():
    a = SyntheticSource(32, 32, seed=4)
    b = SyntheticSource(32, 32, seed=4)
    for _ in range(5):
        assert a.read().same_pixels(b.read())


def test_synthetic_seeds_differ():
    a = SyntheticSource(32, 32, seed=4).read()
    b = SyntheticSource(32, 32, seed=5).read()
    assert not a.same_pixels(b)


def test_synthetic_moves_over_time():
    source = SyntheticSource(32, 32, seed=4)
    first = source.read()
    for _ in range(10):
        last = source.read()
    assert not first.same_pixels(last)


# -- source factory -----------------------------------------------------------------

def test_make_source_kinds(tmp_path):
    synthetic = make_source({"kind": "synthetic", "width": 16, "height": 16})
    assert synthetic.read().width == 16
    save_replay(tmp_path / "r.npz", [Frame.filled(8, 8)])
    replay = make_source({"kind": "replay", "path": str(tmp_path / "r.npz")})
    assert replay.read() is not None
    with pytest.raises(SourceError):
        make_source({"kind": "camera"})
    with pytest.raises(SourceError):
        make_source({"kind": "telepathy"})


def test_camera_source_is_a_clear_extension_point():
    with pytest.raises(SourceError):
        CameraSource()


# -- logical clock ---------------------------------------------------------------------

def test_logical_clock_deterministic_and_strictly_increasing():
    a = LogicalClock()
    b = LogicalClock()
    seq_a = [a.now() for _ in range(5)]
    seq_b = [b.now() for _ in range(5)]
    assert seq_a == seq_b
    assert all(x < y for x, y in zip(seq_a, seq_a[1:]))


def test_logical_clock_advance():
    clock = LogicalClock()
    t0 = clock.now()
    clock.advance(1.5)
    assert clock.now() - t0 == pytest.approx(1.5, abs=1e-6)
