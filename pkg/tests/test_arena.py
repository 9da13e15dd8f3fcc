import pytest
from hypothesis import given, settings, strategies as st

from promptstage.arena import (
    ArenaError,
    ArenaGeometry,
    DetectedTag,
    detect_tags,
    paste_tag,
    placements_from_tags,
    render_tag,
    weight_from_position,
)
from promptstage.raster import Frame, load_pgm, save_pgm

GEOM = ArenaGeometry(640, 480)


def white_arena() -> Frame:
    return Frame.filled(GEOM.width_px, GEOM.height_px)


# -- render_tag ---------------------------------------------------------------

def test_render_zero_payload():
    tag = render_tag(0, 48)
    cell = 8
    inner = tag.pixels[cell:-cell, cell:-cell]
    assert (inner == 255).all()
    assert (tag.pixels[:cell, :] == 0).all()
    assert (tag.pixels[-cell:, :] == 0).all()
    assert (tag.pixels[:, :cell] == 0).all()
    assert (tag.pixels[:, -cell:] == 0).all()


def test_render_all_bits_set_is_solid_black():
    tag = render_tag(0xFFFF, 24)
    assert (tag.pixels == 0).all()


def test_render_0x8001_corners():
    # bit 15 -> inner (0,0); bit 0 -> inner (3,3)
    tag = render_tag(0x8001, 48)
    cell = 8
    assert (tag.pixels[cell : 2 * cell, cell : 2 * cell] == 0).all()
    assert (tag.pixels[4 * cell : 5 * cell, 4 * cell : 5 * cell] == 0).all()
    assert (tag.pixels[cell : 2 * cell, 2 * cell : 5 * cell] == 255).all()
    assert (tag.pixels[2 * cell : 4 * cell, cell : 5 * cell] == 255).all()


def test_render_rejects_bad_sizes():
    with pytest.raises(ArenaError):
        render_tag(1, 20)
    with pytest.raises(ArenaError):
        render_tag(1, 50)  # not a multiple of 6
    with pytest.raises(ArenaError):
        render_tag(-1, 48)
    with pytest.raises(ArenaError):
        render_tag(0x10000, 48)


# -- detect_tags ---------------------------------------------------------------

def test_uniform_white_frame_detects_nothing():
    assert detect_tags(white_arena(), GEOM) == []


def test_render_then_detect_round_trip():
    frame = paste_tag(white_arena(), render_tag(1234, 48), 100, 100)
    tags = detect_tags(frame, GEOM)
    assert len(tags) == 1
    assert tags[0].id == 1234
    assert tags[0].center_x == pytest.approx(123.5, abs=1.0)
    assert tags[0].center_y == pytest.approx(123.5, abs=1.0)


def test_two_tags_detected_any_order():
    frame = white_arena()
    frame = paste_tag(frame, render_tag(5, 48), 50, 60)
    frame = paste_tag(frame, render_tag(9, 60), 400, 300)
    tags = detect_tags(frame, GEOM)
    assert sorted(t.id for t in tags) == [5, 9]


def test_detection_is_translation_invariant():
    tag = render_tag(777, 48)
    a = detect_tags(paste_tag(white_arena(), tag, 30, 40), GEOM)
    b = detect_tags(paste_tag(white_arena(), tag, 230, 190), GEOM)
    assert a[0].id == b[0].id == 777
    assert b[0].center_x - a[0].center_x == pytest.approx(200, abs=1.0)
    assert b[0].center_y - a[0].center_y == pytest.approx(150, abs=1.0)


def test_undecodable_blob_ignored():
    frame = white_arena()
    pixels = frame.pixels.copy()
    pixels[200:210, 200:260] = 0  # dark bar, no ring structure
    tags = detect_tags(Frame(pixels), GEOM)
    assert tags == []


def test_tag_with_dark_scene_noise_still_detected():
    frame = paste_tag(white_arena(), render_tag(321, 48), 500, 50)
    pixels = frame.pixels.copy()
    pixels[400:440, 100:110] = 0  # a stray hand shadow
    tags = detect_tags(Frame(pixels), GEOM)
    assert [t.id for t in tags] == [321]


def test_frame_geometry_mismatch_is_an_error():
    with pytest.raises(ArenaError):
        detect_tags(Frame.filled(100, 100), GEOM)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 0xFFFF), st.integers(0, 500), st.integers(0, 380))
def test_round_trip_random_ids_and_positions(tag_id, x, y):
    frame = paste_tag(white_arena(), render_tag(tag_id, 48), x, y)
    tags = detect_tags(frame, GEOM)
    assert len(tags) == 1
    assert tags[0].id == tag_id
    assert abs(tags[0].center_x - (x + 23.5)) <= 1.0
    assert abs(tags[0].center_y - (y + 23.5)) <= 1.0


# -- weight_from_position ----------------------------------------------------------

def test_weight_endpoints():
    assert weight_from_position(0.0, GEOM) == 1.5
    assert weight_from_position(1.0, GEOM) == 0.5


def test_weight_linear_interpolation():
    assert weight_from_position(0.25, GEOM) == pytest.approx(1.25)


def test_weight_clamps_out_of_range_positions():
    assert weight_from_position(-0.5, GEOM) == 1.5
    assert weight_from_position(2.0, GEOM) == 0.5


def test_weight_direction_flag():
    flipped = ArenaGeometry(640, 480, slide_up_increases_weight=False)
    assert weight_from_position(0.0, flipped) == 0.5
    assert weight_from_position(1.0, flipped) == 1.5


@given(st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False))
def test_weight_monotone_non_increasing(y1, y2):
    lo, hi = sorted([y1, y2])
    assert weight_from_position(lo, GEOM) >= weight_from_position(hi, GEOM)


def test_geometry_validation():
    with pytest.raises(ArenaError):
        ArenaGeometry(0, 480)
    with pytest.raises(ArenaError):
        ArenaGeometry(640, 480, weight_min=1.5, weight_max=0.5)


# -- placements_from_tags -------------------------------------------------------

def test_empty_tags_empty_placements():
    assert placements_from_tags([], GEOM) == []


def test_placement_normalization_and_weight():
    tags = [DetectedTag(id=7, center_x=GEOM.width_px / 2, center_y=0.0, confidence=1.0)]
    placements = placements_from_tags(tags, GEOM)
    assert len(placements) == 1
    p = placements[0]
    assert p.fragment_id == 7
    assert p.x_norm == 0.5
    assert p.y_norm == 0.0
    assert p.weight == 1.5


def test_equal_x_ties_break_by_id():
    tags = [
        DetectedTag(id=9, center_x=100, center_y=50, confidence=1.0),
        DetectedTag(id=3, center_x=100, center_y=200, confidence=1.0),
    ]
    placements = placements_from_tags(tags, GEOM)
    assert [p.fragment_id for p in placements] == [3, 9]


def test_placement_weight_matches_weight_from_position_exactly():
    tags = [DetectedTag(id=1, center_x=320, center_y=123, confidence=1.0)]
    p = placements_from_tags(tags, GEOM)[0]
    assert p.weight == weight_from_position(p.y_norm, GEOM)


# -- PGM fixtures ---------------------------------------------------------------

def test_pgm_round_trip(tmp_path):
    frame = paste_tag(white_arena(), render_tag(42, 48), 11, 13)
    path = tmp_path / "fixture.pgm"
    save_pgm(frame, path)
    loaded = load_pgm(path)
    assert loaded.same_pixels(frame)
    assert detect_tags(loaded, GEOM)[0].id == 42
