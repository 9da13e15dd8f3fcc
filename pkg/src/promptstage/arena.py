"""Fiducial card detection on the lightbox arena.

Cards carry a 6x6-cell grid tag: the outer ring of cells is solid black and
the inner 4x4 cells encode a 16-bit id (row-major, most significant bit
first, black = 1). The arena is backlit, so detection binarizes at a fixed
threshold and only handles axis-aligned tags; swapping in a real QR decoder
is a matter of producing the same DetectedTag records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import Frame

GRID_CELLS = 6
PAYLOAD_CELLS = 4
MIN_TAG_SIZE = 24
BINARIZE_THRESHOLD = 128
MAX_TAG_ID = 0xFFFF

# candidate square must be at least 2 px per cell to be decodable
_MIN_CANDIDATE_PX = 2 * GRID_CELLS


class ArenaError(ValueError):
    pass


@dataclass(frozen=True)
class ArenaGeometry:
    width_px: int
    height_px: int
    weight_min: float = 0.5
    weight_max: float = 1.5
    # whether sliding a card toward the top edge raises its weight
    slide_up_increases_weight: bool = True

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ArenaError("arena dimensions must be positive")
        if not self.weight_min < self.weight_max:
            raise ArenaError(
                f"weight_min {self.weight_min} must be < weight_max {self.weight_max}"
            )


@dataclass(frozen=True)
class DetectedTag:
    id: int
    center_x: float
    center_y: float
    confidence: float


@dataclass(frozen=True)
class FragmentPlacement:
    fragment_id: int
    x_norm: float
    y_norm: float
    weight: float


def render_tag(tag_id: int, size_px: int) -> Frame:
    """Render a tag as a black-on-white square image of size_px per side."""
    if not (0 <= tag_id <= MAX_TAG_ID):
        raise ArenaError(f"tag id {tag_id} outside 16-bit range")
    if size_px < MIN_TAG_SIZE or size_px % GRID_CELLS != 0:
        raise ArenaError(f"size_px must be a multiple of {GRID_CELLS} and >= {MIN_TAG_SIZE}")
    cells = np.zeros((GRID_CELLS, GRID_CELLS), dtype=bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    for bit_index in range(16):
        if (tag_id >> (15 - bit_index)) & 1:
            row, col = divmod(bit_index, PAYLOAD_CELLS)
            cells[1 + row, 1 + col] = True
    cell_px = size_px // GRID_CELLS
    dark = np.kron(cells, np.ones((cell_px, cell_px), dtype=bool))
    return Frame(np.where(dark, 0, 255).astype(np.uint8))


def paste_tag(frame: Frame, tag: Frame, x: int, y: int) -> Frame:
    """Composite a tag onto a frame at top-left (x, y); returns a new frame."""
    if x < 0 or y < 0 or x + tag.width > frame.width or y + tag.height > frame.height:
        raise ArenaError("tag does not fit inside the frame")
    pixels = frame.pixels.copy()
    pixels[y : y + tag.height, x : x + tag.width] = tag.pixels
    return Frame(pixels)


def _sample_cell(dark: np.ndarray, top: float, left: float, cell: float, row: int, col: int) -> tuple[bool, float]:
    """Majority-vote the central region of one grid cell.

    Returns (is_dark, agreement fraction).
    """
    y0 = top + row * cell
    x0 = left + col * cell
    pad = cell / 4.0
    r0 = int(round(y0 + pad))
    r1 = max(r0 + 1, int(round(y0 + cell - pad)))
    c0 = int(round(x0 + pad))
    c1 = max(c0 + 1, int(round(x0 + cell - pad)))
    region = dark[r0:r1, c0:c1]
    if region.size == 0:
        return False, 0.0
    frac_dark = float(region.mean())
    is_dark = frac_dark >= 0.5
    return is_dark, frac_dark if is_dark else 1.0 - frac_dark


def _decode_candidate(dark: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> DetectedTag | None:
    height = r1 - r0
    width = c1 - c0
    if width < _MIN_CANDIDATE_PX or height < _MIN_CANDIDATE_PX:
        return None
    if abs(width - height) > max(2, 0.2 * max(width, height)):
        return None
    cell = (width + height) / 2.0 / GRID_CELLS
    agreements: list[float] = []
    # full border ring must be dark
    for row in range(GRID_CELLS):
        for col in range(GRID_CELLS):
            if 0 < row < GRID_CELLS - 1 and 0 < col < GRID_CELLS - 1:
                continue
            is_dark, agreement = _sample_cell(dark, r0, c0, cell, row, col)
            if not is_dark:
                return None
            agreements.append(agreement)
    tag_id = 0
    for bit_index in range(16):
        row, col = divmod(bit_index, PAYLOAD_CELLS)
        is_dark, agreement = _sample_cell(dark, r0, c0, cell, 1 + row, 1 + col)
        tag_id = (tag_id << 1) | int(is_dark)
        agreements.append(agreement)
    confidence = float(np.mean(agreements))
    center_x = (c0 + c1 - 1) / 2.0
    center_y = (r0 + r1 - 1) / 2.0
    return DetectedTag(id=tag_id, center_x=center_x, center_y=center_y, confidence=confidence)


def detect_tags(frame: Frame, geometry: ArenaGeometry) -> list[DetectedTag]:
    """Find and decode every fully-visible tag in an arena frame.

    Candidate regions are 8-connected dark components; a candidate survives
    only if its full border ring is dark. Payload blobs detached from the
    ring land inside an accepted tag's box and are discarded, as is any dark
    blob that does not decode. Nothing here raises on scene content.
    """
    if frame.width != geometry.width_px or frame.height != geometry.height_px:
        raise ArenaError(
            f"frame {frame.width}x{frame.height} does not match arena "
            f"{geometry.width_px}x{geometry.height_px}"
        )
    dark = frame.pixels < BINARIZE_THRESHOLD
    if not dark.any():
        return []
    labels, count = ndimage.label(dark, structure=np.ones((3, 3), dtype=bool))
    slices = ndimage.find_objects(labels)
    candidates: list[tuple[int, int, int, int, DetectedTag]] = []
    for sl in slices[:count]:
        if sl is None:
            continue
        r0, r1 = sl[0].start, sl[0].stop
        c0, c1 = sl[1].start, sl[1].stop
        tag = _decode_candidate(dark, r0, r1, c0, c1)
        if tag is not None:
            candidates.append((r0, r1, c0, c1, tag))
    # outermost boxes win; inner payload artifacts are contained in them
    candidates.sort(key=lambda c: (c[1] - c[0]) * (c[3] - c[2]), reverse=True)
    accepted: list[tuple[int, int, int, int, DetectedTag]] = []
    for cand in candidates:
        r0, r1, c0, c1, tag = cand
        contained = any(
            ar0 <= r0 and r1 <= ar1 and ac0 <= c0 and c1 <= ac1 for ar0, ar1, ac0, ac1, _ in accepted
        )
        if not contained:
            accepted.append(cand)
    return [tag for *_, tag in accepted]


def weight_from_position(y_norm: float, geometry: ArenaGeometry) -> float:
    """Map a card's vertical position to a prompt weight, linearly."""
    y = min(1.0, max(0.0, y_norm))
    span = geometry.weight_max - geometry.weight_min
    if geometry.slide_up_increases_weight:
        return geometry.weight_max - y * span
    return geometry.weight_min + y * span


def placements_from_tags(tags: list[DetectedTag], geometry: ArenaGeometry) -> list[FragmentPlacement]:
    """Normalize tag centers and derive weights, in canonical arena order.

    Order is left to right by x, ties broken by id ascending, which makes
    prompt composition independent of detection order.
    """
    placements = []
    for tag in tags:
        x_norm = min(1.0, max(0.0, tag.center_x / geometry.width_px))
        y_norm = min(1.0, max(0.0, tag.center_y / geometry.height_px))
        placements.append(
            FragmentPlacement(
                fragment_id=tag.id,
                x_norm=x_norm,
                y_norm=y_norm,
                weight=weight_from_position(y_norm, geometry),
            )
        )
    placements.sort(key=lambda p: (p.x_norm, p.fragment_id))
    return placements
