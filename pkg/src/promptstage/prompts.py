"""Prompt fragments, weighted-term formatting, and meta-prompt composition.

Everything here is a pure value type or a pure function: identical inputs
produce byte-identical outputs, so composed prompts can be replayed and
diffed across runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path


class PromptValidationError(ValueError):
    """A fragment, weight, or composition input is out of contract."""


class TemplateError(ValueError):
    """A meta-prompt template is malformed (configuration error)."""


PLACEHOLDER = "{fragments}"
WEIGHT_MIN = 0.1
WEIGHT_MAX = 4.0
UNIT_WEIGHT_EPSILON = 0.005
MAX_FRAGMENT_ID = 0xFFFF


@dataclass(frozen=True)
class PromptFragment:
    """A prompt term bound to a physical card's fiducial id."""

    id: int
    label: str
    text: str
    default_weight: float = 1.0

    def __post_init__(self) -> None:
        if not (0 <= self.id <= MAX_FRAGMENT_ID):
            raise PromptValidationError(f"fragment id {self.id} outside 16-bit range")
        if not self.text:
            raise PromptValidationError("fragment text must be non-empty")
        if not (0.0 < self.default_weight <= WEIGHT_MAX):
            raise PromptValidationError(
                f"default_weight {self.default_weight} outside (0, {WEIGHT_MAX}]"
            )


@dataclass(frozen=True)
class FragmentLibrary:
    fragments: tuple[PromptFragment, ...]
    name: str = ""

    def __post_init__(self) -> None:
        fragments = tuple(self.fragments)
        object.__setattr__(self, "fragments", fragments)
        ids = [f.id for f in fragments]
        if len(set(ids)) != len(ids):
            raise PromptValidationError(f"duplicate fragment ids in library {self.name!r}")
        texts = [f.text for f in fragments]
        if len(set(texts)) != len(texts):
            raise PromptValidationError(f"duplicate fragment texts in library {self.name!r}")

    def __len__(self) -> int:
        return len(self.fragments)

    def get(self, fragment_id: int) -> PromptFragment | None:
        for fragment in self.fragments:
            if fragment.id == fragment_id:
                return fragment
        return None


@dataclass(frozen=True)
class MetaPrompt:
    """Template with linking phrases that fragments are substituted into."""

    template: str
    negative_prompt: str = ""
    empty_fallback: str = ""

    def __post_init__(self) -> None:
        count = self.template.count(PLACEHOLDER)
        if count != 1:
            raise TemplateError(
                f"template must contain {PLACEHOLDER!r} exactly once, found {count}"
            )


@dataclass(frozen=True)
class WeightedFragment:
    fragment: PromptFragment
    weight: float

    def __post_init__(self) -> None:
        if not (WEIGHT_MIN <= self.weight <= WEIGHT_MAX):
            raise PromptValidationError(
                f"weight {self.weight} outside [{WEIGHT_MIN}, {WEIGHT_MAX}]"
            )


@dataclass(frozen=True)
class ComposedPrompt:
    positive: str
    negative: str
    source_fragment_ids: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.positive:
            raise PromptValidationError("composed positive prompt must be non-empty")
        object.__setattr__(self, "source_fragment_ids", tuple(self.source_fragment_ids))


def weighted_term_syntax(text: str, weight: float) -> str:
    """Render a term in backend weighting syntax without range validation.

    Weights within ±0.005 of 1.0 render as the bare term; everything else as
    ``(text:W)`` with W at two decimals, rounded half away from zero. Scene
    crossfades legitimately produce weights below the card-weight floor, so
    this low-level form skips the [0.1, 4.0] check that card weighting needs.
    """
    # boundary cases like 0.995 are exact in decimal, not in binary floats
    if abs(Decimal(str(weight)) - 1) <= Decimal(str(UNIT_WEIGHT_EPSILON)):
        return text
    quantized = Decimal(str(weight)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"({text}:{quantized})"


def format_weighted_term(text: str, weight: float) -> str:
    """Render a card term with its arena weight in backend prompt syntax."""
    if not text:
        raise PromptValidationError("term text must be non-empty")
    if not (WEIGHT_MIN <= weight <= WEIGHT_MAX):
        raise PromptValidationError(f"weight {weight} outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")
    return weighted_term_syntax(text, weight)


_WEIGHTED_TERM_RE = re.compile(r"^\((?P<text>.+):(?P<weight>\d+\.\d{2})\)$", re.DOTALL)


def parse_weighted_term(term: str) -> tuple[str, float]:
    """Inverse of the weighted-term syntax; bare terms carry weight 1.0."""
    match = _WEIGHTED_TERM_RE.match(term)
    if match is None:
        return term, 1.0
    return match.group("text"), float(match.group("weight"))


_COMMA_RUN_RE = re.compile(r",(?:\s*,)+")
_SPACE_RUN_RE = re.compile(r" {2,}")


def _collapse_separators(text: str) -> str:
    text = _COMMA_RUN_RE.sub(",", text)
    return _SPACE_RUN_RE.sub(" ", text)


def compose_prompt(meta: MetaPrompt, fragments: list[WeightedFragment]) -> ComposedPrompt:
    """Substitute ordered weighted fragments into the meta-prompt template.

    Callers supply fragments already in arena order (left to right, ties by
    id ascending); composition itself never reorders. Duplicate cards are
    legitimate and all occurrences are kept.
    """
    if meta.template.count(PLACEHOLDER) != 1:
        raise TemplateError(f"template must contain {PLACEHOLDER!r} exactly once")
    if fragments:
        joined = ", ".join(format_weighted_term(wf.fragment.text, wf.weight) for wf in fragments)
    else:
        joined = meta.empty_fallback
    positive = _collapse_separators(meta.template.replace(PLACEHOLDER, joined))
    return ComposedPrompt(
        positive=positive,
        negative=meta.negative_prompt,
        source_fragment_ids=tuple(wf.fragment.id for wf in fragments),
    )


@dataclass(frozen=True)
class ValidatedPlacements:
    """Known fragments in input order plus the ids of any foreign cards."""

    fragments: tuple[PromptFragment, ...]
    unknown_ids: tuple[int, ...]


def validate_placements(library: FragmentLibrary, ids: list[int]) -> ValidatedPlacements:
    """Resolve detected card ids against a library.

    Unknown ids are reported, never fatal: a foreign card dropped on the
    arena must not crash a live exhibit. Duplicates are preserved.
    """
    known: list[PromptFragment] = []
    unknown: list[int] = []
    for fragment_id in ids:
        fragment = library.get(fragment_id)
        if fragment is None:
            unknown.append(fragment_id)
        else:
            known.append(fragment)
    return ValidatedPlacements(fragments=tuple(known), unknown_ids=tuple(unknown))


# ---------------------------------------------------------------------------
# JSON file formats
#
# library: {"name": ..., "fragments": [{"id":, "label":, "text":, "default_weight":}]}
# meta prompt: {"template": ..., "negative_prompt": ..., "empty_fallback": ...}

def library_from_json(data: dict) -> FragmentLibrary:
    fragments = tuple(
        PromptFragment(
            id=int(entry["id"]),
            label=str(entry.get("label", entry["text"])),
            text=str(entry["text"]),
            default_weight=float(entry.get("default_weight", 1.0)),
        )
        for entry in data["fragments"]
    )
    return FragmentLibrary(fragments=fragments, name=str(data.get("name", "")))


def library_to_json(library: FragmentLibrary) -> dict:
    return {
        "name": library.name,
        "fragments": [
            {"id": f.id, "label": f.label, "text": f.text, "default_weight": f.default_weight}
            for f in library.fragments
        ],
    }


def load_library(path) -> FragmentLibrary:
    return library_from_json(json.loads(Path(path).read_text()))


def meta_prompt_from_json(data: dict) -> MetaPrompt:
    return MetaPrompt(
        template=str(data["template"]),
        negative_prompt=str(data.get("negative_prompt", "")),
        empty_fallback=str(data.get("empty_fallback", "")),
    )


def meta_prompt_to_json(meta: MetaPrompt) -> dict:
    return {
        "template": meta.template,
        "negative_prompt": meta.negative_prompt,
        "empty_fallback": meta.empty_fallback,
    }


def load_meta_prompt(path) -> MetaPrompt:
    return meta_prompt_from_json(json.loads(Path(path).read_text()))
