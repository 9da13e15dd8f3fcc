"""Prompt scenes: a base style prompt plus sub-prompts crossfaded by a
progression parameter that participant movement drives forward.

Crossfading uses triangular kernels centered at evenly spaced points, which
keeps the weights an exact partition of unity with at most two sub-prompts
active at once. Raised-cosine kernels would slot in behind blend_weights()
unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .prompts import weighted_term_syntax

MIN_SUB_PROMPTS = 3
MAX_SUB_PROMPTS = 20
ACTIVE_WEIGHT_FLOOR = 1e-6


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class PromptScene:
    name: str
    base_prompt: str
    sub_prompts: tuple[str, ...]
    negative_prompt: str = ""
    # progression units per second at full motion
    progression_rate: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_prompts", tuple(self.sub_prompts))
        if not self.base_prompt:
            raise SceneError(f"scene {self.name!r}: base_prompt must be non-empty")
        n = len(self.sub_prompts)
        if not (MIN_SUB_PROMPTS <= n <= MAX_SUB_PROMPTS):
            raise SceneError(
                f"scene {self.name!r}: needs {MIN_SUB_PROMPTS}..{MAX_SUB_PROMPTS} sub-prompts, got {n}"
            )
        if self.progression_rate < 0:
            raise SceneError(f"scene {self.name!r}: progression_rate must be >= 0")


@dataclass(frozen=True)
class ScenePlaylist:
    scenes: tuple[PromptScene, ...]
    auto_cycle: bool = True
    current_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenes", tuple(self.scenes))
        if not self.scenes:
            raise SceneError("playlist must contain at least one scene")
        if not (0 <= self.current_index < len(self.scenes)):
            raise SceneError(f"current_index {self.current_index} out of range")

    @property
    def current(self) -> PromptScene:
        return self.scenes[self.current_index]


@dataclass(frozen=True)
class SceneState:
    progression: float = 0.0
    # active sub-prompts with their crossfade weights (sums to 1)
    active: tuple[tuple[str, float], ...] = ()


def blend_weights(n: int, p: float) -> list[float]:
    """Triangular crossfade weights for n sub-prompts at progression p.

    Kernel i is centered at i/(n-1) with support one inter-center spacing
    wide, so the weights always sum to 1 with at most two nonzero entries.
    Computed as 1 - |p*(n-1) - i| to keep grid points like p=0.5 exact.
    """
    if n < 1:
        raise SceneError(f"n must be >= 1, got {n}")
    if not (0.0 <= p <= 1.0):
        raise SceneError(f"p {p} outside [0, 1]")
    if n == 1:
        return [1.0]
    q = p * (n - 1)
    return [max(0.0, 1.0 - abs(q - i)) for i in range(n)]


def active_prompts(scene: PromptScene, p: float) -> list[tuple[str, float]]:
    """Base prompt at weight 1.0 followed by the currently audible subs."""
    weights = blend_weights(len(scene.sub_prompts), p)
    out: list[tuple[str, float]] = [(scene.base_prompt, 1.0)]
    for text, weight in zip(scene.sub_prompts, weights):
        if weight > ACTIVE_WEIGHT_FLOOR:
            out.append((text, weight))
    return out


def compose_scene_prompt(scene: PromptScene, p: float) -> str:
    """One positive prompt string: base plus weighted active sub-prompts."""
    parts = [scene.base_prompt]
    for text, weight in active_prompts(scene, p)[1:]:
        parts.append(weighted_term_syntax(text, weight))
    return ", ".join(parts)


def evaluate_scene(scene: PromptScene, p: float) -> SceneState:
    # plain positivity here, not ACTIVE_WEIGHT_FLOOR: dropping a sub-1e-6
    # weight would break the exact partition-of-unity of the state
    weights = blend_weights(len(scene.sub_prompts), p)
    active = tuple(
        (text, weight) for text, weight in zip(scene.sub_prompts, weights) if weight > 0.0
    )
    return SceneState(progression=p, active=active)


def advance_progression(p: float, motion_smoothed: float, rate: float, dt_seconds: float) -> float:
    """Move the scene forward; stillness freezes it, movement advances it."""
    if min(p, motion_smoothed, rate, dt_seconds) < 0:
        raise SceneError("advance_progression inputs must be >= 0")
    return min(1.0, p + motion_smoothed * rate * dt_seconds)


def maybe_cycle(playlist: ScenePlaylist, scene_state: SceneState) -> tuple[ScenePlaylist, SceneState]:
    """Advance to the next scene once progression completes, if auto-cycling."""
    if playlist.auto_cycle and scene_state.progression >= 1.0:
        next_index = (playlist.current_index + 1) % len(playlist.scenes)
        new_playlist = replace(playlist, current_index=next_index)
        return new_playlist, evaluate_scene(new_playlist.current, 0.0)
    return playlist, scene_state


# ---------------------------------------------------------------------------
# JSON file formats
#
# scene: {"name":, "base_prompt":, "negative_prompt":, "sub_prompts": [...], "progression_rate":}
# playlist: {"scenes": [<scene file path or inline scene object>, ...], "auto_cycle": bool}

def scene_from_json(data: dict) -> PromptScene:
    return PromptScene(
        name=str(data.get("name", "")),
        base_prompt=str(data["base_prompt"]),
        sub_prompts=tuple(str(s) for s in data["sub_prompts"]),
        negative_prompt=str(data.get("negative_prompt", "")),
        progression_rate=float(data.get("progression_rate", 0.05)),
    )


def scene_to_json(scene: PromptScene) -> dict:
    return {
        "name": scene.name,
        "base_prompt": scene.base_prompt,
        "negative_prompt": scene.negative_prompt,
        "sub_prompts": list(scene.sub_prompts),
        "progression_rate": scene.progression_rate,
    }


def load_scene(path) -> PromptScene:
    return scene_from_json(json.loads(Path(path).read_text()))


def load_playlist(path) -> ScenePlaylist:
    path = Path(path)
    data = json.loads(path.read_text())
    scenes: list[PromptScene] = []
    for entry in data["scenes"]:
        if isinstance(entry, str):
            scenes.append(load_scene(path.parent / entry))
        else:
            scenes.append(scene_from_json(entry))
    return ScenePlaylist(scenes=tuple(scenes), auto_cycle=bool(data.get("auto_cycle", True)))
