import pytest

from promptstage.arena import paste_tag, render_tag


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = list(terminalreporter.stats.get("passed", [])) + list(
        terminalreporter.stats.get("failed", [])
    )
    acceptance = [
        r for r in reports if getattr(r, "when", "") == "call" and "test_acceptance" in r.nodeid
    ]
    if not acceptance:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for report in sorted(acceptance, key=lambda r: r.nodeid):
        status = "PASS" if report.passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {report.nodeid.split('::')[-1]}")
from promptstage.backend import GenerationParams, SeedPolicy
from promptstage.pipeline import PipelineConfig
from promptstage.prompts import FragmentLibrary, MetaPrompt, PromptFragment
from promptstage.raster import Frame
from promptstage.scenes import PromptScene, ScenePlaylist


@pytest.fixture
def library():
    return FragmentLibrary(
        fragments=(
            PromptFragment(id=1, label="Cello", text="cello"),
            PromptFragment(id=2, label="Balloon", text="balloon"),
            PromptFragment(id=3, label="Harp", text="harp"),
        ),
        name="instruments",
    )


@pytest.fixture
def meta():
    return MetaPrompt(
        template="a hybrid musical instrument combining {fragments}, studio photo",
        negative_prompt="text, watermark",
        empty_fallback="musical instrument",
    )


@pytest.fixture
def playlist():
    def scene(name, subs):
        return PromptScene(
            name=name,
            base_prompt=f"{name} style",
            sub_prompts=subs,
            negative_prompt="blurry",
            progression_rate=0.5,
        )

    return ScenePlaylist(
        scenes=(
            scene("ink", ("mist", "cranes", "moonrise")),
            scene("ember", ("sparks", "smoke", "embers")),
            scene("tide", ("foam", "kelp", "gulls")),
        ),
        auto_cycle=True,
    )


@pytest.fixture
def shadowplay_config(playlist):
    return PipelineConfig(
        mode="shadowplay",
        playlist=playlist,
        seed_policy=SeedPolicy(mode="fixed", fixed_seed=42),
        generation=GenerationParams(width=64, height=64),
        target_fps=12.0,
        frame_source={"kind": "synthetic", "width": 64, "height": 64, "seed": 3},
    )


@pytest.fixture
def cardshark_config(library, meta):
    return PipelineConfig(
        mode="cardshark",
        library=library,
        meta_prompt=meta,
        seed_policy=SeedPolicy(mode="fixed", fixed_seed=7),
        generation=GenerationParams(width=64, height=64),
        target_fps=1.0,
        frame_source={"kind": "synthetic", "width": 240, "height": 192},
    )


def arena_frame(width=240, height=192, cards=()):
    """White arena with (tag_id, x, y) cards pasted at 48 px."""
    frame = Frame.filled(width, height)
    for tag_id, x, y in cards:
        frame = paste_tag(frame, render_tag(tag_id, 48), x, y)
    return frame
