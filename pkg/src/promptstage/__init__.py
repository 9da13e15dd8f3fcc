"""Real-time orchestration for diffusion image generation.

Three interaction styles against one pluggable backend: high-contrast
light-prompt frames driving img2img, tangible fragment cards composed into
weighted text prompts, and motion-progressed prompt scenes, plus a batch
harness for exploring the prompt space offline.
"""

from .arena import ArenaGeometry, DetectedTag, FragmentPlacement, detect_tags, placements_from_tags, render_tag, weight_from_position
from .backend import (
    GenerationParams,
    GenerationRequest,
    GenerationResult,
    HttpBackend,
    MockBackend,
    SeedPolicy,
    next_seed,
    request_digest,
)
from .craft import BatchManifest, EffectReport, MatrixSpec, build_matrix, fragment_effect_scores, run_batch
from .pipeline import Pipeline, PipelineConfig, SavedArtifact, load_pipeline_config, run_live, run_replay
from .prompts import (
    ComposedPrompt,
    FragmentLibrary,
    MetaPrompt,
    PromptFragment,
    WeightedFragment,
    compose_prompt,
    format_weighted_term,
    parse_weighted_term,
    validate_placements,
)
from .raster import Frame
from .scenes import PromptScene, ScenePlaylist, SceneState, active_prompts, advance_progression, blend_weights, maybe_cycle
from .signals import (
    AudioControl,
    DiffusionAmountMapping,
    SignalState,
    SmootherConfig,
    map_audio,
    map_diffusion_amount,
    motion_metric,
    preprocess_light_prompt,
    shadow_area,
    smooth,
)

__version__ = "0.1.0"
