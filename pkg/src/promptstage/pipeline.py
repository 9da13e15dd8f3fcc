"""The live orchestration loop: frames in, signals and prompts derived,
generation requests out, with a command surface for the operator.

One logical loop owns all mutable state. Frame sources, backend completions,
and control commands reach it through bounded hand-off points: the loop
receives frames via step(), drains completions and queued commands at well
defined moments, and publishes an immutable snapshot after every step.
A single newest-wins candidate slot (capacity 1) keeps a slow backend from
ever seeing stale frames.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from collections import OrderedDict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path

from .arena import ArenaGeometry, detect_tags, placements_from_tags
from .backend import (
    BackendFailure,
    GenerationParams,
    GenerationRequest,
    IMG2IMG,
    ImmediateDispatcher,
    MockBackend,
    SeedPolicy,
    TXT2IMG,
    canonical_serialization,
    next_seed,
    request_digest,
    request_to_json,
    result_to_png_bytes,
    seed_policy_from_json,
    seed_policy_to_json,
)
from .prompts import (
    ComposedPrompt,
    FragmentLibrary,
    MetaPrompt,
    WeightedFragment,
    compose_prompt,
    load_library,
    load_meta_prompt,
    library_from_json,
    meta_prompt_from_json,
    validate_placements,
)
from .raster import Frame, rgb_to_png_bytes
from .scenes import (
    ScenePlaylist,
    SceneState,
    active_prompts,
    advance_progression,
    compose_scene_prompt,
    evaluate_scene,
    load_playlist,
    maybe_cycle,
    scene_from_json,
)
from .signals import (
    DiffusionAmountMapping,
    SignalState,
    SmootherConfig,
    advance_signals,
    map_audio,
    map_diffusion_amount,
    preprocess_light_prompt,
)
from .sources import LogicalClock, WallClock, make_source

log = logging.getLogger(__name__)

MODE_CARDSHARK = "cardshark"
MODE_SHADOWPLAY = "shadowplay"


class PipelineConfigError(ValueError):
    pass


class CommandError(ValueError):
    pass


class UnknownParameterError(CommandError):
    pass


class ParameterRangeError(CommandError):
    pass


class ArtifactError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    mode: str
    seed_policy: SeedPolicy = field(default_factory=lambda: SeedPolicy(mode="fixed", fixed_seed=0))
    generation: GenerationParams = field(default_factory=GenerationParams)
    target_fps: float = 12.0
    frame_source: dict = field(default_factory=lambda: {"kind": "synthetic"})
    # cardshark references
    library: FragmentLibrary | None = None
    meta_prompt: MetaPrompt | None = None
    geometry: ArenaGeometry | None = None
    # shadowplay references
    playlist: ScenePlaylist | None = None
    # signal parameters (all live-settable through the control surface)
    exposure_gain: float = 1.0
    binarize_threshold: int | None = None
    dark_threshold: int = 64
    attack_alpha: float = 0.6
    release_alpha: float = 0.15
    motion_weight: float = 1.0
    area_weight: float = 0.0
    d_min: float = 0.2
    d_max: float = 0.9
    artifacts_dir: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in (MODE_CARDSHARK, MODE_SHADOWPLAY):
            raise PipelineConfigError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_CARDSHARK and (self.library is None or self.meta_prompt is None):
            raise PipelineConfigError("cardshark mode requires a fragment library and meta prompt")
        if self.mode == MODE_SHADOWPLAY and self.playlist is None:
            raise PipelineConfigError("shadowplay mode requires a scene playlist")
        if self.target_fps <= 0:
            raise PipelineConfigError("target_fps must be > 0")


# ---------------------------------------------------------------------------
# Control commands

@dataclass(frozen=True)
class ControlCommand:
    cmd: str
    args: dict = field(default_factory=dict)


def set_parameter(name: str, value) -> ControlCommand:
    return ControlCommand("set_parameter", {"name": name, "value": value})


def toggle_override(name: str, on: bool) -> ControlCommand:
    return ControlCommand("toggle_override", {"name": name, "on": bool(on)})


def set_manual_prompt(text: str) -> ControlCommand:
    return ControlCommand("set_manual_prompt", {"text": str(text)})


def select_scene(index: int) -> ControlCommand:
    return ControlCommand("select_scene", {"index": int(index)})


def set_auto_cycle(on: bool) -> ControlCommand:
    return ControlCommand("set_auto_cycle", {"on": bool(on)})


def save_artifact_command(title: str, notes: str) -> ControlCommand:
    return ControlCommand("save_artifact", {"title": str(title), "notes": str(notes)})


def set_seed_policy(policy: SeedPolicy | dict) -> ControlCommand:
    if isinstance(policy, SeedPolicy):
        policy = seed_policy_to_json(policy)
    return ControlCommand("set_seed_policy", {"policy": dict(policy)})


@dataclass(frozen=True)
class ParameterSpec:
    minimum: float
    maximum: float
    integer: bool = False
    allow_none: bool = False


PARAMETERS: dict[str, ParameterSpec] = {
    "exposure_gain": ParameterSpec(0.0, 16.0),
    "binarize_threshold": ParameterSpec(0, 255, integer=True, allow_none=True),
    "dark_threshold": ParameterSpec(0, 255, integer=True),
    "attack_alpha": ParameterSpec(1e-6, 1.0),
    "release_alpha": ParameterSpec(1e-6, 1.0),
    "motion_weight": ParameterSpec(0.0, 1.0),
    "area_weight": ParameterSpec(0.0, 1.0),
    "d_min": ParameterSpec(0.0, 1.0),
    "d_max": ParameterSpec(0.0, 1.0),
    "denoising_strength": ParameterSpec(0.0, 1.0),
    "progression": ParameterSpec(0.0, 1.0),
    "progression_rate": ParameterSpec(0.0, 100.0, allow_none=True),
    "target_fps": ParameterSpec(1e-3, 240.0),
}

OVERRIDABLE = ("positive_prompt", "denoising_strength", "progression")

COMMAND_NAMES = (
    "set_parameter",
    "toggle_override",
    "set_manual_prompt",
    "select_scene",
    "set_auto_cycle",
    "save_artifact",
    "set_seed_policy",
)


def _check_parameter(name: str, value) -> float | None:
    spec = PARAMETERS.get(name)
    if spec is None:
        raise UnknownParameterError(f"unknown parameter {name!r}")
    if value is None:
        if spec.allow_none:
            return None
        raise ParameterRangeError(f"parameter {name!r} cannot be unset")
    try:
        value = int(value) if spec.integer else float(value)
    except (TypeError, ValueError):
        raise ParameterRangeError(f"parameter {name!r}: non-numeric value {value!r}") from None
    if not (spec.minimum <= value <= spec.maximum):
        raise ParameterRangeError(
            f"parameter {name!r} value {value} outside [{spec.minimum}, {spec.maximum}]"
        )
    return value


@dataclass
class CommandOutcome:
    seq: int
    ok: bool
    detail: dict = field(default_factory=dict)
    error: str | None = None


class CommandTicket:
    """Handle for a queued command; resolves once the loop applies it."""

    def __init__(self, seq: int):
        self.seq = seq
        self._event = threading.Event()
        self._outcome: CommandOutcome | None = None

    def _resolve(self, outcome: CommandOutcome) -> None:
        self._outcome = outcome
        self._event.set()

    def result(self, timeout: float | None = None) -> CommandOutcome:
        if not self._event.wait(timeout):
            raise TimeoutError(f"command {self.seq} not applied within {timeout}s")
        assert self._outcome is not None
        return self._outcome


@dataclass(frozen=True)
class SavedArtifact:
    image_path: str
    sidecar_path: str
    title: str
    notes: str
    timestamp: float
    sequence: int
    request_digest: str


# ---------------------------------------------------------------------------

class Pipeline:
    def __init__(self, config: PipelineConfig, dispatcher, clock=None, artifacts_dir=None):
        self.config = config
        self.dispatcher = dispatcher
        self.clock = clock if clock is not None else WallClock()
        self.mode = config.mode
        self.seed_policy = config.seed_policy
        self.params: dict[str, float | int | None] = {
            "exposure_gain": config.exposure_gain,
            "binarize_threshold": config.binarize_threshold,
            "dark_threshold": config.dark_threshold,
            "attack_alpha": config.attack_alpha,
            "release_alpha": config.release_alpha,
            "motion_weight": config.motion_weight,
            "area_weight": config.area_weight,
            "d_min": config.d_min,
            "d_max": config.d_max,
            "denoising_strength": config.generation.denoising_strength,
            "progression": 0.0,
            "progression_rate": None,  # None = use the scene's own rate
            "target_fps": config.target_fps,
        }
        self.overrides: dict[str, bool] = {name: False for name in OVERRIDABLE}
        self.manual_prompt = ""
        self.signal = SignalState()
        self.playlist = config.playlist
        self.scene_state = (
            evaluate_scene(self.playlist.current, 0.0) if self.playlist is not None else SceneState()
        )
        self.placements: list = []
        self.unknown_ids: tuple[int, ...] = ()
        self.last_prompt: ComposedPrompt | None = None
        self.audio = None
        self.frame_index = 0
        self.last_seed: int | None = None
        self.last_submitted: GenerationRequest | None = None
        self.last_result = None
        self.last_latency_ms: float | None = None
        self.completed_count = 0
        self.dropped_errors = 0
        # (frame_index, time) per submission and (request digest, image sha) per completion
        self.submission_log: list[tuple[int, float]] = []
        self.completion_log: list[tuple[str, str]] = []
        self._pending_candidate: tuple[int, GenerationRequest] | None = None
        self._positive = ""
        self._negative = ""
        self._driver = 0.0
        self._start_time: float | None = None
        self._last_step_time: float | None = None
        self._images: OrderedDict[str, bytes] = OrderedDict()  # digest -> png bytes, bounded
        self._image_cache_limit = 16
        self._artifacts: list[SavedArtifact] = []
        self._artifacts_dir = Path(artifacts_dir or config.artifacts_dir) if (artifacts_dir or config.artifacts_dir) else None
        self._commands: deque[tuple[ControlCommand, CommandTicket]] = deque()
        self._seq = 0
        self._lock = threading.RLock()
        self._snapshot = self._build_snapshot(0.0)

    # -- control surface ----------------------------------------------------

    def apply_control(self, command: ControlCommand) -> CommandTicket:
        """Validate and enqueue a command; it takes effect atomically before
        the next step. Unknown names and out-of-range values raise here and
        leave state untouched."""
        self._validate_command(command)
        with self._lock:
            self._seq += 1
            ticket = CommandTicket(self._seq)
            self._commands.append((command, ticket))
            return ticket

    def _validate_command(self, command: ControlCommand) -> None:
        if command.cmd not in COMMAND_NAMES:
            raise CommandError(f"unknown command {command.cmd!r}")
        args = command.args
        if command.cmd == "set_parameter":
            value = _check_parameter(args["name"], args.get("value"))
            if args["name"] == "d_min" and value is not None and value >= self.params["d_max"]:
                raise ParameterRangeError(f"d_min {value} must stay below d_max {self.params['d_max']}")
            if args["name"] == "d_max" and value is not None and value <= self.params["d_min"]:
                raise ParameterRangeError(f"d_max {value} must stay above d_min {self.params['d_min']}")
        elif command.cmd == "toggle_override":
            if args["name"] not in OVERRIDABLE:
                raise UnknownParameterError(
                    f"parameter {args['name']!r} is not overridable; choose from {OVERRIDABLE}"
                )
        elif command.cmd == "select_scene":
            if self.playlist is None:
                raise CommandError("select_scene requires shadowplay mode")
            if not (0 <= args["index"] < len(self.playlist.scenes)):
                raise CommandError(f"scene index {args['index']} out of range")
        elif command.cmd == "set_seed_policy":
            seed_policy_from_json(args["policy"])  # raises on malformed input
        elif command.cmd == "set_manual_prompt":
            if not isinstance(args.get("text"), str):
                raise CommandError("set_manual_prompt requires text")

    def _drain_commands(self) -> None:
        while self._commands:
            command, ticket = self._commands.popleft()
            try:
                detail = self._apply(command)
                ticket._resolve(CommandOutcome(seq=ticket.seq, ok=True, detail=detail))
            except (CommandError, ArtifactError) as exc:
                ticket._resolve(CommandOutcome(seq=ticket.seq, ok=False, error=str(exc)))

    def _apply(self, command: ControlCommand) -> dict:
        args = command.args
        if command.cmd == "set_parameter":
            value = _check_parameter(args["name"], args.get("value"))
            self.params[args["name"]] = value
            return {"name": args["name"], "value": value}
        if command.cmd == "toggle_override":
            self.overrides[args["name"]] = args["on"]
            return {"name": args["name"], "on": args["on"]}
        if command.cmd == "set_manual_prompt":
            self.manual_prompt = args["text"]
            return {"text": args["text"]}
        if command.cmd == "select_scene":
            assert self.playlist is not None
            self.playlist = replace(self.playlist, current_index=args["index"])
            self.params["progression"] = 0.0
            self.scene_state = evaluate_scene(self.playlist.current, 0.0)
            return {"index": args["index"], "name": self.playlist.current.name}
        if command.cmd == "set_auto_cycle":
            assert self.playlist is not None
            self.playlist = replace(self.playlist, auto_cycle=args["on"])
            return {"on": args["on"]}
        if command.cmd == "set_seed_policy":
            self.seed_policy = seed_policy_from_json(args["policy"])
            return seed_policy_to_json(self.seed_policy)
        if command.cmd == "save_artifact":
            artifact = self.save_artifact(args["title"], args["notes"])
            return {
                "image_path": artifact.image_path,
                "sidecar_path": artifact.sidecar_path,
                "sequence": artifact.sequence,
            }
        raise CommandError(f"unknown command {command.cmd!r}")

    # -- loop entry points ---------------------------------------------------

    def poll(self, now: float | None = None) -> None:
        """Drain completions and, if a slot opened, submit the pending
        newest-wins candidate. Safe to call as often as desired."""
        with self._lock:
            if now is None:
                now = self.clock.now()
            self._drain_completions(now)
            if self._pending_candidate is not None:
                index, request = self._pending_candidate
                if self.dispatcher.try_submit(request, now):
                    self._note_submitted(index, request, now)
                    self._pending_candidate = None
            self._snapshot = self._build_snapshot(now)

    def step(self, frame: Frame, now: float | None = None) -> GenerationRequest | None:
        """Process one frame; returns the request if one was submitted."""
        with self._lock:
            if now is None:
                now = self.clock.now()
            if self._start_time is None:
                self._start_time = now
            dt = now - self._last_step_time if self._last_step_time is not None else 0.0
            self._drain_commands()
            self._drain_completions(now)

            processed = preprocess_light_prompt(
                frame,
                float(self.params["exposure_gain"]),
                self.params["binarize_threshold"],
            )
            smoother = SmootherConfig(
                attack_alpha=float(self.params["attack_alpha"]),
                release_alpha=float(self.params["release_alpha"]),
            )
            self.signal = advance_signals(
                self.signal, processed, smoother, int(self.params["dark_threshold"])
            )
            self._driver = min(
                1.0,
                max(
                    0.0,
                    float(self.params["motion_weight"]) * self.signal.motion_smoothed
                    + float(self.params["area_weight"]) * self.signal.shadow_area,
                ),
            )

            if self.mode == MODE_SHADOWPLAY:
                request = self._step_shadowplay(processed, dt)
            else:
                request = self._step_cardshark(processed)

            this_index = self.frame_index
            self.frame_index += 1
            self._last_step_time = now

            submitted = None
            self._pending_candidate = (this_index, request)
            if self.dispatcher.try_submit(request, now):
                self._note_submitted(this_index, request, now)
                self._pending_candidate = None
                submitted = request
            self._snapshot = self._build_snapshot(now)
            return submitted

    def _step_shadowplay(self, processed: Frame, dt: float) -> GenerationRequest:
        assert self.playlist is not None
        scene = self.playlist.current
        if self.overrides["progression"]:
            p = float(self.params["progression"])
        else:
            rate = self.params["progression_rate"]
            rate = scene.progression_rate if rate is None else float(rate)
            p = advance_progression(self.scene_state.progression, self._driver, rate, dt)
            cycles = self.playlist.auto_cycle and p >= 1.0
            self.playlist, cycled_state = maybe_cycle(
                self.playlist, SceneState(progression=p, active=())
            )
            if cycles:
                p = cycled_state.progression
                scene = self.playlist.current
        self.params["progression"] = p
        self.scene_state = evaluate_scene(scene, p)
        self.audio = map_audio(self._driver)

        if self.overrides["positive_prompt"]:
            positive = self.manual_prompt
        else:
            positive = compose_scene_prompt(scene, p)
        negative = scene.negative_prompt
        if self.overrides["denoising_strength"]:
            denoise = float(self.params["denoising_strength"])
        else:
            mapping = DiffusionAmountMapping(
                d_min=float(self.params["d_min"]), d_max=float(self.params["d_max"])
            )
            denoise = map_diffusion_amount(self._driver, mapping)
            self.params["denoising_strength"] = denoise
        init = _conform_to_multiple_of_8(processed)
        params = replace(
            self.config.generation,
            width=init.width,
            height=init.height,
            denoising_strength=denoise,
        )
        seed = next_seed(self.seed_policy, self.frame_index)
        self.last_seed = seed
        self._positive, self._negative = positive, negative
        return GenerationRequest(
            kind=IMG2IMG, positive=positive, negative=negative, seed=seed,
            params=params, init_image=init,
        )

    def _step_cardshark(self, processed: Frame) -> GenerationRequest:
        assert self.config.library is not None and self.config.meta_prompt is not None
        geometry = self.config.geometry or ArenaGeometry(processed.width, processed.height)
        if geometry.width_px != processed.width or geometry.height_px != processed.height:
            geometry = replace(geometry, width_px=processed.width, height_px=processed.height)
        tags = detect_tags(processed, geometry)
        placements = placements_from_tags(tags, geometry)
        validated = validate_placements(self.config.library, [p.fragment_id for p in placements])
        known_placements = [
            p for p in placements if self.config.library.get(p.fragment_id) is not None
        ]
        weighted = [
            WeightedFragment(fragment, placement.weight)
            for fragment, placement in zip(validated.fragments, known_placements)
        ]
        composed = compose_prompt(self.config.meta_prompt, weighted)
        self.placements = placements
        self.unknown_ids = validated.unknown_ids
        self.last_prompt = composed

        positive = self.manual_prompt if self.overrides["positive_prompt"] else composed.positive
        seed = next_seed(self.seed_policy, self.frame_index)
        self.last_seed = seed
        self._positive, self._negative = positive, composed.negative
        return GenerationRequest(
            kind=TXT2IMG, positive=positive, negative=composed.negative, seed=seed,
            params=self.config.generation,
        )

    def _note_submitted(self, frame_index: int, request: GenerationRequest, now: float) -> None:
        self.submission_log.append((frame_index, now))
        self.last_submitted = request

    def _drain_completions(self, now: float) -> None:
        for completion in self.dispatcher.poll(now):
            if isinstance(completion, BackendFailure):
                self.dropped_errors += 1
                log.warning("generation dropped: %s", completion.error)
                continue
            self.last_result = completion
            self.last_latency_ms = completion.latency_ms
            self.completed_count += 1
            digest = request_digest(completion.request_echo)
            # raw pixels only; PNG encoding waits until someone asks
            self._images[digest] = completion.image
            while len(self._images) > self._image_cache_limit:
                self._images.popitem(last=False)
            self.completion_log.append(
                (digest, hashlib.sha256(completion.image.tobytes()).hexdigest())
            )

    # -- observation ----------------------------------------------------------

    @property
    def candidate_depth(self) -> int:
        return 0 if self._pending_candidate is None else 1

    def image_png(self, digest: str) -> bytes | None:
        with self._lock:
            image = self._images.get(digest)
        return None if image is None else rgb_to_png_bytes(image)

    def snapshot(self) -> dict:
        """The most recent between-steps view; treat as immutable."""
        with self._lock:
            return self._snapshot

    def _build_snapshot(self, now: float) -> dict:
        elapsed = max(now - self._start_time, 1e-9) if self._start_time is not None else None
        effective_fps = (self.completed_count / elapsed) if elapsed else 0.0
        last_digest = next(reversed(self._images)) if self._images else None
        scene_block = None
        if self.playlist is not None:
            scene = self.playlist.current
            scene_block = {
                "index": self.playlist.current_index,
                "count": len(self.playlist.scenes),
                "name": scene.name,
                "progression": self.scene_state.progression,
                "auto_cycle": self.playlist.auto_cycle,
                "active_prompts": [
                    [text, weight]
                    for text, weight in active_prompts(scene, self.scene_state.progression)
                ],
            }
        fragments_block = None
        if self.mode == MODE_CARDSHARK:
            library = self.config.library
            fragments_block = {
                "placements": [
                    {
                        "id": p.fragment_id,
                        "label": (library.get(p.fragment_id).label if library and library.get(p.fragment_id) else "?"),
                        "x": p.x_norm,
                        "y": p.y_norm,
                        "weight": p.weight,
                    }
                    for p in self.placements
                ],
                "unknown_ids": list(self.unknown_ids),
            }
        return {
            "frame_index": self.frame_index,
            "mode": self.mode,
            "time": now,
            "signals": {
                "motion_raw": self.signal.motion_raw,
                "motion_smoothed": self.signal.motion_smoothed,
                "shadow_area": self.signal.shadow_area,
                "driver": self._driver,
            },
            "parameters": dict(self.params),
            "overrides": dict(self.overrides),
            "manual_prompt": self.manual_prompt,
            "seed_policy": seed_policy_to_json(self.seed_policy),
            "last_seed": self.last_seed,
            "prompt": {
                "positive": self._positive,
                "negative": self._negative,
                "source_fragment_ids": list(self.last_prompt.source_fragment_ids) if self.last_prompt else [],
            },
            "scene": scene_block,
            "fragments": fragments_block,
            "audio": (
                {"tempo_factor": self.audio.tempo_factor, "filter_cutoff_norm": self.audio.filter_cutoff_norm}
                if self.audio is not None
                else None
            ),
            "backend": {
                "in_flight": self.dispatcher.in_flight,
                "completed": self.completed_count,
                "dropped_errors": self.dropped_errors,
                "last_latency_ms": self.last_latency_ms,
                "last_image_digest": last_digest,
            },
            "effective_fps": effective_fps,
            "artifacts": {
                "count": len(self._artifacts),
                "last_image_path": self._artifacts[-1].image_path if self._artifacts else None,
            },
        }

    # -- artifacts -------------------------------------------------------------

    def save_artifact(self, title: str, notes: str) -> SavedArtifact:
        """Persist the latest generated image as PNG plus a sidecar JSON that
        reproduces the exact generating request."""
        with self._lock:
            if self.last_result is None:
                raise ArtifactError("no generated image to save yet")
            if self._artifacts_dir is None:
                raise ArtifactError("no artifacts directory configured")
            self._artifacts_dir.mkdir(parents=True, exist_ok=True)
            sequence = len(self._artifacts) + 1
            stem = f"artifact_{sequence:04d}"
            image_path = self._artifacts_dir / f"{stem}.png"
            sidecar_path = self._artifacts_dir / f"{stem}.json"
            timestamp = self.clock.now()
            request = self.last_result.request_echo
            sidecar = {
                "title": title,
                "notes": notes,
                "timestamp": timestamp,
                "sequence": sequence,
                "backend_id": self.last_result.backend_id,
                "request_digest": request_digest(request),
                "request": request_to_json(request),
                "image_file": image_path.name,
            }
            image_path.write_bytes(result_to_png_bytes(self.last_result))
            sidecar_path.write_text(json.dumps(sidecar, sort_keys=True, indent=2))
            artifact = SavedArtifact(
                image_path=str(image_path),
                sidecar_path=str(sidecar_path),
                title=title,
                notes=notes,
                timestamp=timestamp,
                sequence=sequence,
                request_digest=sidecar["request_digest"],
            )
            self._artifacts.append(artifact)
            return artifact

    @property
    def artifacts(self) -> list[SavedArtifact]:
        return list(self._artifacts)

    def close(self) -> None:
        self.dispatcher.close()


def _conform_to_multiple_of_8(frame: Frame) -> Frame:
    """Crop the bottom/right remainder so img2img dimensions are legal."""
    w = frame.width - frame.width % 8
    h = frame.height - frame.height % 8
    if w == frame.width and h == frame.height:
        return frame
    if w == 0 or h == 0:
        raise PipelineConfigError(f"frame {frame.width}x{frame.height} too small for img2img")
    return Frame(frame.pixels[:h, :w])


# ---------------------------------------------------------------------------
# Runners

@dataclass
class ReplayReport:
    request_stream: list[bytes]
    completion_log: list[tuple[str, str]]
    artifacts: list[SavedArtifact]
    final_snapshot: dict
    frames: int


def run_replay(config: PipelineConfig, backend=None,
               commands: dict[int, list[ControlCommand]] | None = None,
               artifacts_dir=None) -> ReplayReport:
    """Deterministic offline run: logical clock, synchronous dispatch.

    `commands` maps frame index -> commands applied just before that frame,
    so scripted runs (including artifact saves) replay identically.
    """
    clock = LogicalClock()
    dispatcher = ImmediateDispatcher(backend if backend is not None else MockBackend())
    pipeline = Pipeline(config, dispatcher, clock=clock, artifacts_dir=artifacts_dir)
    source = make_source(config.frame_source)
    request_stream: list[bytes] = []
    dt = 1.0 / config.target_fps
    index = 0
    while True:
        frame = source.read()
        if frame is None:
            break
        for command in (commands or {}).get(index, []):
            pipeline.apply_control(command)
        clock.advance(dt)
        submitted = pipeline.step(frame, clock.now())
        if submitted is not None:
            request_stream.append(canonical_serialization(submitted))
        index += 1
    pipeline.poll(clock.now())
    report = ReplayReport(
        request_stream=request_stream,
        completion_log=list(pipeline.completion_log),
        artifacts=pipeline.artifacts,
        final_snapshot=pipeline.snapshot(),
        frames=index,
    )
    pipeline.close()
    return report


def run_live(pipeline: Pipeline, source, max_frames: int | None = None,
             duration_s: float | None = None, clock=None) -> int:
    """Paced live loop: reads frames at the pipeline's target fps, polling
    for completions while it waits. Returns the number of frames stepped."""
    clock = clock if clock is not None else pipeline.clock
    start = clock.now()
    frames = 0
    while True:
        if max_frames is not None and frames >= max_frames:
            break
        if duration_s is not None and clock.now() - start >= duration_s:
            break
        target_time = start + frames / float(pipeline.params["target_fps"])
        while True:
            now = clock.now()
            if now >= target_time:
                break
            pipeline.poll(now)
            clock.sleep(min(target_time - now, 0.005))
        frame = source.read()
        if frame is None:
            break
        pipeline.step(frame, clock.now())
        frames += 1
    pipeline.poll(clock.now())
    return frames


# ---------------------------------------------------------------------------
# Config file
#
# See configs/shadowplay.json and configs/cardshark.json for documented
# examples; every numeric default above appears there explicitly.

def pipeline_config_from_json(data: dict, base_dir=".") -> PipelineConfig:
    base = Path(base_dir)

    def _load_ref(value, loader, inline):
        if value is None:
            return None
        if isinstance(value, str):
            return loader(base / value)
        return inline(value)

    library = _load_ref(data.get("library"), load_library, library_from_json)
    meta = _load_ref(data.get("meta_prompt"), load_meta_prompt, meta_prompt_from_json)
    playlist = data.get("playlist")
    if isinstance(playlist, str):
        playlist = load_playlist(base / playlist)
    elif isinstance(playlist, dict):
        scenes = tuple(
            scene_from_json(s) if isinstance(s, dict) else None for s in playlist["scenes"]
        )
        if any(s is None for s in scenes):
            raise PipelineConfigError("inline playlists must inline their scenes")
        playlist = ScenePlaylist(scenes=scenes, auto_cycle=bool(playlist.get("auto_cycle", True)))

    geometry = None
    if "geometry" in data:
        g = data["geometry"]
        geometry = ArenaGeometry(
            width_px=int(g["width_px"]),
            height_px=int(g["height_px"]),
            weight_min=float(g.get("weight_min", 0.5)),
            weight_max=float(g.get("weight_max", 1.5)),
            slide_up_increases_weight=bool(g.get("slide_up_increases_weight", True)),
        )
    signals = data.get("signals", {})
    generation = GenerationParams(**data.get("generation", {}))
    return PipelineConfig(
        mode=data["mode"],
        seed_policy=seed_policy_from_json(data.get("seed_policy", {"mode": "fixed", "fixed_seed": 0})),
        generation=generation,
        target_fps=float(data.get("target_fps", 12.0)),
        frame_source=dict(data.get("frame_source", {"kind": "synthetic"})),
        library=library,
        meta_prompt=meta,
        geometry=geometry,
        playlist=playlist,
        exposure_gain=float(signals.get("exposure_gain", 1.0)),
        binarize_threshold=signals.get("binarize_threshold"),
        dark_threshold=int(signals.get("dark_threshold", 64)),
        attack_alpha=float(signals.get("attack_alpha", 0.6)),
        release_alpha=float(signals.get("release_alpha", 0.15)),
        motion_weight=float(signals.get("motion_weight", 1.0)),
        area_weight=float(signals.get("area_weight", 0.0)),
        d_min=float(signals.get("d_min", 0.2)),
        d_max=float(signals.get("d_max", 0.9)),
        artifacts_dir=data.get("artifacts_dir"),
    )


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    return pipeline_config_from_json(json.loads(path.read_text()), base_dir=path.parent)
