"""Signal chains driving the live installation.

Camera frames are exposure-adjusted (and optionally binarized) into
high-contrast light-prompt images; motion and shadow-coverage metrics are
extracted, smoothed, and mapped onto denoising strength, scene progression
speed, and audio control parameters. All functions are pure; the pipeline
loop owns the only mutable SignalState.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .raster import Frame


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class SmootherConfig:
    """Asymmetric EMA: fast attack so movement registers, slow release."""

    attack_alpha: float = 0.6
    release_alpha: float = 0.15

    def __post_init__(self) -> None:
        for name, value in (("attack_alpha", self.attack_alpha), ("release_alpha", self.release_alpha)):
            if not (0.0 < value <= 1.0):
                raise SignalError(f"{name} {value} outside (0, 1]")


@dataclass(frozen=True)
class SignalState:
    motion_raw: float = 0.0
    motion_smoothed: float = 0.0
    shadow_area: float = 0.0
    last_frame: Frame | None = None


@dataclass(frozen=True)
class DiffusionAmountMapping:
    d_min: float = 0.2
    d_max: float = 0.9

    def __post_init__(self) -> None:
        if not (0.0 <= self.d_min < self.d_max <= 1.0):
            raise SignalError(f"need 0 <= d_min < d_max <= 1, got [{self.d_min}, {self.d_max}]")


@dataclass(frozen=True)
class AudioControl:
    tempo_factor: float
    filter_cutoff_norm: float


def preprocess_light_prompt(frame: Frame, exposure_gain: float, threshold: int | None = None) -> Frame:
    """Exposure-scale a frame and optionally binarize it.

    Gain is applied per pixel with round-half-up and clamping to [0, 255];
    a threshold maps pixels >= threshold to 255 and the rest to 0.
    """
    if exposure_gain < 0:
        raise SignalError(f"exposure_gain must be >= 0, got {exposure_gain}")
    scaled = np.floor(frame.pixels.astype(np.float64) * exposure_gain + 0.5)
    out = np.clip(scaled, 0, 255).astype(np.uint8)
    if threshold is not None:
        if not (0 <= threshold <= 255):
            raise SignalError(f"threshold {threshold} outside [0, 255]")
        out = np.where(out >= threshold, 255, 0).astype(np.uint8)
    return Frame(out)


def motion_metric(prev: Frame, cur: Frame) -> float:
    """Mean absolute pixel difference, normalized to [0, 1]."""
    if prev.pixels.shape != cur.pixels.shape:
        raise SignalError(
            f"frame dimensions differ: {prev.width}x{prev.height} vs {cur.width}x{cur.height}"
        )
    diff = np.abs(prev.pixels.astype(np.int16) - cur.pixels.astype(np.int16))
    return float(diff.mean()) / 255.0


def shadow_area(frame: Frame, dark_threshold: int) -> float:
    """Fraction of pixels strictly darker than the threshold."""
    if not (0 <= dark_threshold <= 255):
        raise SignalError(f"dark_threshold {dark_threshold} outside [0, 255]")
    return float((frame.pixels < dark_threshold).mean())


def smooth(state: float, sample: float, cfg: SmootherConfig) -> float:
    if sample == state:  # exact fixed point, no float drift
        return state
    alpha = cfg.attack_alpha if sample > state else cfg.release_alpha
    return alpha * sample + (1.0 - alpha) * state


def map_diffusion_amount(motion_smoothed: float, mapping: DiffusionAmountMapping) -> float:
    """Denoising strength, decreasing in motion.

    Stillness yields d_max (output dominated by the model); fast movement
    yields d_min (output resembles the camera input).
    """
    return mapping.d_max - motion_smoothed * (mapping.d_max - mapping.d_min)


def map_audio(motion_smoothed: float) -> AudioControl:
    """Music controls: tempo doubles/halves symmetrically around motion 0.5."""
    tempo = 0.5 * 2.0 ** (2.0 * motion_smoothed)
    return AudioControl(tempo_factor=tempo, filter_cutoff_norm=motion_smoothed)


def advance_signals(state: SignalState, frame: Frame, smoother: SmootherConfig, dark_threshold: int) -> SignalState:
    """Fold one preprocessed frame into the signal state."""
    if state.last_frame is None:
        raw = 0.0
    else:
        raw = motion_metric(state.last_frame, frame)
    return replace(
        state,
        motion_raw=raw,
        motion_smoothed=smooth(state.motion_smoothed, raw, smoother),
        shadow_area=shadow_area(frame, dark_threshold),
        last_frame=frame,
    )
