/** View-model builders for the two operator panels.
 *
 * Left panel: the signal chains (exposure in, motion/shadow metrics,
 * smoothing, diffusion amount out) as live meters plus editable numeric
 * controls. Right panel: the prompt stream (active prompts with weights,
 * per-variable overrides, manual text entry, scene selection, auto-cycle)
 * and, in card mode, the detected fragments and the save form.
 *
 * Builders copy snapshot fields verbatim; they never compute engine values.
 */

import type { Snapshot } from "./types.js";

export interface Meter {
  label: string;
  field: string;
  value: number;
  min: number;
  max: number;
}

export interface NumericControl {
  parameter: string;
  label: string;
  value: number | null;
  min: number;
  max: number;
  step: number;
}

export interface SignalPanelView {
  meters: Meter[];
  controls: NumericControl[];
}

export function renderSignalPanel(snapshot: Snapshot): SignalPanelView {
  const p = snapshot.parameters;
  const meters: Meter[] = [
    { label: "motion raw", field: "signals.motion_raw", value: snapshot.signals.motion_raw, min: 0, max: 1 },
    { label: "motion smoothed", field: "signals.motion_smoothed", value: snapshot.signals.motion_smoothed, min: 0, max: 1 },
    { label: "shadow area", field: "signals.shadow_area", value: snapshot.signals.shadow_area, min: 0, max: 1 },
    { label: "driver", field: "signals.driver", value: snapshot.signals.driver, min: 0, max: 1 },
    { label: "diffusion amount", field: "parameters.denoising_strength", value: p.denoising_strength ?? 0, min: 0, max: 1 },
  ];
  const controls: NumericControl[] = [
    { parameter: "exposure_gain", label: "exposure gain", value: p.exposure_gain ?? null, min: 0, max: 16, step: 0.05 },
    { parameter: "dark_threshold", label: "dark threshold", value: p.dark_threshold ?? null, min: 0, max: 255, step: 1 },
    { parameter: "attack_alpha", label: "attack", value: p.attack_alpha ?? null, min: 0, max: 1, step: 0.01 },
    { parameter: "release_alpha", label: "release", value: p.release_alpha ?? null, min: 0, max: 1, step: 0.01 },
    { parameter: "motion_weight", label: "motion weight", value: p.motion_weight ?? null, min: 0, max: 1, step: 0.05 },
    { parameter: "area_weight", label: "area weight", value: p.area_weight ?? null, min: 0, max: 1, step: 0.05 },
    { parameter: "d_min", label: "diffusion min", value: p.d_min ?? null, min: 0, max: 1, step: 0.01 },
    { parameter: "d_max", label: "diffusion max", value: p.d_max ?? null, min: 0, max: 1, step: 0.01 },
    { parameter: "denoising_strength", label: "diffusion amount", value: p.denoising_strength ?? null, min: 0, max: 1, step: 0.01 },
  ];
  return { meters, controls };
}

export interface PromptRow {
  text: string;
  weight: number;
}

export interface OverrideToggle {
  name: string;
  label: string;
  on: boolean;
}

export interface SceneView {
  index: number;
  count: number;
  name: string;
  progression: number;
  autoCycle: boolean;
}

export interface FragmentRow {
  id: number;
  label: string;
  weight: number;
}

export interface PromptPanelView {
  positive: string;
  negative: string;
  activePrompts: PromptRow[];
  overrides: OverrideToggle[];
  manualPrompt: string;
  scene: SceneView | null;
  fragments: FragmentRow[] | null;
  unknownIds: number[];
  showSaveForm: boolean;
  imageDigest: string | null;
  effectiveFps: number;
  lastLatencyMs: number | null;
  seedPolicy: string;
}

const OVERRIDE_LABELS: Record<string, string> = {
  positive_prompt: "manual prompt",
  denoising_strength: "manual diffusion amount",
  progression: "manual progression",
};

export function renderPromptPanel(snapshot: Snapshot): PromptPanelView {
  const activePrompts: PromptRow[] = snapshot.scene
    ? snapshot.scene.active_prompts.map(([text, weight]) => ({ text, weight }))
    : [{ text: snapshot.prompt.positive, weight: 1.0 }];
  const overrides: OverrideToggle[] = Object.entries(snapshot.overrides).map(([name, on]) => ({
    name,
    label: OVERRIDE_LABELS[name] ?? name,
    on,
  }));
  return {
    positive: snapshot.prompt.positive,
    negative: snapshot.prompt.negative,
    activePrompts,
    overrides,
    manualPrompt: snapshot.manual_prompt,
    scene: snapshot.scene
      ? {
          index: snapshot.scene.index,
          count: snapshot.scene.count,
          name: snapshot.scene.name,
          progression: snapshot.scene.progression,
          autoCycle: snapshot.scene.auto_cycle,
        }
      : null,
    fragments: snapshot.fragments
      ? snapshot.fragments.placements.map((p) => ({ id: p.id, label: p.label, weight: p.weight }))
      : null,
    unknownIds: snapshot.fragments ? snapshot.fragments.unknown_ids : [],
    showSaveForm: snapshot.mode === "cardshark",
    imageDigest: snapshot.backend.last_image_digest,
    effectiveFps: snapshot.effective_fps,
    lastLatencyMs: snapshot.backend.last_latency_ms,
    seedPolicy: snapshot.seed_policy.mode,
  };
}
