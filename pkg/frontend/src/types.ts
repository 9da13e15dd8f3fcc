/** Wire types mirroring the engine's snapshot and WebSocket protocol.
 *
 * The console never derives engine values itself: everything rendered is a
 * field of Snapshot, so the UI cannot drift from the engine.
 */

export interface SignalBlock {
  motion_raw: number;
  motion_smoothed: number;
  shadow_area: number;
  driver: number;
}

export interface SceneBlock {
  index: number;
  count: number;
  name: string;
  progression: number;
  auto_cycle: boolean;
  active_prompts: [string, number][];
}

export interface PlacementRow {
  id: number;
  label: string;
  x: number;
  y: number;
  weight: number;
}

export interface FragmentsBlock {
  placements: PlacementRow[];
  unknown_ids: number[];
}

export interface BackendBlock {
  in_flight: number;
  completed: number;
  dropped_errors: number;
  last_latency_ms: number | null;
  last_image_digest: string | null;
}

export interface AudioBlock {
  tempo_factor: number;
  filter_cutoff_norm: number;
}

export interface Snapshot {
  frame_index: number;
  mode: string;
  time: number;
  signals: SignalBlock;
  parameters: Record<string, number | null>;
  overrides: Record<string, boolean>;
  manual_prompt: string;
  seed_policy: { mode: string; fixed_seed?: number; rng_seed?: number };
  last_seed: number | null;
  prompt: { positive: string; negative: string; source_fragment_ids: number[] };
  scene: SceneBlock | null;
  fragments: FragmentsBlock | null;
  audio: AudioBlock | null;
  backend: BackendBlock;
  effective_fps: number;
  artifacts: { count: number; last_image_path: string | null };
}

export interface SnapshotMessage {
  type: "snapshot";
  snapshot: Snapshot;
}

export interface AckMessage {
  type: "ack";
  seq: number | null;
  ok: boolean;
  detail?: Record<string, unknown>;
  error?: string | null;
}

export type ServerMessage = SnapshotMessage | AckMessage;

export interface CommandMessage {
  cmd: string;
  args: Record<string, unknown>;
}
