/** UI state model: the latest snapshot, connection status, and commands
 * awaiting acknowledgement. Pure reducers so the whole thing is testable
 * without a browser or a socket. */

import type { AckMessage, Snapshot } from "./types.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export const STALE_AFTER_MS = 2000;

export interface PendingCommand {
  cmd: string;
  sentAt: number;
}

export interface UiStateModel {
  snapshot: Snapshot | null;
  lastSnapshotAt: number | null;
  connection: ConnectionStatus;
  pending: PendingCommand[];
  lastAck: AckMessage | null;
  errors: string[];
}

export function initialState(): UiStateModel {
  return {
    snapshot: null,
    lastSnapshotAt: null,
    connection: "connecting",
    pending: [],
    lastAck: null,
    errors: [],
  };
}

export function onSnapshot(state: UiStateModel, snapshot: Snapshot, now: number): UiStateModel {
  return { ...state, snapshot, lastSnapshotAt: now };
}

export function onConnection(state: UiStateModel, connection: ConnectionStatus): UiStateModel {
  // stale pendings are meaningless across a reconnect
  return connection === "connected"
    ? { ...state, connection }
    : { ...state, connection, pending: [] };
}

export function commandSent(state: UiStateModel, cmd: string, now: number): UiStateModel {
  return { ...state, pending: [...state.pending, { cmd, sentAt: now }] };
}

export function onAck(state: UiStateModel, ack: AckMessage): UiStateModel {
  // acks arrive in send order; pair with the oldest pending command
  const [oldest, ...rest] = state.pending;
  const errors =
    ack.ok || !ack.error
      ? state.errors
      : [...state.errors, `${oldest ? oldest.cmd : "command"}: ${ack.error}`];
  return { ...state, pending: oldest ? rest : state.pending, lastAck: ack, errors };
}

/** No snapshot for over 2 s (or never) means the view can't be trusted. */
export function isStale(state: UiStateModel, now: number): boolean {
  if (state.connection !== "connected") return true;
  if (state.lastSnapshotAt === null) return true;
  return now - state.lastSnapshotAt > STALE_AFTER_MS;
}

/** Inputs are disabled whenever the connection can't carry a command. */
export function controlsEnabled(state: UiStateModel): boolean {
  return state.connection === "connected";
}
