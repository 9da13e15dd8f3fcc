/** WebSocket client for the control API, with the socket factory and clock
 * injected so the protocol logic runs under node:test with fakes. */

import {
  commandSent,
  initialState,
  onAck,
  onConnection,
  onSnapshot,
  type UiStateModel,
} from "./state.js";
import type { CommandMessage, ServerMessage } from "./types.js";

// handler params are `any` so a DOM WebSocket is structurally assignable
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev: any) => any) | null;
  onmessage: ((ev: any) => any) | null;
  onclose: ((ev: any) => any) | null;
  onerror: ((ev: any) => any) | null;
}

export type SocketFactory = (url: string) => SocketLike;

const RECONNECT_DELAY_MS = 1000;

export class ConsoleClient {
  private model: UiStateModel = initialState();
  private socket: SocketLike | null = null;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly makeSocket: SocketFactory,
    private readonly onChange: (model: UiStateModel) => void,
    private readonly now: () => number = () => Date.now(),
    private readonly schedule: (fn: () => void, ms: number) => void = (fn, ms) =>
      void setTimeout(fn, ms),
  ) {}

  connect(): void {
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.onopen = () => this.update(onConnection(this.model, "connected"));
    socket.onmessage = (ev: { data: string }) => this.handleMessage(ev.data);
    socket.onerror = () => undefined; // onclose always follows
    socket.onclose = () => {
      this.socket = null;
      this.update(onConnection(this.model, "disconnected"));
      if (!this.closed) this.schedule(() => this.connect(), RECONNECT_DELAY_MS);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  getModel(): UiStateModel {
    return this.model;
  }

  sendCommand(cmd: string, args: Record<string, unknown> = {}): boolean {
    if (this.socket === null || this.model.connection !== "connected") return false;
    const message: CommandMessage = { cmd, args };
    this.socket.send(JSON.stringify(message));
    this.update(commandSent(this.model, cmd, this.now()));
    return true;
  }

  private handleMessage(data: string): void {
    let message: ServerMessage;
    try {
      message = JSON.parse(data) as ServerMessage;
    } catch {
      return; // not ours to crash the console over
    }
    if (message.type === "snapshot") {
      this.update(onSnapshot(this.model, message.snapshot, this.now()));
    } else if (message.type === "ack") {
      this.update(onAck(this.model, message));
    }
  }

  private update(model: UiStateModel): void {
    this.model = model;
    this.onChange(model);
  }
}
