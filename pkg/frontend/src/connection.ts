// WebSocket client with request/response correlation by id and an ordered
// event callback.  The socket constructor is injectable so the same code
// runs in the browser (native WebSocket) and under Node tests (the `ws`
// package exposes a compatible surface).

import type { EventEnvelope, RpcError, ServerEnvelope } from "./protocol.js";
import { isEvent } from "./protocol.js";

// Handler params are `any` so both the browser WebSocket and the Node `ws`
// client satisfy this structurally (their event types differ).
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export class RpcFailure extends Error {
  readonly code: string;
  readonly details: unknown[];

  constructor(error: RpcError) {
    super(`${error.code}: ${error.message}`);
    this.code = error.code;
    this.details = error.details ?? [];
  }
}

interface Pending {
  resolve: (data: Record<string, unknown>) => void;
  reject: (err: Error) => void;
}

export class Connection {
  private socket: SocketLike | null = null;
  private nextId = 0;
  private pending = new Map<number, Pending>();
  onEvent: (event: EventEnvelope) => void = () => {};
  onClose: () => void = () => {};

  constructor(private readonly factory: SocketFactory) {}

  open(url: string): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.factory(url);
      this.socket = socket;
      socket.onopen = () => resolve();
      socket.onerror = (ev) => reject(new Error(`websocket error: ${String(ev)}`));
      socket.onclose = () => {
        for (const pending of this.pending.values()) {
          pending.reject(new Error("connection closed"));
        }
        this.pending.clear();
        this.onClose();
      };
      socket.onmessage = (ev) => this.handleFrame(String(ev.data));
    });
  }

  close(): void {
    this.socket?.close();
  }

  get isOpen(): boolean {
    return this.socket !== null;
  }

  private handleFrame(raw: string): void {
    const envelope = JSON.parse(raw) as ServerEnvelope;
    if (isEvent(envelope)) {
      this.onEvent(envelope);
      return;
    }
    if (envelope.id === null || envelope.id === undefined) return;
    const pending = this.pending.get(envelope.id);
    if (!pending) return;
    this.pending.delete(envelope.id);
    if (envelope.ok) {
      pending.resolve(envelope.data ?? {});
    } else {
      pending.reject(new RpcFailure(envelope.error ?? { code: "UNKNOWN", message: "?" }));
    }
  }

  call(op: string, args: Record<string, unknown> = {}): Promise<Record<string, unknown>> {
    const socket = this.socket;
    if (!socket) return Promise.reject(new Error("not connected"));
    const id = ++this.nextId;
    const frame = JSON.stringify({ id, op, args });
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      socket.send(frame);
    });
  }
}
