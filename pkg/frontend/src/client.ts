/** Typed client for the voxelink session service.
 *
 * Authoritative-server rule: the client never trusts its optimistic mask
 * preview — after every gesture it re-fetches the slice image, so the
 * display always equals server state.
 */

import { parseWireMesh } from "./wire.js";
import type {
  JobEvent,
  MeshData,
  SessionInfo,
  SliceAxis,
  StrokePayload,
  StrokeResult,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export interface WebSocketLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message);
  }
}

export class MeshPending extends Error {
  constructor(readonly jobId: string | null) {
    super("extraction has not completed yet");
  }
}

export interface SliceOptions {
  axis?: SliceAxis;
  index?: number;
  overlay?: boolean;
  alpha?: number;
  color?: [number, number, number];
}

export class SessionClient {
  /** At most one stroke post may be in flight (single event loop, ordered edits). */
  private strokeInFlight: Promise<StrokeResult> | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      const body = await resp.json().catch(() => ({}));
      throw new ServiceError(
        resp.status,
        (body as { error?: string }).error ?? "unknown",
        (body as { message?: string }).message ?? `HTTP ${resp.status}`,
      );
    }
    return (await resp.json()) as T;
  }

  createSession(
    stackDir: string,
    options: { spacing?: number[]; window?: number[] } = {},
  ): Promise<SessionInfo> {
    return this.json<SessionInfo>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ stack_dir: stackDir, ...options }),
    });
  }

  async fetchSlicePng(
    sessionId: string,
    options: SliceOptions = {},
  ): Promise<Uint8Array> {
    const params = new URLSearchParams();
    if (options.axis) params.set("axis", options.axis);
    if (options.index !== undefined) params.set("index", String(options.index));
    if (options.overlay) params.set("overlay", "true");
    if (options.alpha !== undefined) params.set("alpha", String(options.alpha));
    if (options.color) params.set("color", options.color.join(","));
    const resp = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/slice?${params}`,
    );
    if (!resp.ok) {
      throw new ServiceError(resp.status, "slice", `HTTP ${resp.status}`);
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  /** Posts one gesture stroke; serialized so edits arrive in order. */
  postStroke(sessionId: string, stroke: StrokePayload): Promise<StrokeResult> {
    const previous = this.strokeInFlight ?? Promise.resolve(null);
    const next = previous
      .catch(() => null) // an earlier failure must not block later strokes
      .then(() =>
        this.json<StrokeResult>(`/sessions/${sessionId}/strokes`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(stroke),
        }),
      );
    this.strokeInFlight = next;
    return next;
  }

  undo(sessionId: string): Promise<StrokeResult> {
    return this.json<StrokeResult>(`/sessions/${sessionId}/undo`, {
      method: "POST",
    });
  }

  redo(sessionId: string): Promise<StrokeResult> {
    return this.json<StrokeResult>(`/sessions/${sessionId}/redo`, {
      method: "POST",
    });
  }

  /** Fetches the mesh at the given camera distance; MeshPending on 202. */
  async fetchMesh(sessionId: string, distance = 0): Promise<MeshData> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/mesh?distance=${distance}&format=wire-binary`,
    );
    if (resp.status === 202) {
      throw new MeshPending(resp.headers.get("x-job-id"));
    }
    if (!resp.ok) {
      throw new ServiceError(resp.status, "mesh", `HTTP ${resp.status}`);
    }
    return parseWireMesh(await resp.arrayBuffer());
  }

  /** Polls the mesh endpoint until extraction settles or the budget runs out. */
  async waitForMesh(
    sessionId: string,
    timeoutMs: number,
    distance = 0,
    pollMs = 50,
  ): Promise<MeshData> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      try {
        return await this.fetchMesh(sessionId, distance);
      } catch (err) {
        if (!(err instanceof MeshPending) || Date.now() >= deadline) throw err;
      }
      await new Promise((r) => setTimeout(r, pollMs));
    }
  }

  /** Subscribes to job events; the caller supplies the WebSocket constructor. */
  subscribeEvents(
    sessionId: string,
    onEvent: (event: JobEvent) => void,
    makeSocket: (url: string) => WebSocketLike,
  ): () => void {
    const wsUrl =
      this.baseUrl.replace(/^http/, "ws") + `/sessions/${sessionId}/events`;
    const socket = makeSocket(wsUrl);
    socket.onmessage = (ev) => onEvent(JSON.parse(ev.data) as JobEvent);
    return () => socket.close();
  }
}
