/**
 * Live viewer session: scene metadata over HTTP, frames over the
 * /stream WebSocket, drawn into a canvas. The server renders; this
 * side only displays and steers.
 */

import { FrameGate } from "./coalesce.js";
import { CameraPose, OrbitState, toCamera } from "./orbit.js";
import { decodeFrame, encodeState, Frame, SceneInfo, StreamState } from "./protocol.js";

export interface ViewerSettings {
  width: number;
  height: number;
  fov: number;
  clipOffset: number | null; // null disables the plane
  clipNormal: [number, number, number];
  mode: "shell" | "core" | "both";
  playing: boolean;
  jitterAmplitude: number;
}

export interface ViewerEvents {
  onInfo?: (info: SceneInfo) => void;
  onFrame?: (frame: Frame) => void;
  onStatus?: (status: "connecting" | "live" | "error", detail?: string) => void;
}

export const defaultSettings: ViewerSettings = {
  width: 384,
  height: 288,
  fov: 0.8,
  clipOffset: null,
  clipNormal: [0, 0, 1],
  mode: "both",
  playing: false,
  jitterAmplitude: 0.25,
};

export function stateFor(
  orbit: OrbitState,
  settings: ViewerSettings,
  time: number,
): Omit<StreamState, "seq"> {
  const pose: CameraPose = toCamera(orbit);
  return {
    camera: { ...pose, fov: settings.fov },
    width: settings.width,
    height: settings.height,
    clip:
      settings.clipOffset === null
        ? null
        : { normal: settings.clipNormal, offset: settings.clipOffset, enabled: true },
    time,
    jitter_amplitude: settings.playing ? settings.jitterAmplitude : 0,
    mode: settings.mode,
  };
}

export class ViewerClient {
  private ws: WebSocket | null = null;
  private gate: FrameGate;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  info: SceneInfo | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly events: ViewerEvents = {},
  ) {
    this.gate = new FrameGate((state) => {
      if (this.ws && this.ws.readyState === WebSocket.OPEN) {
        this.ws.send(encodeState(state));
      }
    });
  }

  async connect(): Promise<void> {
    this.events.onStatus?.("connecting");
    let info: SceneInfo;
    try {
      const res = await fetch(`${this.baseUrl}/scene/info`);
      if (!res.ok) {
        throw new Error(`scene info: HTTP ${res.status}`);
      }
      info = (await res.json()) as SceneInfo;
    } catch (err) {
      this.events.onStatus?.("error", String(err));
      this.scheduleRetry();
      return;
    }
    this.info = info;
    this.events.onInfo?.(info);

    const wsUrl = this.baseUrl.replace(/^http/, "ws") + "/stream";
    const ws = new WebSocket(wsUrl);
    ws.binaryType = "arraybuffer";
    ws.onmessage = (event) => {
      if (typeof event.data === "string") {
        return; // server-side error report; state stays queued
      }
      const frame = this.gate.onFrame(decodeFrame(event.data as ArrayBuffer));
      if (frame) {
        this.events.onFrame?.(frame);
      }
    };
    ws.onopen = () => this.events.onStatus?.("live");
    ws.onerror = () => this.events.onStatus?.("error", "socket error");
    ws.onclose = () => {
      this.gate.reset();
      this.events.onStatus?.("error", "disconnected");
      this.scheduleRetry();
    };
    this.ws = ws;
  }

  /** Ask for a frame of the given state; coalesced by the gate. */
  request(state: Omit<StreamState, "seq">): void {
    this.gate.request(state);
  }

  get sentCount(): number {
    return this.gate.sentCount;
  }

  close(): void {
    if (this.retryTimer) {
      clearTimeout(this.retryTimer);
    }
    this.ws?.close();
  }

  private scheduleRetry(): void {
    if (this.retryTimer) {
      return;
    }
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      void this.connect();
    }, 1500);
  }
}

/** Paint a received frame into a 2D canvas (sized to match). */
export function drawFrame(canvas: HTMLCanvasElement, frame: Frame): void {
  if (canvas.width !== frame.width || canvas.height !== frame.height) {
    canvas.width = frame.width;
    canvas.height = frame.height;
  }
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const img = ctx.createImageData(frame.width, frame.height);
  const n = frame.width * frame.height;
  for (let i = 0; i < n; i++) {
    img.data[i * 4] = frame.rgb[i * 3];
    img.data[i * 4 + 1] = frame.rgb[i * 3 + 1];
    img.data[i * 4 + 2] = frame.rgb[i * 3 + 2];
    img.data[i * 4 + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}
