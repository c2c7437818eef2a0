/**
 * Wire formats of the frame service.
 *
 * State messages are JSON text; frames come back as binary:
 * a big-endian >III header (seq, width, height) followed by raw RGB
 * rows. The echoed seq is what staleness detection keys on.
 */

import type { CameraPose } from "./orbit.js";

export interface ClipState {
  normal: [number, number, number];
  offset: number;
  enabled: boolean;
}

export interface StreamState {
  seq: number;
  camera: CameraPose & { fov: number };
  width: number;
  height: number;
  clip?: ClipState | null;
  time?: number;
  jitter_amplitude?: number;
  mode?: "shell" | "core" | "both";
}

export interface Frame {
  seq: number;
  width: number;
  height: number;
  rgb: Uint8Array;
}

export function encodeState(state: StreamState): string {
  return JSON.stringify(state);
}

export class FrameFormatError extends Error {}

export function decodeFrame(buffer: ArrayBuffer): Frame {
  if (buffer.byteLength < 12) {
    throw new FrameFormatError(`frame too short: ${buffer.byteLength} bytes`);
  }
  const view = new DataView(buffer);
  const seq = view.getUint32(0, false);
  const width = view.getUint32(4, false);
  const height = view.getUint32(8, false);
  const expected = 12 + width * height * 3;
  if (buffer.byteLength !== expected) {
    throw new FrameFormatError(
      `frame payload mismatch: ${buffer.byteLength} bytes for ${width}x${height}`,
    );
  }
  return { seq, width, height, rgb: new Uint8Array(buffer, 12) };
}

/** Scene metadata served by GET /scene/info. */
export interface SceneInfo {
  bounds: { min: [number, number, number]; max: [number, number, number] };
  molecules: { id: number; name: string; color: number[]; atoms: number }[];
  virtual_atom_count: number;
  geometry_bytes: number;
  counters: { renders: number; stream_messages: number };
}
