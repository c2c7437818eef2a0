import { describe, expect, it } from "vitest";

import { FrameGate } from "../src/coalesce.js";
import type { Frame, StreamState } from "../src/protocol.js";

function state(width: number): Omit<StreamState, "seq"> {
  return {
    camera: { position: [0, 0, 10], forward: [0, 0, -1], up: [0, 1, 0], fov: 0.8 },
    width,
    height: width,
  };
}

function frame(seq: number): Frame {
  return { seq, width: 1, height: 1, rgb: new Uint8Array(3) };
}

describe("FrameGate", () => {
  it("keeps a single message in flight and coalesces the rest", () => {
    const sent: StreamState[] = [];
    const gate = new FrameGate((s) => sent.push(s));
    for (let w = 10; w < 15; w++) {
      gate.request(state(w));
    }
    expect(sent.length).toBe(1); // the rest wait, newest wins
    gate.onFrame(frame(sent[0].seq));
    expect(sent.length).toBe(2);
    expect(sent[1].width).toBe(14); // only the newest pending state went out
    gate.onFrame(frame(sent[1].seq));
    expect(sent.length).toBe(2); // nothing pending, nothing sent
  });

  it("never exceeds one send per displayed frame", () => {
    const sent: StreamState[] = [];
    const gate = new FrameGate((s) => sent.push(s));
    let shown = 0;
    for (let k = 0; k < 50; k++) {
      gate.request(state(16 + k));
      if (k % 3 === 0 && sent.length > shown) {
        shown += 1;
        gate.onFrame(frame(sent[shown - 1].seq));
      }
      expect(sent.length).toBeLessThanOrEqual(shown + 1);
    }
  });

  it("drops frames older than what is on screen", () => {
    const sent: StreamState[] = [];
    const gate = new FrameGate((s) => sent.push(s));
    gate.request(state(8));
    gate.onFrame(frame(1));
    gate.request(state(9));
    expect(gate.onFrame(frame(2))).not.toBeNull();
    expect(gate.onFrame(frame(1))).toBeNull(); // stale by sequence number
  });

  it("resumes after a reset", () => {
    const sent: StreamState[] = [];
    const gate = new FrameGate((s) => sent.push(s));
    gate.request(state(8));
    gate.reset();
    gate.request(state(9));
    expect(sent.length).toBe(2);
  });
});
