/**
 * Client-side latest-wins pacing, mirroring the server's coalescing.
 *
 * Invariants enforced here:
 *  - at most one state message is in flight at a time, so the viewer
 *    never sends more than one message per displayed frame;
 *  - a newer pending state replaces an older unsent one;
 *  - frames older than what is already on screen are dropped.
 */

import type { Frame, StreamState } from "./protocol.js";

export type SendFn = (state: StreamState) => void;

export class FrameGate {
  private seq = 0;
  private lastSentSeq = 0;
  private lastShownSeq = 0;
  private pending: Omit<StreamState, "seq"> | null = null;
  private inFlight = false;

  constructor(private readonly send: SendFn) {}

  /** Queue the newest desired state; older unsent states are replaced. */
  request(state: Omit<StreamState, "seq">): void {
    this.pending = state;
    this.pump();
  }

  /** Returns the frame when it should be displayed, null when stale. */
  onFrame(frame: Frame): Frame | null {
    if (frame.seq >= this.lastSentSeq) {
      this.inFlight = false;
    }
    const show = frame.seq > this.lastShownSeq;
    if (show) {
      this.lastShownSeq = frame.seq;
    }
    this.pump();
    return show ? frame : null;
  }

  /** Connection dropped: forget in-flight accounting. */
  reset(): void {
    this.inFlight = false;
    this.pending = null;
  }

  get sentCount(): number {
    return this.seq;
  }

  private pump(): void {
    if (this.inFlight || this.pending === null) {
      return;
    }
    this.seq += 1;
    this.lastSentSeq = this.seq;
    const state = { ...this.pending, seq: this.seq };
    this.pending = null;
    this.inFlight = true;
    this.send(state);
  }
}
