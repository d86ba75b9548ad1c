/** Playback clock: frames hold briefly, then each transition stage runs
 * for its published duration. Speed scales wall time into timeline time. */

import type { DatamationDoc, Playhead } from "./types.js";

export const FRAME_HOLD_MS = 600;

interface Segment {
  playhead: Omit<Playhead, "t">;
  duration: number;
}

export class Timeline {
  private segments: Segment[] = [];
  private elapsed = 0;
  speed = 1;
  playing = false;

  constructor(doc: DatamationDoc) {
    for (let frame = 0; frame < doc.steps.length; frame++) {
      this.segments.push({ playhead: { frame, stage: -1 }, duration: FRAME_HOLD_MS });
      if (frame < doc.transitions.length) {
        const stages = doc.transitions[frame].stages;
        stages.forEach((stage, i) => {
          this.segments.push({
            playhead: { frame, stage: i },
            duration: Math.max(1, stage.duration_ms),
          });
        });
      }
    }
  }

  get totalMs(): number {
    return this.segments.reduce((acc, s) => acc + s.duration, 0);
  }

  position(): Playhead {
    let remaining = this.elapsed;
    for (const segment of this.segments) {
      if (remaining < segment.duration) {
        return { ...segment.playhead, t: remaining / segment.duration };
      }
      remaining -= segment.duration;
    }
    const last = this.segments[this.segments.length - 1];
    return { ...last.playhead, t: 1 };
  }

  get atEnd(): boolean {
    return this.elapsed >= this.totalMs;
  }

  advance(wallMs: number): Playhead {
    if (this.playing) {
      this.elapsed = Math.min(this.totalMs, this.elapsed + wallMs * this.speed);
      if (this.atEnd) this.playing = false;
    }
    return this.position();
  }

  seekFrame(frame: number): Playhead {
    let acc = 0;
    for (const segment of this.segments) {
      if (segment.playhead.frame === frame && segment.playhead.stage === -1) {
        this.elapsed = acc;
        return this.position();
      }
      acc += segment.duration;
    }
    this.elapsed = this.totalMs;
    return this.position();
  }

  stepFrame(delta: number, frameCount: number): Playhead {
    const current = this.position().frame;
    const target = Math.min(frameCount - 1, Math.max(0, current + delta));
    return this.seekFrame(target);
  }

  restart(): void {
    this.elapsed = 0;
  }
}
