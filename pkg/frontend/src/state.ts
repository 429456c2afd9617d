import { clampCommand, Command, Snapshot } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "retrying";

export interface PowerPoint {
  t: number;
  watts: number;
}

export interface VelocityPoint {
  t: number;
  cmdVx: number;
  cmdVy: number;
  estVx: number;
  estVy: number;
}

export interface GaitSegment {
  gait: string;
  start: number;
  end: number;
}

// Everything the renderer needs lives here. Message handlers mutate it,
// rendering only reads it.
export class UiState {
  status: ConnectionStatus = "connecting";
  latest: Snapshot | null = null;
  command: Command = { vx: 0, vy: 0, wz: 0 };
  power: PowerPoint[] = [];
  velocity: VelocityPoint[] = [];
  timeline: GaitSegment[] = [];
  switchCount = 0;
  lastError = "";

  // capacity bounds the plot buffers; minSpacing decimates incoming
  // snapshots so plots never hold more than ~60 points per second
  constructor(
    readonly capacity = 600,
    readonly minSpacing = 1 / 60,
    readonly timelineWindow = 30,
  ) {}

  setCommand(cmd: Command): void {
    this.command = clampCommand(cmd);
  }

  pushSnapshot(snap: Snapshot): void {
    this.latest = snap;
    this.pushPlotPoints(snap);
    this.pushTimeline(snap);
  }

  private pushPlotPoints(snap: Snapshot): void {
    const lastT = this.power.length
      ? this.power[this.power.length - 1].t
      : -Infinity;
    if (snap.t - lastT < this.minSpacing - 1e-9) {
      return; // decimated
    }
    this.power.push({ t: snap.t, watts: snap.power });
    this.velocity.push({
      t: snap.t,
      cmdVx: this.command.vx,
      cmdVy: this.command.vy,
      estVx: snap.pEst[0],
      estVy: snap.pEst[1],
    });
    while (this.power.length > this.capacity) {
      this.power.shift();
    }
    while (this.velocity.length > this.capacity) {
      this.velocity.shift();
    }
  }

  private pushTimeline(snap: Snapshot): void {
    const last = this.timeline[this.timeline.length - 1];
    if (last !== undefined && last.gait === snap.gait) {
      last.end = snap.t;
    } else {
      // a gait switch starts a fresh colored segment at the switch time
      this.timeline.push({ gait: snap.gait, start: snap.t, end: snap.t });
      if (last !== undefined) {
        this.switchCount += 1;
      }
    }
    const cutoff = snap.t - this.timelineWindow;
    while (this.timeline.length > 1 && this.timeline[0].end < cutoff) {
      this.timeline.shift();
    }
    if (this.timeline.length && this.timeline[0].start < cutoff) {
      this.timeline[0].start = cutoff;
    }
  }
}
