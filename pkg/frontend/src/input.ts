import { Command } from "./protocol.js";
import { UiState } from "./state.js";

export type Axis = keyof Command;

const ARROW_STEP = 0.1; // m/s per key press

const KEY_BINDINGS: Record<string, { axis: Axis; delta: number }> = {
  ArrowUp: { axis: "vx", delta: +ARROW_STEP },
  ArrowDown: { axis: "vx", delta: -ARROW_STEP },
  ArrowLeft: { axis: "vy", delta: +ARROW_STEP },
  ArrowRight: { axis: "vy", delta: -ARROW_STEP },
};

// Slider and keyboard edits share one policy: every change sends the
// clamped command immediately, and while any key is held the current
// command is re-sent at 10 Hz.
export class CommandInput {
  private held = new Set<string>();
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private state: UiState,
    private send: (cmd: Command) => void,
    private repeatMs = 100,
  ) {}

  start(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => {
        if (this.held.size > 0) {
          this.send(this.state.command);
        }
      }, this.repeatMs);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.held.clear();
  }

  setAxis(axis: Axis, value: number): void {
    const next = { ...this.state.command, [axis]: value };
    this.state.setCommand(next); // clamps
    this.send(this.state.command);
  }

  // returns true when the key was consumed, so callers can preventDefault
  keyDown(key: string): boolean {
    const binding = KEY_BINDINGS[key];
    if (binding === undefined) {
      return false;
    }
    if (!this.held.has(key)) {
      // browser auto-repeat re-fires keydown; only the edge increments
      this.held.add(key);
      this.setAxis(binding.axis,
                   this.state.command[binding.axis] + binding.delta);
    }
    return true;
  }

  keyUp(key: string): boolean {
    return this.held.delete(key);
  }
}
