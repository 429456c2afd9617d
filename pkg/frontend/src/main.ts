import { Connection } from "./connection.js";
import { CommandInput } from "./input.js";
import { render } from "./render.js";
import { UiState } from "./state.js";
import { Axis } from "./input.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

const ui = new UiState();

const proto = location.protocol === "https:" ? "wss:" : "ws:";
const conn = new Connection(`${proto}//${location.host}/ws`, {
  onSnapshot: (snap) => ui.pushSnapshot(snap),
  onStatus: (status) => {
    ui.status = status;
  },
  onServerError: (msg) => {
    ui.lastError = msg;
  },
});

const input = new CommandInput(ui, (cmd) => conn.send(cmd));
input.start();

// sliders and keyboard both funnel through CommandInput
for (const axis of ["vx", "vy", "wz"] as Axis[]) {
  const slider = document.getElementById(axis) as HTMLInputElement;
  const label = document.getElementById(`${axis}-value`) as HTMLElement;
  slider.addEventListener("input", () => {
    input.setAxis(axis, parseFloat(slider.value));
    label.textContent = ui.command[axis].toFixed(2);
  });
}

function syncSliders(): void {
  for (const axis of ["vx", "vy", "wz"] as Axis[]) {
    const slider = document.getElementById(axis) as HTMLInputElement;
    const label = document.getElementById(`${axis}-value`) as HTMLElement;
    slider.value = String(ui.command[axis]);
    label.textContent = ui.command[axis].toFixed(2);
  }
}

document.addEventListener("keydown", (ev) => {
  if (input.keyDown(ev.key)) {
    syncSliders();
    ev.preventDefault();
  }
});
document.addEventListener("keyup", (ev) => {
  if (input.keyUp(ev.key)) {
    ev.preventDefault();
  }
});

const zeroButton = document.getElementById("zero") as HTMLButtonElement;
zeroButton.addEventListener("click", () => {
  input.setAxis("vx", 0);
  input.setAxis("vy", 0);
  input.setAxis("wz", 0);
  syncSliders();
});

function frame(): void {
  render(ctx, ui, canvas.width, canvas.height);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
