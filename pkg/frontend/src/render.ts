import { GaitSegment, PowerPoint, UiState, VelocityPoint } from "./state.js";

// Rendering is a pure function of UiState: same state, same pixels.
// No timers or hidden inputs in here.

export const GAIT_COLORS: Record<string, string> = {
  driving: "#3b82d9",
  trotting: "#e0862f",
  walking: "#58a55c",
};

const FALLBACK_COLOR = "#888888";
const PLOT_WINDOW = 10; // seconds of history shown in the line plots

function gaitColor(gait: string): string {
  return GAIT_COLORS[gait] ?? FALLBACK_COLOR;
}

interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

function quatYaw(q: number[]): number {
  const [w, x, y, z] = q;
  return Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
}

function drawFrame(ctx: CanvasRenderingContext2D, r: Rect, title: string): void {
  ctx.strokeStyle = "#444";
  ctx.lineWidth = 1;
  ctx.strokeRect(r.x, r.y, r.w, r.h);
  ctx.fillStyle = "#aaa";
  ctx.font = "12px sans-serif";
  ctx.fillText(title, r.x + 6, r.y - 5);
}

function drawTimeline(ctx: CanvasRenderingContext2D, r: Rect,
                      timeline: GaitSegment[], tNow: number,
                      window: number): void {
  drawFrame(ctx, r, "gait timeline");
  const t0 = tNow - window;
  const scale = r.w / window;
  for (const seg of timeline) {
    const a = Math.max(seg.start, t0);
    const b = Math.min(seg.end, tNow);
    if (b < a) {
      continue;
    }
    // freshly switched segments still get a visible sliver
    ctx.fillStyle = gaitColor(seg.gait);
    ctx.fillRect(r.x + (a - t0) * scale, r.y + 2,
                 Math.max(1, (b - a) * scale), r.h - 4);
  }
}

function plotX(r: Rect, t: number, tNow: number, window: number): number {
  return r.x + ((t - (tNow - window)) / window) * r.w;
}

function drawPower(ctx: CanvasRenderingContext2D, r: Rect,
                   power: PowerPoint[], tNow: number): void {
  drawFrame(ctx, r, "power [W]");
  const inWindow = power.filter((p) => p.t >= tNow - PLOT_WINDOW);
  if (inWindow.length === 0) {
    return;
  }
  let top = 1.0;
  for (const p of inWindow) {
    top = Math.max(top, p.watts);
  }
  top *= 1.1;
  ctx.fillStyle = "#aaa";
  ctx.fillText(top.toFixed(1), r.x + r.w - 44, r.y + 14);
  ctx.strokeStyle = "#d9534f";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  inWindow.forEach((p, i) => {
    const x = plotX(r, p.t, tNow, PLOT_WINDOW);
    const y = r.y + r.h - (p.watts / top) * (r.h - 6) - 3;
    if (i === 0) {
      ctx.moveTo(x, y);
    } else {
      ctx.lineTo(x, y);
    }
  });
  ctx.stroke();
}

function drawVelocitySeries(ctx: CanvasRenderingContext2D, r: Rect,
                            points: VelocityPoint[],
                            pick: (p: VelocityPoint) => number,
                            color: string, dashed: boolean,
                            tNow: number): void {
  const span = 1.2; // commands are clamped to |v| <= 1
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.setLineDash(dashed ? [6, 4] : []);
  ctx.beginPath();
  points.forEach((p, i) => {
    const x = plotX(r, p.t, tNow, PLOT_WINDOW);
    const y = r.y + r.h / 2 - (pick(p) / span) * (r.h / 2 - 4);
    if (i === 0) {
      ctx.moveTo(x, y);
    } else {
      ctx.lineTo(x, y);
    }
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

function drawVelocity(ctx: CanvasRenderingContext2D, r: Rect,
                      velocity: VelocityPoint[], tNow: number): void {
  drawFrame(ctx, r, "velocity [m/s]  dashed=commanded solid=estimated");
  ctx.strokeStyle = "#333";
  ctx.beginPath();
  ctx.moveTo(r.x, r.y + r.h / 2);
  ctx.lineTo(r.x + r.w, r.y + r.h / 2);
  ctx.stroke();
  const inWindow = velocity.filter((p) => p.t >= tNow - PLOT_WINDOW);
  if (inWindow.length === 0) {
    return;
  }
  drawVelocitySeries(ctx, r, inWindow, (p) => p.cmdVx, "#3b82d9", true, tNow);
  drawVelocitySeries(ctx, r, inWindow, (p) => p.estVx, "#3b82d9", false, tNow);
  drawVelocitySeries(ctx, r, inWindow, (p) => p.cmdVy, "#e0862f", true, tNow);
  drawVelocitySeries(ctx, r, inWindow, (p) => p.estVy, "#e0862f", false, tNow);
}

function drawTopDown(ctx: CanvasRenderingContext2D, r: Rect,
                     ui: UiState): void {
  drawFrame(ctx, r, "top-down view (1 grid square = 0.5 m)");
  const snap = ui.latest;
  if (snap === null) {
    return;
  }
  const scale = 180; // px per metre
  const cx = r.x + r.w / 2;
  const cy = r.y + r.h / 2;
  const toView = (wx: number, wy: number): [number, number] => [
    cx + (wx - snap.pos[0]) * scale,
    cy - (wy - snap.pos[1]) * scale,
  ];

  // ground grid anchored to the world so motion is visible
  ctx.strokeStyle = "#2e2e2e";
  ctx.lineWidth = 1;
  const step = 0.5;
  const firstX = Math.floor((snap.pos[0] - r.w / 2 / scale) / step) * step;
  for (let gx = firstX; gx < snap.pos[0] + r.w / 2 / scale; gx += step) {
    const [px] = toView(gx, 0);
    if (px > r.x && px < r.x + r.w) {
      ctx.beginPath();
      ctx.moveTo(px, r.y + 1);
      ctx.lineTo(px, r.y + r.h - 1);
      ctx.stroke();
    }
  }
  const firstY = Math.floor((snap.pos[1] - r.h / 2 / scale) / step) * step;
  for (let gy = firstY; gy < snap.pos[1] + r.h / 2 / scale; gy += step) {
    const [, py] = toView(0, gy);
    if (py > r.y && py < r.y + r.h) {
      ctx.beginPath();
      ctx.moveTo(r.x + 1, py);
      ctx.lineTo(r.x + r.w - 1, py);
      ctx.stroke();
    }
  }

  // chassis rectangle plus heading tick, rotated by yaw
  const yaw = quatYaw(snap.quat);
  const hl = 0.26;
  const hw = 0.17;
  const corners: Array<[number, number]> = [
    [+hl, +hw], [+hl, -hw], [-hl, -hw], [-hl, +hw],
  ];
  ctx.strokeStyle = gaitColor(snap.gait);
  ctx.lineWidth = 2;
  ctx.beginPath();
  corners.forEach(([bx, by], i) => {
    const wx = snap.pos[0] + bx * Math.cos(yaw) - by * Math.sin(yaw);
    const wy = snap.pos[1] + bx * Math.sin(yaw) + by * Math.cos(yaw);
    const [px, py] = toView(wx, wy);
    if (i === 0) {
      ctx.moveTo(px, py);
    } else {
      ctx.lineTo(px, py);
    }
  });
  ctx.closePath();
  ctx.stroke();
  const [nx, ny] = toView(
    snap.pos[0] + (hl + 0.08) * Math.cos(yaw),
    snap.pos[1] + (hl + 0.08) * Math.sin(yaw));
  const [bx0, by0] = toView(snap.pos[0], snap.pos[1]);
  ctx.beginPath();
  ctx.moveTo(bx0, by0);
  ctx.lineTo(nx, ny);
  ctx.stroke();

  // wheel markers: filled when in contact, hollow when airborne
  snap.feet.forEach((foot, i) => {
    const [px, py] = toView(foot[0], foot[1]);
    ctx.beginPath();
    ctx.arc(px, py, 7, 0, 2 * Math.PI);
    if (snap.contacts[i]) {
      ctx.fillStyle = "#e8e8e8";
      ctx.fill();
    } else {
      ctx.strokeStyle = "#e8e8e8";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  });
}

function drawHeader(ctx: CanvasRenderingContext2D, ui: UiState,
                    width: number): void {
  ctx.font = "14px sans-serif";
  ctx.fillStyle = ui.status === "connected" ? "#6fbf73" : "#d9a23b";
  ctx.fillText(`status: ${ui.status}`, 12, 20);
  ctx.fillStyle = "#ddd";
  const c = ui.command;
  ctx.fillText(
    `cmd  vx ${c.vx.toFixed(2)}  vy ${c.vy.toFixed(2)}  wz ${c.wz.toFixed(2)}`,
    170, 20);
  const snap = ui.latest;
  if (snap !== null) {
    ctx.fillText(
      `est  vx ${snap.pEst[0].toFixed(2)}  vy ${snap.pEst[1].toFixed(2)}  ` +
      `gait ${snap.gait}  power ${snap.power.toFixed(1)} W  ` +
      `t ${snap.t.toFixed(1)} s`,
      width / 2, 20);
  }
}

export function render(ctx: CanvasRenderingContext2D, ui: UiState,
                       width: number, height: number): void {
  ctx.fillStyle = "#181818";
  ctx.fillRect(0, 0, width, height);
  drawHeader(ctx, ui, width);

  const m = 12;
  const plotW = width - 2 * m;
  const timeline: Rect = { x: m, y: 44, w: plotW, h: 26 };
  const power: Rect = { x: m, y: 94, w: plotW, h: 140 };
  const velocity: Rect = { x: m, y: 260, w: plotW, h: 140 };
  const topDown: Rect = { x: m, y: 426, w: plotW, h: height - 426 - m };

  const tNow = ui.latest !== null ? ui.latest.t : 0;
  drawTimeline(ctx, timeline, ui.timeline, tNow, ui.timelineWindow);
  drawPower(ctx, power, ui.power, tNow);
  drawVelocity(ctx, velocity, ui.velocity, tNow);
  drawTopDown(ctx, topDown, ui);

  if (ui.status !== "connected") {
    // grey out the stale frame and say why
    ctx.fillStyle = "rgba(30, 30, 30, 0.55)";
    ctx.fillRect(0, 0, width, height);
    ctx.fillStyle = "#f0d07a";
    ctx.font = "22px sans-serif";
    ctx.fillText("connection lost, retrying...", width / 2 - 130, height / 2);
  }
}
