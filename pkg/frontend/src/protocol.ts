// Wire protocol shared with the simulation server.
//
// client -> server  {"type": "cmd", "vx": f, "vy": f, "wz": f}
// server -> client  {"type": "state", ...}  or  {"type": "error", "msg": s}

export interface Command {
  vx: number;
  vy: number;
  wz: number;
}

export interface Snapshot {
  t: number;
  pos: number[];     // base position, world frame [x, y, z]
  quat: number[];    // base orientation [w, x, y, z]
  vel: number[];     // base linear velocity, body frame
  gait: string;
  pEst: number[];    // estimated [vx, vy, base height]
  power: number;     // instantaneous actuator power, W
  feet: number[][];  // 4 wheel contact points, world frame
  contacts: boolean[];
}

export type ServerMessage =
  | { kind: "state"; snap: Snapshot }
  | { kind: "error"; msg: string };

// command magnitudes the server trains with; sent values never exceed these
export const COMMAND_LIMITS: Command = { vx: 1.0, vy: 0.7, wz: 0.7 };

function clip(v: number, limit: number): number {
  return Math.min(limit, Math.max(-limit, v));
}

export function clampCommand(cmd: Command): Command {
  return {
    vx: clip(cmd.vx, COMMAND_LIMITS.vx),
    vy: clip(cmd.vy, COMMAND_LIMITS.vy),
    wz: clip(cmd.wz, COMMAND_LIMITS.wz),
  };
}

export function commandMessage(cmd: Command): string {
  const c = clampCommand(cmd);
  return JSON.stringify({ type: "cmd", vx: c.vx, vy: c.vy, wz: c.wz });
}

function finiteVector(v: unknown, length: number): v is number[] {
  return (
    Array.isArray(v) &&
    v.length === length &&
    v.every((x) => typeof x === "number" && Number.isFinite(x))
  );
}

// Parse one server frame. Malformed frames are dropped with a console
// diagnostic and null is returned; the UI stays on its last good state.
export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: any;
  try {
    msg = JSON.parse(raw);
  } catch (err) {
    console.warn("dropping malformed snapshot: not valid JSON", err);
    return null;
  }
  if (typeof msg !== "object" || msg === null) {
    console.warn("dropping malformed snapshot: not an object");
    return null;
  }
  if (msg.type === "error") {
    return { kind: "error", msg: String(msg.msg ?? "unknown server error") };
  }
  if (msg.type !== "state") {
    console.warn("dropping malformed snapshot: unknown type", msg.type);
    return null;
  }
  const base = msg.base;
  const ok =
    typeof msg.t === "number" &&
    Number.isFinite(msg.t) &&
    typeof base === "object" &&
    base !== null &&
    finiteVector(base.pos, 3) &&
    finiteVector(base.quat, 4) &&
    finiteVector(base.vel, 3) &&
    typeof msg.gait === "string" &&
    msg.gait.length > 0 &&
    finiteVector(msg.p_est, 3) &&
    typeof msg.power === "number" &&
    Number.isFinite(msg.power) &&
    Array.isArray(msg.feet) &&
    msg.feet.length === 4 &&
    msg.feet.every((f: unknown) => finiteVector(f, 3)) &&
    Array.isArray(msg.contacts) &&
    msg.contacts.length === 4 &&
    msg.contacts.every((c: unknown) => typeof c === "boolean");
  if (!ok) {
    console.warn("dropping malformed snapshot: bad field shape");
    return null;
  }
  return {
    kind: "state",
    snap: {
      t: msg.t,
      pos: base.pos,
      quat: base.quat,
      vel: base.vel,
      gait: msg.gait,
      pEst: msg.p_est,
      power: msg.power,
      feet: msg.feet,
      contacts: msg.contacts,
    },
  };
}
