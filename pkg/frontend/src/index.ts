/**
 * Client for the aegis_v1 safety-layer bridge.
 *
 * The bridge is a subprocess speaking a line protocol of flat little-endian
 * float64 arrays; this wrapper gives hosts idiomatic objects (handles with
 * methods, typed records, named exceptions) without any numeric translation
 * beyond the exact hex codec.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import { createInterface, type Interface } from "node:readline";
import type { Readable, Writable } from "node:stream";

import { f64ToHex, hexToF64 } from "./codec.js";
import { BadHandleError, BridgeError, wrapRemoteError } from "./errors.js";

export * from "./errors.js";
export { f64ToHex, hexToF64 } from "./codec.js";

export interface FilterConfig {
  /** Gain of the linear class-K function alpha(h) = gain * h. */
  alphaGain: number;
  /** Gain on the virtual-state reference ascent. */
  virtualGain: number;
  /** QP weight on virtual-input deviation. */
  virtualWeight: number;
  /** Barrier values above this skip constraint enforcement. */
  activationDistance: number;
  /** End-effector ellipsoid semi-axes, meters (3 values). */
  eeSemiAxes: ArrayLike<number>;
  /** Body-frame offset of the ellipsoid center from the control point. */
  eeOffset: ArrayLike<number>;
  /** Obstacle ellipsoid: center (3), semi-axes (3), row-major rotation (9). */
  obstacleCenter: ArrayLike<number>;
  obstacleSemiAxes: ArrayLike<number>;
  obstacleRotation: ArrayLike<number>;
  /** Initial end-effector position (3) and row-major rotation (9). */
  pEf: ArrayLike<number>;
  rEf: ArrayLike<number>;
}

export interface StepResult {
  /** Filtered action: v(3), omega(3), gripper. */
  safeAction: Float64Array;
  /** Barrier value at the pre-step state (minimum over obstacles). */
  h: number;
  /** True when the QP modified the translational command. */
  active: boolean;
}

export interface EllipsoidRecord {
  center: Float64Array;
  semiAxes: Float64Array;
  /** Row-major 3x3 rotation. */
  rotation: Float64Array;
}

export interface BridgeStats {
  liveHandles: number;
  peakLiveHandles: number;
  rssBytes: number;
}

export interface SpawnOptions {
  /** Python interpreter used to launch the bridge (default "python3"). */
  python?: string;
  /** Extra arguments placed before "-m aegis.bridge". */
  pythonArgs?: string[];
}

interface Pending {
  resolve: (payload: string) => void;
  reject: (err: Error) => void;
}

export class SafetyBridge {
  private nextId = 1;
  private pending = new Map<string, Pending>();
  private closed = false;

  private constructor(
    private readonly child: ChildProcessByStdio<Writable, Readable, null>,
    private readonly lines: Interface,
  ) {
    this.lines.on("line", (line) => this.dispatch(line));
    this.child.on("exit", () => this.failAll(new BridgeError("bridge exited", 1, "Exit")));
  }

  static async spawn(options: SpawnOptions = {}): Promise<SafetyBridge> {
    const python = options.python ?? "python3";
    const args = [...(options.pythonArgs ?? []), "-m", "aegis.bridge"];
    const child = spawn(python, args, { stdio: ["pipe", "pipe", "inherit"] });
    const lines = createInterface({ input: child.stdout });
    const bridge = new SafetyBridge(child, lines);
    // one stats round trip proves the interpreter came up
    await bridge.request("aegis_v1_stats", new Float64Array(0));
    return bridge;
  }

  private dispatch(line: string): void {
    const sep1 = line.indexOf(" ");
    if (sep1 < 0) return;
    const kind = line.slice(0, sep1);
    const rest = line.slice(sep1 + 1);
    const sep2 = rest.indexOf(" ");
    const reqId = sep2 < 0 ? rest : rest.slice(0, sep2);
    const tail = sep2 < 0 ? "" : rest.slice(sep2 + 1);
    const entry = this.pending.get(reqId);
    if (!entry) return;
    this.pending.delete(reqId);
    if (kind === "ok") {
      entry.resolve(tail);
      return;
    }
    const parts = tail.split(" ");
    const code = Number(parts[0] ?? "1");
    const name = parts[1] ?? "Unknown";
    entry.reject(wrapRemoteError(name, code, parts.slice(2).join(" ")));
  }

  private failAll(err: Error): void {
    for (const entry of this.pending.values()) entry.reject(err);
    this.pending.clear();
  }

  /** Raw protocol request; payload and reply are flat float64 arrays. */
  request(op: string, payload: ArrayLike<number>): Promise<Float64Array> {
    if (this.closed) {
      return Promise.reject(new BridgeError("bridge is closed", 1, "Closed"));
    }
    const reqId = String(this.nextId++);
    const line = `${op} ${reqId} ${f64ToHex(payload)}\n`;
    return new Promise<string>((resolve, reject) => {
      this.pending.set(reqId, { resolve, reject });
      this.child.stdin.write(line);
    }).then(hexToF64);
  }

  /** Raw request whose reply is kept as the wire hex string. */
  requestRaw(op: string, payloadHex: string): Promise<string> {
    if (this.closed) {
      return Promise.reject(new BridgeError("bridge is closed", 1, "Closed"));
    }
    const reqId = String(this.nextId++);
    this.child.stdin.write(`${op} ${reqId} ${payloadHex}\n`);
    return new Promise<string>((resolve, reject) => {
      this.pending.set(reqId, { resolve, reject });
    });
  }

  async createFilter(config: FilterConfig): Promise<FilterHandle> {
    const payload = [
      config.alphaGain,
      config.virtualGain,
      config.virtualWeight,
      config.activationDistance,
      ...Array.from(config.eeSemiAxes),
      ...Array.from(config.eeOffset),
      ...Array.from(config.obstacleCenter),
      ...Array.from(config.obstacleSemiAxes),
      ...Array.from(config.obstacleRotation),
      ...Array.from(config.pEf),
      ...Array.from(config.rEf),
    ];
    const reply = await this.request("aegis_v1_create", payload);
    return new FilterHandle(this, reply[0]);
  }

  async fitMvee(points: ArrayLike<number>): Promise<EllipsoidRecord> {
    const reply = await this.request("aegis_v1_fit_mvee", points);
    return {
      center: reply.slice(0, 3),
      semiAxes: reply.slice(3, 6),
      rotation: reply.slice(6, 15),
    };
  }

  async stats(): Promise<BridgeStats> {
    const reply = await this.request("aegis_v1_stats", new Float64Array(0));
    return {
      liveHandles: reply[0],
      peakLiveHandles: reply[1],
      rssBytes: reply[2],
    };
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    this.child.stdin.write("aegis_v1_shutdown 0 -\n");
    this.child.stdin.end();
    await new Promise<void>((resolve) => {
      this.child.once("exit", () => resolve());
      setTimeout(() => {
        this.child.kill();
        resolve();
      }, 2_000).unref();
    });
  }
}

export class FilterHandle {
  private freed = false;

  constructor(
    private readonly bridge: SafetyBridge,
    public readonly id: number,
  ) {}

  /**
   * One safety-layer step.  pEf: position (3), rEf: row-major rotation (9),
   * action: v(3), omega(3), gripper; identical numerics to the native side.
   */
  async step(
    pEf: ArrayLike<number>,
    rEf: ArrayLike<number>,
    action: ArrayLike<number>,
    dt: number,
  ): Promise<StepResult> {
    const payload = [this.id, ...Array.from(pEf), ...Array.from(rEf), ...Array.from(action), dt];
    const reply = await this.bridge.request("aegis_v1_filter_step", payload);
    return {
      safeAction: reply.slice(0, 7),
      h: reply[7],
      active: reply[8] !== 0,
    };
  }

  async free(): Promise<void> {
    if (this.freed) {
      throw new BadHandleError(`handle ${this.id} already freed`, 11);
    }
    this.freed = true;
    await this.bridge.request("aegis_v1_free", [this.id]);
  }
}
