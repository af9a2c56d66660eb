/** @file Subprocess session: spawn the bridge, call ops, manage handles. */

import { ChildProcess, spawn } from "node:child_process";

import { ArrayView } from "./arrayview.js";
import { ABI_STRING, Frame, FrameDecoder, encodeFrame } from "./protocol.js";

/** Numeric error codes mirrored from the server; stable contract. */
export enum BridgeErrorCode {
  Shape = 1,
  Config = 2,
  Lifecycle = 3,
}

/** A failed op reported by the server (the session stays usable). */
export class BridgeCallError extends Error {
  constructor(
    readonly code: BridgeErrorCode,
    message: string,
  ) {
    super(message);
    this.name = "BridgeCallError";
  }
}

export interface SessionOptions {
  /** Interpreter to spawn; this environment ships `python3`, not `python`. */
  pythonPath?: string;
  /** Extra environment variables for the subprocess. */
  env?: Record<string, string>;
}

export interface HelloInfo {
  abi: string;
  protocolVersion: number;
  packageVersion: string;
}

export interface StepResult {
  observation: ArrayView;
  rewardTotal: ArrayView;
  rewardBf: ArrayView;
  rewardSplit: ArrayView;
  rewardMerge: ArrayView;
  rewardMean: number;
  t: number;
  done: boolean;
}

function expectArray(frame: Frame, name: string): ArrayView {
  const arr = frame.arrays.get(name);
  if (!arr) throw new Error(`reply is missing array ${name}`);
  return arr;
}

/**
 * One bridge subprocess.  Calls are serialized: the server answers frames
 * in order, so each request simply awaits the next reply.
 */
export class BridgeSession {
  private proc: ChildProcess;
  private decoder = new FrameDecoder();
  private queue: Frame[] = [];
  private waiters: Array<(frame: Frame) => void> = [];
  private failure: Error | null = null;
  private nextId = 0;
  private chain: Promise<unknown> = Promise.resolve();

  constructor(options: SessionOptions = {}) {
    this.proc = spawn(options.pythonPath ?? "python3", ["-m", "recolor.bridge"], {
      stdio: ["pipe", "pipe", "inherit"],
      env: { ...process.env, ...options.env },
    });
    this.proc.stdout!.on("data", (chunk: Buffer) => {
      for (const frame of this.decoder.push(chunk)) {
        const waiter = this.waiters.shift();
        if (waiter) waiter(frame);
        else this.queue.push(frame);
      }
    });
    const fail = (err: Error) => {
      this.failure = err;
      for (const waiter of this.waiters.splice(0)) {
        waiter({ header: { ok: false, __dead: err.message }, arrays: new Map() });
      }
    };
    this.proc.on("error", fail);
    this.proc.on("exit", (code) => {
      fail(new Error(`bridge process exited with code ${code}`));
    });
  }

  private nextFrame(): Promise<Frame> {
    const queued = this.queue.shift();
    if (queued) return Promise.resolve(queued);
    if (this.failure) return Promise.reject(this.failure);
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  /** Send one op and await its reply; rejects with BridgeCallError on !ok. */
  call(
    op: string,
    fields: Record<string, unknown> = {},
    arrays: ReadonlyArray<readonly [string, ArrayView]> = [],
  ): Promise<Frame> {
    // serialize: each call writes only after the previous reply arrived
    const result = this.chain.then(async () => {
      if (this.failure) throw this.failure;
      const id = ++this.nextId;
      this.proc.stdin!.write(encodeFrame({ op, id, ...fields }, arrays));
      const frame = await this.nextFrame();
      if (this.failure && frame.header.__dead) throw this.failure;
      if (frame.header.id !== id) {
        throw new Error(`reply id ${frame.header.id} does not match ${id}`);
      }
      if (!frame.header.ok) {
        throw new BridgeCallError(
          Number(frame.header.code) as BridgeErrorCode,
          String(frame.header.error ?? "bridge error"),
        );
      }
      return frame;
    });
    // keep the chain alive through failures so later calls still run
    this.chain = result.catch(() => undefined);
    return result;
  }

  /** Handshake: verify the ABI string before anything else. */
  async hello(): Promise<HelloInfo> {
    const { header } = await this.call("hello");
    if (header.abi !== ABI_STRING) {
      throw new Error(`unexpected bridge ABI ${header.abi}`);
    }
    return {
      abi: String(header.abi),
      protocolVersion: Number(header.protocol_version),
      packageVersion: String(header.package_version),
    };
  }

  /** Start an episode; image is u8 (H,W) or (H,W,K), gt is u16 (H,W). */
  async reset(
    image: ArrayView,
    gt: ArrayView,
    cfg: Record<string, unknown> = {},
  ): Promise<EpisodeClient> {
    const frame = await this.call("reset", { cfg }, [
      ["image", image],
      ["gt", gt],
    ]);
    return new EpisodeClient(
      this,
      Number(frame.header.handle),
      expectArray(frame, "observation"),
    );
  }

  /** Score a prediction against ground truth (both u16, same shape). */
  async metrics(
    pred: ArrayView,
    gt: ArrayView,
    options: Record<string, unknown> = {},
  ): Promise<Record<string, number>> {
    const frame = await this.call("metrics", { options }, [
      ["pred", pred],
      ["gt", gt],
    ]);
    return frame.header.report as Record<string, number>;
  }

  /** Ask the server to exit, then wait for the process to end. */
  async shutdown(): Promise<number> {
    await this.call("shutdown");
    this.proc.stdin!.end();
    return new Promise((resolve) => {
      if (this.proc.exitCode !== null) return resolve(this.proc.exitCode);
      this.proc.once("exit", (code) => resolve(code ?? -1));
    });
  }

  /** Kill the subprocess without the shutdown handshake. */
  dispose(): void {
    if (this.proc.exitCode === null) this.proc.kill();
  }
}

/**
 * A live episode behind a handle.  Single-owner; release() frees the
 * server-side state (double release is a Lifecycle error).
 */
export class EpisodeClient {
  private released = false;

  constructor(
    private readonly session: BridgeSession,
    readonly handle: number,
    readonly observation: ArrayView,
  ) {}

  async step(action: ArrayView): Promise<StepResult> {
    const frame = await this.session.call("step", { handle: this.handle }, [
      ["action", action],
    ]);
    return {
      observation: expectArray(frame, "observation"),
      rewardTotal: expectArray(frame, "reward_total"),
      rewardBf: expectArray(frame, "reward_bf"),
      rewardSplit: expectArray(frame, "reward_split"),
      rewardMerge: expectArray(frame, "reward_merge"),
      rewardMean: Number(frame.header.reward_mean),
      t: Number(frame.header.t),
      done: Boolean(frame.header.done),
    };
  }

  async release(): Promise<void> {
    await this.session.call("release", { handle: this.handle });
    this.released = true;
  }

  get isReleased(): boolean {
    return this.released;
  }
}

/**
 * Context-managed episode: runs `fn`, then releases the handle even if
 * `fn` throws (release errors after a body error are swallowed).
 */
export async function withEpisode<T>(
  session: BridgeSession,
  image: ArrayView,
  gt: ArrayView,
  cfg: Record<string, unknown>,
  fn: (episode: EpisodeClient) => Promise<T>,
): Promise<T> {
  const episode = await session.reset(image, gt, cfg);
  try {
    return await fn(episode);
  } finally {
    if (!episode.isReleased) {
      await episode.release().catch(() => undefined);
    }
  }
}
