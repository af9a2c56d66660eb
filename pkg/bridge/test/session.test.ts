import { afterEach, describe, expect, it } from "vitest";

import {
  ArrayView,
  BridgeCallError,
  BridgeErrorCode,
  BridgeSession,
  PROTOCOL_VERSION,
  view,
  withEpisode,
} from "../src/index.js";

const H = 8;
const W = 8;
const STEPS = 2;
const CFG = { steps: STEPS, radii: [2, 4], alphas: [[0.8, 4]] };

function makeImage(): ArrayView {
  const data = new Uint8Array(H * W);
  for (let i = 0; i < data.length; i++) data[i] = (i * 13 + 7) % 256;
  return view(data, [H, W]);
}

function makeGt(): ArrayView {
  // two 4x4 blocks on opposite corners, background elsewhere
  const data = new Uint16Array(H * W);
  for (let y = 0; y < 4; y++) {
    for (let x = 0; x < 4; x++) {
      data[y * W + x] = 1;
      data[(y + 4) * W + (x + 4)] = 2;
    }
  }
  return view(data, [H, W]);
}

function makeAction(fill: (i: number) => number): ArrayView {
  const data = new Uint8Array(H * W);
  for (let i = 0; i < data.length; i++) data[i] = fill(i);
  return view(data, [H, W]);
}

const sessions: BridgeSession[] = [];

function openSession(): BridgeSession {
  const session = new BridgeSession();
  sessions.push(session);
  return session;
}

afterEach(() => {
  for (const session of sessions.splice(0)) session.dispose();
});

async function errorCode(promise: Promise<unknown>): Promise<BridgeErrorCode> {
  try {
    await promise;
  } catch (err) {
    expect(err).toBeInstanceOf(BridgeCallError);
    return (err as BridgeCallError).code;
  }
  throw new Error("expected the call to fail");
}

describe("handshake", () => {
  it("reports the ABI and protocol version", async () => {
    const session = openSession();
    const info = await session.hello();
    expect(info.abi).toBe("recolor-bridge/1");
    expect(info.protocolVersion).toBe(PROTOCOL_VERSION);
    expect(info.packageVersion).toMatch(/^\d+\./);
  });
});

describe("episodes", () => {
  it("resets to an image-plus-planes observation", async () => {
    const session = openSession();
    const image = makeImage();
    const episode = await session.reset(image, makeGt(), CFG);

    const obs = episode.observation;
    expect(obs.dtype).toBe("f32");
    expect(obs.shape).toEqual([H, W, 1 + STEPS]);
    const channels = 1 + STEPS;
    for (let i = 0; i < H * W; i++) {
      const px = obs.data[i * channels]!;
      expect(px).toBeCloseTo(image.data[i]! / 255, 6);
      for (let c = 1; c < channels; c++) {
        expect(obs.data[i * channels + c]).toBe(0);
      }
    }
    await episode.release();
  });

  it("steps through a scripted episode", async () => {
    const session = openSession();
    const episode = await session.reset(makeImage(), makeGt(), CFG);

    const first = await episode.step(makeAction((i) => (i % 3 === 0 ? 1 : 0)));
    expect(first.t).toBe(1);
    expect(first.done).toBe(false);
    expect(first.observation.shape).toEqual([H, W, 1 + STEPS]);
    for (const map of [first.rewardTotal, first.rewardBf, first.rewardSplit, first.rewardMerge]) {
      expect(map.dtype).toBe("f32");
      expect(map.shape).toEqual([H, W]);
    }
    expect(Number.isFinite(first.rewardMean)).toBe(true);

    const second = await episode.step(makeAction((i) => (i % 2 === 0 ? 0 : 1)));
    expect(second.t).toBe(2);
    expect(second.done).toBe(true);

    // the per-pixel mean matches the map the server shipped alongside it
    let total = 0;
    for (const v of second.rewardTotal.data) total += v;
    expect(second.rewardMean).toBeCloseTo(total / (H * W), 5);

    expect(await errorCode(episode.step(makeAction(() => 0)))).toBe(
      BridgeErrorCode.Lifecycle,
    );
    await episode.release();
  });

  it("is deterministic across separate sessions", async () => {
    const script = [
      makeAction((i) => (i * 7) % 5 === 0 ? 1 : 0),
      makeAction((i) => (i * 3) % 4 === 0 ? 1 : 0),
    ];
    const run = async () => {
      const session = openSession();
      const episode = await session.reset(makeImage(), makeGt(), CFG);
      const out: number[] = [...episode.observation.data];
      for (const action of script) {
        const r = await episode.step(action);
        out.push(...r.observation.data, ...r.rewardTotal.data, r.rewardMean);
      }
      await episode.release();
      return out;
    };
    expect(await run()).toEqual(await run());
  });

  it("serves two interleaved episodes with distinct handles", async () => {
    const session = openSession();
    const a = await session.reset(makeImage(), makeGt(), CFG);
    const b = await session.reset(makeImage(), makeGt(), CFG);
    expect(a.handle).not.toBe(b.handle);

    const ra = await a.step(makeAction(() => 1));
    const rb = await b.step(makeAction(() => 0));
    expect(ra.t).toBe(1);
    expect(rb.t).toBe(1);
    // different actions, same image: the colored run must differ
    expect([...ra.observation.data]).not.toEqual([...rb.observation.data]);

    await a.release();
    await b.release();
  });

  it("releases the handle after the body, even on throw", async () => {
    const session = openSession();
    let seen: import("../src/index.js").EpisodeClient | null = null;
    await expect(
      withEpisode(session, makeImage(), makeGt(), CFG, async (episode) => {
        seen = episode;
        throw new Error("boom");
      }),
    ).rejects.toThrow("boom");
    expect(seen!.isReleased).toBe(true);
    // the server-side handle is gone: stepping it is a lifecycle error
    expect(await errorCode(seen!.step(makeAction(() => 0)))).toBe(
      BridgeErrorCode.Lifecycle,
    );
  });
});

describe("error codes", () => {
  it("keeps the session alive across failed ops", async () => {
    const session = openSession();

    const f32Image = view(new Float32Array(H * W), [H, W]);
    expect(await errorCode(session.reset(f32Image, makeGt(), CFG))).toBe(
      BridgeErrorCode.Shape,
    );
    expect(await errorCode(session.reset(makeImage(), makeGt(), { stepz: 2 }))).toBe(
      BridgeErrorCode.Config,
    );

    const episode = await session.reset(makeImage(), makeGt(), CFG);
    const smallAction = view(new Uint8Array(9), [3, 3]);
    expect(await errorCode(episode.step(smallAction))).toBe(BridgeErrorCode.Shape);

    const result = await episode.step(makeAction(() => 1));
    expect(result.t).toBe(1);

    await episode.release();
    expect(await errorCode(episode.release())).toBe(BridgeErrorCode.Lifecycle);
  });

  it("rejects metrics on mismatched shapes", async () => {
    const session = openSession();
    const pred = view(new Uint16Array(H * W), [H, W]);
    const gt = view(new Uint16Array(16), [4, 4]);
    expect(await errorCode(session.metrics(pred, gt))).toBe(BridgeErrorCode.Shape);
    expect(await errorCode(session.metrics(pred, pred, { bogus: 1 }))).toBe(
      BridgeErrorCode.Config,
    );
  });
});

describe("metrics", () => {
  it("scores a perfect prediction perfectly", async () => {
    const session = openSession();
    const gt = makeGt();
    const report = await session.metrics(gt, gt);
    expect(report.sbd).toBeCloseTo(100, 9);
    expect(report.arand).toBeCloseTo(0, 9);
    expect(report.voi_split).toBeCloseTo(0, 9);
    expect(report.voi_merge).toBeCloseTo(0, 9);
    expect(report.n_gt).toBe(2);
    expect(report.n_pred).toBe(2);
  });
});

describe("shutdown", () => {
  it("exits cleanly on request", async () => {
    const session = openSession();
    await session.hello();
    expect(await session.shutdown()).toBe(0);
  });
});
