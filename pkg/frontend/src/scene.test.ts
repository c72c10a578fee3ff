import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "./api.js";
import { candidateDraws } from "./draw.js";
import { makeFixtureFetch } from "./fixture.js";
import { AuthoringScene, snapFacing } from "./scene.js";

const VIEWPORT = {
  width: 640,
  height: 640,
  metersPerPixel: 0.01,
  center: { x: 0, z: 1 },
};

function makeScene(opts: Parameters<typeof makeFixtureFetch>[0] = {}) {
  const { impl, calls } = makeFixtureFetch(opts);
  const scene = new AuthoringScene(new ApiClient(impl), 50);
  return { scene, calls };
}

describe("candidate querying against the fixture backend", () => {
  it("markers 2 m apart return and render at least one candidate", async () => {
    const { scene } = makeScene();
    scene.start.pos = { x: 0, z: 0 };
    scene.target.pos = { x: 0, z: 2 };
    await scene.queryNow();
    expect(scene.candidates.length).toBeGreaterThanOrEqual(1);
    const draws = candidateDraws(scene.visibleCandidates(), null, VIEWPORT);
    expect(draws.length).toBeGreaterThanOrEqual(1);
    expect(draws[0].points.length).toBeGreaterThan(1);
  });

  it("duration filter hides non-matching labels", async () => {
    const { scene } = makeScene();
    await scene.queryNow();
    scene.durationFilter = "slow";
    const visible = scene.visibleCandidates();
    expect(visible.length).toBeGreaterThan(0);
    expect(visible.every((c) => c.label === "slow")).toBe(true);
    const draws = candidateDraws(visible, null, VIEWPORT);
    expect(draws).toHaveLength(visible.length);
  });

  it("empty result renders the no-match state", async () => {
    const { scene } = makeScene();
    scene.target.pos = { x: 0, z: 2 };
    scene.durationFilter = "fast";
    await scene.queryNow();
    scene.candidates = [];
    scene.noMatch = true;
    expect(scene.visibleCandidates()).toHaveLength(0);
  });

  it("backend errors surface as a banner without clearing state", async () => {
    const { scene } = makeScene();
    await scene.queryNow();
    const before = scene.candidates;
    const failing = makeScene({ failStatus: 500 });
    failing.scene.candidates = before;
    await failing.scene.queryNow();
    expect(failing.scene.banner).toMatch(/500/);
    expect(failing.scene.candidates).toBe(before);
  });
});

describe("stale-response guard", () => {
  it("a delayed older response never overwrites a newer one", async () => {
    // first query is slow (80 ms), second fast (0 ms): the slow response
    // arrives last and must be dropped
    const { scene } = makeScene({ delays: [80, 0] });
    scene.target.pos = { x: 0, z: 2 };
    const p1 = scene.queryNow();
    scene.durationFilter = "slow"; // second query returns only slow
    const p2 = scene.queryNow();
    await Promise.all([p1, p2]);
    expect(scene.candidates.every((c) => c.label === "slow")).toBe(true);
  });
});

describe("debounced marker edits", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("a burst of edits issues exactly one query after settling", async () => {
    const { scene, calls } = makeScene();
    for (let i = 0; i < 8; i++) {
      scene.setTarget({ x: 0, z: 1 + i * 0.1 }, null);
      vi.advanceTimersByTime(10);
    }
    expect(calls.filter((c) => c.url.endsWith("/gallery/query"))).toHaveLength(0);
    await vi.advanceTimersByTimeAsync(60);
    expect(calls.filter((c) => c.url.endsWith("/gallery/query"))).toHaveLength(1);
  });
});

describe("rollout playback", () => {
  it("scrubber length equals the returned frame count", async () => {
    const { scene } = makeScene();
    await scene.queryNow();
    scene.select(scene.candidates[1]); // 60-frame candidate
    await scene.playRollout();
    expect(scene.scrubberLength()).toBe(60);
    expect(scene.clip?.tta0).toBe(60);
  });

  it("pause at frame k resumes at k", async () => {
    const { scene } = makeScene();
    await scene.queryNow();
    scene.select(scene.candidates[0]);
    await scene.playRollout();
    scene.setFrame(12);
    scene.pause();
    expect(scene.playback.frame).toBe(12);
    scene.resume();
    expect(scene.playback.playing).toBe(true);
    expect(scene.playback.frame).toBe(12);
    scene.tick();
    expect(scene.playback.frame).toBe(13);
  });

  it("replay without edits reuses the cached clip", async () => {
    const { scene, calls } = makeScene();
    await scene.queryNow();
    scene.select(scene.candidates[0]);
    await scene.playRollout();
    const fetches = () =>
      calls.filter((c) => c.url.endsWith("/api/inbetween")).length;
    expect(fetches()).toBe(1);
    scene.pause();
    await scene.playRollout();
    expect(fetches()).toBe(1); // cached, no re-fetch
    expect(scene.playback.playing).toBe(true);
  });

  it("rollout failure keeps the previous clip and shows a banner", async () => {
    const { scene } = makeScene();
    await scene.queryNow();
    scene.select(scene.candidates[0]);
    await scene.playRollout();
    const clip = scene.clip;
    scene.select(scene.candidates[2]);
    const failing = makeScene({ failStatus: 500 });
    // splice the failing transport into the live scene
    (scene as unknown as { api: unknown }).api =
      (failing.scene as unknown as { api: unknown }).api;
    await scene.playRollout();
    expect(scene.clip).toBe(clip);
    expect(scene.banner).toMatch(/rollout failed/);
  });

  it("frame cursor stays inside [0, clip length)", async () => {
    const { scene } = makeScene();
    await scene.queryNow();
    scene.select(scene.candidates[0]);
    await scene.playRollout();
    scene.setFrame(9999);
    expect(scene.playback.frame).toBe(scene.scrubberLength() - 1);
    scene.setFrame(-5);
    expect(scene.playback.frame).toBe(0);
  });
});

describe("facing snap", () => {
  it("snaps to 45 degree increments", () => {
    const snapped = snapFacing({ x: 0.9, z: 1.0 });
    const angle = (Math.atan2(snapped.x, snapped.z) * 180) / Math.PI;
    expect(Math.abs(angle - 45)).toBeLessThan(1e-9);
    const snapped2 = snapFacing({ x: -0.05, z: -1.0 });
    const angle2 = (Math.atan2(snapped2.x, snapped2.z) * 180) / Math.PI;
    expect(Math.abs(Math.abs(angle2) - 180)).toBeLessThan(1e-9);
  });
});
