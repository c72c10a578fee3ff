import { describe, expect, it } from "vitest";

import { candidateDraws, skeletonSegments, worldToScreen } from "./draw.js";
import { fixtureCandidates, fixtureClip } from "./fixture.js";

const VP = { width: 600, height: 600, metersPerPixel: 0.01, center: { x: 0, z: 0 } };

describe("worldToScreen", () => {
  it("centers the viewport and flips z", () => {
    expect(worldToScreen({ x: 0, z: 0 }, VP)).toEqual([300, 300]);
    const [, py] = worldToScreen({ x: 0, z: 1 }, VP);
    expect(py).toBeLessThan(300); // +z points up on screen
  });
});

describe("candidateDraws", () => {
  it("color-codes labels and thickens the selection", () => {
    const cands = fixtureCandidates();
    const key = cands[0].ids.map((id) => id.join(":")).join("|");
    const draws = candidateDraws(cands, key, VP);
    expect(draws[0].selected).toBe(true);
    expect(draws[0].width).toBeGreaterThan(draws[1].width);
    const colors = new Set(draws.map((d) => d.color));
    expect(colors.size).toBeGreaterThanOrEqual(3);
  });

  it("converts every polyline point", () => {
    const cands = fixtureCandidates();
    const draws = candidateDraws(cands, null, VP);
    draws.forEach((d, i) =>
      expect(d.points).toHaveLength(cands[i].polyline.length));
  });
});

describe("skeletonSegments", () => {
  it("emits one segment per non-root joint", () => {
    const clip = fixtureClip(15);
    const skeleton = {
      names: ["a", "b", "c"],
      parents: [-1, 0, 1],
    };
    const frame = {
      ...clip.frames[0],
      world_pos: [
        [0, 0.9, 0],
        [0, 0.5, 0],
        [0, 0.1, 0],
      ] as [number, number, number][],
    };
    const segs = skeletonSegments(frame, skeleton, 100, [200, 400]);
    expect(segs).toHaveLength(2);
    // vertical chain maps to decreasing screen y with height
    expect(segs[0].a[1]).toBeLessThan(segs[0].b[1]);
  });
});
