import type { Candidate, InbetweenResponse, WireFrame } from "./types.js";

/**
 * Seeded fixture backend used by tests: deterministic candidates and
 * clips shaped exactly like the authoring service responses.
 */

export function fixtureCandidates(): Candidate[] {
  const line = (frames: number, dz: number): [number, number][] =>
    Array.from({ length: frames + 1 }, (_, i) => [0, (i * dz) / frames]);
  return [
    { ids: [[1, 0, 30]], duration: 30, label: "fast", error: 0.02,
      polyline: line(30, 2) },
    { ids: [[2, 10, 70]], duration: 60, label: "medium", error: 0.05,
      polyline: line(60, 2) },
    { ids: [[3, 0, 90]], duration: 90, label: "slow", error: 0.11,
      polyline: line(90, 2) },
    { ids: [[2, 40, 85]], duration: 45, label: "fast", error: 0.08,
      polyline: line(45, 2) },
  ];
}

export function fixtureClip(frames: number): InbetweenResponse {
  const mk = (i: number): WireFrame => ({
    root_pos: [0, 0.8, (2 * (i + 1)) / frames],
    rotations: Array.from({ length: 22 }, () => [1, 0, 0, 0]),
    world_pos: Array.from({ length: 22 }, (_, j) =>
      [0, 0.1 + 0.03 * j, (2 * (i + 1)) / frames] as [number, number, number]),
  });
  return {
    tta0: frames,
    frames: Array.from({ length: frames }, (_, i) => mk(i)),
    pose_wire_version: 1,
  };
}

export interface FixtureOptions {
  /** per-call artificial latency in ms, popped from the front */
  delays?: number[];
  /** fail the next query with this HTTP status */
  failStatus?: number;
}

export function makeFixtureFetch(opts: FixtureOptions = {}) {
  const calls: { url: string; body: unknown }[] = [];
  const delays = [...(opts.delays ?? [])];

  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    calls.push({ url, body });
    const wait = delays.length ? delays.shift()! : 0;
    if (wait) await new Promise((r) => setTimeout(r, wait));

    const json = (status: number, payload: unknown): Response =>
      ({
        ok: status >= 200 && status < 300,
        status,
        statusText: String(status),
        json: async () => payload,
      }) as unknown as Response;

    if (opts.failStatus) {
      const status = opts.failStatus;
      opts.failStatus = undefined;
      return json(status, { error: "fixture failure" });
    }
    if (url.endsWith("/api/meta")) {
      return json(200, {
        styles: [0, 1, 2, 3],
        model_version: 1,
        gallery: { trajectories: 1000, clips: 10, alpha: 0.35 },
        pose_wire_version: 1,
        skeleton: { names: ["Hips"], parents: [-1] },
      });
    }
    if (url.endsWith("/api/gallery/query")) {
      const label = body?.duration_label as string | undefined;
      let cands = fixtureCandidates();
      if (label) cands = cands.filter((c) => c.label === label);
      // distance gate mirrors the service contract
      const [sx, sz] = body.start.pos;
      const [tx, tz] = body.target.pos;
      const d = Math.hypot(tx - sx, tz - sz);
      if (d < 0.1 || d > 10) return json(422, { error: "distance" });
      return json(200, { candidates: cands });
    }
    if (url.endsWith("/api/inbetween")) {
      const chain = body.chain as number[][];
      const all = fixtureCandidates();
      const match = all.find(
        (c) => JSON.stringify(c.ids) === JSON.stringify(chain));
      if (!match) return json(404, { error: "unknown candidate" });
      return json(200, fixtureClip(match.duration));
    }
    return json(404, { error: `no fixture for ${url}` });
  };

  return { impl, calls };
}
