import type {
  Candidate,
  InbetweenResponse,
  Marker,
  Meta,
  QueryResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Thin JSON client; the fetch implementation is injectable for tests. */
export class ApiClient {
  constructor(
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
    private base = "",
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const payload = await res.json();
        if (payload && typeof payload.error === "string") detail = payload.error;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  async meta(): Promise<Meta> {
    const res = await this.fetchImpl(this.base + "/api/meta");
    if (!res.ok) throw new ApiError(res.status, res.statusText);
    return (await res.json()) as Meta;
  }

  async queryCandidates(
    start: Marker,
    target: Marker,
    style: number | null,
    durationLabel: string | null,
  ): Promise<Candidate[]> {
    const body: Record<string, unknown> = {
      start: { pos: [start.pos.x, start.pos.z], facing: [start.facing.x, start.facing.z] },
      target: { pos: [target.pos.x, target.pos.z], facing: [target.facing.x, target.facing.z] },
    };
    if (style !== null) body.style = style;
    if (durationLabel !== null) body.duration_label = durationLabel;
    const out = await this.post<QueryResponse>("/api/gallery/query", body);
    return out.candidates;
  }

  async inbetween(
    start: Marker,
    target: Marker,
    chain: number[][],
    style: number,
    rootHeight = 0.8,
    nJoints = 22,
  ): Promise<InbetweenResponse> {
    const identity = Array.from({ length: nJoints }, () => [1, 0, 0, 0]);
    const pose = (m: Marker) => ({
      root_pos: [m.pos.x, rootHeight, m.pos.z],
      root_facing: [m.facing.x, m.facing.z],
      rotations: identity,
    });
    return this.post<InbetweenResponse>("/api/inbetween", {
      start: pose(start),
      target: pose(target),
      chain,
      style,
    });
  }
}
