export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
/** Thin JSON client; the fetch implementation is injectable for tests. */
export class ApiClient {
    constructor(fetchImpl = (u, i) => fetch(u, i), base = "") {
        this.fetchImpl = fetchImpl;
        this.base = base;
    }
    async post(path, body) {
        const res = await this.fetchImpl(this.base + path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!res.ok) {
            let detail = res.statusText;
            try {
                const payload = await res.json();
                if (payload && typeof payload.error === "string")
                    detail = payload.error;
            }
            catch {
                /* non-JSON error body */
            }
            throw new ApiError(res.status, detail);
        }
        return (await res.json());
    }
    async meta() {
        const res = await this.fetchImpl(this.base + "/api/meta");
        if (!res.ok)
            throw new ApiError(res.status, res.statusText);
        return (await res.json());
    }
    async queryCandidates(start, target, style, durationLabel) {
        const body = {
            start: { pos: [start.pos.x, start.pos.z], facing: [start.facing.x, start.facing.z] },
            target: { pos: [target.pos.x, target.pos.z], facing: [target.facing.x, target.facing.z] },
        };
        if (style !== null)
            body.style = style;
        if (durationLabel !== null)
            body.duration_label = durationLabel;
        const out = await this.post("/api/gallery/query", body);
        return out.candidates;
    }
    async inbetween(start, target, chain, style, rootHeight = 0.8, nJoints = 22) {
        const identity = Array.from({ length: nJoints }, () => [1, 0, 0, 0]);
        const pose = (m) => ({
            root_pos: [m.pos.x, rootHeight, m.pos.z],
            root_facing: [m.facing.x, m.facing.z],
            rotations: identity,
        });
        return this.post("/api/inbetween", {
            start: pose(start),
            target: pose(target),
            chain,
            style,
        });
    }
}
