import { ApiError } from "./api.js";
import { createDebouncer } from "./debounce.js";
import { LatestGuard } from "./latest.js";
const FACING_SNAP_DEG = 45;
export function snapFacing(dir) {
    const angle = Math.atan2(dir.x, dir.z);
    const step = (FACING_SNAP_DEG * Math.PI) / 180;
    const snapped = Math.round(angle / step) * step;
    return { x: Math.sin(snapped), z: Math.cos(snapped) };
}
function candidateKey(c) {
    return c.ids.map((id) => id.join(":")).join("|");
}
/**
 * Authoring state machine. All mutation goes through methods; every
 * change notifies listeners. Network calls are debounced, and a
 * sequence guard drops stale responses so out-of-order arrivals can
 * never overwrite newer results.
 */
export class AuthoringScene {
    constructor(api, debounceMs = 150) {
        this.api = api;
        this.start = { pos: { x: 0, z: 0 }, facing: { x: 0, z: 1 } };
        this.target = { pos: { x: 0, z: 2 }, facing: { x: 0, z: 1 } };
        this.style = null;
        this.durationFilter = "all";
        this.candidates = [];
        this.selectedKey = null;
        this.queryPending = false;
        this.noMatch = false;
        this.banner = null;
        this.clip = null;
        this.playback = { frame: 0, playing: false };
        this.listeners = [];
        this.guard = new LatestGuard();
        this.clipKey = null;
        this.queryCount = 0;
        this.debouncer = createDebouncer(debounceMs, () => {
            void this.queryNow();
        });
    }
    onChange(fn) {
        this.listeners.push(fn);
    }
    notify() {
        for (const fn of this.listeners)
            fn();
    }
    // ----- marker editing --------------------------------------------- //
    setStart(pos, facing) {
        if (pos)
            this.start.pos = pos;
        if (facing)
            this.start.facing = snapFacing(facing);
        this.invalidate();
    }
    setTarget(pos, facing) {
        if (pos)
            this.target.pos = pos;
        if (facing)
            this.target.facing = snapFacing(facing);
        this.invalidate();
    }
    setStyle(style) {
        this.style = style;
        this.invalidate();
    }
    setDurationFilter(f) {
        this.durationFilter = f;
        this.invalidate();
    }
    /** Marker edits schedule exactly one query per settle. */
    invalidate() {
        this.queryPending = true;
        this.notify();
        this.debouncer.trigger();
    }
    // ----- candidate querying ----------------------------------------- //
    async queryNow() {
        const seq = this.guard.next();
        this.queryCount += 1;
        this.queryPending = true;
        this.notify();
        try {
            const label = this.durationFilter === "all" ? null : this.durationFilter;
            const cands = await this.api.queryCandidates(this.start, this.target, this.style, label);
            if (!this.guard.isLatest(seq))
                return; // stale response, drop
            this.candidates = cands;
            this.noMatch = cands.length === 0;
            this.banner = null;
            if (this.selectedKey !== null &&
                !cands.some((c) => candidateKey(c) === this.selectedKey)) {
                this.selectedKey = null;
            }
        }
        catch (err) {
            if (!this.guard.isLatest(seq))
                return;
            this.banner = err instanceof ApiError
                ? `query failed (${err.status}): ${err.message}`
                : `query failed: ${String(err)}`;
        }
        finally {
            if (this.guard.isLatest(seq)) {
                this.queryPending = false;
                this.notify();
            }
        }
    }
    visibleCandidates() {
        if (this.durationFilter === "all")
            return this.candidates;
        return this.candidates.filter((c) => c.label === this.durationFilter);
    }
    select(c) {
        this.selectedKey = c ? candidateKey(c) : null;
        this.notify();
    }
    selected() {
        if (this.selectedKey === null)
            return null;
        return this.candidates.find((c) => candidateKey(c) === this.selectedKey) ?? null;
    }
    // ----- rollout playback ------------------------------------------- //
    /** Fetch (or reuse) the in-between clip for the selected candidate. */
    async playRollout() {
        const cand = this.selected();
        if (!cand)
            return;
        const key = `${candidateKey(cand)}@${this.style ?? 0}`
            + `@${this.start.pos.x},${this.start.pos.z}`
            + `@${this.target.pos.x},${this.target.pos.z}`;
        if (this.clip !== null && this.clipKey === key) {
            this.playback.playing = true; // cached replay, no re-fetch
            this.notify();
            return;
        }
        try {
            const clip = await this.api.inbetween(this.start, this.target, cand.ids, this.style ?? 0);
            this.clip = clip;
            this.clipKey = key;
            this.playback = { frame: 0, playing: true };
            this.banner = null;
        }
        catch (err) {
            // keep the previous clip; just surface the failure
            this.banner = err instanceof ApiError
                ? `rollout failed (${err.status}): ${err.message}`
                : `rollout failed: ${String(err)}`;
        }
        this.notify();
    }
    scrubberLength() {
        return this.clip ? this.clip.frames.length : 0;
    }
    setFrame(frame) {
        const n = this.scrubberLength();
        if (n === 0)
            return;
        this.playback.frame = Math.min(Math.max(0, Math.floor(frame)), n - 1);
        this.notify();
    }
    pause() {
        this.playback.playing = false;
        this.notify();
    }
    resume() {
        if (this.scrubberLength() > 0) {
            this.playback.playing = true;
            this.notify();
        }
    }
    /** Advance one frame (called by the render loop at clip rate). */
    tick() {
        if (!this.playback.playing || !this.clip)
            return;
        this.playback.frame = (this.playback.frame + 1) % this.clip.frames.length;
        this.notify();
    }
}
