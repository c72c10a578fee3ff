/**
 * Monotonic request sequencing: a response is applied only when it
 * belongs to the newest request, so slow responses can never overwrite
 * newer state.
 */
export class LatestGuard {
    constructor() {
        this.counter = 0;
    }
    next() {
        this.counter += 1;
        return this.counter;
    }
    isLatest(id) {
        return id === this.counter;
    }
}
