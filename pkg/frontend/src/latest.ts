/**
 * Monotonic request sequencing: a response is applied only when it
 * belongs to the newest request, so slow responses can never overwrite
 * newer state.
 */
export class LatestGuard {
  private counter = 0;

  next(): number {
    this.counter += 1;
    return this.counter;
  }

  isLatest(id: number): boolean {
    return id === this.counter;
  }
}
