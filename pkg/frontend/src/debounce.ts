/**
 * Trailing-edge debouncer: `trigger` schedules `fn` after `ms` of
 * quiet; re-triggering within the window restarts it, so a burst of
 * marker edits settles into exactly one call.
 */
export function createDebouncer(ms: number, fn: () => void): {
  trigger: () => void;
  cancel: () => void;
} {
  let timer: ReturnType<typeof setTimeout> | null = null;

  const trigger = (): void => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn();
    }, ms);
  };

  const cancel = (): void => {
    if (timer !== null) {
      clearTimeout(timer);
      timer = null;
    }
  };

  return { trigger, cancel };
}
