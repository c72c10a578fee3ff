/**
 * Trailing-edge debouncer: `trigger` schedules `fn` after `ms` of
 * quiet; re-triggering within the window restarts it, so a burst of
 * marker edits settles into exactly one call.
 */
export function createDebouncer(ms, fn) {
    let timer = null;
    const trigger = () => {
        if (timer !== null)
            clearTimeout(timer);
        timer = setTimeout(() => {
            timer = null;
            fn();
        }, ms);
    };
    const cancel = () => {
        if (timer !== null) {
            clearTimeout(timer);
            timer = null;
        }
    };
    return { trigger, cancel };
}
