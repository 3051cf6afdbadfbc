export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  flush(): void;
}

/** Trailing-edge debounce; flush() runs a pending call immediately. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs = 150,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: A | null = null;

  const debounced = (...args: A): void => {
    lastArgs = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      const held = lastArgs;
      lastArgs = null;
      if (held !== null) fn(...held);
    }, waitMs);
  };
  debounced.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    lastArgs = null;
  };
  debounced.flush = () => {
    if (timer === null) return;
    clearTimeout(timer);
    timer = null;
    const held = lastArgs;
    lastArgs = null;
    if (held !== null) fn(...held);
  };
  return debounced;
}
