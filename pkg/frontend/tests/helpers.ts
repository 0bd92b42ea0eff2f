// Shared bits for driving the shell in a test DOM.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

// The static shell's body markup, scripts stripped, ready for injection.
export const shellBody = (): string => {
  const here = dirname(fileURLToPath(import.meta.url));
  const html = readFileSync(join(here, "..", "index.html"), "utf8");
  const match = html.match(/<body>([\s\S]*)<\/body>/);
  if (!match) throw new Error("index.html: no <body> section");
  return match[1].replace(/<script[\s\S]*?<\/script>/g, "");
};

export const until = async (
  pred: () => boolean,
  what: string,
  ms = 15_000,
): Promise<void> => {
  const t0 = Date.now();
  while (!pred()) {
    if (Date.now() - t0 > ms) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 10));
  }
};

// Let queued microtasks and zero-delay timers run.
export const flush = (): Promise<void> => new Promise((r) => setTimeout(r, 0));
