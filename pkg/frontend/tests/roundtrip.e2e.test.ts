// @vitest-environment jsdom
// Scripted browser session against a live service process (spawned by
// tests/setup/server.ts over the cached demo checkpoint). jsdom supplies the
// DOM; requests go over real HTTP.

import { beforeEach, describe, expect, inject, it } from "vitest";
import { boot } from "../src/main";
import { Session, contextKey } from "../src/session";
import { shellBody, until } from "./helpers";

const baseUrl = inject("baseUrl");

const ready = (s: Session): boolean =>
  s.state.candidatesFor === contextKey(s.state.context) && s.state.pending === 0;

const $ = (sel: string): HTMLElement => {
  const node = document.querySelector(sel);
  if (!node) throw new Error(`no element matches ${sel}`);
  return node as HTMLElement;
};

const $$ = (sel: string): HTMLElement[] =>
  Array.from(document.querySelectorAll(sel)) as HTMLElement[];

const bootReady = async (): Promise<Session> => {
  const session = boot(baseUrl, document);
  await until(
    () => session.state.info !== null && ready(session),
    "initial candidates");
  return session;
};

const submitTokens = (text: string): void => {
  ($("#token-input") as HTMLInputElement).value = text;
  $("#add-form").dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
};

beforeEach(() => {
  document.body.innerHTML = shellBody();
});

describe("scripted session", () => {
  it("builds a five-token context by clicking and accepting a gap preview", async () => {
    const session = await bootReady();

    // sentence start: no committed tokens, ranked list already on display
    expect($$(".chip")).toHaveLength(0);
    expect(session.state.context).toEqual([]);
    const rows = $$(".cand-btn");
    expect(rows.length).toBeGreaterThan(0);

    // click the top-ranked candidate three times, waiting out each resync
    for (let n = 1; n <= 3; n += 1) {
      $(".cand-btn").click();
      await until(
        () => session.state.context.length === n && ready(session),
        `resync after click ${n}`);
    }
    expect($$(".chip")).toHaveLength(3);

    // preview a gap of width 2, then accept both proposed tokens
    ($("#gap-width") as HTMLInputElement).value = "2";
    $("#gap-width").dispatchEvent(new Event("change", { bubbles: true }));
    expect(session.state.gapWidth).toBe(2);
    $("#preview-btn").click();
    await until(() => session.state.ghost !== null, "gap preview");
    const ghosts = $$(".ghost-token");
    expect(ghosts).toHaveLength(2);

    ghosts[1].click(); // accept tokens 1..2
    await until(
      () => session.state.context.length === 5 && ready(session),
      "resync after accepting the preview");

    expect($$(".chip")).toHaveLength(5);
    expect(session.state.ghost).toBeNull();
    expect(session.state.perplexity).not.toBeNull();
    expect(session.state.banners).toEqual([]);
    expect(session.state.staleApplied).toBe(0);
  });

  it("ranks the epithet first after a complete dedication-formula prefix", async () => {
    const session = await bootReady();
    submitTokens("n kA n wr swnw pnTw");
    await until(
      () => session.state.context.length === 6 && ready(session),
      "ranked list for the dedication prefix");

    expect(session.state.candidates[0].token).toBe("mAa");
    expect($(".cand-btn").textContent).toBe("mAa");
    expect(session.state.candidates[0].probability).toBeGreaterThan(0.5);
    expect(session.state.staleApplied).toBe(0);
  });

  it("flags out-of-vocabulary input inline without raising an error banner", async () => {
    const session = await bootReady();
    submitTokens("xyzzy123");
    await until(
      () => session.state.context.length === 1 && ready(session),
      "resync after the unknown token");

    expect(session.state.warnings.some((w) => w.includes("out of vocabulary"))).toBe(true);
    const lines = $$(".warning-line");
    expect(lines.some((l) => l.textContent?.includes("out of vocabulary"))).toBe(true);
    expect(session.state.banners).toEqual([]);
    expect($$(".chip")).toHaveLength(1); // the token is committed, as typed
  });

  it("treats a width-1 accepted preview exactly like clicking the top candidate", async () => {
    const session = await bootReady();
    const top = session.state.candidates[0].token;

    ($("#gap-width") as HTMLInputElement).value = "1";
    $("#gap-width").dispatchEvent(new Event("change", { bubbles: true }));
    $("#preview-btn").click();
    await until(() => session.state.ghost !== null, "width-1 preview");

    expect(session.state.ghost?.tokens).toEqual([top]);
    $(".ghost-token").click();
    await until(
      () => session.state.context.length === 1 && ready(session),
      "resync after accepting");

    expect(session.state.context).toEqual([top]);
    expect($$(".chip").map((c) => c.textContent)).toEqual([top]);
    expect(session.state.staleApplied).toBe(0);
  });

  it("undoes and redoes through the live service without desynchronizing", async () => {
    const session = await bootReady();
    submitTokens("Htp dj nswt");
    await until(
      () => session.state.context.length === 3 && ready(session),
      "committed offering prefix");
    const listFor3 = session.state.candidatesFor;

    $("#undo-btn").click();
    await until(
      () => session.state.context.length === 0 && ready(session),
      "undo back to the empty context");
    expect(session.state.candidatesFor).toBe(contextKey([]));

    $("#redo-btn").click();
    await until(
      () => session.state.context.length === 3 && ready(session),
      "redo restores the prefix");
    expect(session.state.candidatesFor).toBe(listFor3);
    expect(session.state.staleApplied).toBe(0);
  });
});
