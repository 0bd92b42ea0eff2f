// DOM rendering: paints SessionState into the static shell from index.html.
// Rebuilt wholesale on every change; all content is set via textContent so
// token strings can never be interpreted as markup.

import { SessionState, contextKey } from "./session";

export interface Handlers {
  onCandidate(index: number): void;
  onAcceptGhost(index: number): void;
  onRejectGhost(): void;
  onDismissBanner(id: number): void;
}

const el = <K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] => {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
};

const byId = (doc: Document, id: string): HTMLElement => {
  const node = doc.getElementById(id);
  if (!node) throw new Error(`missing shell element #${id}`);
  return node;
};

const renderInfo = (doc: Document, state: SessionState): void => {
  const box = byId(doc, "model-info");
  const info = state.info;
  box.textContent = info
    ? `${info.architecture} · vocab ${info.vocab_size} · ` +
      `${info.embed_size}/${info.hidden_size}` +
      (state.pending > 0 ? " · …" : "")
    : "connecting…";
};

const renderBanners = (doc: Document, state: SessionState, handlers: Handlers): void => {
  const box = byId(doc, "banners");
  box.replaceChildren();
  for (const banner of state.banners) {
    const row = el(doc, "div", "banner");
    row.appendChild(el(doc, "span", "banner-msg", banner.message));
    const dismiss = el(doc, "button", "banner-dismiss", "×");
    dismiss.type = "button";
    dismiss.setAttribute("aria-label", "dismiss");
    dismiss.addEventListener("click", () => handlers.onDismissBanner(banner.id));
    row.appendChild(dismiss);
    box.appendChild(row);
  }
};

const renderContext = (doc: Document, state: SessionState, handlers: Handlers): void => {
  const strip = byId(doc, "context-strip");
  strip.replaceChildren();
  state.context.forEach((token, i) => {
    const chip = el(doc, "span", "chip", token);
    const lp = state.tokenLogProbs[i];
    if (lp !== undefined) chip.title = `log p ${lp.toFixed(4)}`;
    strip.appendChild(chip);
  });
  const ghost = state.ghost;
  if (ghost && ghost.forContext === contextKey(state.context)) {
    ghost.tokens.forEach((token, i) => {
      const btn = el(doc, "button", "ghost-token", token);
      btn.type = "button";
      btn.title = `accept tokens 1..${i + 1}`;
      btn.addEventListener("click", () => handlers.onAcceptGhost(i));
      strip.appendChild(btn);
    });
    if (ghost.endsSentence) {
      strip.appendChild(el(doc, "span", "ghost-eos", "(end of sentence)"));
    }
    const reject = el(doc, "button", undefined, "reject");
    reject.id = "ghost-reject";
    reject.type = "button";
    reject.addEventListener("click", () => handlers.onRejectGhost());
    strip.appendChild(reject);
  }
  if (!state.context.length && !ghost) {
    strip.appendChild(el(doc, "span", "empty-note", "(empty: sentence start)"));
  }
};

const renderWarnings = (doc: Document, state: SessionState): void => {
  const box = byId(doc, "warnings");
  box.replaceChildren();
  for (const warning of state.warnings) {
    box.appendChild(el(doc, "div", "warning-line", warning));
  }
};

const renderSuggestions = (doc: Document, state: SessionState): void => {
  const list = byId(doc, "vocab-list");
  list.replaceChildren();
  for (const token of state.suggestions) {
    const option = doc.createElement("option");
    option.value = token;
    list.appendChild(option);
  }
};

const renderMeter = (doc: Document, state: SessionState): void => {
  const label = byId(doc, "ppl-label");
  const fill = byId(doc, "ppl-fill");
  if (state.perplexity === null) {
    label.textContent = "perplexity n/a";
    fill.style.width = "0%";
    fill.className = "";
    return;
  }
  label.textContent = `perplexity ${state.perplexity.toFixed(4)}`;
  // Log scale against the vocabulary size: a model reduced to guessing
  // uniformly would peg the meter.
  const ceiling = Math.log(Math.max(2, state.info?.vocab_size ?? 1000));
  const frac = Math.min(1, Math.max(0, Math.log(state.perplexity) / ceiling));
  fill.style.width = `${(frac * 100).toFixed(1)}%`;
  fill.className = frac > 0.66 ? "high" : frac > 0.33 ? "mid" : "";
};

const renderCandidates = (doc: Document, state: SessionState, handlers: Handlers): void => {
  const table = byId(doc, "candidates");
  table.classList.toggle(
    "stale-pending",
    state.candidatesFor !== null && state.candidatesFor !== contextKey(state.context),
  );
  const body = byId(doc, "candidate-rows");
  body.replaceChildren();
  state.candidates.forEach((row, i) => {
    const tr = el(doc, "tr", "candidate-row");

    const tokenCell = el(doc, "td", "cand-token");
    const btn = el(doc, "button", "cand-btn", row.token);
    btn.type = "button";
    btn.title = "append to context";
    btn.addEventListener("click", () => handlers.onCandidate(i));
    tokenCell.appendChild(btn);
    tr.appendChild(tokenCell);

    const probCell = el(doc, "td", "cand-prob");
    probCell.appendChild(el(doc, "span", "num", row.probability.toFixed(4)));
    const probTrack = el(doc, "div", "bar-track");
    const probBar = el(doc, "div", "cand-bar");
    probBar.style.width = `${(row.probability * 100).toFixed(2)}%`;
    probTrack.appendChild(probBar);
    probCell.appendChild(probTrack);
    tr.appendChild(probCell);

    const cumCell = el(doc, "td", "cand-cum");
    cumCell.appendChild(el(doc, "span", "num", row.cumulative.toFixed(4)));
    const cumTrack = el(doc, "div", "bar-track");
    const cumBar = el(doc, "div", "cum-bar");
    cumBar.style.width = `${(Math.min(1, row.cumulative) * 100).toFixed(2)}%`;
    cumTrack.appendChild(cumBar);
    cumCell.appendChild(cumTrack);
    tr.appendChild(cumCell);

    body.appendChild(tr);
  });
};

const syncControls = (doc: Document, state: SessionState): void => {
  (byId(doc, "undo-btn") as HTMLButtonElement).disabled = !state.undo.length;
  (byId(doc, "redo-btn") as HTMLButtonElement).disabled = !state.redo.length;
  (byId(doc, "pop-btn") as HTMLButtonElement).disabled = !state.context.length;
  (byId(doc, "clear-btn") as HTMLButtonElement).disabled = !state.context.length;
  const gap = byId(doc, "gap-width") as HTMLInputElement;
  if (doc.activeElement !== gap) gap.value = String(state.gapWidth);
};

export const render = (doc: Document, state: SessionState, handlers: Handlers): void => {
  renderInfo(doc, state);
  renderBanners(doc, state, handlers);
  renderContext(doc, state, handlers);
  renderWarnings(doc, state);
  renderSuggestions(doc, state);
  renderMeter(doc, state);
  renderCandidates(doc, state, handlers);
  syncControls(doc, state);
};
