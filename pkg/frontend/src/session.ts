// Client-side session: the committed context, its undo history, and
// sequence-guarded fetches. Every context mutation is synchronous and
// immediately refetches, so a response is applied only when it still
// answers the context on display; anything late is discarded, never drawn.

import { ApiError, Client, ModelInfo } from "./api";

export interface CandidateRow {
  token: string;
  probability: number;
  cumulative: number; // probability mass through this row, in served order
}

export interface GhostPreview {
  tokens: string[];
  endsSentence: boolean;
  forContext: string; // context key the preview was computed against
}

export interface Banner {
  id: number;
  message: string;
}

export interface SessionState {
  context: string[];
  undo: string[][];
  redo: string[][];
  candidates: CandidateRow[];
  candidatesFor: string | null; // context key the list corresponds to
  ghost: GhostPreview | null;
  gapWidth: number;
  k: number;
  perplexity: number | null; // prefix perplexity of the committed context
  tokenLogProbs: number[]; // log-prob per committed token, same order
  suggestions: string[]; // vocabulary matches for the input prefix
  warnings: string[];
  banners: Banner[];
  info: ModelInfo | null;
  pending: number; // requests in flight (render hint only)
  staleDiscarded: number; // late responses dropped by the sequence guard
  staleApplied: number; // guard failures; must stay zero
}

export const contextKey = (tokens: string[]): string => JSON.stringify(tokens);

const MAX_GAP_WIDTH = 1024; // service rejects larger completion budgets

type Endpoint = "predict" | "complete" | "score" | "vocab";

const ENDPOINTS: Endpoint[] = ["predict", "complete", "score", "vocab"];

export class Session {
  readonly state: SessionState;
  private seq: Record<Endpoint, number> = { predict: 0, complete: 0, score: 0, vocab: 0 };
  private inflight: Partial<Record<Endpoint, AbortController>> = {};
  private bannerSeq = 0;

  constructor(
    private api: Client,
    private onChange: () => void = () => {},
  ) {
    this.state = {
      context: [],
      undo: [],
      redo: [],
      candidates: [],
      candidatesFor: null,
      ghost: null,
      gapWidth: 4,
      k: 10,
      perplexity: null,
      tokenLogProbs: [],
      suggestions: [],
      warnings: [],
      banners: [],
      info: null,
      pending: 0,
      staleDiscarded: 0,
      staleApplied: 0,
    };
  }

  async start(): Promise<void> {
    try {
      this.state.info = await this.api.info();
      this.onChange();
    } catch (err) {
      this.fail(err);
    }
    await this.refresh();
  }

  // -- context mutations -----------------------------------------------------
  // All synchronous: the tokens land before this function returns, then a
  // refetch is issued. Rapid clicks therefore append exactly once each.

  appendTokens(tokens: string[]): Promise<void> {
    const clean = tokens.map((t) => t.trim()).filter((t) => t.length > 0);
    if (!clean.length) return Promise.resolve();
    return this.commit([...this.state.context, ...clean]);
  }

  clickCandidate(index: number): Promise<void> {
    const row = this.state.candidates[index];
    if (!row) return Promise.resolve();
    return this.commit([...this.state.context, row.token]);
  }

  popToken(): Promise<void> {
    if (!this.state.context.length) return Promise.resolve();
    return this.commit(this.state.context.slice(0, -1));
  }

  clearContext(): Promise<void> {
    if (!this.state.context.length) return Promise.resolve();
    return this.commit([]);
  }

  undoStep(): Promise<void> {
    const prev = this.state.undo.pop();
    if (prev === undefined) return Promise.resolve();
    this.state.redo.push([...this.state.context]);
    return this.applyContext(prev);
  }

  redoStep(): Promise<void> {
    const next = this.state.redo.pop();
    if (next === undefined) return Promise.resolve();
    this.state.undo.push([...this.state.context]);
    return this.applyContext(next);
  }

  private commit(next: string[]): Promise<void> {
    this.state.undo.push([...this.state.context]);
    this.state.redo = [];
    return this.applyContext(next);
  }

  private applyContext(next: string[]): Promise<void> {
    this.state.context = next;
    this.state.ghost = null; // any preview answered the old context
    this.invalidateInflight();
    this.onChange();
    return this.refresh();
  }

  // Bump every sequence counter so responses already in flight can never be
  // applied to the new context, then cancel what can be cancelled.
  private invalidateInflight(): void {
    for (const endpoint of ENDPOINTS) {
      if (endpoint === "vocab") continue; // prefix suggestions are context-free
      this.seq[endpoint] += 1;
      this.inflight[endpoint]?.abort();
      delete this.inflight[endpoint];
    }
  }

  // -- gap preview -----------------------------------------------------------

  async previewGap(): Promise<void> {
    const forContext = contextKey(this.state.context);
    const res = await this.guarded("complete", (signal) =>
      this.api.complete(this.state.context, this.state.gapWidth, signal));
    if (!res) return;
    if (contextKey(this.state.context) !== forContext) {
      this.state.staleApplied += 1; // the sequence guard should have caught this
      this.onChange();
      return;
    }
    this.state.ghost = {
      tokens: res.generated,
      endsSentence: res.terminated_by_eos,
      forContext,
    };
    this.mergeWarnings(res.warnings);
    this.onChange();
  }

  // Accepting ghost token i commits the whole proposed prefix up through i.
  acceptGhost(index: number): Promise<void> {
    const ghost = this.state.ghost;
    if (!ghost || ghost.forContext !== contextKey(this.state.context)) {
      return Promise.resolve();
    }
    const take = ghost.tokens.slice(0, index + 1);
    if (!take.length) return Promise.resolve();
    return this.commit([...this.state.context, ...take]);
  }

  rejectGhost(): void {
    if (!this.state.ghost) return;
    this.state.ghost = null;
    this.onChange();
  }

  // -- settings, suggestions, banners ------------------------------------------

  setGapWidth(width: number): void {
    const clamped = Math.max(1, Math.min(MAX_GAP_WIDTH, Math.trunc(width) || 1));
    this.state.gapWidth = clamped;
    this.onChange();
  }

  setK(k: number): Promise<void> {
    this.state.k = Math.max(1, Math.trunc(k) || 1);
    this.onChange();
    return this.refresh();
  }

  async suggest(prefix: string): Promise<void> {
    if (!prefix) {
      this.state.suggestions = [];
      this.onChange();
      return;
    }
    const res = await this.guarded("vocab", (signal) =>
      this.api.vocab(prefix, 20, signal));
    if (!res) return;
    this.state.suggestions = res.tokens;
    this.onChange();
  }

  dismissBanner(id: number): void {
    this.state.banners = this.state.banners.filter((b) => b.id !== id);
    this.onChange();
  }

  // -- fetching ----------------------------------------------------------------

  async refresh(): Promise<void> {
    const forContext = contextKey(this.state.context);
    await Promise.all([
      this.fetchCandidates(forContext),
      this.fetchScore(forContext),
    ]);
  }

  private async fetchCandidates(forContext: string): Promise<void> {
    const res = await this.guarded("predict", (signal) =>
      this.api.predict(this.state.context, this.state.k, signal));
    if (!res) return;
    if (contextKey(this.state.context) !== forContext) {
      this.state.staleApplied += 1;
      this.onChange();
      return;
    }
    let mass = 0;
    this.state.candidates = res.candidates.map((c) => {
      mass += c.probability;
      return { token: c.token, probability: c.probability, cumulative: mass };
    });
    this.state.candidatesFor = forContext;
    this.state.warnings = [...res.warnings];
    if (!this.state.info) this.state.info = res.model_info;
    this.onChange();
  }

  private async fetchScore(forContext: string): Promise<void> {
    if (!this.state.context.length) {
      this.state.perplexity = null;
      this.state.tokenLogProbs = [];
      this.onChange();
      return;
    }
    const res = await this.guarded("score", (signal) =>
      this.api.score(this.state.context, signal));
    if (!res) return;
    if (contextKey(this.state.context) !== forContext) {
      this.state.staleApplied += 1;
      this.onChange();
      return;
    }
    // The service scores the sentence as if it ended here (final row is the
    // end marker); the live meter tracks the prefix written so far instead.
    const prefix = res.per_token_log_prob.slice(0, -1);
    const mean = prefix.reduce((a, b) => a + b, 0) / Math.max(1, prefix.length);
    this.state.perplexity = Math.exp(-mean);
    this.state.tokenLogProbs = prefix;
    this.onChange();
  }

  // One in-flight request per endpoint: issuing a new one cancels and
  // supersedes the old. A response is returned to the caller only when its
  // ticket is still the newest for that endpoint.
  private async guarded<T>(
    endpoint: Endpoint,
    issue: (signal: AbortSignal) => Promise<T>,
  ): Promise<T | null> {
    const ticket = ++this.seq[endpoint];
    this.inflight[endpoint]?.abort();
    const controller = new AbortController();
    this.inflight[endpoint] = controller;
    this.state.pending += 1;
    this.onChange();
    try {
      const res = await issue(controller.signal);
      if (ticket !== this.seq[endpoint]) {
        this.state.staleDiscarded += 1;
        return null;
      }
      return res;
    } catch (err) {
      if (ticket !== this.seq[endpoint] || (err as Error).name === "AbortError") {
        this.state.staleDiscarded += 1; // superseded or cancelled; never surfaced
        return null;
      }
      this.fail(err);
      return null;
    } finally {
      this.state.pending -= 1;
      if (this.inflight[endpoint] === controller) delete this.inflight[endpoint];
      this.onChange();
    }
  }

  private mergeWarnings(extra: string[]): void {
    for (const w of extra) {
      if (!this.state.warnings.includes(w)) this.state.warnings.push(w);
    }
  }

  private fail(err: unknown): void {
    const message = err instanceof ApiError
      ? `${err.code}: ${err.message}`
      : `unexpected error: ${err instanceof Error ? err.message : String(err)}`;
    const last = this.state.banners[this.state.banners.length - 1];
    if (!last || last.message !== message) {
      this.state.banners.push({ id: ++this.bannerSeq, message });
    }
    this.onChange();
  }
}
