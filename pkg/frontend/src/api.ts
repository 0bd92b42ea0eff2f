// Typed client for the service's /v1 JSON API. Thin fetch wrappers only;
// all session logic lives in session.ts.

export interface Candidate {
  token: string;
  probability: number;
}

export interface ModelInfo {
  architecture: string;
  vocab_size: number;
  embed_size: number;
  hidden_size: number;
  config: Record<string, unknown>;
  format_version: number;
}

export interface PredictResponse {
  candidates: Candidate[];
  warnings: string[];
  model_info: ModelInfo;
}

export interface CompleteResponse {
  generated: string[];
  terminated_by_eos: boolean;
  warnings: string[];
}

export interface ScoreResponse {
  per_token_log_prob: number[];
  perplexity: number;
  tokens: string[];
  warnings: string[];
}

export interface VocabResponse {
  tokens: string[];
  total: number;
}

// Non-2xx responses carry {code, message, details}; network failures are
// reported with status 0 and code "network".
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface Client {
  predict(context: string[], k?: number, signal?: AbortSignal): Promise<PredictResponse>;
  complete(context: string[], steps?: number, signal?: AbortSignal): Promise<CompleteResponse>;
  score(sentence: string[], signal?: AbortSignal): Promise<ScoreResponse>;
  vocab(prefix?: string, limit?: number, signal?: AbortSignal): Promise<VocabResponse>;
  info(): Promise<ModelInfo>;
}

const request = async <T>(
  method: string,
  url: string,
  body?: unknown,
  signal?: AbortSignal,
): Promise<T> => {
  let res: Response;
  try {
    res = await fetch(url, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
      signal,
    });
  } catch (err) {
    if ((err as Error).name === "AbortError") throw err;
    throw new ApiError(0, "network", `cannot reach service: ${(err as Error).message}`);
  }
  const payload: unknown = await res.json().catch(() => null);
  if (!res.ok) {
    const record = (payload ?? {}) as Record<string, unknown>;
    const code = typeof record.code === "string" ? record.code : "http_error";
    const message = typeof record.message === "string" ? record.message : `HTTP ${res.status}`;
    const details = (record.details ?? {}) as Record<string, unknown>;
    throw new ApiError(res.status, code, message, details);
  }
  return payload as T;
};

export const createClient = (base = ""): Client => ({
  predict: (context, k = 10, signal) =>
    request("POST", `${base}/v1/predict`, { context, k }, signal),
  complete: (context, steps = 4, signal) =>
    request("POST", `${base}/v1/complete`, { context, steps }, signal),
  score: (sentence, signal) =>
    request("POST", `${base}/v1/score`, { sentence }, signal),
  vocab: (prefix = "", limit = 50, signal) =>
    request("GET", `${base}/v1/vocab?prefix=${encodeURIComponent(prefix)}&limit=${limit}`, undefined, signal),
  info: () => request("GET", `${base}/v1/info`),
});
