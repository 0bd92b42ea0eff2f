"""HTTP inference service over a loaded checkpoint.

Endpoints (JSON in/out, versioned under /v1):

    POST /v1/predict   {context|line, k}      -> ranked candidates
    POST /v1/complete  {context|line, steps}  -> greedy continuation
    POST /v1/score     {sentence|line}        -> per-token log-probs, ppl
    GET  /v1/vocab?prefix=&limit=             -> matching tokens
    GET  /v1/info                             -> model card
    GET  /healthz                             -> readiness

Handlers are pure functions of (bundle, request) so they are testable
without sockets; the HTTP layer only routes, parses, and serializes.
Errors return {code, message, details}. Context tokens outside the
vocabulary are mapped to UNK and echoed back in a warnings array rather
than rejected. Until the checkpoint is attached every endpoint except
/healthz answers 503, and /healthz reports loading status.

The server also serves a static single-page UI from an optional directory
under /ui (the UI consumes only the /v1 API).
"""

from __future__ import annotations

import json
import mimetypes
import sys
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .checkpoint import load_checkpoint
from .corpus import BOS_ID, EOS_ID, UNK_ID, UNK_TOKEN, EmptyLine, tokenize_line
from .evaluation import sentence_score
from .models import KOutOfRange, greedy_complete, predict_topk

MAX_COMPLETION_STEPS = 1024
MAX_CONTEXT_TOKENS = 4096
VOCAB_DEFAULT_LIMIT = 100


@dataclass
class ModelBundle:
    """Immutable inference state shared by all request handlers."""
    params: object
    vocab: object
    info: dict

    @classmethod
    def from_checkpoint_path(cls, path) -> "ModelBundle":
        ckpt = load_checkpoint(path)
        vocab = ckpt.vocabulary()
        info = {
            "architecture": ckpt.architecture,
            "vocab_size": ckpt.dims.vocab_size,
            "embed_size": ckpt.dims.embed_size,
            "hidden_size": ckpt.dims.hidden_size,
            "config": ckpt.config,
            "format_version": 1,
        }
        return cls(params=ckpt.to_params(), vocab=vocab, info=info)


class RequestError(ValueError):
    def __init__(self, code, message, details=None):
        super().__init__(message)
        self.code = code
        self.details = details or {}

    def body(self) -> dict:
        return {"code": self.code, "message": str(self), "details": self.details}


def _parse_body(raw: bytes) -> dict:
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RequestError("bad_json", f"request body is not valid JSON: {exc}")
    if not isinstance(body, dict):
        raise RequestError("bad_json", "request body must be a JSON object")
    return body


def _check_fields(body: dict, allowed):
    unknown = set(body) - set(allowed)
    if unknown:
        raise RequestError("unknown_field",
                           f"unknown field(s): {', '.join(sorted(unknown))}",
                           {"allowed": sorted(allowed)})


def _int_field(body: dict, name: str, default=None, lo=None, hi=None):
    if name not in body:
        if default is None:
            raise RequestError("missing_field", f"field {name!r} is required")
        return default
    val = body[name]
    if isinstance(val, bool) or not isinstance(val, int):
        raise RequestError("bad_field", f"field {name!r} must be an integer",
                           {"got": repr(val)})
    if (lo is not None and val < lo) or (hi is not None and val > hi):
        code = "k_out_of_range" if name == "k" else "out_of_range"
        raise RequestError(code, f"field {name!r} must lie in [{lo}, {hi}]",
                           {"got": val})
    return val


def _token_list(body: dict, field_name: str, *, required: bool):
    """Token list from either a token array or a raw MdC line field."""
    has_tokens = field_name in body
    has_line = "line" in body
    if has_tokens and has_line:
        raise RequestError("bad_field",
                           f"provide either {field_name!r} or 'line', not both")
    if has_line:
        if not isinstance(body["line"], str):
            raise RequestError("bad_field", "field 'line' must be a string")
        try:
            return tokenize_line(body["line"])
        except EmptyLine:
            return []
    if not has_tokens:
        if required:
            raise RequestError("missing_field", f"field {field_name!r} is required")
        return []
    tokens = body[field_name]
    if (not isinstance(tokens, list)
            or any(not isinstance(t, str) for t in tokens)):
        raise RequestError("bad_field",
                           f"field {field_name!r} must be a list of strings")
    if len(tokens) > MAX_CONTEXT_TOKENS:
        raise RequestError("out_of_range",
                           f"at most {MAX_CONTEXT_TOKENS} context tokens")
    return tokens


def _encode_context(bundle, tokens):
    """BOS-prefixed ids plus warnings for UNK-mapped tokens."""
    ids = [BOS_ID]
    warnings = []
    for pos, tok in enumerate(tokens):
        tid = bundle.vocab.token_to_id.get(tok, UNK_ID)
        if tid == UNK_ID and tok != UNK_TOKEN:
            warnings.append(f"token {pos} {tok!r} is out of vocabulary, "
                            f"mapped to {UNK_TOKEN}")
        ids.append(tid)
    return ids, warnings


# -- pure endpoint handlers ---------------------------------------------------

def handle_predict(bundle: ModelBundle, body: dict) -> dict:
    _check_fields(body, ("context", "line", "k"))
    tokens = _token_list(body, "context", required=False)
    k = _int_field(body, "k", default=5, lo=1, hi=bundle.vocab.size)
    ids, warnings = _encode_context(bundle, tokens)
    try:
        ranked = predict_topk(bundle.params, ids, k)
    except KOutOfRange as exc:
        raise RequestError("k_out_of_range", str(exc))
    return {
        "candidates": [
            {"token": bundle.vocab.token(tid), "probability": prob}
            for tid, prob in ranked
        ],
        "warnings": warnings,
        "model_info": bundle.info,
    }


def handle_complete(bundle: ModelBundle, body: dict) -> dict:
    _check_fields(body, ("context", "line", "steps"))
    tokens = _token_list(body, "context", required=False)
    steps = _int_field(body, "steps", default=4, lo=1, hi=MAX_COMPLETION_STEPS)
    ids, warnings = _encode_context(bundle, tokens)
    generated = greedy_complete(bundle.params, ids, steps)
    terminated = bool(generated) and generated[-1] == EOS_ID
    if terminated:
        generated = generated[:-1]
    return {
        "generated": [bundle.vocab.token(t) for t in generated],
        "terminated_by_eos": terminated,
        "warnings": warnings,
    }


def handle_score(bundle: ModelBundle, body: dict) -> dict:
    _check_fields(body, ("sentence", "line"))
    tokens = _token_list(body, "sentence", required=True)
    if not tokens and "line" not in body:
        raise RequestError("bad_field", "field 'sentence' must not be empty")
    if not tokens:
        raise RequestError("bad_field", "field 'line' tokenized to nothing")
    ids, warnings = _encode_context(bundle, tokens)
    per_token, ppl = sentence_score(bundle.params, ids + [EOS_ID])
    return {
        "per_token_log_prob": per_token,
        "perplexity": ppl,
        "tokens": tokens + ["</s>"],
        "warnings": warnings,
    }


def handle_vocab(bundle: ModelBundle, query: dict) -> dict:
    prefix = query.get("prefix", [""])[0]
    try:
        limit = int(query.get("limit", [str(VOCAB_DEFAULT_LIMIT)])[0])
    except ValueError:
        raise RequestError("bad_field", "query parameter 'limit' must be an integer")
    if limit < 1:
        raise RequestError("out_of_range", "query parameter 'limit' must be >= 1")
    matches = [t for t in bundle.vocab.id_to_token if t.startswith(prefix)]
    return {"tokens": matches[:limit], "total": len(matches)}


def handle_info(bundle: ModelBundle) -> dict:
    return dict(bundle.info)


def dispatch(bundle, method: str, path: str, query: dict, raw_body: bytes):
    """Route one request; returns (status, response dict). bundle may be
    None while the checkpoint is still loading."""
    if path == "/healthz":
        if bundle is None:
            return 503, {"status": "loading"}
        return 200, {"status": "ok"}
    if bundle is None:
        return 503, {"code": "loading", "message": "checkpoint not loaded yet",
                     "details": {}}
    try:
        if method == "POST":
            if path == "/v1/predict":
                return 200, handle_predict(bundle, _parse_body(raw_body))
            if path == "/v1/complete":
                return 200, handle_complete(bundle, _parse_body(raw_body))
            if path == "/v1/score":
                return 200, handle_score(bundle, _parse_body(raw_body))
            if path in ("/v1/vocab", "/v1/info"):
                return 405, {"code": "method_not_allowed",
                             "message": f"{path} is GET-only", "details": {}}
        elif method == "GET":
            if path == "/v1/vocab":
                return 200, handle_vocab(bundle, query)
            if path == "/v1/info":
                return 200, handle_info(bundle)
            if path in ("/v1/predict", "/v1/complete", "/v1/score"):
                return 405, {"code": "method_not_allowed",
                             "message": f"{path} is POST-only", "details": {}}
        return 404, {"code": "unknown_endpoint",
                     "message": f"no handler for {method} {path}", "details": {}}
    except RequestError as exc:
        return 400, exc.body()


# -- HTTP layer ---------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "hierolm"

    def log_message(self, fmt, *args):  # route through the server's switch
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    def _send_json(self, status: int, payload: dict):
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _serve_static(self, path: str):
        root = self.server.ui_dir
        if root is None:
            self._send_json(404, {"code": "unknown_endpoint",
                                  "message": "no UI directory configured",
                                  "details": {}})
            return
        rel = path[len("/ui"):].lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            self._send_json(404, {"code": "not_found",
                                  "message": f"no static file {rel!r}",
                                  "details": {}})
            return
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        blob = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _handle(self, method: str):
        parts = urlsplit(self.path)
        if method == "GET" and (parts.path == "/ui" or parts.path.startswith("/ui/")):
            self._serve_static(parts.path)
            return
        raw = b""
        length = int(self.headers.get("Content-Length") or 0)
        if length:
            raw = self.rfile.read(length)
        status, payload = dispatch(self.server.bundle, method, parts.path,
                                   parse_qs(parts.query), raw)
        self._send_json(status, payload)

    def do_GET(self):
        self._handle("GET")

    def do_POST(self):
        self._handle("POST")


class InferenceServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, *, bundle=None, ui_dir=None, verbose=False):
        super().__init__(addr, _Handler)
        self.bundle = bundle
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self.verbose = verbose

    def attach(self, bundle: ModelBundle):
        self.bundle = bundle


def parse_addr(addr: str):
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address {addr!r} must look like HOST:PORT")
    return host, int(port)


def serve(checkpoint_path, addr="127.0.0.1:8321", *, ui_dir=None, verbose=True):
    """Bind, load the checkpoint in the background, serve until interrupted.

    Requests arriving before the load finishes get 503.
    """
    server = InferenceServer(parse_addr(addr), ui_dir=ui_dir, verbose=verbose)

    def _load():
        try:
            server.attach(ModelBundle.from_checkpoint_path(checkpoint_path))
        except Exception as exc:
            print(f"checkpoint load failed: {exc}", file=sys.stderr)
            server.shutdown()

    loader = threading.Thread(target=_load, daemon=True)
    loader.start()
    if verbose:
        print(f"serving on http://{addr}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return server
