"""Interactive prediction session over a loaded checkpoint.

Commands:
    <tokens...>   append MdC tokens to the context
    ?k            show the top-k next-token candidates (e.g. ?5)
    !n            greedy-complete n steps and append the result (e.g. !3)
    pop           drop the last context token
    score         per-token log-probs and perplexity of the current context
    reset         clear the context
    quit / exit   leave

Malformed commands print usage and keep the session alive. Out-of-vocabulary
tokens are accepted with a warning; the model sees them as UNK.
"""

from __future__ import annotations

import math
import sys

from .corpus import BOS_ID, EOS_TOKEN, UNK_ID, UNK_TOKEN
from .evaluation import sentence_score
from .models import greedy_complete, predict_topk

USAGE = ("commands: <tokens...> | ?k (top-k) | !n (complete n) | pop | "
         "score | reset | quit")


class ReplSession:
    """Pure session state: the command interpreter, no terminal handling."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.context: list = []

    def _ids(self):
        get = self.bundle.vocab.token_to_id.get
        return [BOS_ID] + [get(tok, UNK_ID) for tok in self.context]

    def _append_tokens(self, tokens):
        lines = []
        for tok in tokens:
            if tok not in self.bundle.vocab.token_to_id and tok != UNK_TOKEN:
                lines.append(f"note: {tok!r} is out of vocabulary, model sees {UNK_TOKEN}")
        self.context.extend(tokens)
        lines.append(self._context_line())
        return lines

    def _context_line(self):
        shown = " ".join(self.context) if self.context else "(empty)"
        return f"context [{len(self.context)}]: {shown}"

    def handle(self, line: str) -> list:
        """Interpret one input line; returns output lines."""
        line = line.strip()
        if not line:
            return [self._context_line()]
        if line in ("quit", "exit"):
            raise EOFError
        if line == "reset":
            self.context = []
            return ["context cleared"]
        if line == "pop":
            if not self.context:
                return ["nothing to pop", USAGE]
            dropped = self.context.pop()
            return [f"dropped {dropped!r}", self._context_line()]
        if line == "score":
            if not self.context:
                return ["nothing to score; add tokens first"]
            per_token, _ = sentence_score(self.bundle.params, self._ids())
            out = [f"{lp:10.4f}  {tok}" for tok, lp in zip(self.context, per_token)]
            mean = sum(per_token) / len(per_token)
            out.append(f"mean log-prob {mean:.4f}, prefix perplexity "
                       f"{math.exp(-mean):.4f}")
            return out
        if line.startswith("?"):
            return self._topk(line[1:])
        if line.startswith("!"):
            return self._complete(line[1:])
        return self._append_tokens(line.split())

    def _topk(self, arg: str):
        try:
            k = int(arg)
        except ValueError:
            return [f"?k needs an integer, got {arg!r}", USAGE]
        if not 1 <= k <= self.bundle.vocab.size:
            return [f"k must lie in [1, {self.bundle.vocab.size}]", USAGE]
        ranked = predict_topk(self.bundle.params, self._ids(), k)
        return [f"{prob:8.4f}  {self.bundle.vocab.token(tid)}"
                for tid, prob in ranked]

    def _complete(self, arg: str):
        try:
            n = int(arg)
        except ValueError:
            return [f"!n needs an integer, got {arg!r}", USAGE]
        if n < 1:
            return ["n must be >= 1", USAGE]
        generated = greedy_complete(self.bundle.params, self._ids(), n)
        ended = bool(generated) and self.bundle.vocab.token(generated[-1]) == EOS_TOKEN
        if ended:
            generated = generated[:-1]
        tokens = [self.bundle.vocab.token(t) for t in generated]
        out = []
        if tokens:
            self.context.extend(tokens)
            out.append("generated: " + " ".join(tokens))
        if ended:
            out.append("(end of sentence)")
        out.append(self._context_line())
        return out


def run_repl(bundle, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    session = ReplSession(bundle)
    print(USAGE, file=stdout)
    while True:
        print("> ", end="", file=stdout, flush=True)
        line = stdin.readline()
        if not line:
            break
        try:
            for out in session.handle(line):
                print(out, file=stdout)
        except EOFError:
            break
    print("bye", file=stdout)
