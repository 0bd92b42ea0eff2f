"""Synthetic corpus generation from weighted template grammars.

A grammar is a finite set of weighted templates. Template items are either
literal token runs or ``$NAME`` slot references; the first occurrence of a
slot in a template draws a fill from the slot's distribution, and any later
occurrence repeats the drawn value (so formulas can echo a name). Because the
sentence distribution is finite, everything a test oracle needs (sentence
probabilities, per-position conditionals, entropy, greedy continuations) is
computed exactly by enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .corpus import EOS_TOKEN

# Marker used inside the END_OF_SENTENCE position of oracle distributions.
END = EOS_TOKEN


@dataclass(frozen=True)
class Slot:
    name: str
    fills: tuple        # tuple of token tuples
    weights: tuple      # same length, positive

    @classmethod
    def make(cls, name, fills, weights=None):
        toks = tuple(tuple(f.split()) for f in fills)
        if weights is None:
            weights = (1.0,) * len(toks)
        if len(weights) != len(toks):
            raise ValueError(f"slot {name}: {len(toks)} fills but {len(weights)} weights")
        if any(w <= 0 for w in weights):
            raise ValueError(f"slot {name}: weights must be positive")
        return cls(name, toks, tuple(float(w) for w in weights))

    @property
    def probs(self):
        z = sum(self.weights)
        return tuple(w / z for w in self.weights)


@dataclass(frozen=True)
class Template:
    weight: float
    items: tuple   # strings; "$X" is a slot reference, anything else is literal

    def slot_names(self):
        seen = []
        for item in self.items:
            if item.startswith("$") and item[1:] not in seen:
                seen.append(item[1:])
        return seen


class _TrieNode:
    __slots__ = ("children", "mass", "end_mass")

    def __init__(self):
        self.children = {}
        self.mass = 0.0      # total probability of sentences through this node
        self.end_mass = 0.0  # probability of sentences ending exactly here


class DegenerateGrammar(ValueError):
    pass


class TemplateGrammar:
    """A finite sentence distribution plus its exact oracles."""

    def __init__(self, templates, slots, name="grammar"):
        self.name = name
        self.templates = tuple(templates)
        self.slots = {s.name: s for s in slots}
        if not self.templates:
            raise DegenerateGrammar("grammar has no templates")
        for t in self.templates:
            if t.weight <= 0:
                raise DegenerateGrammar("template weights must be positive")
            for s in t.slot_names():
                if s not in self.slots:
                    raise DegenerateGrammar(f"template references unknown slot ${s}")
        self._dist = self._enumerate()
        self._trie = self._build_trie(self._dist)

    # -- construction ------------------------------------------------------

    def _enumerate(self):
        """Exact sentence distribution: token tuple -> probability."""
        z = sum(t.weight for t in self.templates)
        dist = {}
        for t in self.templates:
            names = t.slot_names()
            slot_objs = [self.slots[n] for n in names]
            for combo in itertools.product(*(range(len(s.fills)) for s in slot_objs)):
                p = t.weight / z
                assign = {}
                for name, slot, i in zip(names, slot_objs, combo):
                    assign[name] = slot.fills[i]
                    p *= slot.probs[i]
                tokens = []
                for item in t.items:
                    if item.startswith("$"):
                        tokens.extend(assign[item[1:]])
                    else:
                        tokens.extend(item.split())
                key = tuple(tokens)
                dist[key] = dist.get(key, 0.0) + p
        return dist

    @staticmethod
    def _build_trie(dist):
        root = _TrieNode()
        for tokens, p in dist.items():
            node = root
            node.mass += p
            for tok in tokens:
                node = node.children.setdefault(tok, _TrieNode())
                node.mass += p
            node.end_mass += p
        return root

    # -- sampling ----------------------------------------------------------

    def sample(self, n, seed=0):
        """Draw n i.i.d. sentences (lists of tokens)."""
        rng = np.random.default_rng(seed)
        tw = np.array([t.weight for t in self.templates], dtype=float)
        tw /= tw.sum()
        out = []
        for _ in range(n):
            t = self.templates[rng.choice(len(self.templates), p=tw)]
            assign = {}
            tokens = []
            for item in t.items:
                if item.startswith("$"):
                    name = item[1:]
                    if name not in assign:
                        slot = self.slots[name]
                        assign[name] = slot.fills[rng.choice(len(slot.fills), p=slot.probs)]
                    tokens.extend(assign[name])
                else:
                    tokens.extend(item.split())
            out.append(tokens)
        return out

    # -- exact oracles -------------------------------------------------------

    def sentences(self):
        """The full sentence distribution as {token tuple: probability}."""
        return dict(self._dist)

    def sentence_entropy(self):
        """Entropy of the sentence random variable, in nats."""
        return -sum(p * math.log(p) for p in self._dist.values())

    def expected_positions(self):
        """Expected number of predicting positions per sentence (T + 1)."""
        return sum(p * (len(toks) + 1) for toks, p in self._dist.items())

    def oracle_cross_entropy(self):
        """Best achievable mean per-position NLL (nats) for this grammar."""
        return self.sentence_entropy() / self.expected_positions()

    def _node(self, prefix):
        node = self._trie
        for tok in prefix:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def next_token_probs(self, prefix):
        """Exact conditional distribution of the next token given a prefix.

        The END key carries the probability that the sentence ends here.
        Raises KeyError for prefixes outside the grammar's support.
        """
        node = self._node(tuple(prefix))
        if node is None:
            raise KeyError(f"prefix not in grammar support: {prefix!r}")
        probs = {tok: child.mass / node.mass for tok, child in node.children.items()}
        if node.end_mass > 0:
            probs[END] = node.end_mass / node.mass
        return probs

    def sentence_log_prob(self, tokens):
        p = self._dist.get(tuple(tokens))
        if p is None:
            raise KeyError(f"sentence not in grammar support: {tokens!r}")
        return math.log(p)

    @staticmethod
    def _greedy_pick(node):
        # Highest conditional mass; ties broken by token string, END last.
        best_tok, best_mass = None, node.end_mass
        for tok in sorted(node.children):
            child = node.children[tok]
            if child.mass > best_mass:
                best_tok, best_mass = tok, child.mass
        return best_tok  # None means END

    def greedy_continuation(self, prefix, steps):
        """Argmax continuation under the true distribution; END terminates."""
        node = self._node(tuple(prefix))
        if node is None:
            raise KeyError(f"prefix not in grammar support: {prefix!r}")
        out = []
        for _ in range(steps):
            tok = self._greedy_pick(node)
            if tok is None:
                out.append(END)
                break
            out.append(tok)
            node = node.children[tok]
        return out

    def bayes_multishot(self, k_max=4):
        """Exact per-shot accuracy of the greedy true-distribution predictor.

        Anchors follow the evaluation convention: every prefix length t with
        1 <= t <= T+1-k_max, over sentences with at least k_max+1 predicting
        positions, weighted by sentence probability. Position T+1 is END.
        """
        num = [0.0] * k_max
        den = 0.0
        for tokens, p in self._dist.items():
            T = len(tokens)
            if T < k_max:
                continue
            gold = list(tokens) + [END]
            for t in range(1, T + 2 - k_max):
                den += p
                gen = self.greedy_continuation(tokens[:t], k_max)
                for k in range(k_max):
                    if k < len(gen) and gen[k] == gold[t + k]:
                        num[k] += p
        if den == 0:
            raise DegenerateGrammar(f"no sentence has {k_max + 1} predicting positions")
        return [x / den for x in num]

    def vocabulary_tokens(self):
        toks = set()
        for sent in self._dist:
            toks.update(sent)
        return sorted(toks)


def generate_synthetic_corpus(grammar: TemplateGrammar, n: int, seed: int = 0):
    """Sample n sentences; the grammar itself is the exact-distribution oracle."""
    return grammar.sample(n, seed)


def load_grammar_toml(text_or_path) -> TemplateGrammar:
    """Parse a grammar description.

    Format::

        name = "offering"
        [[templates]]
        weight = 2.0
        items = ["n kA n", "$TITLE", "$NAME", "mAa xrw"]
        [slots.TITLE]
        fills = ["wr swnw", "sS nswt"]
        weights = [1, 1]        # optional, defaults to uniform
    """
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    if isinstance(text_or_path, str) and "\n" in text_or_path:
        data = tomllib.loads(text_or_path)
    else:
        with open(text_or_path, "rb") as fh:
            data = tomllib.load(fh)
    templates = [
        Template(weight=float(t.get("weight", 1.0)), items=tuple(t["items"]))
        for t in data.get("templates", [])
    ]
    slots = [
        Slot.make(name, spec["fills"], spec.get("weights"))
        for name, spec in data.get("slots", {}).items()
    ]
    return TemplateGrammar(templates, slots, name=data.get("name", "grammar"))


def offering_formula_grammar() -> TemplateGrammar:
    """The built-in demo grammar: funerary formula patterns in MdC.

    Three families of sentence pattern share a pool of eight personal
    names: a short dedication (title + name), a royal titulary (throne
    name + birth name), and a donation formula that names two
    beneficiaries, lists a repeated pair of offered goods between 4 and
    7 times, and then recalls both beneficiaries after the list.  The
    recall spans 14 to 32 tokens, so scoring well on the closing names
    requires carrying identity across the goods list rather than
    modeling a short context window.
    """
    name_surfaces = [
        "pnTw", "jmn Htp", "ra msw", "Hrw",
        "snfrw", "ppy mn", "nfr ttj", "DdHr",
    ]
    n1 = Slot.make("N1", name_surfaces, [2, 2, 1, 1, 1, 1, 1, 1])
    n2 = Slot.make("N2", name_surfaces)
    titles = Slot.make("TITLE", ["wr swnw", "jmj rA pr", "sS nswt", "Hm nTr"])
    kings = Slot.make("KING", [
        "wsr mAa t raw stp n jmn", "mn xpr raw", "nb xpr w raw", "aA xpr kA raw",
    ], [2, 1, 1, 1])
    goods = ["t", "Hnqt", "kA Apd", "Ss", "mnxt", "snTr qbH", "mrHt", "HD nbw"]
    g1 = Slot.make("G1", goods)
    g2 = Slot.make("G2", goods)
    templates = [
        Template(0.30, ("n kA n", "$TITLE", "$N1", "mAa xrw")),
        Template(0.30, ("nswt bj tj nb tA du", "$KING", "zA ra", "$N1")),
    ]
    for repeats in (4, 5, 6, 7):
        templates.append(Template(
            0.10,
            ("Htp dj nswt", "$N1", "Hna", "$N2", "rdj f")
            + ("$G1", "$G2") * repeats
            + ("n kA n", "$N1", "Hna", "$N2", "mAa xrw")))
    return TemplateGrammar(templates, [n1, n2, titles, kings, g1, g2],
                           name="offering_formula")


BUILTIN_GRAMMARS = {
    "offering": offering_formula_grammar,
}
