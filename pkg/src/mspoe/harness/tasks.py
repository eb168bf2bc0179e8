"""Synthetic retrieval tasks over integer token ids.

Token ids are split into disjoint ranges (keys/markers, values/answers,
filler) by a :class:`Vocab`, so a prompt contains its answer exactly once
by construction.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import VocabError


@dataclass(frozen=True)
class Vocab:
    keys: range
    values: range
    filler: range

    @property
    def size(self):
        return max(self.keys.stop, self.values.stop, self.filler.stop)

    def to_dict(self):
        return {n: [r.start, r.stop] for n, r in (("keys", self.keys), ("values", self.values), ("filler", self.filler))}

    @classmethod
    def from_dict(cls, d):
        return cls(range(*d["keys"]), range(*d["values"]), range(*d["filler"]))


@dataclass(frozen=True)
class RetrievalTask:
    kind: str  # "kv" or "mdqa"
    n_items: int
    item_len: int
    relevant_index: int
    prompt_tokens: tuple
    expected_answer: tuple
    seed: int = 0

    @property
    def body(self):
        """Prompt without the trailing question."""
        return self.prompt_tokens[: self.n_items * self.item_len]


def _draw(rng, pool, n, what):
    if len(pool) < n:
        raise VocabError(f"vocab has {len(pool)} {what} ids, need {n} distinct ones")
    return [int(pool[i]) for i in rng.permutation(len(pool))[:n]]


def _check_slot(n, relevant_index):
    if n < 1:
        raise ValueError("need at least one item")
    if not 0 <= relevant_index < n:
        raise ValueError(f"relevant_index {relevant_index} outside [0, {n})")


def gen_kv_task(n_pairs, seed, vocab, relevant_index):
    """``k_1 v_1 ... k_n v_n k_q`` with the queried pair at ``relevant_index``.

    The pairs depend only on ``seed``; ``relevant_index`` just moves the
    queried pair, so a sweep over slots permutes one fixed set of tokens.
    """
    _check_slot(n_pairs, relevant_index)
    rng = np.random.default_rng(seed)
    keys = _draw(rng, vocab.keys, n_pairs, "key")
    values = _draw(rng, vocab.values, n_pairs, "value")
    pairs = list(zip(keys, values))
    target = pairs.pop(0)
    pairs.insert(relevant_index, target)
    prompt = [t for kv in pairs for t in kv] + [target[0]]
    return RetrievalTask("kv", n_pairs, 2, relevant_index, tuple(prompt), (target[1],), seed)


def gen_mdqa_task(n_docs, doc_len, seed, vocab, relevant_index, fact_offset=None):
    """Documents of filler, each carrying one (marker, answer) fact.

    Only the document at ``relevant_index`` holds the queried marker; the
    question is that marker alone. ``fact_offset`` fixes where inside a
    document the fact sits (default: drawn per sample).
    """
    _check_slot(n_docs, relevant_index)
    if doc_len < 2:
        raise ValueError("doc_len must leave room for a marker and its answer")
    rng = np.random.default_rng(seed)
    markers = _draw(rng, vocab.keys, n_docs, "marker")
    answers = _draw(rng, vocab.values, n_docs, "answer")
    if len(vocab.filler) == 0 and doc_len > 2:
        raise VocabError("vocab has no filler ids")
    docs = []
    for m, a in zip(markers, answers):
        fill = [int(vocab.filler[i]) for i in rng.integers(0, len(vocab.filler), doc_len - 2)] if doc_len > 2 else []
        off = int(rng.integers(0, doc_len - 1)) if fact_offset is None else int(fact_offset)
        if not 0 <= off <= doc_len - 2:
            raise ValueError("fact_offset does not fit inside the document")
        docs.append(fill[:off] + [m, a] + fill[off:])
    target = docs.pop(0)
    docs.insert(relevant_index, target)
    marker, answer = markers[0], answers[0]
    prompt = [t for d in docs for t in d] + [marker]
    return RetrievalTask("mdqa", n_docs, doc_len, relevant_index, tuple(prompt), (answer,), seed)


@dataclass(frozen=True)
class TaskFamily:
    """A seeded task generator with its slot count, e.g. KV with 8 pairs."""

    kind: str
    n_items: int
    vocab: Vocab
    item_len: int = 2
    fact_offset: int = None  # mdqa only; None draws it per sample

    def __post_init__(self):
        if self.kind not in ("kv", "mdqa"):
            raise ValueError(f"unknown task kind {self.kind!r}")

    def make(self, seed, relevant_index):
        if self.kind == "kv":
            return gen_kv_task(self.n_items, seed, self.vocab, relevant_index)
        return gen_mdqa_task(self.n_items, self.item_len, seed, self.vocab, relevant_index, self.fact_offset)

    @property
    def prompt_len(self):
        return self.n_items * (2 if self.kind == "kv" else self.item_len) + 1

    def to_dict(self):
        return {"kind": self.kind, "n_items": self.n_items, "item_len": self.item_len,
                "fact_offset": self.fact_offset, "vocab": self.vocab.to_dict()}
