"""Entity marking, a small trainable contextual encoder and mention pooling."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .corpus import CorpusStore
from .semantic_filter import FilteredContext

UNK, ENT_OPEN, ENT_CLOSE = "<unk>", "<ent>", "</ent>"
ROLE_MARKERS = {
    "head": ("<h>", "</h>"),
    "tail": ("<t>", "</t>"),
    "bridge": ("<b>", "</b>"),
    "other": (ENT_OPEN, ENT_CLOSE),
}
RESERVED = (UNK, ENT_OPEN, ENT_CLOSE, "<h>", "</h>", "<t>", "</t>", "<b>", "</b>")


class MarkingError(ValueError):
    pass


class Vocabulary:
    def __init__(self, tokens=()):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def ids(self, tokens) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in tokens]

    @classmethod
    def from_store(cls, store: CorpusStore) -> "Vocabulary":
        toks = {t for d in store.documents.values() for s in d.sentences for t in s.tokens}
        return cls(sorted(toks))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.itos[len(RESERVED):]:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


@dataclass(frozen=True)
class MarkedSpan:
    entity_id: str
    start: int
    end: int  # exclusive, marker-inclusive


@dataclass
class MarkedSequence:
    tokens: list[str]
    spans: list[MarkedSpan]

    def __len__(self):
        return len(self.tokens)

    def spans_of(self, entity_id: str) -> list[MarkedSpan]:
        return [s for s in self.spans if s.entity_id == entity_id]


def _crossing(a, b) -> bool:
    return a.start < b.start < a.end < b.end or b.start < a.start < b.end < a.end


def mark_sentence(tokens, mentions, role_of=None):
    """Wrap every mention in marker tokens; returns (tokens, [(mention, start, end)])."""
    ms = list(mentions)
    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            if _crossing(ms[i], ms[j]):
                raise MarkingError(f"crossing mentions {ms[i]} and {ms[j]}")
    opens: dict[int, list] = {}
    closes: dict[int, list] = {}
    for k, m in enumerate(ms):
        opens.setdefault(m.start, []).append((-m.end, k))
        closes.setdefault(m.end, []).append((-m.start, -k))

    def markers(k):
        return ROLE_MARKERS[role_of(ms[k].entity_id)] if role_of else (ENT_OPEN, ENT_CLOSE)

    out: list[str] = []
    starts: dict[int, int] = {}
    spans = []

    def close_at(i):
        for _, negk in sorted(closes.get(i, [])):
            k = -negk
            out.append(markers(k)[1])
            spans.append((ms[k], starts[k], len(out)))

    for i, tok in enumerate(tokens):
        close_at(i)
        for _, k in sorted(opens.get(i, [])):
            starts[k] = len(out)
            out.append(markers(k)[0])
        out.append(tok)
    close_at(len(tokens))
    spans.sort(key=lambda x: (x[1], -x[2]))
    return out, spans


def mark_entities(ctx: FilteredContext, store: CorpusStore, role_of=None) -> MarkedSequence:
    tokens: list[str] = []
    spans: list[MarkedSpan] = []
    for cs in ctx.sentences:
        sent = store.doc(cs.doc_id).sentences[cs.index]
        toks = sent.tokens
        mentions = sent.mentions
        if cs.token_limit is not None and cs.token_limit < len(toks):
            toks = toks[: cs.token_limit]
            mentions = tuple(m for m in mentions if m.end <= cs.token_limit)
        marked, sp = mark_sentence(toks, mentions, role_of)
        off = len(tokens)
        tokens.extend(marked)
        spans.extend(MarkedSpan(m.entity_id, off + s, off + e) for m, s, e in sp)
    return MarkedSequence(tokens, spans)


class Encoder(nn.Module):
    """Token embeddings followed by one windowed mixing layer with a tanh."""

    def __init__(self, vocab_size: int, d: int, window: int = 2):
        super().__init__()
        self.d, self.window = d, window
        self.embedding = nn.Embedding(vocab_size, d)
        self.mix = nn.Conv1d(d, d, kernel_size=2 * window + 1, padding=window)
        nn.init.normal_(self.embedding.weight, std=1.0)

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        x = self.embedding(token_ids)  # L x d
        return torch.tanh(self.mix(x.t().unsqueeze(0)).squeeze(0).t())


def pool_mention(reps: torch.Tensor, start: int, end: int) -> torch.Tensor:
    if not 0 <= start < end <= reps.shape[0]:
        raise ValueError(f"invalid span [{start}, {end}) for {reps.shape[0]} rows")
    return reps[start:end].max(dim=0).values


def entity_node_rep(mention_vectors) -> torch.Tensor:
    vecs = list(mention_vectors)
    if not vecs:
        raise ValueError("entity has no mentions in this context")
    if len(vecs) == 1:
        return vecs[0]
    return torch.stack(vecs).max(dim=0).values
