"""Greedy similarity chaining of candidate sentences and length enforcement."""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Protocol

import numpy as np

from .corpus import Bag, CorpusStore, TextPath
from .entity_filter import CandidateSet, FilterConfig, select_candidates


class SentenceRef(NamedTuple):
    doc_id: str
    index: int


class SimilarityProvider(Protocol):
    name: str

    def __call__(self, a: SentenceRef, b: SentenceRef) -> float: ...


class FilterError(ValueError):
    pass


class LengthError(FilterError):
    pass


@dataclass(frozen=True)
class ContextSentence:
    doc_id: str
    index: int
    selection_similarity: float | None = None  # None for the chain start
    token_limit: int | None = None  # set only when hard-truncated

    @property
    def ref(self) -> SentenceRef:
        return SentenceRef(self.doc_id, self.index)


@dataclass
class FilteredContext:
    sentences: list[ContextSentence]
    n_tokens: int
    tail_reached: bool = True
    truncated: bool = False
    flags: list[str] = field(default_factory=list)

    @property
    def refs(self) -> list[SentenceRef]:
        return [s.ref for s in self.sentences]


def sentence_length(store: CorpusStore, cs: ContextSentence) -> int:
    n = len(store.doc(cs.doc_id).sentences[cs.index].tokens)
    return n if cs.token_limit is None else min(n, cs.token_limit)


def context_tokens(store: CorpusStore, sentences: list[ContextSentence]) -> int:
    return sum(sentence_length(store, s) for s in sentences)


# ---------------------------------------------------------------- similarity

def build_df_table(store: CorpusStore) -> tuple[Counter, int]:
    """Document frequency of every token over the corpus documents."""
    df: Counter = Counter()
    for doc in store.documents.values():
        df.update({t for s in doc.sentences for t in s.tokens})
    return df, len(store.documents)


def _tfidf(tokens, stats) -> dict[str, float]:
    df, n_docs = stats
    tf = Counter(tokens)
    # smoothed idf keeps terms present in every document non-zero
    return {t: c * (math.log((1 + n_docs) / (1 + df.get(t, 0))) + 1.0) for t, c in tf.items()}


def tfidf_cosine(a, b, stats) -> float:
    va, vb = _tfidf(a, stats), _tfidf(b, stats)
    if not va or not vb:
        return 0.0
    dot = sum(w * vb[t] for t, w in sorted(va.items()) if t in vb)
    na = math.sqrt(sum(w * w for _, w in sorted(va.items())))
    nb = math.sqrt(sum(w * w for _, w in sorted(vb.items())))
    return dot / (na * nb)


class TfidfSimilarity:
    name = "tfidf-cosine"

    def __init__(self, store: CorpusStore, stats=None):
        self.store = store
        self.stats = stats if stats is not None else build_df_table(store)
        self._cache: dict[tuple, float] = {}

    def __call__(self, a: SentenceRef, b: SentenceRef) -> float:
        key = (a, b) if a <= b else (b, a)
        if key not in self._cache:
            ta = self.store.doc(a.doc_id).sentences[a.index].tokens
            tb = self.store.doc(b.doc_id).sentences[b.index].tokens
            self._cache[key] = tfidf_cosine(ta, tb, self.stats)
        return self._cache[key]


class EmbeddingSimilarity:
    """Cosine over precomputed sentence vectors from an embeddings.jsonl sidecar."""

    name = "embedding-cosine"

    def __init__(self, vectors: dict[SentenceRef, np.ndarray]):
        self.vectors = vectors

    @classmethod
    def from_jsonl(cls, path) -> "EmbeddingSimilarity":
        vectors, dim = {}, None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                if set(rec) != {"doc_id", "sentence", "vector"}:
                    raise FilterError(f"{path}:{lineno}: expected fields doc_id, sentence, vector")
                v = np.asarray(rec["vector"], dtype=np.float64)
                if dim is None:
                    dim = v.shape
                elif v.shape != dim:
                    raise FilterError(f"{path}:{lineno}: vector dimension mismatch")
                vectors[SentenceRef(rec["doc_id"], int(rec["sentence"]))] = v
        return cls(vectors)

    def __call__(self, a: SentenceRef, b: SentenceRef) -> float:
        va, vb = self.vectors[a], self.vectors[b]
        na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(va @ vb) / (na * nb)


# ---------------------------------------------------------------- chaining

def derive_seed(global_seed: int, bag_id: str, path_index: int) -> int:
    h = hashlib.sha256(f"{global_seed}\x1f{bag_id}\x1f{path_index}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _mentions(store: CorpusStore, ref: SentenceRef, entity_id: str) -> bool:
    return entity_id in store.doc(ref.doc_id).sentences[ref.index].entity_ids


def order_sentences(candidates: CandidateSet, head_id: str, tail_id: str, sim: Callable,
                    seed: int, store: CorpusStore) -> FilteredContext:
    """Chain candidates from a random head sentence towards a tail sentence.

    Each step removes the current sentence from the pool and follows the most
    similar remaining one (first in candidate order on ties). Stops at a
    sentence mentioning the tail, or when the pool runs out.
    """
    pool = [SentenceRef(c.doc_id, c.index) for c in candidates]
    if not pool:
        raise FilterError("empty candidate set")
    starts = [r for r in pool if _mentions(store, r, head_id)]
    if not starts:
        raise FilterError("no head sentence in candidates")

    cur = random.Random(seed).choice(starts)
    chain = [ContextSentence(cur.doc_id, cur.index, None)]
    reached = _mentions(store, cur, tail_id)
    while not reached:
        pool.remove(cur)
        if not pool:
            break
        best, best_sim = None, -math.inf
        for r in pool:
            v = sim(cur, r)
            if v > best_sim:
                best, best_sim = r, v
        chain.append(ContextSentence(best.doc_id, best.index, float(best_sim)))
        cur = best
        reached = _mentions(store, cur, tail_id)

    ctx = FilteredContext(chain, context_tokens(store, chain), tail_reached=reached)
    if not reached:
        ctx.flags.append("tail-unreached")
    return ctx


def enforce_length(ctx: FilteredContext, max_tokens: int, store: CorpusStore) -> FilteredContext:
    """Drop lowest-similarity interior sentences until the context fits ``max_tokens``.

    The first sentence is always kept, and so is the last one when it is the
    tail sentence the chain was heading for.
    """
    sents = list(ctx.sentences)
    n = context_tokens(store, sents)
    if n <= max_tokens:
        return replace(ctx, sentences=sents, n_tokens=n, flags=list(ctx.flags))
    protected_last = ctx.tail_reached and len(sents) > 1
    while n > max_tokens:
        hi = len(sents) - 1 if protected_last else len(sents)
        interior = range(1, hi)
        if not interior:
            raise LengthError("endpoints exceed budget")
        drop = min(interior, key=lambda k: (sents[k].selection_similarity, k))
        n -= sentence_length(store, sents[drop])
        del sents[drop]
    return replace(ctx, sentences=sents, n_tokens=n, flags=list(ctx.flags))


def truncate_endpoints(ctx: FilteredContext, max_tokens: int, store: CorpusStore) -> FilteredContext:
    """Last resort when the protected sentences alone exceed the budget."""
    sents = [ctx.sentences[0]] if len(ctx.sentences) == 1 else [ctx.sentences[0], ctx.sentences[-1]]
    if len(sents) == 1:
        sents = [replace(sents[0], token_limit=max_tokens)]
    else:
        n_last = sentence_length(store, sents[1])
        first_budget = max(max_tokens - n_last, max_tokens // 2)
        sents = [
            replace(sents[0], token_limit=first_budget),
            replace(sents[1], token_limit=max_tokens - min(first_budget, sentence_length(store, sents[0]))),
        ]
    flags = list(ctx.flags) + ["token-truncated"]
    return FilteredContext(sents, context_tokens(store, sents), ctx.tail_reached, True, flags)


def build_context(path: TextPath, bag: Bag, store: CorpusStore, fcfg: FilterConfig, sim: Callable,
                  seed: int, max_tokens: int = 512) -> FilteredContext:
    """Entity-based selection followed by similarity chaining and the length cap."""
    candidates = select_candidates(path, bag, store, fcfg)
    ctx = order_sentences(candidates, bag.head_entity_id, bag.tail_entity_id, sim, seed, store)
    try:
        return enforce_length(ctx, max_tokens, store)
    except LengthError:
        return truncate_endpoints(ctx, max_tokens, store)


def snippet_context(path: TextPath, bag: Bag, store: CorpusStore, window: int = 2,
                    max_tokens: int = 512) -> FilteredContext:
    """Sentences within ``window`` of any target mention, head document then tail document.

    Each document gets half of the token budget; sentences past it are cut.
    """
    out: list[ContextSentence] = []
    for doc_id, target, budget in (
        (path.head_doc_id, bag.head_entity_id, max_tokens // 2),
        (path.tail_doc_id, bag.tail_entity_id, max_tokens - max_tokens // 2),
    ):
        sents = store.doc(doc_id).sentences
        keep = sorted({
            j
            for i, s in enumerate(sents) if target in s.entity_ids
            for j in range(max(0, i - window), min(len(sents), i + window + 1))
        })
        used = 0
        for j in keep:
            n = len(sents[j].tokens)
            if used + n > budget:
                if used < budget:
                    out.append(ContextSentence(doc_id, j, None, budget - used))
                    used = budget
                break
            out.append(ContextSentence(doc_id, j, None))
            used += n
    return FilteredContext(out, context_tokens(store, out), tail_reached=True)
