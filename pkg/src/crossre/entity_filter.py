"""Bridge-entity co-occurrence scoring and top-K candidate sentence selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import Bag, CorpusStore, Sentence, TextPath, compute_bridge_entities


@dataclass(frozen=True)
class FilterConfig:
    alpha: float = 0.1
    beta: float = 0.01
    gamma: float = 0.001
    K: int = 16
    # count only the *other* paths containing the entity in s3
    s3_exclude_own: bool = False

    def __post_init__(self):
        if not (self.alpha > self.beta > self.gamma > 0):
            raise ValueError("filter weights must satisfy alpha > beta > gamma > 0")
        if self.K < 2:
            raise ValueError("K must be at least 2")


@dataclass(frozen=True)
class BridgeScore:
    entity_id: str
    s1: int
    s2: int
    s3: int
    total: float


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    index: int
    score: float


@dataclass
class CandidateSet:
    sentences: list[Candidate] = field(default_factory=list)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def path_doc_ids(path: TextPath) -> list[str]:
    if path.head_doc_id == path.tail_doc_id:
        return [path.head_doc_id]
    return [path.head_doc_id, path.tail_doc_id]


def path_sentences(path: TextPath, store: CorpusStore) -> list[tuple[str, int, Sentence]]:
    """All sentences of the path's documents, head document first."""
    return [
        (doc_id, i, s)
        for doc_id in path_doc_ids(path)
        for i, s in enumerate(store.doc(doc_id).sentences)
    ]


def score_path_bridges(path: TextPath, bag: Bag, store: CorpusStore, cfg: FilterConfig) -> dict[str, BridgeScore]:
    """Scores for every bridge entity of ``path`` within ``bag``."""
    head, tail = bag.head_entity_id, bag.tail_entity_id
    bridges = compute_bridge_entities(path, store, head, tail)
    sent_ents = [s.entity_ids for _, _, s in path_sentences(path, store)]

    direct = {
        e for e in bridges
        if any(e in ents and (head in ents or tail in ents) for ents in sent_ents)
    }
    cooc: dict[str, set[str]] = {e: set() for e in bridges}
    for ents in sent_ents:
        present = ents & bridges
        for e in present:
            cooc[e].update(present - {e})

    path_counts: dict[str, int] = {}
    for p in bag.paths:
        for e in compute_bridge_entities(p, store, head, tail):
            path_counts[e] = path_counts.get(e, 0) + 1

    scores = {}
    for e in sorted(bridges):
        s1 = 1 if e in direct else 0
        s2 = len(cooc[e] & direct)
        n_paths = path_counts.get(e, 0)
        if n_paths >= 2:
            s3 = n_paths - 1 if cfg.s3_exclude_own else n_paths
        else:
            s3 = 0
        total = cfg.alpha * s1 + cfg.beta * s2 + cfg.gamma * s3
        scores[e] = BridgeScore(e, s1, s2, s3, total)
    return scores


def score_bridge_entity(e: str, path: TextPath, bag: Bag, store: CorpusStore, cfg: FilterConfig) -> BridgeScore:
    bridges = compute_bridge_entities(path, store, bag.head_entity_id, bag.tail_entity_id)
    if e not in bridges:
        raise ValueError(f"{e} is not a bridge entity of this path")
    return score_path_bridges(path, bag, store, cfg)[e]


def score_sentence(sentence: Sentence, bridge_scores: dict[str, BridgeScore], cfg: FilterConfig | None = None) -> float:
    """Sum of the scores of the distinct bridge entities a sentence mentions.

    With ``cfg`` the sum is evaluated as alpha*S1 + beta*S2 + gamma*S3 over the
    integer tallies, so sentences with equal tallies tie exactly.
    """
    present = [bridge_scores[e] for e in sorted(sentence.entity_ids) if e in bridge_scores]
    if cfg is None:
        g = 0.0
        for b in present:
            g += b.total
        return g
    s1 = sum(b.s1 for b in present)
    s2 = sum(b.s2 for b in present)
    s3 = sum(b.s3 for b in present)
    return cfg.alpha * s1 + cfg.beta * s2 + cfg.gamma * s3


def rank_sentences(scored: list[tuple[str, int, float]], doc_order: list[str]) -> list[tuple[str, int, float]]:
    """Order (doc_id, index, score) triples by score, breaking ties by distance to the best sentence."""
    if not scored:
        return []
    rank_of = {d: k for k, d in enumerate(doc_order)}
    top = min(scored, key=lambda x: (-x[2], rank_of[x[0]], x[1]))

    def key(x):
        dist = abs(x[1] - top[1]) if x[0] == top[0] else math.inf
        return (-x[2], dist, rank_of[x[0]], x[1])

    return sorted(scored, key=key)


def select_candidates(path: TextPath, bag: Bag, store: CorpusStore, cfg: FilterConfig) -> CandidateSet:
    bridge_scores = score_path_bridges(path, bag, store, cfg)
    scored = [(d, i, score_sentence(s, bridge_scores, cfg)) for d, i, s in path_sentences(path, store)]
    ranked = rank_sentences(scored, path_doc_ids(path))[: cfg.K]
    return CandidateSet([Candidate(d, i, g) for d, i, g in ranked])


def score_dump(bag: Bag, store: CorpusStore, cfg: FilterConfig) -> dict:
    """JSON-ready per-entity and per-sentence scores for every path of a bag."""
    out = {"bag": bag.bag_id, "paths": []}
    for path in bag.paths:
        bs = score_path_bridges(path, bag, store, cfg)
        out["paths"].append({
            "head_doc": path.head_doc_id,
            "tail_doc": path.tail_doc_id,
            "bridges": [
                {"entity_id": b.entity_id, "s1": b.s1, "s2": b.s2, "s3": b.s3, "total": b.total}
                for b in bs.values()
            ],
            "sentences": [
                {"doc_id": d, "index": i, "score": score_sentence(s, bs, cfg)}
                for d, i, s in path_sentences(path, store)
            ],
        })
    return out
