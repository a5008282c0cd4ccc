"""F1, P@N and PR-AUC over ranked (bag, relation) triples, N/A excluded."""

from __future__ import annotations

from typing import Mapping

import numpy as np

Triple = tuple[str, str, float]


def f1_ignore_na(predictions: Mapping[str, set], gold: Mapping[str, set]) -> tuple[float, float, float]:
    """Micro precision, recall and F1 over (bag, relation) facts."""
    tp = n_pred = n_gold = 0
    for bag_id in sorted(set(predictions) | set(gold)):
        p = set(predictions.get(bag_id, ()))
        g = set(gold.get(bag_id, ()))
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def rank_triples(bag_logits: Mapping[str, "np.ndarray"], relations) -> list[Triple]:
    triples = [
        (bag_id, rel, float(v))
        for bag_id, logits in bag_logits.items()
        for rel, v in zip(relations, np.asarray(logits, dtype=np.float64).tolist())
    ]
    triples.sort(key=lambda x: (-x[2], x[0], x[1]))
    return triples


def _hits(ranked, gold) -> np.ndarray:
    return np.array([r in gold.get(b, ()) for b, r, _ in ranked], dtype=bool)


def p_at_n(ranked: list[Triple], gold: Mapping[str, set], n: int, average: bool = False) -> float:
    """Precision of the top-``n`` triples; ``average`` gives the mean over all prefixes instead."""
    if n < 1:
        raise ValueError("N must be >= 1")
    hits = _hits(ranked[:n], gold)
    if hits.size == 0:
        return 0.0
    if average:
        prefix = np.cumsum(hits) / np.arange(1, hits.size + 1)
        return float(prefix.mean())
    return float(hits.mean())


def auc(ranked: list[Triple], gold: Mapping[str, set]) -> float:
    """Area under the stepwise precision-recall curve traced down the ranking."""
    n_gold = sum(len(g) for g in gold.values())
    if n_gold == 0:
        raise ValueError("AUC undefined: no gold facts")
    hits = _hits(ranked, gold)
    if not hits.any():
        return 0.0
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, hits.size + 1)
    recall = tp / n_gold
    # staircase: precision is held constant across each recall jump
    at_hit = np.flatnonzero(hits)
    r_prev = np.concatenate([[0.0], recall[at_hit][:-1]])
    xs = np.column_stack([r_prev, recall[at_hit]]).ravel()
    ys = np.repeat(precision[at_hit], 2)
    return float(np.trapezoid(ys, xs))


def evaluate_rankings(bag_logits: Mapping, predictions: Mapping[str, set], gold: Mapping[str, set],
                      relations, p_at=(500, 1000), average_p: bool = False) -> dict:
    p, r, f1 = f1_ignore_na(predictions, gold)
    ranked = rank_triples(bag_logits, relations)
    n_facts = sum(len(g) for g in gold.values())
    out = {"f1": f1, "precision": p, "recall": r,
           "auc": auc(ranked, gold) if n_facts else 0.0}
    for n in p_at:
        out[f"p@{n}"] = p_at_n(ranked, gold, n, average=average_p)
    out["n_bags"] = len(gold)
    out["n_facts"] = n_facts
    return out
