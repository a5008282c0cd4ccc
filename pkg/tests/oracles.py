"""Independent brute-force references used by the test suite.

Nothing here imports the code under test beyond the plain data classes.
"""

from fractions import Fraction
import math
import random

from crossre.corpus import Bag, CorpusStore, Document, Mention, RelationSchema, Sentence, TextPath

ENTITY_POOL = ["e0", "e1", "e2", "e3", "e4", "e5"]


# ---------------------------------------------------------------- random fixtures

def _random_sentence(rng, must=()):
    n = rng.randint(3, 8)
    tokens = [f"tok{rng.randint(0, 30)}" for _ in range(n)]
    ents = set(must)
    for e in ["h", "t"] + ENTITY_POOL:
        if rng.random() < 0.18:
            ents.add(e)
    ents = sorted(ents)[:n]
    positions = rng.sample(range(n), len(ents))
    mentions = []
    for e, p in zip(ents, positions):
        tokens[p] = e.upper()
        mentions.append(Mention(e, p, p + 1))
        if rng.random() < 0.1:  # duplicate mention of the same entity
            q = rng.randrange(n)
            if q not in positions:
                mentions.append(Mention(e, q, q + 1))
    return Sentence(tuple(tokens), tuple(sorted(mentions, key=lambda m: (m.start, m.entity_id))))


def _random_doc(rng, doc_id, target, n_sent):
    sents = [_random_sentence(rng) for _ in range(n_sent)]
    k = rng.randrange(n_sent)
    sents[k] = _random_sentence(rng, must=[target])
    return Document(doc_id, tuple(sents))


def random_filter_store(rng: random.Random, max_paths=4, max_sent=12) -> CorpusStore:
    """One bag with up to ``max_paths`` paths and up to ``max_sent`` sentences per document."""
    docs, paths = {}, []
    for i in range(rng.randint(1, max_paths)):
        hd, td = f"p{i}h", f"p{i}t"
        docs[hd] = _random_doc(rng, hd, "h", rng.randint(1, max_sent))
        docs[td] = _random_doc(rng, td, "t", rng.randint(1, max_sent))
        paths.append(TextPath(hd, td))
    return CorpusStore(docs, [Bag("h", "t", paths, frozenset())], RelationSchema(()))


# ---------------------------------------------------------------- filter oracle

def entities_in(sentence):
    out = []
    for m in sentence.mentions:
        if m.entity_id not in out:
            out.append(m.entity_id)
    return out


def oracle_bridges(store, path, head, tail):
    a, b = [], []
    for s in store.documents[path.head_doc_id].sentences:
        a += entities_in(s)
    for s in store.documents[path.tail_doc_id].sentences:
        b += entities_in(s)
    return sorted({e for e in a if e in b and e != head and e != tail})


def _path_sentence_lists(store, path):
    docs = [path.head_doc_id] if path.head_doc_id == path.tail_doc_id else [path.head_doc_id, path.tail_doc_id]
    out = []
    for d in docs:
        for i, s in enumerate(store.documents[d].sentences):
            out.append((d, i, entities_in(s)))
    return out


def oracle_bridge_scores(store, bag, path_index, alpha, beta, gamma, exclude_own=False):
    """Exact rational scores per bridge entity: {entity: (s1, s2, s3, Fraction total)}."""
    head, tail = bag.head_entity_id, bag.tail_entity_id
    path = bag.paths[path_index]
    bridges = oracle_bridges(store, path, head, tail)
    sents = _path_sentence_lists(store, path)

    def gamma1(e):
        for _, _, ents in sents:
            if e in ents and (head in ents or tail in ents):
                return True
        return False

    def together(e, o):
        for _, _, ents in sents:
            if e in ents and o in ents:
                return True
        return False

    result = {}
    for e in bridges:
        s1 = 1 if gamma1(e) else 0
        s2 = 0
        for o in bridges:
            if o != e and gamma1(o) and together(e, o):
                s2 += 1
        holders = 0
        for j in range(len(bag.paths)):
            if e in oracle_bridges(store, bag.paths[j], head, tail):
                holders += 1
        others = holders - 1
        if others >= 1:
            s3 = others if exclude_own else holders
        else:
            s3 = 0
        total = Fraction(alpha) * s1 + Fraction(beta) * s2 + Fraction(gamma) * s3
        result[e] = (s1, s2, s3, total)
    return result


def oracle_sentence_scores(store, bag, path_index, alpha, beta, gamma, exclude_own=False):
    scores = oracle_bridge_scores(store, bag, path_index, alpha, beta, gamma, exclude_own)
    out = []
    for d, i, ents in _path_sentence_lists(store, bag.paths[path_index]):
        g = Fraction(0)
        for e in set(ents):
            if e in scores:
                g += scores[e][3]
        out.append((d, i, g))
    return out


def oracle_select(store, bag, path_index, alpha, beta, gamma, K, exclude_own=False):
    """Top-K by pairwise 'beats' comparisons; returns [(doc, index)] in rank order."""
    scored = oracle_sentence_scores(store, bag, path_index, alpha, beta, gamma, exclude_own)
    doc_rank = {}
    for d, _, _ in scored:
        doc_rank.setdefault(d, len(doc_rank))
    best = scored[0]
    for x in scored:
        if x[2] > best[2]:
            best = x  # first in (doc order, index) order among maxima

    def dist(x):
        return abs(x[1] - best[1]) if x[0] == best[0] else math.inf

    def beats(a, b):
        if a[2] != b[2]:
            return a[2] > b[2]
        if dist(a) != dist(b):
            return dist(a) < dist(b)
        if doc_rank[a[0]] != doc_rank[b[0]]:
            return doc_rank[a[0]] < doc_rank[b[0]]
        return a[1] < b[1]

    ranks = []
    for a in scored:
        r = sum(1 for b in scored if b is not a and beats(b, a))
        ranks.append((r, a))
    ranks.sort(key=lambda x: x[0])
    return [(a[0], a[1]) for r, a in ranks if r < K]


# ---------------------------------------------------------------- greedy chain oracle

def replay_chain(chain, candidates, sim, tail_refs):
    """Check each appended sentence is a maximiser among the sentences still available."""
    remaining = list(candidates)
    for k in range(1, len(chain)):
        cur = chain[k - 1]
        assert cur not in tail_refs, "chain continued past a tail sentence"
        remaining.remove(cur)
        best = max(sim(cur, r) for r in remaining)
        if sim(cur, chain[k]) != best:
            return False
        if chain[k] not in remaining:
            return False
    return True


# ---------------------------------------------------------------- metric oracles

def brute_f1(pred, gold):
    facts_p = {(b, r) for b, rs in pred.items() for r in rs}
    facts_g = {(b, r) for b, rs in gold.items() for r in rs}
    tp = len(facts_p & facts_g)
    p = tp / len(facts_p) if facts_p else 0.0
    r = tp / len(facts_g) if facts_g else 0.0
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


def brute_ranking(logits, relations):
    items = []
    for b in logits:
        for j, r in enumerate(relations):
            items.append((b, r, float(logits[b][j])))
    # insertion sort with explicit comparator
    out = []
    for it in items:
        k = 0
        while k < len(out) and (out[k][2] > it[2] or (out[k][2] == it[2] and (out[k][0], out[k][1]) < (it[0], it[1]))):
            k += 1
        out.insert(k, it)
    return out


def brute_p_at_n(ranked, gold, n):
    top = ranked[:n]
    if not top:
        return 0.0
    return sum(1 for b, r, _ in top if r in gold.get(b, ())) / len(top)


def brute_step_auc(ranked, gold):
    """Sum over hits of precision-at-hit times the recall increment."""
    n_gold = sum(len(g) for g in gold.values())
    area, tp = 0.0, 0
    for k, (b, r, _) in enumerate(ranked, 1):
        if r in gold.get(b, ()):
            tp += 1
            area += (tp / k) * (1.0 / n_gold)
    return area
