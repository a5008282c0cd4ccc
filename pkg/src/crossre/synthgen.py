"""Synthetic corpora with planted bridge-entity relation signals.

Two signal modes:

within-path
    Each path of a positive bag carries a pair of relation triggers, one next
    to the bridge mention in the head document and one next to it in the tail
    document. N/A paths carry mismatched halves. One path decides the bag.

cross-path-only
    Two paths of a bag share one bridge entity. Each carries a single "half"
    token ``x`` or ``y`` next to that bridge; the bag's class is
    ``(x + y) mod (R + 1)`` where class ``R`` is N/A. Every half is uniformly
    distributed given the class, so no single path carries label information.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpus import (
    Bag, CorpusStore, Document, Mention, RelationSchema, Sentence, TextPath, save_corpus, validate_store,
)

MODES = ("within-path", "cross-path-only")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_relations: int = 2
    bags_per_relation: int = 10
    na_bags: int = 10
    paths_per_bag: tuple[int, int] = (1, 3)
    bridges_per_path: tuple[int, int] = (1, 3)
    noise_sentences: tuple[int, int] = (26, 34)  # keeps every unfiltered path above 512 tokens
    sentence_length: tuple[int, int] = (10, 16)
    vocab_size: int = 600
    mode: str = "within-path"
    seed: int = 0
    gap: int = 4  # filler tokens between a target mention and the bridge mention
    noise_entities: tuple[int, int] = (0, 2)
    prefix: str = ""

    def __post_init__(self):
        for name in ("paths_per_bag", "bridges_per_path", "noise_sentences", "sentence_length", "noise_entities"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise SynthError(f"{name}: empty range {lo}..{hi}")
        if self.mode not in MODES:
            raise SynthError(f"mode must be one of {MODES}")
        if self.n_relations < 1:
            raise SynthError("need at least one relation")
        if self.paths_per_bag[0] < 1 or self.bridges_per_path[0] < 1:
            raise SynthError("each bag needs a path and each path a signal bridge")
        if self.mode == "cross-path-only" and self.paths_per_bag[0] < 2:
            raise SynthError("cross-path-only mode needs at least two paths per bag")
        if self.noise_sentences[0] < 1:
            raise SynthError("documents need at least one noise sentence")
        if self.sentence_length[0] < 1:
            raise SynthError("sentences need at least one token")

    @property
    def n_classes(self) -> int:
        return self.n_relations + 1

    @property
    def relations(self) -> list[str]:
        return [f"R{r}" for r in range(self.n_relations)]

    def trigger_tokens(self) -> list[str]:
        if self.mode == "within-path":
            return [f"w{k}" for k in range(2 * self.n_relations)]
        return [f"w{k}" for k in range(self.n_classes)]

    def max_entities_per_bag(self) -> int:
        p, b, z = self.paths_per_bag[1], self.bridges_per_path[1], self.noise_entities[1]
        return 3 + p * b + 2 * p * z


MIN_FILLER = 32


def _layout(spec: SynthSpec):
    n_trig = len(spec.trigger_tokens())
    n_ent = spec.max_entities_per_bag()
    if spec.vocab_size < n_trig + n_ent + MIN_FILLER:
        raise SynthError(
            f"vocabulary too small: {spec.vocab_size} tokens for {n_trig} triggers, "
            f"{n_ent} entities per bag and {MIN_FILLER} fillers"
        )
    names = [f"w{k}" for k in range(n_trig, n_trig + n_ent)]
    fillers = [f"w{k}" for k in range(n_trig + n_ent, spec.vocab_size)]
    return names, fillers


class _DocBuilder:
    def __init__(self, rng: random.Random, fillers: list[str]):
        self.rng, self.fillers = rng, fillers
        self.sentences: list[tuple[list[str], list[Mention], bool]] = []  # (tokens, mentions, is_signal)

    def noise(self, spec: SynthSpec):
        n = self.rng.randint(*spec.sentence_length)
        self.sentences.append(([self.rng.choice(self.fillers) for _ in range(n)], [], False))

    def insert_entity(self, entity_id: str, name: str):
        """Drop a single-token mention into a random noise sentence at a random position."""
        i = self.rng.choice([k for k, s in enumerate(self.sentences) if not s[2]])
        toks, ms, _ = self.sentences[i]
        pos = self.rng.randint(0, len(toks))
        toks.insert(pos, name)
        ms = [Mention(m.entity_id, m.start + (m.start >= pos), m.end + (m.start >= pos)) for m in ms]
        ms.append(Mention(entity_id, pos, pos + 1))
        self.sentences[i] = (toks, ms, False)

    def place(self, toks, ms):
        i = self.rng.randint(0, len(self.sentences))
        self.sentences.insert(i, (toks, ms, True))

    def build(self, doc_id: str) -> Document:
        return Document(doc_id, tuple(
            Sentence(tuple(t), tuple(sorted(ms, key=lambda m: (m.start, m.end, m.entity_id))))
            for t, ms, _ in self.sentences
        ))


def _signal_sentence(rng, fillers, first, first_name, bridge, bridge_name, trigger, gap, head_side: bool):
    """Target mention and bridge mention ``gap`` fillers apart; trigger right after the bridge."""
    pad = [rng.choice(fillers) for _ in range(rng.randint(1, 2))]
    mid = [rng.choice(fillers) for _ in range(gap)]
    trig = [trigger] if trigger else []
    if head_side:
        toks = [first_name] + mid + [bridge_name] + trig + pad
        ms = [Mention(first, 0, 1), Mention(bridge, gap + 1, gap + 2)]
    else:
        toks = pad + [bridge_name] + trig + mid + [first_name]
        b = len(pad)
        ms = [Mention(bridge, b, b + 1), Mention(first, len(toks) - 1, len(toks))]
    return toks, ms


def generate(spec: SynthSpec) -> tuple[CorpusStore, dict]:
    rng = random.Random(spec.seed)
    names, fillers = _layout(spec)
    trig = spec.trigger_tokens()
    R = spec.n_relations

    # class per bag; class R is N/A
    classes = [r for r in range(R) for _ in range(spec.bags_per_relation)] + [R] * spec.na_bags
    seen = Counter()
    plan = []
    for c in classes:
        x = seen[c] % spec.n_classes  # stratified halves for the cross-path mode
        seen[c] += 1
        plan.append((c, x))
    rng.shuffle(plan)

    documents: dict[str, Document] = {}
    bags: list[Bag] = []
    manifest_bags = []
    pre = spec.prefix
    for bi, (c, x) in enumerate(plan):
        bag_names = rng.sample(names, spec.max_entities_per_bag())
        name_iter = iter(bag_names)
        ent = lambda tag: f"{pre}b{bi}_{tag}"  # noqa: E731
        head, tail = ent("H"), ent("T")
        head_name, tail_name = next(name_iter), next(name_iter)
        n_paths = rng.randint(*spec.paths_per_bag)

        if spec.mode == "cross-path-only":
            y = (c - x) % spec.n_classes
            signal_paths = sorted(rng.sample(range(n_paths), 2))
            halves = {signal_paths[0]: x, signal_paths[1]: y}
            shared = ent("S")
            shared_name = next(name_iter)
        paths, cert_paths = [], []
        for pi in range(n_paths):
            hb, tb = _DocBuilder(rng, fillers), _DocBuilder(rng, fillers)
            for b in (hb, tb):
                for _ in range(rng.randint(*spec.noise_sentences)):
                    b.noise(spec)
            n_bridges = rng.randint(*spec.bridges_per_path)
            if spec.mode == "within-path":
                bridge, bridge_name = ent(f"p{pi}b0"), next(name_iter)
                if c < R:
                    t_head, t_tail = trig[2 * c], trig[2 * c + 1]
                elif R >= 2:
                    r, s = rng.sample(range(R), 2)
                    t_head, t_tail = trig[2 * r], trig[2 * s + 1]
                else:
                    t_head, t_tail = trig[0], None
                cert_paths.append({"path": pi, "triggers": [t_head, t_tail]})
            else:
                if pi in halves:
                    bridge, bridge_name = shared, shared_name
                    t_head = t_tail = trig[halves[pi]]
                    cert_paths.append({"path": pi, "half": halves[pi]})
                else:
                    bridge, bridge_name = ent(f"p{pi}b0"), next(name_iter)
                    t_head = t_tail = None
                    cert_paths.append({"path": pi, "half": None})
            hb.place(*_signal_sentence(rng, fillers, head, head_name, bridge, bridge_name, t_head, spec.gap, True))
            tb.place(*_signal_sentence(rng, fillers, tail, tail_name, bridge, bridge_name, t_tail, spec.gap, False))
            for k in range(1, n_bridges):
                e, nm = ent(f"p{pi}b{k}"), next(name_iter)
                hb.insert_entity(e, nm)
                tb.insert_entity(e, nm)
            for side, b in (("h", hb), ("t", tb)):
                for k in range(rng.randint(*spec.noise_entities)):
                    b.insert_entity(ent(f"p{pi}{side}n{k}"), next(name_iter))
            hd, td = f"{pre}b{bi}p{pi}h", f"{pre}b{bi}p{pi}t"
            documents[hd] = hb.build(hd)
            documents[td] = tb.build(td)
            paths.append(TextPath(hd, td))

        labels = frozenset() if c == R else frozenset({f"R{c}"})
        bag = Bag(head, tail, paths, labels)
        bags.append(bag)
        cert = "decidable-from-single-path" if spec.mode == "within-path" else "undecidable-from-any-single-path"
        manifest_bags.append({"bag": bag.bag_id, "class": c, "labels": sorted(labels),
                              "certificate": cert, "paths": cert_paths})

    store = CorpusStore(documents, bags, RelationSchema(tuple(spec.relations)))
    manifest = {"spec": asdict(spec), "mode": spec.mode, "trigger_tokens": trig, "bags": manifest_bags}
    return store, manifest


def write_synth(spec: SynthSpec, out_dir) -> tuple[CorpusStore, dict]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store, manifest = generate(spec)
    save_corpus(store, out / "documents.jsonl", out / "bags.jsonl", out / "schema.json")
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return store, manifest


# ---------------------------------------------------------------- certificates

def path_evidence(store: CorpusStore, path: TextPath, trigger_tokens) -> tuple[str, ...]:
    trig = set(trigger_tokens)
    found = set()
    for d in (path.head_doc_id, path.tail_doc_id):
        for s in store.doc(d).sentences:
            found.update(t for t in s.tokens if t in trig)
    return tuple(sorted(found))


def single_path_certificate(store: CorpusStore, trigger_tokens) -> dict:
    """Accuracy of the best rule mapping one path's trigger evidence to its bag's class.

    The rule is fitted on the data itself, so it upper-bounds any single-path
    rule-based classifier. Chance is the majority-class rate.
    """
    table: dict[tuple, Counter] = defaultdict(Counter)
    n = 0
    for bag in store.bags:
        label = tuple(sorted(bag.labels))
        for p in bag.paths:
            table[path_evidence(store, p, trigger_tokens)][label] += 1
            n += 1
    best = sum(max(c.values()) for c in table.values())
    totals = Counter()
    for c in table.values():
        totals.update(c)
    return {"accuracy": best / n, "chance": max(totals.values()) / n, "n_paths": n}


def check_generated(store: CorpusStore) -> dict:
    return validate_store(store)
