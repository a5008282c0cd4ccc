"""Document-bag data model, JSONL ingestion and bridge-entity computation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class Mention:
    entity_id: str
    start: int
    end: int


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    mentions: tuple[Mention, ...] = ()

    @cached_property
    def entity_ids(self) -> frozenset[str]:
        return frozenset(m.entity_id for m in self.mentions)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]

    @cached_property
    def entity_ids(self) -> frozenset[str]:
        ids: set[str] = set()
        for s in self.sentences:
            ids.update(s.entity_ids)
        return frozenset(ids)


@dataclass(eq=False)
class TextPath:
    head_doc_id: str
    tail_doc_id: str
    bridge_entities: frozenset[str] | None = None  # filled by compute_bridge_entities

    def __eq__(self, other):
        if not isinstance(other, TextPath):
            return NotImplemented
        return (self.head_doc_id, self.tail_doc_id) == (other.head_doc_id, other.tail_doc_id)

    def __hash__(self):
        return hash((self.head_doc_id, self.tail_doc_id))


@dataclass
class Bag:
    head_entity_id: str
    tail_entity_id: str
    paths: list[TextPath]
    labels: frozenset[str] = frozenset()

    @property
    def bag_id(self) -> str:
        return f"{self.head_entity_id}|{self.tail_entity_id}"

    @property
    def is_na(self) -> bool:
        return not self.labels


@dataclass(frozen=True)
class RelationSchema:
    relations: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.relations)) != len(self.relations):
            raise CorpusError("duplicate relation id in schema")

    def __len__(self) -> int:
        return len(self.relations)

    def index(self, relation_id: str) -> int:
        return self.relations.index(relation_id)


@dataclass
class CorpusStore:
    documents: dict[str, Document]
    bags: list[Bag]
    schema: RelationSchema

    def doc(self, doc_id: str) -> Document:
        return self.documents[doc_id]

    def bag(self, bag_id: str) -> Bag:
        for b in self.bags:
            if b.bag_id == bag_id:
                return b
        raise KeyError(bag_id)

    def __eq__(self, other):
        if not isinstance(other, CorpusStore):
            return NotImplemented
        return (
            self.documents == other.documents
            and self.schema == other.schema
            and len(self.bags) == len(other.bags)
            and all(
                (a.head_entity_id, a.tail_entity_id, a.labels, a.paths)
                == (b.head_entity_id, b.tail_entity_id, b.labels, b.paths)
                for a, b in zip(self.bags, other.bags)
            )
        )


# ---------------------------------------------------------------- parsing

_DOC_KEYS = {"doc_id", "sentences"}
_SENT_KEYS = {"tokens", "mentions"}
_MENTION_KEYS = {"entity_id", "start", "end"}
_BAG_KEYS = {"head", "tail", "labels", "paths"}
_PATH_KEYS = {"head_doc", "tail_doc"}


def _check_keys(obj, allowed: set[str], what: str, required: set[str] | None = None):
    if not isinstance(obj, dict):
        raise ValueError(f"{what} must be an object")
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown field(s) in {what}: {sorted(extra)}")
    missing = (allowed if required is None else required) - set(obj)
    if missing:
        raise ValueError(f"missing field(s) in {what}: {sorted(missing)}")


def parse_document(rec: dict) -> Document:
    _check_keys(rec, _DOC_KEYS, "document")
    sents = []
    for si, s in enumerate(rec["sentences"]):
        _check_keys(s, _SENT_KEYS, f"sentence {si}", required={"tokens"})
        tokens = tuple(str(t) for t in s["tokens"])
        mentions = []
        for m in s.get("mentions", []):
            _check_keys(m, _MENTION_KEYS, f"mention in sentence {si}")
            ent, start, end = m["entity_id"], m["start"], m["end"]
            if not isinstance(ent, str) or not ent:
                raise ValueError(f"sentence {si}: empty entity_id")
            if not (isinstance(start, int) and isinstance(end, int)):
                raise ValueError(f"sentence {si}: non-integer mention span")
            if not 0 <= start < end <= len(tokens):
                raise ValueError(f"sentence {si}: mention span [{start}, {end}) out of range")
            mentions.append(Mention(ent, start, end))
        sents.append(Sentence(tokens, tuple(mentions)))
    if not isinstance(rec["doc_id"], str) or not rec["doc_id"]:
        raise ValueError("doc_id must be a non-empty string")
    return Document(rec["doc_id"], tuple(sents))


def parse_bag(rec: dict) -> Bag:
    _check_keys(rec, _BAG_KEYS, "bag")
    paths = []
    for p in rec["paths"]:
        _check_keys(p, _PATH_KEYS, "path")
        paths.append(TextPath(str(p["head_doc"]), str(p["tail_doc"])))
    if not paths:
        raise ValueError("bag has no paths")
    return Bag(str(rec["head"]), str(rec["tail"]), paths, frozenset(str(x) for x in rec["labels"]))


def _read_jsonl(path: Path, parse):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return out


def load_schema(path) -> RelationSchema:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        _check_keys(obj, {"relations"}, "schema")
    except ValueError as exc:
        raise CorpusError(f"{path}: {exc}") from exc
    return RelationSchema(tuple(str(r) for r in obj["relations"]))


def load_corpus(corpus_path, bags_path, schema_path=None) -> CorpusStore:
    """Load documents.jsonl + bags.jsonl (+ schema.json).

    Without an explicit schema path, ``schema.json`` next to the bags file is
    used when present; otherwise the schema is the sorted set of all labels.
    """
    corpus_path, bags_path = Path(corpus_path), Path(bags_path)
    docs: dict[str, Document] = {}
    for doc in _read_jsonl(corpus_path, parse_document):
        if doc.doc_id in docs:
            raise CorpusError(f"duplicate document id {doc.doc_id}")
        docs[doc.doc_id] = doc

    bags = _read_jsonl(bags_path, parse_bag)
    seen = set()
    for bag in bags:
        if bag.bag_id in seen:
            raise CorpusError(f"duplicate bag {bag.bag_id}")
        seen.add(bag.bag_id)
        for p in bag.paths:
            for d in (p.head_doc_id, p.tail_doc_id):
                if d not in docs:
                    raise CorpusError(f"bag {bag.bag_id}: unknown document {d}")

    if schema_path is None and (bags_path.parent / "schema.json").exists():
        schema_path = bags_path.parent / "schema.json"
    if schema_path is not None:
        schema = load_schema(schema_path)
    else:
        schema = RelationSchema(tuple(sorted({r for b in bags for r in b.labels})))
    return CorpusStore(docs, bags, schema)


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "sentences": [
            {
                "tokens": list(s.tokens),
                "mentions": [{"entity_id": m.entity_id, "start": m.start, "end": m.end} for m in s.mentions],
            }
            for s in doc.sentences
        ],
    }


def bag_to_record(bag: Bag) -> dict:
    return {
        "head": bag.head_entity_id,
        "tail": bag.tail_entity_id,
        "labels": sorted(bag.labels),
        "paths": [{"head_doc": p.head_doc_id, "tail_doc": p.tail_doc_id} for p in bag.paths],
    }


def save_corpus(store: CorpusStore, corpus_path, bags_path, schema_path=None) -> None:
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for doc in store.documents.values():
            fh.write(json.dumps(document_to_record(doc), ensure_ascii=False) + "\n")
    with open(bags_path, "w", encoding="utf-8") as fh:
        for bag in store.bags:
            fh.write(json.dumps(bag_to_record(bag), ensure_ascii=False) + "\n")
    if schema_path is not None:
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump({"relations": list(store.schema.relations)}, fh, ensure_ascii=False)


# ---------------------------------------------------------------- bridges

def compute_bridge_entities(path: TextPath, store: CorpusStore, head_id: str, tail_id: str) -> frozenset[str]:
    """Entities mentioned in both documents of ``path``, targets excluded."""
    if path.bridge_entities is None:
        a = store.doc(path.head_doc_id).entity_ids
        b = store.doc(path.tail_doc_id).entity_ids
        path.bridge_entities = frozenset((a & b) - {head_id, tail_id})
    return path.bridge_entities


def bag_bridges(bag: Bag, store: CorpusStore) -> list[frozenset[str]]:
    return [compute_bridge_entities(p, store, bag.head_entity_id, bag.tail_entity_id) for p in bag.paths]


def validate_bag(bag: Bag, store: CorpusStore) -> list[str]:
    violations = []
    if bag.head_entity_id == bag.tail_entity_id:
        violations.append("head and tail entity are identical")
    for label in sorted(bag.labels):
        if label not in store.schema.relations:
            violations.append(f"unknown relation id {label}")
    for i, p in enumerate(bag.paths):
        hd = store.documents.get(p.head_doc_id)
        td = store.documents.get(p.tail_doc_id)
        if hd is None or td is None:
            violations.append(f"path {i}: unknown document")
            continue
        if bag.head_entity_id not in hd.entity_ids:
            violations.append(f"path {i}: head entity absent")
        if bag.tail_entity_id not in td.entity_ids:
            violations.append(f"path {i}: tail entity absent")
    return violations


def validate_store(store: CorpusStore) -> dict[str, list[str]]:
    report = {}
    for bag in store.bags:
        v = validate_bag(bag, store)
        if v:
            report[bag.bag_id] = v
    return report
