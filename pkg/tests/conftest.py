import json

import pytest

from crossre.corpus import Bag, CorpusStore, Document, Mention, RelationSchema, Sentence, TextPath


def make_doc(doc_id, sentences):
    """Sentences as token lists; a token "@x" is a one-token mention of entity x."""
    out = []
    for toks in sentences:
        mentions = tuple(Mention(t[1:], i, i + 1) for i, t in enumerate(toks) if t.startswith("@"))
        out.append(Sentence(tuple(toks), mentions))
    return Document(doc_id, tuple(out))


def make_store(docs, bags, relations=("R0", "R1")):
    return CorpusStore({d.doc_id: d for d in docs}, bags, RelationSchema(tuple(relations)))


@pytest.fixture
def scoring_store():
    """Two paths. Path 0 bridges: e, o1, o2, f. Path 1 bridges: e, f."""
    docs = [
        make_doc("d0h", [["@h", "@e", "@o1"], ["@o2", "@h"], ["@e", "@o2"], ["@f", "@o1"]]),
        make_doc("d0t", [["@t", "w"], ["@e", "@o1"], ["@o2"], ["@f"]]),
        make_doc("d1h", [["@h"], ["@e", "@f"]]),
        make_doc("d1t", [["@t"], ["@e"], ["@f"]]),
    ]
    bag = Bag("h", "t", [TextPath("d0h", "d0t"), TextPath("d1h", "d1t")], frozenset({"R0"}))
    return make_store(docs, [bag])


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


@pytest.fixture
def fixture_files(tmp_path):
    docs = [
        {"doc_id": "dA", "sentences": [
            {"tokens": ["Kappesser", "served", "in", "the", "Civil", "War"],
             "mentions": [{"entity_id": "h", "start": 0, "end": 1}, {"entity_id": "cw", "start": 4, "end": 6}]},
        ]},
        {"doc_id": "dB", "sentences": [
            {"tokens": ["The", "Civil", "War", "involved", "the", "U.S."],
             "mentions": [{"entity_id": "cw", "start": 1, "end": 3}, {"entity_id": "t", "start": 5, "end": 6}]},
        ]},
    ]
    bags = [{"head": "h", "tail": "t", "labels": ["allegiance"], "paths": [{"head_doc": "dA", "tail_doc": "dB"}]}]
    write_jsonl(tmp_path / "documents.jsonl", docs)
    write_jsonl(tmp_path / "bags.jsonl", bags)
    (tmp_path / "schema.json").write_text(json.dumps({"relations": ["allegiance", "country"]}))
    return tmp_path


ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
