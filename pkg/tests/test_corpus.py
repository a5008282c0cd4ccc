import json

import pytest
from hypothesis import given, settings, strategies as st

from crossre.corpus import (
    Bag, CorpusError, TextPath, compute_bridge_entities, load_corpus, save_corpus, validate_bag,
)

from conftest import make_doc, make_store, write_jsonl


def test_load_fixture(fixture_files):
    store = load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")
    assert len(store.documents) == 2
    assert len(store.bags) == 1
    assert store.schema.relations == ("allegiance", "country")
    assert store.bags[0].labels == {"allegiance"}


def test_dangling_document(fixture_files):
    write_jsonl(fixture_files / "bags.jsonl",
                [{"head": "h", "tail": "t", "labels": [], "paths": [{"head_doc": "dA", "tail_doc": "dX"}]}])
    with pytest.raises(CorpusError, match="unknown document dX"):
        load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")


def test_duplicate_doc_id(fixture_files):
    lines = (fixture_files / "documents.jsonl").read_text().splitlines()
    (fixture_files / "documents.jsonl").write_text("\n".join(lines + [lines[0]]) + "\n")
    with pytest.raises(CorpusError, match="duplicate document id"):
        load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")


def test_malformed_record_names_line(fixture_files):
    with open(fixture_files / "documents.jsonl", "a") as fh:
        fh.write(json.dumps({"doc_id": "dC", "sentences": [{"tokens": ["a"], "mentions": [
            {"entity_id": "x", "start": 0, "end": 5}]}]}) + "\n")
    with pytest.raises(CorpusError, match=r"documents.jsonl:3"):
        load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")


def test_unknown_field_rejected(fixture_files):
    write_jsonl(fixture_files / "bags.jsonl",
                [{"head": "h", "tail": "t", "labels": [], "paths": [{"head_doc": "dA", "tail_doc": "dB"}],
                  "comment": "x"}])
    with pytest.raises(CorpusError, match="unknown field"):
        load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")


def test_round_trip(fixture_files, tmp_path):
    store = load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")
    out = tmp_path / "rt"
    out.mkdir()
    save_corpus(store, out / "documents.jsonl", out / "bags.jsonl", out / "schema.json")
    again = load_corpus(out / "documents.jsonl", out / "bags.jsonl")
    assert again == store


def _store(a, b):
    return make_store([make_doc("A", [a]), make_doc("B", [b])],
                      [Bag("h", "t", [TextPath("A", "B")], frozenset())])


@pytest.mark.parametrize("a,b,expected", [
    (["@h", "@b1", "@b2"], ["@t", "@b1", "@b3"], {"b1"}),
    (["@h"], ["@t"], set()),
    (["@h", "@t", "@b1"], ["@t", "@b1"], {"b1"}),
])
def test_bridge_examples(a, b, expected):
    store = _store(a, b)
    path = store.bags[0].paths[0]
    assert compute_bridge_entities(path, store, "h", "t") == expected
    assert path.bridge_entities == expected  # cached


ents = st.lists(st.sampled_from(["h", "t", "a", "b", "c", "d"]), max_size=6)


@settings(max_examples=100, deadline=None)
@given(ents, ents)
def test_bridges_symmetric_idempotent_and_exclude_targets(a, b):
    store = make_store([make_doc("A", [["@" + e for e in a] or ["x"]]),
                        make_doc("B", [["@" + e for e in b] or ["x"]])], [])
    p1, p2 = TextPath("A", "B"), TextPath("B", "A")
    r1 = compute_bridge_entities(p1, store, "h", "t")
    assert r1 == compute_bridge_entities(p2, store, "h", "t")
    assert r1 == compute_bridge_entities(p1, store, "h", "t")
    assert not r1 & {"h", "t"}
    assert r1 == (set(a) & set(b)) - {"h", "t"}


def test_validate_bag(fixture_files):
    store = load_corpus(fixture_files / "documents.jsonl", fixture_files / "bags.jsonl")
    assert validate_bag(store.bags[0], store) == []
    bad_path = Bag("h", "t", [TextPath("dB", "dB")], frozenset())
    assert validate_bag(bad_path, store) == ["path 0: head entity absent"]
    bad_label = Bag("h", "t", [TextPath("dA", "dB")], frozenset({"founder"}))
    assert validate_bag(bad_label, store) == ["unknown relation id founder"]
