import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from deal.kg import (KGError, NonTerminalSpec, compute_strata,
                     expand_nonterminal, kg_to_dict, load_kg, parse_kg, save_kg)
from oracle import random_graph, ranked_ids

from conftest import DATA


def test_songs_document(songs_kg):
    assert len(songs_kg.entities) == 2
    e = songs_kg.entities["12345"]
    assert [(n.words, n.word_count) for n in e.names] == [(("canyon", "moon"), 2)]
    assert e.types == (("music title", 0.0025),)
    rel = e.relationships[0]
    assert (rel.relation, rel.entity_id, rel.popularity) == ("performed by", "67890", 0.0021)


def test_strict_json_is_accepted_too():
    doc = {"1": {"names": {"Amherst": {"word count": 1}}, "types": {"city": {"popularity": 1}},
                 "relationships": []}}
    g = parse_kg(json.dumps(doc))
    assert g.entities["1"].names[0].words == ("amherst",)


def test_empty_graph():
    g = parse_kg("{}")
    assert g.entities == {} and g.types == []


def test_dangling_id_is_named():
    text = (DATA / "songs_kg.json").read_text()
    first = text[:text.index('"67890": {')]
    with pytest.raises(KGError, match="67890"):
        parse_kg(first)


@pytest.mark.parametrize("body, what", [
    ('{"1": {"names": {"a": {"word count": 1}}, "types": {"x": {"popularity": -1}}, '
     '"relationships": []}}', "popularity"),
    ('{"1": {"names": {"a b": {"word count": 3}}, "types": {"x": {"popularity": 1}}, '
     '"relationships": []}}', "word count"),
    ('{"1": {"names": {"a": {"word count": 1}}, "types": {"x": {"popularity": 1}}, '
     '"relationships": [{"relation": "", "entity id": "1", "popularity": 0}]}}', "relation"),
    ('{"1": {"names": ', None),
])
def test_invalid_documents(body, what):
    with pytest.raises(KGError, match=what):
        parse_kg(body)


def _chain(n):
    pops = [1.0 / (i + 1) for i in range(n)]
    return None, {
        f"e{i:03d}": {"names": {f"n{i}": {"word count": 1}}, "types": {"t": {"popularity": p}},
                      "relationships": []} for i, p in enumerate(pops)}


def test_strata_clamp_and_cutoffs():
    _, doc = _chain(3)
    g = parse_kg(json.dumps(doc))
    assert compute_strata(g, "t", 100) == (3, 3, 3)
    _, doc = _chain(500)
    g = parse_kg(json.dumps(doc))
    assert compute_strata(g, "t", 100, 300, 60000) == (100, 300, 500)


def test_strata_ties_break_by_id():
    doc = {i: {"names": {i: {"word count": 1}}, "types": {"t": {"popularity": 0.5}},
               "relationships": []} for i in ("zz", "aa", "mm")}
    g1, g2 = parse_kg(json.dumps(doc)), parse_kg(json.dumps(doc))
    assert g1.ranked("t") == ["aa", "mm", "zz"] == g2.ranked("t")
    assert compute_strata(g1, "t", 1, 2, 3) == compute_strata(g2, "t", 1, 2, 3) == (1, 2, 3)


def test_strata_errors():
    g = parse_kg("{}")
    with pytest.raises(KGError):
        compute_strata(g, "nope")
    _, doc = _chain(3)
    with pytest.raises(ValueError):
        compute_strata(parse_kg(json.dumps(doc)), "t", 5, 2, 9)


def test_strata_override_in_file():
    _, doc = _chain(10)
    doc["_strata"] = {"t": {"head": 2, "torso": 5, "tail": 8}}
    assert parse_kg(json.dumps(doc)).strata["t"] == (2, 5, 8)


def test_expand_songs(songs_kg):
    assert expand_nonterminal(songs_kg, NonTerminalSpec("music title")) == \
        {("canyon", "moon"): frozenset({"12345"})}
    assert expand_nonterminal(songs_kg, NonTerminalSpec("music artist", min_word_count=3)) == \
        {("harry", "edward", "styles"): frozenset({"67890"})}
    with pytest.raises(KGError):
        songs_kg.expand(NonTerminalSpec("state"))
    empty = expand_nonterminal(songs_kg, NonTerminalSpec("music artist", relation=("contains", 1)),
                               {1: {"12345"}})
    assert empty == {}


def test_expand_relation_and_missing_binding(songs_kg):
    spec = NonTerminalSpec("music artist", relation=("performed", 1))
    assert set(expand_nonterminal(songs_kg, spec, {1: {"12345"}})) == \
        {("harry", "styles"), ("harry", "edward", "styles")}
    with pytest.raises(KGError, match="binding"):
        expand_nonterminal(songs_kg, spec, {})


def test_shared_surfaces_merge():
    doc = {i: {"names": {"springfield": {"word count": 1}}, "types": {"city": {"popularity": 1}},
               "relationships": []} for i in ("1", "2")}
    assert parse_kg(json.dumps(doc)).expand(NonTerminalSpec("city")) == \
        {("springfield",): frozenset({"1", "2"})}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_cumulative_and_monotone_expansions(seed):
    g = random_graph(random.Random(seed))
    for t in g.types:
        assert g.ranked(t) == ranked_ids(g, t)
        sets = [set(g.expand(NonTerminalSpec(t, pop_tier=p))) for p in ("head", "torso", "tail")]
        assert sets[0] <= sets[1] <= sets[2] <= set(g.expand(NonTerminalSpec(t)))
        wc = [set(g.expand(NonTerminalSpec(t, min_word_count=k))) for k in (3, 2, 1)]
        assert wc[0] <= wc[1] <= wc[2]
        h, to, ta = g.strata[t]
        assert h <= to <= ta


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_save_load_round_trip(tmp_path_factory, seed):
    g = random_graph(random.Random(seed))
    path = tmp_path_factory.mktemp("kg") / "g.json"
    save_kg(g, path)
    back = load_kg(path)
    assert kg_to_dict(back) == kg_to_dict(g)
    assert back.strata == g.strata
