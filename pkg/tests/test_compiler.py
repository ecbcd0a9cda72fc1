import random

import pytest
from hypothesis import given, settings, strategies as st

from deal.compiler import RTop, build_rtop
from deal.features import FeatureError, Model, parse_feature
from deal.fst import EPS, FSTART, SIGMA, SymbolTable, read_text, write_text
from oracle import random_graph, random_model

from conftest import DATA, tagger_features


def walk(rtop, feature):
    """Follow <f> tokens... <#id> from the start state; returns the path weight."""
    syms = rtop.symbols
    s, total = rtop.start, 0.0
    labels = [FSTART] + [syms.find(str(t)) for t in feature.tokens]
    for lab in labels:
        arcs = [a for a in rtop.fst.arcs(s) if a.ilabel == lab]
        assert len(arcs) == 1, (feature.text, lab)
        total += arcs[0].weight
        s = arcs[0].next
    tag = syms.end_tag(feature.id)
    exits = [a for a in rtop.fst.arcs(s) if a.ilabel == EPS and a.olabel == tag]
    assert len(exits) == 1 and exits[0].next == rtop.start
    return total + exits[0].weight


def check_structure(rtop, model):
    fst = rtop.fst
    assert fst.start == 0 and fst.finals == {0: 0.0}
    assert any(a.ilabel == SIGMA and a.next == 0 for a in fst.arcs(0))
    for s in fst.states():
        trips = [(a.ilabel, a.olabel, a.weight) for a in fst.arcs(s)]
        assert len(trips) == len(set(trips)), "not deterministic over triples"
        for a in fst.arcs(s):
            if a.weight != 0.0:
                assert a.ilabel == EPS and rtop.symbols.is_end_tag(a.olabel)
    tags = [a.olabel for s in fst.states() for a in fst.arcs(s) if a.ilabel == EPS]
    assert sorted(rtop.feature_of(t) for t in tags) == [f.id for f in model.features]
    for f in model.features:
        assert walk(rtop, f) == f.weight


def test_empty_model_is_sigma_loop():
    rtop = build_rtop(Model())
    assert rtop.fst.num_states == 1
    assert [(a.ilabel, a.olabel, a.weight, a.next) for a in rtop.fst.arcs(0)] == \
        [(SIGMA, SIGMA, 0.0, 0)]
    assert write_text(rtop.fst) == "0\t0\t1\t1\t0\n0\t0\n"


def test_tagger_structure(tagger):
    rtop = build_rtop(tagger)
    check_structure(rtop, tagger)
    weights = {rtop.feature_of(a.olabel): a.weight for s in rtop.fst.states()
               for a in rtop.fst.arcs(s) if a.ilabel == EPS}
    assert weights == {1: 1.2, 2: 0.8, 3: -0.4}
    # "play" after <f> is shared by f1 and f2
    f_state = next(a.next for a in rtop.fst.arcs(0) if a.ilabel == FSTART)
    play = [a for a in rtop.fst.arcs(f_state) if a.ilabel == rtop.symbols.find("play")]
    assert len(play) == 1
    nts = {rtop.symbols.symbol(a.ilabel) for a in rtop.fst.arcs(play[0].next)}
    assert nts == {"<music_title>", "<music_artist>"}


def test_tagger_golden_and_stable(tagger):
    a, b = build_rtop(tagger), build_rtop(Model(1.0, tagger_features()))
    text = write_text(a.fst)
    assert text == write_text(b.fst) and a.symbols.to_text() == b.symbols.to_text()
    assert text == (DATA / "tagger_rtop.txt").read_text()
    assert a.symbols.to_text() == (DATA / "tagger_rtop.syms").read_text()


def test_serialized_round_trip(tagger):
    rtop = build_rtop(tagger)
    syms = SymbolTable.from_text(rtop.symbols.to_text())
    back = RTop.from_fst(read_text(write_text(rtop.fst), syms))
    assert back.nonterminals == rtop.nonterminals
    assert write_text(back.fst) == write_text(rtop.fst)
    check_structure(back, tagger)


def test_identical_tokens_share_prefix():
    m = Model(1.0, [parse_feature("play <music_title>", 1, 1.0),
                    parse_feature("play <music_title>", 2, 2.0)])
    rtop = build_rtop(m)
    check_structure(rtop, m)
    # s_top, after <f>, after play, after the title
    assert rtop.fst.num_states == 4
    assert rtop.symbols.find("<#1>") is not None and rtop.symbols.find("<#2>") is not None


def test_duplicate_ids_rejected():
    with pytest.raises(FeatureError):
        Model(1.0, [parse_feature("a <x>", 1), parse_feature("b <x>", 1)])
    m = Model(1.0, [parse_feature("a <x>", 1)])
    m.features.append(parse_feature("b <x>", 1))
    with pytest.raises(ValueError, match="duplicate"):
        build_rtop(m)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_random_models(seed):
    rng = random.Random(seed)
    model = random_model(rng, random_graph(rng))
    rtop = build_rtop(model)
    check_structure(rtop, model)
    assert write_text(build_rtop(model).fst) == write_text(rtop.fst)
