import json
import random
from concurrent.futures import ThreadPoolExecutor

import pytest
from hypothesis import given, settings, strategies as st

from deal.compiler import build_rtop
from deal.features import Model, parse_feature
from deal.fst import FstError, SymbolTable, Wfst, best_path, enumerate_paths
from deal.kg import parse_kg
from deal.rescorer import (HypothesisScorer, Rescorer, ScoredHypothesis, combine, rdet_arc,
                           rescore_lattice, rescore_nbest, score_hypothesis)
import oracle


def lattice(paths):
    """Lattice with one branch per path; each path's base score sits on its first arc."""
    syms = SymbolTable()
    t = Wfst(syms)
    t.set_start(t.add_state())
    end = t.add_state()
    t.set_final(end)
    for words, base in paths:
        s = t.start
        for i, w in enumerate(words):
            d = end if i == len(words) - 1 else t.add_state()
            lab = syms.add(w)
            t.add_arc(s, lab, lab, base if i == 0 else 0.0, d)
            s = d
    return t


def one_entity_graph(name, type_name):
    return parse_kg(json.dumps({"x1": {"names": {name: {"word count": len(name.split())}},
                                       "types": {type_name: {"popularity": 1}},
                                       "relationships": []}}))


def test_score_hypothesis_songs(tagger, songs_kg):
    h = score_hypothesis("play canyon moon by harry styles".split(), -10.0, tagger, songs_kg)
    assert h.feature_counts == {1: 1}
    assert h.total == pytest.approx(-8.8, abs=1e-12)
    assert h.fires() == "1:1"


def test_empty_model_total_is_scaled_base(songs_kg):
    h = score_hypothesis(["a", "b"], -4.0, Model(0.5), songs_kg)
    assert h.total == -2.0 and h.feature_counts == {}


def test_overlapping_play():
    graph = one_entity_graph("play", "music artist")
    model = Model(1.0, [parse_feature("play <music_artist>", 1, 1.0)])
    assert score_hypothesis(["play", "play"], 0.0, model, graph).feature_counts == {1: 1}
    rdet = Rescorer(model, graph).rescore(lattice([(["play", "play"], 0.0)]))[0]
    assert rdet.feature_counts == {1: 1}


def test_rescore_nbest(tagger, songs_kg):
    only = rescore_nbest([(["x"], -1.0)], tagger, songs_kg)
    assert [h.words for h in only] == [["x"]]
    ranked = rescore_nbest([("play can you moon by harry styles".split(), -9.5),
                            ("play canyon moon by harry styles".split(), -10.0)], tagger, songs_kg)
    assert ranked[0].words[1] == "canyon"
    tied = rescore_nbest([(["a"], -1.0), (["b"], -1.0), (["c"], -1.0)], tagger, songs_kg)
    assert [h.words[0] for h in tied] == ["a", "b", "c"]
    with pytest.raises(ValueError):
        rescore_nbest([], tagger, songs_kg)


def steps(rescorer, words, state=None):
    rdet = rescorer.rdet()
    state = rdet.start() if state is None else state
    weights = []
    for w in words:
        weight, state = rdet_arc(state, rescorer.symbols.find(w), rdet)
        weights.append(weight)
    return weights, state


def test_rdet_song_walk(tagger, songs_kg):
    weights, _ = steps(Rescorer(tagger, songs_kg), "play canyon moon by harry styles".split())
    assert sum(weights) == pytest.approx(1.2)
    assert weights[3] == 1.2  # credited on the word that completes the feature


def test_rdet_simultaneous_completion():
    graph = one_entity_graph("b", "x")
    model = Model(1.0, [parse_feature("<x>", 1, 2.0), parse_feature("a <x>", 2, 1.0)])
    r = Rescorer(model, graph)
    r.symbols.add("a")
    weights, _ = steps(r, ["a", "b"])
    assert weights == [0.0, 3.0]


def test_rdet_pure_sigma(songs_kg):
    r = Rescorer(Model(), songs_kg)
    rdet = r.rdet()
    start = rdet.start()
    assert rdet.arc(start, r.symbols.find("canyon")) == (0.0, start)
    with pytest.raises(TypeError):
        rdet.arcs(start)


def test_zero_feature_model_keeps_best(songs_kg):
    lat = lattice([(["a", "b"], -1.0), (["a", "c"], -2.0), (["d"], -1.5)])
    best, out = rescore_lattice(lat, Model(), None, songs_kg)
    assert best.words == best_path(lat)[0] and best.total == -1.0
    assert sorted(enumerate_paths(out)) == sorted(enumerate_paths(lat))


def test_can_you_moon_correction(songs_kg):
    model = Model(1.0, [parse_feature("play <music_title> by", 1, 1.2),
                        parse_feature("<music_title> by <music_artist;rel=performed@1>", 2, 0.5)])
    paths = [("play can you moon by harry styles".split(), -9.5),
             ("play canyon moon by harry styles".split(), -10.0),
             ("play can you moon by hairy styles".split(), -11.0),
             ("play canyon moon by hairy styles".split(), -11.5)]
    best, out = rescore_lattice(lattice(paths), model, build_rtop(model), songs_kg)
    assert " ".join(best.words) == "play canyon moon by harry styles"
    assert best.feature_counts == {1: 1, 2: 1}
    for words, base in paths:
        direct = score_hypothesis(words, base, model, songs_kg).total
        assert dict((" ".join(w), s) for w, s in enumerate_paths(out))[" ".join(words)] == \
            pytest.approx(direct, abs=1e-12)


def test_w0_zero_ranks_by_features(tagger, songs_kg):
    model = Model(0.0, tagger.features)
    lat = lattice([("play can you moon by x".split(), -1.0),
                   ("play canyon moon by x".split(), -50.0)])
    assert Rescorer(model, songs_kg).rescore(lat)[0].words[1] == "canyon"


def test_unknown_words_match_sigma(tagger, songs_kg):
    lat = lattice([("zzz play canyon moon by".split(), 0.0)])
    best, _ = Rescorer(tagger, songs_kg).rescore(lat)
    assert best.feature_counts == {1: 1}


def test_empty_lattice(tagger, songs_kg):
    with pytest.raises(FstError):
        Rescorer(tagger, songs_kg).rescore(Wfst(SymbolTable()))


def test_total_recomputable(tagger, songs_kg):
    h = score_hypothesis("play canyon moon by harry styles".split(), -3.25, tagger, songs_kg)
    assert h.total == combine(tagger, h.base_score, h.feature_counts)
    assert ScoredHypothesis.make(h.words, h.base_score, h.feature_counts, tagger) == h


def check_instance(seed, shared=False):
    graph, model, lat = oracle.random_instance(seed)
    rescorer = Rescorer(model, graph, shared_cache=shared)
    best, out = rescorer.rescore(lat)
    got = sorted(enumerate_paths(out))
    expected = sorted((w, oracle.score(graph, model, w, b)) for w, b in enumerate_paths(lat))
    assert [w for w, _ in got] == [w for w, _ in expected]
    for (_, a), (_, b) in zip(got, expected):
        assert abs(a - b) < 1e-9
    assert best.total == pytest.approx(got and max(s for _, s in got), abs=1e-9)
    scorer = HypothesisScorer(model, graph)
    for w, _ in expected[:20]:
        assert scorer.counts(w) == {f.id: c for f in model.features
                                    if (c := oracle.count(graph, f, w))}
    return rescorer, lat


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_oracle_equivalence(seed):
    check_instance(seed)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_shared_cache_agrees(seed):
    check_instance(seed, shared=True)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 5.0))
def test_monotone_boost(seed, delta):
    graph, model, lat = oracle.random_instance(seed)
    if not model.features:
        return
    rng = random.Random(seed)
    fid = rng.randint(1, len(model.features))
    w = model.weights
    w[fid] += delta
    boosted = model.with_weights(w)
    for words, base in enumerate_paths(lat, 10):
        before = score_hypothesis(words, base, model, graph)
        after = score_hypothesis(words, base, boosted, graph)
        if before.feature_counts.get(fid):
            assert after.total >= before.total


def test_threads_share_one_rescorer():
    graph, model, _ = oracle.random_instance(7)
    lats = [oracle.random_lattice(random.Random(i)) for i in range(40)]
    for shared in (False, True):
        r = Rescorer(model, graph, shared_cache=shared)
        serial = [r.rescore(l)[0] for l in lats]
        r2 = Rescorer(model, graph, shared_cache=shared)
        with ThreadPoolExecutor(8) as pool:
            parallel = list(pool.map(lambda l: r2.rescore(l)[0], lats))
        assert serial == parallel
