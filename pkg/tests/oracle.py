"""Independent reference implementations used by the tests.

Nothing here calls ``KnowledgeGraph.expand`` or the rescorer: realizations
are enumerated straight from entity records, and strata are recomputed from
popularities.
"""

from __future__ import annotations

import itertools
import math
import random

from deal.features import BOS, EOS, FeatureNGram, Model, is_nonterminal
from deal.fst import SymbolTable, Wfst
from deal.kg import Entity, KnowledgeGraph, Name, NonTerminalSpec, Relationship

TIERS = ("head", "torso", "tail")


def ranked_ids(graph: KnowledgeGraph, type_name: str) -> list[str]:
    ids = [e.id for e in graph.entities.values() if any(t == type_name for t, _ in e.types)]
    pop = {i: dict(graph.entities[i].types)[type_name] for i in ids}
    return sorted(ids, key=lambda i: (-pop[i], i))


def candidates(graph: KnowledgeGraph, spec: NonTerminalSpec, bound: set | None):
    """(surface, entity id) pairs a non-terminal admits."""
    ids = ranked_ids(graph, spec.type_name)
    if spec.pop_tier is not None:
        ids = ids[:graph.strata[spec.type_name][TIERS.index(spec.pop_tier)]]
    out = []
    for i in ids:
        e = graph.entities[i]
        if spec.relation is not None and not any(
                r.relation == spec.relation[0] and r.entity_id in bound for r in e.relationships):
            continue
        for n in e.names:
            if spec.min_word_count is None or len(n.words) >= spec.min_word_count:
                out.append((n.words, i))
    return out


def realizations(graph: KnowledgeGraph, feature: FeatureNGram) -> set[tuple]:
    """Distinct surface tuples of a feature, each paired with its word sequence."""
    out = set()

    def rec(k, words, surfaces, bound_ids):
        if k == len(feature.tokens):
            out.add((tuple(words), tuple(surfaces)))
            return
        tok = feature.tokens[k]
        if not is_nonterminal(tok):
            rec(k + 1, words + [tok], surfaces, bound_ids)
            return
        ref = bound_ids[tok.relation[1] - 1] if tok.relation is not None else None
        by_surface: dict = {}
        for surface, i in candidates(graph, tok, ref):
            by_surface.setdefault(surface, set()).add(i)
        for surface, ids in by_surface.items():
            rec(k + 1, words + list(surface), surfaces + [surface], bound_ids + [ids])

    rec(0, [], [], [])
    return out


def count(graph: KnowledgeGraph, feature: FeatureNGram, words) -> int:
    padded = (BOS,) + tuple(words) + (EOS,)
    total = 0
    for seq, _ in realizations(graph, feature):
        n = len(seq)
        total += sum(padded[p:p + n] == seq for p in range(len(padded) - n + 1))
    return total


def score(graph: KnowledgeGraph, model: Model, words, base: float) -> float:
    return model.base_weight * base + math.fsum(
        f.weight * count(graph, f, words) for f in model.features)


# ---------------------------------------------------------------------------
# random instances

VOCAB = ("a", "b", "c", "d", "e", "f")


def random_graph(rng: random.Random, max_entities: int = 20) -> KnowledgeGraph:
    types = ["t0", "t1", "t2"][:rng.randint(1, 3)]
    n = rng.randint(1, max_entities)
    ids = [f"e{i}" for i in range(n)]
    entities = {}
    for i in ids:
        names = []
        for _ in range(rng.randint(1, 2)):
            w = tuple(rng.choice(VOCAB) for _ in range(rng.randint(1, 3)))
            if all(x.words != w for x in names):
                names.append(Name(w, len(w)))
        ts = rng.sample(types, rng.randint(1, len(types)))
        tp = tuple((t, rng.choice([0.0, 0.1, 0.1, 0.3, rng.random()])) for t in sorted(ts))
        rels = tuple(Relationship(rng.choice(("r0", "r1")), rng.choice(ids), rng.random())
                     for _ in range(rng.randint(0, 3)))
        entities[i] = Entity(i, tuple(names), tp, rels)
    strata = {}
    for t in types:
        m = sum(1 for e in entities.values() if any(x == t for x, _ in e.types))
        if m:
            cuts = sorted(rng.randint(0, m) for _ in range(3))
            cuts[2] = m if rng.random() < 0.5 else cuts[2]
            strata[t] = tuple(sorted(cuts))
    return KnowledgeGraph(entities, strata)


def random_feature(rng: random.Random, graph: KnowledgeGraph, fid: int) -> FeatureNGram:
    types = graph.types
    while True:
        n = rng.randint(1, 4)
        toks, n_nt = [], 0
        for j in range(n):
            if rng.random() < 0.5:
                kw = {}
                if rng.random() < 0.3:
                    kw["pop_tier"] = rng.choice(TIERS)
                if rng.random() < 0.3:
                    kw["min_word_count"] = rng.randint(1, 3)
                if n_nt and rng.random() < 0.5:
                    kw["relation"] = (rng.choice(("r0", "r1")), rng.randint(1, n_nt))
                toks.append(NonTerminalSpec(rng.choice(types), **kw))
                n_nt += 1
            else:
                toks.append(rng.choice(VOCAB))
        if rng.random() < 0.15:
            toks.insert(0, BOS)
        if rng.random() < 0.15:
            toks.append(EOS)
        if n_nt:
            return FeatureNGram(fid, tuple(toks), round(rng.uniform(-2, 2), 3))


def random_model(rng: random.Random, graph: KnowledgeGraph, max_features: int = 15) -> Model:
    feats = [random_feature(rng, graph, i) for i in range(1, rng.randint(0, max_features) + 1)]
    return Model(round(rng.uniform(0, 2), 3), feats)


def random_lattice(rng: random.Random, max_states: int = 12, vocab=VOCAB + ("zz",)) -> Wfst:
    symbols = SymbolTable()
    t = Wfst(symbols)
    n = rng.randint(2, max_states)
    t.add_states(n)
    t.set_start(0)
    for s in range(n - 1):
        targets = {s + 1} | {rng.randint(s + 1, n - 1) for _ in range(rng.randint(0, 1))}
        for d in sorted(targets):
            lab = symbols.add(rng.choice(vocab))
            t.add_arc(s, lab, lab, round(rng.uniform(-3, 0), 4), d)
    t.set_final(n - 1, 0.0)
    return t


def random_instance(seed: int):
    rng = random.Random(seed)
    graph = random_graph(rng)
    return graph, random_model(rng, graph), random_lattice(rng)


def all_words(graph: KnowledgeGraph) -> list[tuple[str, ...]]:
    return [n.words for e in graph.entities.values() for n in e.names]


def product_words(vocab, max_len):
    for n in range(1, max_len + 1):
        yield from itertools.product(vocab, repeat=n)
