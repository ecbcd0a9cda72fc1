"""Score hypotheses as ``w0 * base + sum_f w_f * count_f``.

Two independent routes compute the same numbers:

* ``RdetAutomaton`` determinizes the expanded feature transducer on demand
  and is composed with lattices (``rescore_lattice``);
* ``HypothesisScorer`` enumerates feature realizations directly over one
  word sequence (``score_hypothesis``, ``rescore_nbest``).

A feature counts once per (start position, tuple of entity names) that
realizes it inside the boundary-padded hypothesis ``<s> ... </s>``.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .compiler import RTop, build_rtop
from .expander import RkgExpander, RkgState, kg_symbols
from .features import BOS, EOS, Model, is_nonterminal
from .fst import (FIRST_FREE, FstError, LazyWfst, Wfst, best_path, compose,
                  linear_acceptor)
from .kg import KnowledgeGraph

log = logging.getLogger(__name__)

UNKNOWN = sys.maxsize


@dataclass
class ScoredHypothesis:
    words: list[str]
    base_score: float
    feature_counts: dict[int, int] = field(default_factory=dict)
    total: float = 0.0

    @staticmethod
    def make(words, base_score: float, counts: dict[int, int], model: Model):
        return ScoredHypothesis(list(words), base_score, dict(sorted(counts.items())),
                                combine(model, base_score, counts))

    def fires(self) -> str:
        return ",".join(f"{k}:{v}" for k, v in sorted(self.feature_counts.items()))


def combine(model: Model, base_score: float, counts: dict[int, int]) -> float:
    feats = model.features
    return model.base_weight * base_score + math.fsum(
        feats[fid - 1].weight * c for fid, c in counts.items())


# ---------------------------------------------------------------------------
# brute-force route

class HypothesisScorer:
    """Direct realization counting for one feature list over word sequences."""

    def __init__(self, model: Model, graph: KnowledgeGraph):
        self.model = model
        self.graph = graph
        self._by_word: dict[str, list] = {}
        self._by_nt: dict = {}
        for f in model.features:
            first = f.tokens[0]
            bucket = self._by_nt if is_nonterminal(first) else self._by_word
            bucket.setdefault(first, []).append(f)
        self._lengths: dict[int, tuple[int, ...]] = {}

    def _surfaces_at(self, spec, bound, words, pos):
        if not self.graph.has_type(spec.type_name):
            return
        exp = self.graph.expand(spec, bound)
        lengths = self._lengths.get(id(exp))
        if lengths is None:
            lengths = self._lengths.setdefault(id(exp), tuple(sorted({len(s) for s in exp})))
        for n in lengths:
            if pos + n > len(words):
                break
            ids = exp.get(words[pos:pos + n])
            if ids is not None:
                yield n, ids

    def _count(self, tokens, k, words, pos, bound) -> int:
        if k == len(tokens):
            return 1
        tok = tokens[k]
        if not is_nonterminal(tok):
            if pos < len(words) and words[pos] == tok:
                return self._count(tokens, k + 1, words, pos + 1, bound)
            return 0
        ref = bound[tok.relation[1] - 1] if tok.relation is not None else None
        total = 0
        for n, ids in self._surfaces_at(tok, ref, words, pos):
            total += self._count(tokens, k + 1, words, pos + n, bound + (ids,))
        return total

    def counts(self, words: Sequence[str]) -> dict[int, int]:
        padded = (BOS,) + tuple(words) + (EOS,)
        out: dict[int, int] = {}
        for pos in range(len(padded)):
            for f in self._by_word.get(padded[pos], ()):
                c = self._count(f.tokens, 1, padded, pos + 1, ())
                if c:
                    out[f.id] = out.get(f.id, 0) + c
            for spec, feats in self._by_nt.items():
                for n, ids in self._surfaces_at(spec, None, padded, pos):
                    for f in feats:
                        c = self._count(f.tokens, 1, padded, pos + n, (ids,))
                        if c:
                            out[f.id] = out.get(f.id, 0) + c
        return dict(sorted(out.items()))

    def score(self, words: Sequence[str], base_score: float) -> ScoredHypothesis:
        return ScoredHypothesis.make(words, base_score, self.counts(words), self.model)


def score_hypothesis(words: Sequence[str], base_score: float, model: Model,
                     graph: KnowledgeGraph) -> ScoredHypothesis:
    return HypothesisScorer(model, graph).score(words, base_score)


def rescore_nbest(hypotheses: Sequence[tuple[Sequence[str], float]], model: Model,
                  graph: KnowledgeGraph) -> list[ScoredHypothesis]:
    """Hypotheses sorted by total score; equal totals keep their input order."""
    if not hypotheses:
        raise ValueError("empty n-best list")
    scorer = HypothesisScorer(model, graph)
    scored = [scorer.score(w, b) for w, b in hypotheses]
    return sorted(scored, key=lambda h: -h.total)


# ---------------------------------------------------------------------------
# on-demand determinization

class RdetAutomaton(LazyWfst):
    """Deterministic word automaton over subsets of expanded-transducer states.

    Subsets are kept closed: after every word the end tags reachable from the
    destination states are taken (their weights land on the word's arc) and
    the start state's ``<f>`` successor is added.  Every subset contains the
    start state, whose sigma loop keeps every hypothesis alive.
    """

    def __init__(self, rkg: RkgExpander):
        super().__init__()
        self.rkg = rkg
        self.symbols = rkg.symbols
        self._steps: dict = {}
        self._start = None

    def _close(self, states: Iterable[RkgState]):
        members = set(states)
        stack = list(members)
        fired = []
        while stack:
            s = stack.pop()
            _, _, exits, fstart = self.rkg.lookup(s)
            nxt = [d for _, _, d in exits]
            if fstart is not None:
                nxt.append(fstart)
            fired.extend((t, w) for t, w, _ in exits)
            for d in nxt:
                if d not in members:
                    members.add(d)
                    stack.append(d)
        return frozenset(members), tuple(sorted(fired))

    def start(self) -> frozenset:
        if self._start is None:
            self._start = self._close([self.rkg.start()])[0]
        return self._start

    def final(self, state: frozenset) -> float | None:
        return 0.0 if any(self.rkg.final(s) is not None for s in state) else None

    def step(self, state: frozenset, label: int):
        """``(weight, next subset, fired end tags)`` or None if no arc reads ``label``."""
        key = (state, label)
        hit = self._steps.get(key)
        if hit is not None:
            return hit
        dest = []
        for s in state:
            by_label, sigma, _, _ = self.rkg.lookup(s)
            dest.extend(by_label.get(label, ()))
            if label >= FIRST_FREE:
                dest.extend(sigma)
        if not dest:
            return None
        nxt, fired = self._close(dest)
        weight = math.fsum(w for _, w in fired)
        return self._steps.setdefault(key, (weight, nxt, fired))

    def arc(self, state: frozenset, label: int) -> tuple[float, frozenset] | None:
        hit = self.step(state, label)
        return None if hit is None else hit[:2]

    def match(self, state, label):
        hit = self.step(state, label)
        return [] if hit is None else [(label, hit[0], hit[1])]

    def arcs(self, state):
        raise TypeError("sigma makes the arc set unbounded; use match() per label")


class _Padded(LazyWfst):
    """View of an Rdet automaton entered after ``<s>`` and left through ``</s>``."""

    def __init__(self, rdet: RdetAutomaton):
        super().__init__()
        self.rdet = rdet
        bos = rdet.step(rdet.start(), rdet.symbols.add(BOS))
        self.bos_weight, self._start = bos[0], bos[1]
        self._eos = rdet.symbols.add(EOS)

    def start(self):
        return self._start

    def final(self, state):
        w, nxt, _ = self.rdet.step(state, self._eos)
        f = self.rdet.final(nxt)
        return None if f is None else self.bos_weight + w + f

    def match(self, state, label):
        return self.rdet.match(state, label)


class Rescorer:
    """Shared (model, graph, compiled transducer) for rescoring many lattices.

    With ``shared_cache`` the on-demand automaton persists across lattices;
    otherwise each lattice gets a fresh one and its states are dropped after.
    """

    def __init__(self, model: Model, graph: KnowledgeGraph, rtop: RTop | None = None,
                 shared_cache: bool = False):
        self.model = model
        self.graph = graph
        self.rtop = rtop if rtop is not None else build_rtop(model)
        self.symbols = kg_symbols(self.rtop, graph)
        # registered up front so worker threads only ever read the table
        self.symbols.add(BOS)
        self.symbols.add(EOS)
        self._tries: dict = {}
        self.shared_cache = shared_cache
        self._shared = self._fresh() if shared_cache else None

    def _fresh(self) -> RdetAutomaton:
        return RdetAutomaton(RkgExpander(self.rtop, self.graph, self.symbols, self._tries))

    def rdet(self) -> RdetAutomaton:
        return self._shared if self._shared is not None else self._fresh()

    def rescore(self, lattice: Wfst) -> tuple[ScoredHypothesis, Wfst]:
        if lattice.start is None or lattice.num_states == 0:
            raise FstError("empty lattice")
        rdet = self.rdet()
        w0 = self.model.base_weight
        scaled = Wfst(lattice.symbols)
        scaled.add_states(lattice.num_states)
        scaled.start = lattice.start
        for s in lattice.states():
            for a in lattice.arcs(s):
                scaled.add_arc(s, a.ilabel, a.olabel, w0 * a.weight, a.next)
            f = lattice.final(s)
            if f is not None:
                scaled.set_final(s, w0 * f)
        labels = {}
        for s in lattice.states():
            for a in lattice.arcs(s):
                if a.ilabel not in labels:
                    word = lattice.label_text(a.ilabel)
                    lab = self.symbols.find(word)
                    if lab is None:
                        log.debug("word %r is unknown to the model; it matches sigma only", word)
                        lab = UNKNOWN
                    labels[a.ilabel] = lab
        rescored = compose(scaled, _Padded(rdet), labels.__getitem__)
        if rescored.start is None:
            raise FstError("lattice has no complete path")
        words, _ = best_path(rescored)
        base = best_path(compose(lattice, linear_acceptor(
            [lattice.symbols.find(w) for w in words], symbols=lattice.symbols)))[1]
        counts: dict[int, int] = {}
        state = rdet.start()
        for w in [BOS] + words + [EOS]:
            lab = self.symbols.find(w)
            _, state, fired = rdet.step(state, UNKNOWN if lab is None else lab)
            for tag, _ in fired:
                fid = self.symbols.end_tag_feature(tag)
                counts[fid] = counts.get(fid, 0) + 1
        return ScoredHypothesis.make(words, base, counts, self.model), rescored


def rdet_arc(state: frozenset, word: int, rdet: RdetAutomaton):
    return rdet.arc(state, word)


def rescore_lattice(lattice: Wfst, model: Model, rtop: RTop | None,
                    graph: KnowledgeGraph) -> tuple[ScoredHypothesis, Wfst]:
    return Rescorer(model, graph, rtop).rescore(lattice)
