"""On-demand expansion of the compiled feature transducer against a KG.

A state is ``(base, cursor, bindings)``: the compiled-transducer state, an
optional position inside an entity name being read (non-terminal label and
the words read so far), and the names matched for earlier non-terminals of
the current feature.  Bindings start empty at ``<f>`` and are dropped at the
feature's end tag, so the start state never carries any.

Entity names for a non-terminal are read through a trie over the distinct
surfaces, which keeps exactly one path per (surface tuple, start offset).
"""

from __future__ import annotations

from collections import Counter
from typing import NamedTuple, Sequence

from .compiler import RTop
from .fst import EPS, FSTART, SIGMA, LazyWfst, SymbolTable, Wfst, materialize
from .kg import KnowledgeGraph, NonTerminalSpec


class Binding(NamedTuple):
    surface: tuple[int, ...]
    entity_ids: frozenset


class RkgState(NamedTuple):
    base: int
    cursor: tuple[int, tuple[int, ...]] | None
    bindings: tuple[Binding, ...]


class TrieNode(NamedTuple):
    """One child edge: the child's prefix, its entity ids if a surface ends there,
    and whether longer surfaces continue."""

    prefix: tuple[int, ...]
    ids: frozenset | None
    more: bool


def kg_symbols(rtop: RTop, graph: KnowledgeGraph) -> SymbolTable:
    """The transducer's symbols extended with every word of every entity name."""
    symbols = rtop.symbols.copy()
    for eid in sorted(graph.entities):
        for name in graph.entities[eid].names:
            for w in name.words:
                symbols.add(w)
    return symbols


class RkgExpander(LazyWfst):
    def __init__(self, rtop: RTop, graph: KnowledgeGraph, symbols: SymbolTable | None = None,
                 tries: dict | None = None):
        super().__init__()
        self.rtop = rtop
        self.graph = graph
        self.symbols = symbols if symbols is not None else kg_symbols(rtop, graph)
        self._tries = tries if tries is not None else {}
        self._nt_arcs = [{lab: (spec, nxt) for lab, spec, nxt in ix.nonterminals}
                         for ix in rtop.index]
        self._lookup: dict = {}

    def start(self) -> RkgState:
        return RkgState(self.rtop.start, None, ())

    def final(self, state: RkgState) -> float | None:
        if state.cursor is None and not state.bindings:
            return self.rtop.fst.final(state.base)
        return None

    def trie(self, label: int, spec: NonTerminalSpec,
             bindings: Sequence[Binding]) -> dict[tuple[int, ...], list[TrieNode]]:
        """Map prefix -> child edges for the names ``spec`` admits under ``bindings``."""
        bound = None
        if spec.relation is not None:
            bound = bindings[spec.relation[1] - 1].entity_ids
        key = (label, bound)
        hit = self._tries.get(key)
        if hit is not None:
            return hit
        # a type the graph lacks simply has no names
        expansion = self.graph.expand(spec, bound) if self.graph.has_type(spec.type_name) else {}
        ends: dict[tuple[int, ...], frozenset] = {}
        prefixes: set[tuple[int, ...]] = set()
        for surface, ids in expansion.items():
            labels = tuple(self.symbols.add(w) for w in surface)
            ends[labels] = ids
            prefixes.update(labels[:i] for i in range(1, len(labels)))
        trie: dict[tuple[int, ...], list[TrieNode]] = {}
        for p in sorted(ends.keys() | prefixes):
            trie.setdefault(p[:-1], []).append(TrieNode(p, ends.get(p), p in prefixes))
        return self._tries.setdefault(key, trie)

    def _expand(self, state: RkgState) -> list[tuple]:
        base, cursor, binds = state
        ix = self.rtop.index[base]
        arcs = []
        if cursor is not None:
            label, prefix = cursor
            spec, nxt = self._nt_arcs[base][label]
            self._name_arcs(arcs, state, label, spec, nxt, prefix)
            return arcs
        if ix.sigma:
            arcs.append((SIGMA, SIGMA, 0.0, state))
        if ix.fstart is not None:
            arcs.append((FSTART, FSTART, 0.0, RkgState(ix.fstart, None, ())))
        for w, nxt in ix.words.items():
            arcs.append((w, w, 0.0, RkgState(nxt, None, binds)))
        for label, spec, nxt in ix.nonterminals:
            self._name_arcs(arcs, state, label, spec, nxt, ())
        for tag, weight in ix.exits:
            arcs.append((EPS, tag, weight, RkgState(self.rtop.start, None, ())))
        return arcs

    def _name_arcs(self, arcs, state, label, spec, nxt, prefix):
        base, _, binds = state
        for node in self.trie(label, spec, binds).get(prefix, ()):
            w = node.prefix[-1]
            if node.ids is not None:
                done = binds + (Binding(node.prefix, node.ids),)
                arcs.append((w, w, 0.0, RkgState(nxt, None, done)))
            if node.more:
                arcs.append((w, w, 0.0, RkgState(base, (label, node.prefix), binds)))

    def lookup(self, state: RkgState):
        """``(by_label, sigma_next, exits, fstart_next)`` for one state, memoized.

        ``by_label`` maps a word label to destination states, ``exits`` lists
        ``(end tag, weight, destination)``.
        """
        hit = self._lookup.get(state)
        if hit is not None:
            return hit
        by_label: dict[int, list[RkgState]] = {}
        sigma, exits, fstart = [], [], None
        for il, ol, w, nxt in self.arcs(state):
            if il == SIGMA:
                sigma.append(nxt)
            elif il == FSTART:
                fstart = nxt
            elif il == EPS:
                exits.append((ol, w, nxt))
            else:
                by_label.setdefault(il, []).append(nxt)
        return self._lookup.setdefault(state, (by_label, sigma, exits, fstart))


def rkg_arcs(state: RkgState, rtop: RTop, graph: KnowledgeGraph) -> list[tuple]:
    """Arcs of one expanded state, as ``(ilabel, olabel, weight, next)``."""
    return list(RkgExpander(rtop, graph).arcs(state))


def count_feature_paths(rkg: RkgExpander, words: Sequence[str], feature_id: int) -> int:
    """Number of ``<f> words... <#id>`` sub-paths leaving the start state."""
    fstart = rkg.lookup(rkg.start())[3]
    if fstart is None:
        return 0
    tag = rkg.symbols.find(f"<#{feature_id}>")
    live = Counter({fstart: 1})
    for word in words:
        label = rkg.symbols.find(word)
        if label is None:
            return 0
        step: Counter = Counter()
        for s, n in live.items():
            for nxt in rkg.lookup(s)[0].get(label, ()):
                step[nxt] += n
        live = step
    return sum(n for s, n in live.items() for t, _, _ in rkg.lookup(s)[2] if t == tag)


def dump_rkg(rtop: RTop, graph: KnowledgeGraph, max_states: int = 100000) -> tuple[Wfst, list]:
    """Fully expanded transducer for small graphs (raises past ``max_states``)."""
    rkg = RkgExpander(rtop, graph)
    return materialize(rkg, max_states, rkg.symbols)
