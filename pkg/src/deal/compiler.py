"""Compile a feature model into the top-level feature-tagging transducer.

The transducer has one start-and-final state with a sigma self-loop.  Each
feature contributes ``<f>:<f>`` into a chain over its tokens and an
``eps:<#id>`` exit back to the start that carries the feature weight.  The
union is determinized over encoded (input, output, weight) triples, so
features sharing a prefix share states.  Non-terminals stay opaque single
labels here; they are expanded against the knowledge graph on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .features import Model, is_nonterminal, parse_token
from .fst import EPS, FSTART, SIGMA, FstError, SymbolTable, Wfst, determinize_encoded
from .kg import NonTerminalSpec


@dataclass
class StateIndex:
    words: dict[int, int] = field(default_factory=dict)
    nonterminals: list[tuple[int, NonTerminalSpec, int]] = field(default_factory=list)
    exits: list[tuple[int, float]] = field(default_factory=list)
    fstart: int | None = None
    sigma: bool = False


class RTop:
    """The compiled feature-tagging transducer plus lookup tables."""

    def __init__(self, fst: Wfst, nonterminals: dict[int, NonTerminalSpec]):
        self.fst = fst
        self.symbols: SymbolTable = fst.symbols
        self.nonterminals = nonterminals
        self.start = fst.start
        self.index: list[StateIndex] = []
        for s in fst.states():
            ix = StateIndex()
            for a in fst.arcs(s):
                if a.ilabel == SIGMA:
                    ix.sigma = True
                elif a.ilabel == FSTART:
                    ix.fstart = a.next
                elif a.ilabel == EPS:
                    ix.exits.append((a.olabel, a.weight))
                elif a.ilabel in nonterminals:
                    ix.nonterminals.append((a.ilabel, nonterminals[a.ilabel], a.next))
                else:
                    ix.words[a.ilabel] = a.next
            self.index.append(ix)

    @classmethod
    def from_fst(cls, fst: Wfst) -> "RTop":
        """Rebuild from a deserialized automaton; non-terminals are read off the symbols."""
        nts = {}
        for sym, label in fst.symbols.items():
            if label < 3 or fst.symbols.is_end_tag(label):
                continue
            tok = parse_token(sym)
            if is_nonterminal(tok):
                nts[label] = tok
        return cls(fst, nts)

    def feature_of(self, label: int) -> int | None:
        return self.symbols.end_tag_feature(label)


def build_rtop(model: Model) -> RTop:
    symbols = SymbolTable()
    nts: dict[int, NonTerminalSpec] = {}
    t = Wfst(symbols)
    top = t.add_state()
    t.set_start(top)
    t.set_final(top, 0.0)
    t.add_arc(top, SIGMA, SIGMA, 0.0, top)
    seen = set()
    for f in model.features:
        if f.id in seen:
            raise FstError(f"duplicate feature id {f.id}")
        seen.add(f.id)
        s = t.add_state()
        t.add_arc(top, FSTART, FSTART, 0.0, s)
        for tok in f.tokens:
            label = symbols.add(str(tok))
            if is_nonterminal(tok):
                nts[label] = tok
            nxt = t.add_state()
            t.add_arc(s, label, label, 0.0, nxt)
            s = nxt
        tag = symbols.end_tag(f.id)
        t.add_arc(s, EPS, tag, f.weight, top)
    return RTop(determinize_encoded(t), nts)
