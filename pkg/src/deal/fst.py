"""Weighted finite-state automata under a max-sum ("reward") convention.

Path weight is the sum of arc weights plus the final weight; higher is
better.  Tools that emit negated log costs can be read with
``read_text(..., negate=True)``.

Labels are integers.  ``0`` is epsilon, ``1`` is sigma (matches any
ordinary symbol and reproduces it) and ``2`` is the feature-start tag.
"""

from __future__ import annotations

import itertools
import re
import threading
from collections import deque
from typing import Callable, Hashable, Iterable, NamedTuple, Sequence

EPS = 0
SIGMA = 1
FSTART = 2
FIRST_FREE = 3

_END_TAG = re.compile(r"^<#(\d+)>$")


class FstError(ValueError):
    pass


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    next: int


class SymbolTable:
    """Bijection between symbol strings and integer labels.

    Feature end tags are written ``<#id>`` and tracked separately so that
    ``end_tag_feature`` can map a label back to its feature id.
    """

    RESERVED = ("<eps>", "<sigma>", "<f>")

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._syms: list[str] = []
        self._end_tags: dict[int, int] = {}
        for s in self.RESERVED:
            self.add(s)

    def __len__(self):
        return len(self._syms)

    def __contains__(self, sym: str) -> bool:
        return sym in self._ids

    def __eq__(self, other):
        return isinstance(other, SymbolTable) and self._syms == other._syms

    def add(self, sym: str) -> int:
        i = self._ids.get(sym)
        if i is None:
            i = len(self._syms)
            self._ids[sym] = i
            self._syms.append(sym)
            m = _END_TAG.match(sym)
            if m:
                self._end_tags[i] = int(m.group(1))
        return i

    def find(self, sym: str) -> int | None:
        return self._ids.get(sym)

    def symbol(self, label: int) -> str:
        return self._syms[label]

    def end_tag(self, feature_id: int) -> int:
        return self.add(f"<#{feature_id}>")

    def end_tag_feature(self, label: int) -> int | None:
        return self._end_tags.get(label)

    def is_end_tag(self, label: int) -> bool:
        return label in self._end_tags

    def copy(self) -> "SymbolTable":
        new = SymbolTable.__new__(SymbolTable)
        new._ids = dict(self._ids)
        new._syms = list(self._syms)
        new._end_tags = dict(self._end_tags)
        return new

    def items(self):
        return ((s, i) for i, s in enumerate(self._syms))

    def to_text(self) -> str:
        return "".join(f"{s}\t{i}\n" for s, i in self.items())

    @classmethod
    def from_text(cls, text: str) -> "SymbolTable":
        rows = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                sym, i = line.rsplit("\t", 1)
                rows.append((int(i), sym))
            except ValueError:
                raise FstError(f"symbol table line {n}: expected 'symbol<TAB>id'") from None
        rows.sort()
        table = cls.__new__(cls)
        table._ids, table._syms, table._end_tags = {}, [], {}
        for expect, (i, sym) in enumerate(rows):
            if i != expect:
                raise FstError(f"symbol table ids must be dense from 0, missing {expect}")
            table.add(sym)
        if tuple(table._syms[:3]) != cls.RESERVED:
            raise FstError("symbol table must start with <eps>, <sigma>, <f>")
        return table


class Wfst:
    """Mutable weighted transducer with dense integer states."""

    def __init__(self, symbols: SymbolTable | None = None):
        self.symbols = symbols
        self.start: int | None = None
        self._arcs: list[list[Arc]] = []
        self._finals: dict[int, float] = {}
        self.codec_token: int | None = None

    def add_state(self) -> int:
        self._arcs.append([])
        return len(self._arcs) - 1

    def add_states(self, n: int) -> None:
        for _ in range(n):
            self.add_state()

    def set_start(self, s: int) -> None:
        self._check(s)
        self.start = s

    def set_final(self, s: int, weight: float = 0.0) -> None:
        self._check(s)
        self._finals[s] = float(weight)

    def add_arc(self, s: int, ilabel: int, olabel: int, weight: float, nxt: int) -> None:
        self._check(s)
        self._check(nxt)
        self._arcs[s].append(Arc(ilabel, olabel, float(weight), nxt))

    def _check(self, s: int) -> None:
        if not 0 <= s < len(self._arcs):
            raise FstError(f"invalid state {s}")

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    @property
    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, s: int) -> list[Arc]:
        return self._arcs[s]

    def final(self, s: int) -> float | None:
        return self._finals.get(s)

    @property
    def finals(self) -> dict[int, float]:
        return dict(self._finals)

    def sort_arcs(self) -> "Wfst":
        for a in self._arcs:
            a.sort()
        return self

    def is_acyclic(self) -> bool:
        try:
            topological_order(self)
        except FstError:
            return False
        return True

    def __eq__(self, other):
        if not isinstance(other, Wfst):
            return NotImplemented
        return (self.start == other.start and self._finals == other._finals
                and self._arcs == other._arcs)

    def __repr__(self):
        return f"<Wfst states={self.num_states} arcs={self.num_arcs}>"

    def label_text(self, label: int) -> str:
        return self.symbols.symbol(label) if self.symbols is not None else str(label)


def topological_order(t: Wfst) -> list[int]:
    indeg = [0] * t.num_states
    for s in t.states():
        for a in t.arcs(s):
            indeg[a.next] += 1
    queue = deque(s for s in t.states() if indeg[s] == 0)
    order = []
    while queue:
        s = queue.popleft()
        order.append(s)
        for a in t.arcs(s):
            indeg[a.next] -= 1
            if indeg[a.next] == 0:
                queue.append(a.next)
    if len(order) != t.num_states:
        raise FstError("automaton is cyclic")
    return order


def renumber(t: Wfst, keep: Sequence[int] | None = None) -> Wfst:
    """Copy of ``t`` restricted to ``keep`` (default: BFS order from start)."""
    if keep is None:
        keep = bfs_order(t)
    index = {s: i for i, s in enumerate(keep)}
    out = Wfst(t.symbols)
    out.codec_token = t.codec_token
    out.add_states(len(keep))
    for s in keep:
        for a in t.arcs(s):
            if a.next in index:
                out._arcs[index[s]].append(Arc(a.ilabel, a.olabel, a.weight, index[a.next]))
        w = t.final(s)
        if w is not None:
            out._finals[index[s]] = w
    if t.start is not None and t.start in index:
        out.start = index[t.start]
    return out


def bfs_order(t: Wfst) -> list[int]:
    if t.start is None:
        return []
    seen = {t.start}
    order = [t.start]
    queue = deque(order)
    while queue:
        s = queue.popleft()
        for a in t.arcs(s):
            if a.next not in seen:
                seen.add(a.next)
                order.append(a.next)
                queue.append(a.next)
    return order


def trim(t: Wfst) -> Wfst:
    """Keep accessible and coaccessible states, in BFS order."""
    acc = bfs_order(t)
    rev: list[list[int]] = [[] for _ in t.states()]
    for s in t.states():
        for a in t.arcs(s):
            rev[a.next].append(s)
    coacc = set(t._finals)
    queue = deque(coacc)
    while queue:
        s = queue.popleft()
        for p in rev[s]:
            if p not in coacc:
                coacc.add(p)
                queue.append(p)
    keep = [s for s in acc if s in coacc]
    if not keep:
        return Wfst(t.symbols)
    return renumber(t, keep)


def canonicalize(t: Wfst) -> Wfst:
    """Sort arcs, renumber states in BFS order from start, sort again."""
    t.sort_arcs()
    return renumber(t).sort_arcs()


# ---------------------------------------------------------------------------
# on-demand automata

class LazyWfst:
    """Automaton whose arcs are computed on first request and cached.

    Subclasses implement ``start``, ``final`` and ``_expand``.  State
    handles are arbitrary hashable values.  Concurrent expansion of the same
    state may compute twice but only the first result is ever returned.
    """

    def __init__(self):
        self._arc_cache: dict = {}

    def start(self) -> Hashable:
        raise NotImplementedError

    def final(self, state) -> float | None:
        raise NotImplementedError

    def _expand(self, state) -> list[tuple]:
        raise NotImplementedError

    def arcs(self, state) -> list[tuple]:
        """Outgoing arcs as ``(ilabel, olabel, weight, next_state)`` tuples."""
        hit = self._arc_cache.get(state)
        if hit is None:
            hit = self._arc_cache.setdefault(state, tuple(self._expand(state)))
        return hit

    def match(self, state, label: int) -> list[tuple[int, float, Hashable]]:
        """``(olabel, weight, next)`` for arcs reading ``label`` (sigma matches all)."""
        out = []
        for il, ol, w, nxt in self.arcs(state):
            if il == label or (il == SIGMA and label >= FIRST_FREE):
                out.append((ol, w, nxt))
        return out


class StaticLazy(LazyWfst):
    """LazyWfst view of a static Wfst, with a per-state label index."""

    def __init__(self, t: Wfst):
        super().__init__()
        self.t = t
        self._index: dict[int, dict[int, list]] = {}

    def start(self):
        return self.t.start

    def final(self, state):
        return self.t.final(state)

    def _expand(self, state):
        return [tuple(a) for a in self.t.arcs(state)]

    def match(self, state, label):
        idx = self._index.get(state)
        if idx is None:
            idx = {}
            for a in self.t.arcs(state):
                idx.setdefault(a.ilabel, []).append((a.olabel, a.weight, a.next))
            idx = self._index.setdefault(state, idx)
        out = list(idx.get(label, ()))
        if label >= FIRST_FREE:
            out.extend(idx.get(SIGMA, ()))
        return out


def materialize(lazy: LazyWfst, max_states: int | None = None,
                symbols: SymbolTable | None = None) -> tuple[Wfst, list]:
    """Expand every reachable state of ``lazy`` breadth-first.

    Returns the static automaton and the list of lazy state handles indexed
    by static state id.
    """
    out = Wfst(symbols)
    handles = [lazy.start()]
    index = {handles[0]: out.add_state()}
    out.set_start(0)
    i = 0
    while i < len(handles):
        h = handles[i]
        w = lazy.final(h)
        if w is not None:
            out.set_final(i, w)
        for il, ol, wt, nxt in lazy.arcs(h):
            j = index.get(nxt)
            if j is None:
                if max_states is not None and len(handles) >= max_states:
                    raise FstError(f"more than {max_states} states")
                j = index[nxt] = out.add_state()
                handles.append(nxt)
            out.add_arc(i, il, ol, wt, j)
        i += 1
    return out, handles


# ---------------------------------------------------------------------------
# composition

def compose(lattice: Wfst, rhs: Wfst | LazyWfst,
            translate: Callable[[int], int] | None = None) -> Wfst:
    """Compose an epsilon-free acyclic acceptor with a (lazy) transducer.

    ``translate`` maps lattice labels into the label space of ``rhs``.  Output
    arcs keep the lattice label wherever ``rhs`` reproduces its input (sigma
    or identity arcs).  The result is trimmed.
    """
    if not isinstance(rhs, LazyWfst):
        rhs = StaticLazy(rhs)
    out = Wfst(lattice.symbols)
    if lattice.start is None:
        return out
    start = (lattice.start, rhs.start())
    index = {start: out.add_state()}
    out.set_start(0)
    queue = deque([start])
    while queue:
        pair = queue.popleft()
        src = index[pair]
        ls, rs = pair
        lw = lattice.final(ls)
        if lw is not None:
            rw = rhs.final(rs)
            if rw is not None:
                out.set_final(src, lw + rw)
        for arc in lattice.arcs(ls):
            if arc.ilabel == EPS:
                raise FstError("lattice must be epsilon-free")
            lab = translate(arc.ilabel) if translate is not None else arc.ilabel
            for ol, w, nxt in rhs.match(rs, lab):
                key = (arc.next, nxt)
                dst = index.get(key)
                if dst is None:
                    dst = index[key] = out.add_state()
                    queue.append(key)
                olabel = arc.ilabel if ol in (SIGMA, lab) else ol
                out.add_arc(src, arc.ilabel, olabel, arc.weight + w, dst)
    return trim(out)


# ---------------------------------------------------------------------------
# encode / determinize / decode

_codec_counter = itertools.count(1)
_FINAL = -1


class Codec:
    """Bijection between (ilabel, olabel, weight) triples and fresh labels.

    Code 0 is kept for the all-epsilon, zero-weight triple.  Final weights
    are encoded as arcs into a super-final state using codes for
    ``(-1, -1, weight)``.
    """

    def __init__(self):
        self.token = next(_codec_counter)
        self._codes: dict[tuple, int] = {(EPS, EPS, 0.0): 0}
        self._triples: list[tuple] = [(EPS, EPS, 0.0)]
        self._lock = threading.Lock()

    def code(self, triple: tuple) -> int:
        c = self._codes.get(triple)
        if c is None:
            with self._lock:
                c = self._codes.setdefault(triple, len(self._triples))
                if c == len(self._triples):
                    self._triples.append(triple)
        return c

    def triple(self, code: int) -> tuple:
        try:
            return self._triples[code]
        except IndexError:
            raise FstError(f"code {code} unknown to this codec") from None

    def __len__(self):
        return len(self._triples)


def encode(t: Wfst) -> tuple[Wfst, Codec]:
    """Unweighted acceptor whose labels encode each arc's full triple."""
    codec = Codec()
    out = Wfst(None)
    out.codec_token = codec.token
    out.add_states(t.num_states)
    out.start = t.start
    superfinal = None
    for s in t.states():
        for a in t.arcs(s):
            c = codec.code((a.ilabel, a.olabel, a.weight))
            out._arcs[s].append(Arc(c, c, 0.0, a.next))
    for s in sorted(t._finals):
        if superfinal is None:
            superfinal = out.add_state()
            out._finals[superfinal] = 0.0
        c = codec.code((_FINAL, _FINAL, t._finals[s]))
        out._arcs[s].append(Arc(c, c, 0.0, superfinal))
    return out, codec


def decode(t: Wfst, codec: Codec, symbols: SymbolTable | None = None) -> Wfst:
    """Invert ``encode``; raises if ``t`` was encoded with a different codec."""
    if t.codec_token != codec.token:
        raise FstError("automaton was not encoded with this codec")
    out = Wfst(symbols)
    out.add_states(t.num_states)
    out.start = t.start
    extra = None
    for s in t.states():
        finals = []
        for a in t.arcs(s):
            il, ol, w = codec.triple(a.ilabel)
            if il == _FINAL:
                finals.append(w)
            else:
                out._arcs[s].append(Arc(il, ol, w, a.next))
        for k, w in enumerate(sorted(finals)):
            if k == 0:
                out._finals[s] = w
            else:
                # a second distinct final weight needs its own exit path
                if extra is None:
                    extra = out.add_state()
                    out._finals[extra] = 0.0
                out._arcs[s].append(Arc(EPS, EPS, w, extra))
    # the super-final state is left unreachable and non-final; trim drops it
    return trim(out)


def _eps_closure(t: Wfst, states: Iterable[int]) -> frozenset:
    seen = set(states)
    stack = list(seen)
    while stack:
        s = stack.pop()
        for a in t.arcs(s):
            if a.ilabel == EPS and a.next not in seen:
                seen.add(a.next)
                stack.append(a.next)
    return frozenset(seen)


def determinize(t: Wfst) -> Wfst:
    """Subset construction for an unweighted acceptor (label 0 is epsilon).

    States are numbered in BFS order with arcs visited by ascending label,
    so equal inputs give identical outputs.
    """
    out = Wfst(t.symbols)
    out.codec_token = t.codec_token
    if t.start is None:
        return out
    start = _eps_closure(t, [t.start])
    index = {start: out.add_state()}
    out.set_start(0)
    queue = deque([start])
    while queue:
        subset = queue.popleft()
        src = index[subset]
        ws = {t._finals[s] for s in subset if s in t._finals}
        if len(ws) > 1:
            raise FstError("final weights differ within a subset; encode them first")
        if ws:
            out._finals[src] = ws.pop()
        moves: dict[int, set[int]] = {}
        for s in subset:
            for a in t.arcs(s):
                if a.ilabel != EPS:
                    moves.setdefault(a.ilabel, set()).add(a.next)
        for label in sorted(moves):
            nxt = _eps_closure(t, moves[label])
            dst = index.get(nxt)
            if dst is None:
                dst = index[nxt] = out.add_state()
                queue.append(nxt)
            out._arcs[src].append(Arc(label, label, 0.0, dst))
    return out


def determinize_encoded(t: Wfst) -> Wfst:
    """``decode(determinize(encode(t)))`` with canonical state numbering."""
    enc, codec = encode(t)
    return canonicalize(decode(determinize(enc), codec, t.symbols))


# ---------------------------------------------------------------------------
# paths

def _out_word(t: Wfst, label: int):
    return t.label_text(label) if t.symbols is not None else label


def best_path(t: Wfst) -> tuple[list, float]:
    """Maximum-weight path; ties go to the lexicographically smaller output."""
    paths = enumerate_paths(t, 1)
    if not paths:
        raise FstError("automaton has no successful path")
    return paths[0]


def enumerate_paths(t: Wfst, limit: int | None = None) -> list[tuple[list, float]]:
    """Paths of an acyclic automaton as ``(output words, weight)``.

    Sorted by descending weight, then ascending word sequence.  With
    ``limit`` only the top paths are kept, computed by a k-best pass over
    the topological order rather than full enumeration.
    """
    if t.start is None:
        return []
    order = topological_order(t)
    key = lambda p: (-p[0], p[1])
    best: dict[int, list[tuple[float, tuple]]] = {}
    for s in reversed(order):
        cands = []
        w = t.final(s)
        if w is not None:
            cands.append((w, ()))
        for a in t.arcs(s):
            head = () if a.olabel == EPS else (_out_word(t, a.olabel),)
            for sw, words in best.get(a.next, ()):
                cands.append((a.weight + sw, head + words))
        cands.sort(key=key)
        best[s] = cands if limit is None else cands[:limit]
    return [(list(words), w) for w, words in best[t.start]]


# ---------------------------------------------------------------------------
# text format

def _fmt(w: float) -> str:
    if w == int(w) and abs(w) < 1e15:
        return str(int(w))
    return repr(w)


def linear_acceptor(labels: Sequence[int], weights: Sequence[float] | None = None,
                    symbols: SymbolTable | None = None) -> Wfst:
    t = Wfst(symbols)
    t.add_states(len(labels) + 1)
    t.set_start(0)
    for i, lab in enumerate(labels):
        t.add_arc(i, lab, lab, weights[i] if weights else 0.0, i + 1)
    t.set_final(len(labels))
    return t


def write_text(t: Wfst) -> str:
    """``src dst ilabel olabel weight`` arc lines then ``state weight`` finals."""
    if t.start not in (None, 0):
        order = [t.start] + [s for s in t.states() if s != t.start]
        t = renumber(t, order)
    lines = []
    for s in t.states():
        for a in t.arcs(s):
            lines.append(f"{s}\t{a.next}\t{a.ilabel}\t{a.olabel}\t{_fmt(a.weight)}")
    for s in sorted(t._finals):
        lines.append(f"{s}\t{_fmt(t._finals[s])}")
    return "".join(line + "\n" for line in lines)


def read_text(text: str, symbols: SymbolTable | None = None, negate: bool = False) -> Wfst:
    t = Wfst(symbols)
    sign = -1.0 if negate else 1.0

    def need(s):
        while t.num_states <= s:
            t.add_state()

    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        f = line.split("\t")
        try:
            if len(f) == 5:
                src, dst, il, ol = (int(x) for x in f[:4])
                need(max(src, dst))
                t._arcs[src].append(Arc(il, ol, sign * float(f[4]) + 0.0, dst))
            elif len(f) in (1, 2):
                s = int(f[0])
                need(s)
                t._finals[s] = sign * float(f[1]) if len(f) == 2 else 0.0
            else:
                raise ValueError
        except ValueError:
            raise FstError(f"line {n}: expected 5 arc fields or 1-2 final fields") from None
        if symbols is not None and len(f) == 5 and max(il, ol) >= len(symbols):
            raise FstError(f"line {n}: label not in symbol table")
    if t.num_states:
        t.start = 0
    for s in t._finals:
        t._finals[s] = t._finals[s] + 0.0
    return t
