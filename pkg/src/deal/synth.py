"""Text-level data synthesis and sentence-error-rate evaluation.

Utterances are sampled from weighted templates with entity names drawn by
popularity inside one popularity band.  A noisy channel then turns each
utterance into a small lattice of confusable alternatives whose arc weights
play the role of base-system scores.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .features import Template, is_nonterminal
from .fst import SymbolTable, Wfst, compose, enumerate_paths, linear_acceptor
from .kg import HEAD, TAIL, TORSO, KnowledgeGraph

STRATA = (HEAD, TORSO, TAIL)


class SynthError(ValueError):
    pass


def band(graph: KnowledgeGraph, type_name: str, stratum: str) -> list[str]:
    """Entity ids of one popularity band (bands are disjoint, unlike tiers)."""
    ids = graph.ranked(type_name)
    head, torso, tail = graph.strata[type_name]
    lo, hi = {HEAD: (0, head), TORSO: (head, torso), TAIL: (torso, tail)}[stratum]
    return ids[lo:hi]


def _weighted(rng: random.Random, items: Sequence, weights: Sequence[float]):
    if not any(w > 0 for w in weights):
        return items[rng.randrange(len(items))]
    return rng.choices(items, weights=weights)[0]


def _pair_band(graph: KnowledgeGraph, dep, ref_type: str, stratum: str) -> list[tuple]:
    """Related (dependent, referent, popularity) triples ranked by popularity,
    cut to the stratum using the referent type's cutoffs."""
    pairs = []
    for e in graph.entities.values():
        if e.popularity(dep.type_name) is None:
            continue
        for rel in e.relationships:
            if rel.relation == dep.relation[0] and \
                    graph.entities[rel.entity_id].popularity(ref_type) is not None:
                pairs.append((e.id, rel.entity_id, rel.popularity))
    pairs.sort(key=lambda p: (-p[2], p[1], p[0]))
    head, torso, tail = graph.strata[ref_type]
    lo, hi = {HEAD: (0, head), TORSO: (head, torso), TAIL: (torso, tail)}[stratum]
    return pairs[lo:hi]


def sample_utterance(tpl: Template, graph: KnowledgeGraph, stratum: str,
                     rng: random.Random) -> tuple[list[str], list[str]]:
    nts = [t for t in tpl.tokens if is_nonterminal(t)]
    chosen: dict[int, str] = {}
    for j, spec in enumerate(nts, 1):
        if spec.relation is None:
            continue
        k = spec.relation[1]
        ref_type = nts[k - 1].type_name
        if k in chosen:
            cands = [i for i in graph.ranked(spec.type_name)
                     if any(r.relation == spec.relation[0] and r.entity_id == chosen[k]
                            for r in graph.entities[i].relationships)]
            if not cands:
                raise SynthError(f"no {spec} related to entity {chosen[k]}")
            chosen[j] = _weighted(rng, cands,
                                  [graph.entities[i].popularity(spec.type_name) for i in cands])
            continue
        pairs = _pair_band(graph, spec, ref_type, stratum)
        if not pairs:
            raise SynthError(f"stratum {stratum} has no {spec.relation[0]!r} pairs")
        dep, ref, _ = _weighted(rng, pairs, [p[2] for p in pairs])
        chosen[j], chosen[k] = dep, ref
    for j, spec in enumerate(nts, 1):
        if j in chosen:
            continue
        ids = band(graph, spec.type_name, stratum)
        if not ids:
            raise SynthError(f"stratum {stratum} of {spec.type_name!r} is empty")
        chosen[j] = _weighted(rng, ids, [graph.entities[i].popularity(spec.type_name)
                                         for i in ids])
    words: list[str] = []
    j = 0
    for tok in tpl.tokens:
        if is_nonterminal(tok):
            j += 1
            names = graph.entities[chosen[j]].names
            words.extend(names[rng.randrange(len(names))].words)
        else:
            words.append(tok)
    return words, [chosen[j] for j in range(1, len(nts) + 1)]


def sample_utterances(templates: Sequence[Template], graph: KnowledgeGraph, stratum: str | None,
                      n: int, seed: int | str) -> list[tuple[list[str], list[str]]]:
    """``n`` utterances, template drawn by frequency and entities by popularity.

    ``stratum`` may be None for entity-free templates.
    """
    if n == 0:
        return []
    if not templates:
        raise SynthError("no templates")
    out = []
    weights = [t.frequency for t in templates]
    for i in range(n):
        rng = random.Random(f"{seed}:{i}")
        tpl = rng.choices(templates, weights=weights)[0]
        out.append(sample_utterance(tpl, graph, stratum, rng))
    return out


# ---------------------------------------------------------------------------
# noisy channel

@dataclass
class NoiseChannelConfig:
    substitution_rate: float = 0.3
    confusions: Mapping[str, Sequence[str]] = field(default_factory=dict)
    breadth: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.substitution_rate <= 1.0:
            raise ValueError("substitution rate must be in [0, 1]")
        if self.breadth < 1:
            raise ValueError("breadth must be >= 1")


def edit1_neighbors(vocabulary: Iterable[str]) -> dict[str, list[str]]:
    """Character edit-distance-1 neighbours of each word within ``vocabulary``."""
    vocab = sorted(set(vocabulary))
    subst: dict[tuple[str, int], list[str]] = {}
    deleted: dict[str, list[str]] = {}
    for w in vocab:
        for i in range(len(w)):
            subst.setdefault((w[:i] + w[i + 1:], i), []).append(w)
            deleted.setdefault(w[:i] + w[i + 1:], []).append(w)
    vset = set(vocab)
    out: dict[str, set[str]] = {}
    for w in vocab:
        nb = set()
        for i in range(len(w)):
            nb.update(subst[(w[:i] + w[i + 1:], i)])
            short = w[:i] + w[i + 1:]
            if short in vset:
                nb.add(short)
        nb.update(deleted.get(w, ()))
        nb.discard(w)
        if nb:
            out[w] = nb
    return {w: sorted(nb) for w, nb in out.items()}


def confusion_pool(vocabulary: Iterable[str],
                   extra: Mapping[str, Sequence[str]] | None = None) -> dict[str, list[str]]:
    pool = edit1_neighbors(vocabulary)
    for w, alts in (extra or {}).items():
        merged = pool.setdefault(w, [])
        merged.extend(a for a in alts if a not in merged and a != w)
    return pool


def corrupt_to_lattice(words: Sequence[str], channel: NoiseChannelConfig, key: str = "",
                       nbest: int = 20, symbols: SymbolTable | None = None
                       ) -> tuple[Wfst, list[tuple[list[str], float]]]:
    """Lattice holding the true words plus confusable alternatives per position.

    At a confusable position with error mass ``p`` (uniform on (0, 1)) the
    true word scores ``log(1 - p)`` and each of ``m`` alternatives
    ``log(p / m)``.  Alternatives may span several words.  ``key`` seeds the
    per-utterance generator together with the channel seed.
    """
    if not words:
        raise SynthError("cannot corrupt an empty utterance")
    rng = random.Random(f"{channel.seed}:{key}:{' '.join(words)}")
    symbols = symbols if symbols is not None else SymbolTable()
    t = Wfst(symbols)
    s = t.add_state()
    t.set_start(s)
    for w in words:
        nxt = t.add_state()
        pool = channel.confusions.get(w, ())
        m = min(channel.breadth - 1, len(pool))
        if m and rng.random() < channel.substitution_rate:
            p = rng.uniform(0.0, 1.0)
            p = min(max(p, 1e-6), 1 - 1e-6)
            lab = symbols.add(w)
            t.add_arc(s, lab, lab, math.log(1 - p), nxt)
            for alt in rng.sample(list(pool), m):
                alt_words = alt.split()
                cur, weight = s, math.log(p / m)
                for i, aw in enumerate(alt_words):
                    dst = nxt if i == len(alt_words) - 1 else t.add_state()
                    lab = symbols.add(aw)
                    t.add_arc(cur, lab, lab, weight, dst)
                    cur, weight = dst, 0.0
        else:
            lab = symbols.add(w)
            t.add_arc(s, lab, lab, 0.0, nxt)
        s = nxt
    t.set_final(s, 0.0)
    return t, enumerate_paths(t, nbest)


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalReport:
    ser: float
    oracle_ser: float | None
    utterances: int
    entities: int = 0
    relations: int = 0


def _norm(words) -> tuple[str, ...]:
    if isinstance(words, str):
        words = words.split()
    return tuple(w.lower() for w in words)


def lattice_contains(lattice: Wfst, words: Sequence[str]) -> bool:
    labels = [lattice.symbols.find(w) for w in words]
    if any(lab is None for lab in labels):
        return False
    return compose(lattice, linear_acceptor(labels)).start is not None


def evaluate(outputs: Mapping[str, Sequence[str]], references: Mapping[str, Sequence[str]],
             lattices: Mapping[str, Wfst] | None = None, entities: int = 0,
             relations: int = 0) -> EvalReport:
    if set(outputs) != set(references):
        missing = sorted(set(outputs) ^ set(references))[:5]
        raise SynthError(f"output and reference utterance ids differ, e.g. {missing}")
    n = len(references)
    if n == 0:
        return EvalReport(0.0, 0.0 if lattices is not None else None, 0, entities, relations)
    errors = sum(_norm(outputs[u]) != _norm(references[u]) for u in references)
    oracle = None
    if lattices is not None:
        misses = sum(not lattice_contains(lattices[u], list(_norm(references[u])))
                     for u in references)
        oracle = misses / n
    return EvalReport(errors / n, oracle, n, entities, relations)


REPORT_COLUMNS = ("testset", "stratum", "#entities", "#relations", "baseline SER",
                  "DEAL SER", "oracle SER")


def format_report(rows: Sequence[Sequence]) -> str:
    """Aligned text table; SER cells are fractions rendered as percentages."""
    cells = [list(REPORT_COLUMNS)]
    for r in rows:
        out = []
        for i, v in enumerate(r):
            if i >= 4:
                out.append("-" if v is None else f"{100 * v:.2f}")
            else:
                out.append(str(v))
        cells.append(out)
    widths = [max(len(c[i]) for c in cells) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w)
                       for i, (c, w) in enumerate(zip(row, widths))) for row in cells]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# files

def parse_corpus(text: str) -> dict[str, list[str]]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        utt, sep, words = line.partition("\t")
        if not sep:
            raise SynthError(f"line {n}: expected 'utt_id<TAB>words'")
        out[utt] = words.split()
    return out


def format_corpus(corpus: Mapping[str, Sequence[str]]) -> str:
    return "".join(f"{u}\t{' '.join(w)}\n" for u, w in corpus.items())


def parse_confusions(text: str) -> dict[str, list[str]]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        word, sep, alts = line.partition("\t")
        if not sep:
            raise SynthError(f"line {n}: expected 'word<TAB>alt1,alt2,...'")
        out[word.strip().lower()] = [a.strip().lower() for a in alts.split(",") if a.strip()]
    return out


def load_confusions(path: str | Path) -> dict[str, list[str]]:
    return parse_confusions(Path(path).read_text(encoding="utf-8"))
