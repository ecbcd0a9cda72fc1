"""Knowledge graph of named entities.

The on-disk format is a JSON object keyed by entity id::

    "12345": {
        "names": {"Canyon Moon": {"word count": 2}},
        "types": {"music title": {"popularity": 0.0025}},
        "relationships": [{"relation": "performed by",
                           "entity id": "67890", "popularity": 0.0021}]}

The enclosing braces and the commas between top-level entries may be left
out, as in hand-written snippets.  An optional top-level ``"_strata"`` object
maps a type name to ``{"head": n, "torso": n, "tail": n}`` rank cutoffs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

HEAD, TORSO, TAIL = "head", "torso", "tail"
TIERS = (HEAD, TORSO, TAIL)

DEFAULT_HEAD_N = 100
DEFAULT_TORSO_N = 2000
DEFAULT_TAIL_N = 60000


class KGError(ValueError):
    """Malformed or inconsistent knowledge graph data."""


@dataclass(frozen=True)
class Name:
    words: tuple[str, ...]
    word_count: int

    @property
    def text(self) -> str:
        return " ".join(self.words)


@dataclass(frozen=True)
class Relationship:
    relation: str
    entity_id: str
    popularity: float = 0.0


@dataclass(frozen=True)
class Entity:
    id: str
    names: tuple[Name, ...]
    types: tuple[tuple[str, float], ...]
    relationships: tuple[Relationship, ...] = ()

    def popularity(self, type_name: str) -> float | None:
        for t, p in self.types:
            if t == type_name:
                return p
        return None


@dataclass(frozen=True)
class NonTerminalSpec:
    """An entity-type slot, optionally conditioned.

    ``relation`` is ``(relation_name, ref_index)`` where ``ref_index`` is the
    1-based position of an earlier non-terminal in the same n-gram.
    """

    type_name: str
    pop_tier: str | None = None
    min_word_count: int | None = None
    relation: tuple[str, int] | None = None

    def __post_init__(self):
        if self.pop_tier is not None and self.pop_tier not in TIERS:
            raise ValueError(f"bad popularity tier {self.pop_tier!r}")
        if self.min_word_count is not None and self.min_word_count not in (1, 2, 3):
            raise ValueError(f"bad word-count condition {self.min_word_count!r}")
        if self.relation is not None:
            rel, k = self.relation
            if not rel or k < 1:
                raise ValueError(f"bad relation condition {self.relation!r}")

    def __str__(self) -> str:
        parts = [self.type_name.replace(" ", "_")]
        if self.pop_tier is not None:
            parts.append(f"pop={self.pop_tier}")
        if self.min_word_count is not None:
            parts.append(f"wc>={self.min_word_count}")
        if self.relation is not None:
            parts.append(f"rel={self.relation[0].replace(' ', '_')}@{self.relation[1]}")
        return "<" + ";".join(parts) + ">"

    def replace(self, **changes) -> "NonTerminalSpec":
        fields = dict(type_name=self.type_name, pop_tier=self.pop_tier,
                      min_word_count=self.min_word_count, relation=self.relation)
        fields.update(changes)
        return NonTerminalSpec(**fields)


Expansion = Mapping[tuple[str, ...], frozenset]


@dataclass
class KnowledgeGraph:
    """Validated, read-only entity graph.

    ``strata`` maps each type to cumulative ``(head, torso, tail)`` rank
    cutoffs.  Ranks are 1-based over the type's entities sorted by
    descending popularity, ties broken by id.
    """

    entities: dict[str, Entity]
    strata: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self._ranked: dict[str, list[str]] = {}
        for e in sorted(self.entities.values(), key=lambda e: e.id):
            for t, _ in e.types:
                self._ranked.setdefault(t, []).append(e.id)
        self._rank: dict[str, dict[str, int]] = {}
        for t, ids in self._ranked.items():
            ids.sort(key=lambda i: (-self.entities[i].popularity(t), i))
            self._rank[t] = {i: r for r, i in enumerate(ids, 1)}
        self._by_relation: dict[tuple[str, str], set[str]] = {}
        for e in self.entities.values():
            for rel in e.relationships:
                self._by_relation.setdefault((rel.relation, rel.entity_id), set()).add(e.id)
        for t in self._ranked:
            if t not in self.strata:
                self.strata[t] = compute_strata(self, t)
        self._cache: dict = {}

    @property
    def types(self) -> list[str]:
        return sorted(self._ranked)

    def ranked(self, type_name: str) -> list[str]:
        """Entity ids of ``type_name`` from most to least popular."""
        try:
            return self._ranked[type_name]
        except KeyError:
            raise KGError(f"unknown entity type {type_name!r}") from None

    def has_type(self, type_name: str) -> bool:
        return type_name in self._ranked

    def rank(self, entity_id: str, type_name: str) -> int:
        return self._rank[type_name][entity_id]

    def tier_cutoff(self, type_name: str, tier: str) -> int:
        return self.strata[type_name][TIERS.index(tier)]

    def related_sources(self, relation: str, target_id: str) -> set[str]:
        """Ids of entities holding a ``relation`` edge to ``target_id``."""
        return self._by_relation.get((relation, target_id), set())

    def expand(self, spec: NonTerminalSpec, bound: Iterable[str] | None = None) -> Expansion:
        """Surfaces of ``spec`` as a map surface -> ids of entities bearing it.

        ``bound`` is the entity-id set the relation condition refers to; it is
        ignored for specs without one.  Results are memoized.
        """
        if spec.relation is None:
            key = (spec, None)
        else:
            if bound is None:
                raise KGError(f"missing binding for {spec}")
            key = (spec, frozenset(bound))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ids = self.ranked(spec.type_name)
        if spec.pop_tier is not None:
            ids = ids[:self.tier_cutoff(spec.type_name, spec.pop_tier)]
        if spec.relation is not None:
            sources: set[str] = set()
            for target in key[1]:
                sources |= self.related_sources(spec.relation[0], target)
            ids = [i for i in ids if i in sources]
        out: dict[tuple[str, ...], set[str]] = {}
        for i in ids:
            for name in self.entities[i].names:
                if spec.min_word_count is None or name.word_count >= spec.min_word_count:
                    out.setdefault(name.words, set()).add(i)
        result = {s: frozenset(v) for s, v in out.items()}
        return self._cache.setdefault(key, result)


def compute_strata(graph: KnowledgeGraph, type_name: str, head_n: int = DEFAULT_HEAD_N,
                   torso_n: int = DEFAULT_TORSO_N,
                   tail_n: int = DEFAULT_TAIL_N) -> tuple[int, int, int]:
    """Rank cutoffs for the head/torso/tail tiers of one type, clamped to its size."""
    if not head_n <= torso_n <= tail_n:
        raise ValueError(f"cutoffs must be ordered, got {(head_n, torso_n, tail_n)}")
    n = len(graph.ranked(type_name))
    return min(head_n, n), min(torso_n, n), min(tail_n, n)


def expand_nonterminal(graph: KnowledgeGraph, spec: NonTerminalSpec,
                       bindings: Mapping[int, Iterable[str]] | None = None) -> Expansion:
    """Every surface satisfying ``spec``; ``bindings`` maps NT position -> entity ids."""
    bound = None
    if spec.relation is not None:
        k = spec.relation[1]
        if bindings is None or k not in bindings:
            raise KGError(f"missing binding {k} for {spec}")
        bound = bindings[k]
    return graph.expand(spec, bound)


def _read_document(text: str) -> dict:
    text = text.strip()
    if not text:
        return {}
    if text.startswith("{"):
        return json.loads(text)
    # bare `"id": {...}` entries, commas optional
    dec = json.JSONDecoder()
    doc, pos = {}, 0
    while pos < len(text):
        key, pos = dec.raw_decode(text, pos)
        pos = _skip(text, pos)
        if not isinstance(key, str) or text[pos:pos + 1] != ":":
            raise json.JSONDecodeError("expected '\"id\": {...}'", text, pos)
        value, pos = dec.raw_decode(text, _skip(text, pos + 1))
        doc[key] = value
        pos = _skip(text, pos)
        if text[pos:pos + 1] == ",":
            pos = _skip(text, pos + 1)
    return doc


def _skip(text: str, pos: int) -> int:
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def _number(value, eid: str, what: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise KGError(f"entity {eid}: {what} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise KGError(f"entity {eid}: {what} is not finite")
    if x < 0:
        raise KGError(f"entity {eid}: {what} is negative ({x})")
    return x


def parse_kg(text: str) -> KnowledgeGraph:
    try:
        doc = _read_document(text)
    except json.JSONDecodeError as exc:
        raise KGError(f"malformed knowledge graph document: {exc}") from None
    if not isinstance(doc, dict):
        raise KGError("knowledge graph document must be an object keyed by entity id")
    strata_doc = doc.pop("_strata", {})
    entities: dict[str, Entity] = {}
    for eid, body in doc.items():
        if not isinstance(body, dict):
            raise KGError(f"entity {eid}: expected an object")
        names: dict[tuple[str, ...], Name] = {}
        for surface, info in (body.get("names") or {}).items():
            words = tuple(surface.lower().split())
            if not words:
                raise KGError(f"entity {eid}: names: empty surface")
            wc = (info or {}).get("word count", len(words))
            if wc != len(words):
                raise KGError(f"entity {eid}: names: {surface!r} has word count {wc}, "
                              f"expected {len(words)}")
            names.setdefault(words, Name(words, len(words)))
        types = []
        for type_name, info in (body.get("types") or {}).items():
            pop = (info or {}).get("popularity", 0.0)
            types.append((type_name, _number(pop, eid, f"types.{type_name}.popularity")))
        rels = []
        for rel in body.get("relationships") or []:
            relation = rel.get("relation")
            if not relation:
                raise KGError(f"entity {eid}: relationships: empty relation")
            if "entity id" not in rel:
                raise KGError(f"entity {eid}: relationships: missing 'entity id'")
            pop = _number(rel.get("popularity", 0.0), eid, "relationships.popularity")
            rels.append(Relationship(relation, str(rel["entity id"]), pop))
        entities[str(eid)] = Entity(str(eid), tuple(names.values()), tuple(types), tuple(rels))
    for e in entities.values():
        for rel in e.relationships:
            if rel.entity_id not in entities:
                raise KGError(f"entity {e.id}: relationships: dangling entity id "
                              f"{rel.entity_id}")
    strata = {}
    for type_name, cut in strata_doc.items():
        try:
            strata[type_name] = (int(cut["head"]), int(cut["torso"]), int(cut["tail"]))
        except (KeyError, TypeError, ValueError):
            raise KGError(f"_strata: bad cutoffs for {type_name!r}") from None
    graph = KnowledgeGraph(entities)
    for type_name, (h, t, tl) in strata.items():
        graph.strata[type_name] = compute_strata(graph, type_name, h, t, tl)
    graph._cache.clear()
    return graph


def load_kg(path: str | Path) -> KnowledgeGraph:
    return parse_kg(Path(path).read_text(encoding="utf-8"))


def kg_to_dict(graph: KnowledgeGraph, with_strata: bool = True) -> dict:
    doc = {}
    for eid, e in graph.entities.items():
        doc[eid] = {
            "names": {n.text: {"word count": n.word_count} for n in e.names},
            "types": {t: {"popularity": p} for t, p in e.types},
            "relationships": [{"relation": r.relation, "entity id": r.entity_id,
                               "popularity": r.popularity} for r in e.relationships],
        }
    if with_strata and graph.strata:
        doc["_strata"] = {t: dict(zip(TIERS, c)) for t, c in sorted(graph.strata.items())}
    return doc


def save_kg(graph: KnowledgeGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(kg_to_dict(graph), indent=1) + "\n", encoding="utf-8")
