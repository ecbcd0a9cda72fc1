"""End-to-end desk experiment: synthesize, corrupt, train, rescore, evaluate.

Training mixes entity utterances from every stratum with entity-free
"general" utterances at a 2:7 ratio.  Test sets are one per stratum plus one
general set; each is rescored by every requested feature-set variant.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .features import Model, Template, feature_set, is_nonterminal
from .fst import SymbolTable, Wfst, best_path
from .kg import KnowledgeGraph
from .rescorer import Rescorer
from .synth import (STRATA, EvalReport, NoiseChannelConfig, confusion_pool,
                    corrupt_to_lattice, evaluate, sample_utterances)
from .trainer import TrainerConfig, TrainingExample, train

log = logging.getLogger(__name__)

GENERAL = "general"


@dataclass
class ExperimentConfig:
    seed: int = 13
    train_synth: int = 2000
    general_ratio: float = 3.5
    test_size: int = 500
    nbest: int = 20
    substitution_rate: float = 0.3
    breadth: int = 3
    variants: tuple[str, ...] = ("deal", "deal-r", "deal-rpc")
    trainer: TrainerConfig = field(default_factory=lambda: TrainerConfig(epochs=5))
    workers: int = 1


@dataclass
class TestSet:
    name: str
    stratum: str
    references: dict[str, list[str]]
    entity_ids: dict[str, list[str]]
    lattices: dict[str, Wfst]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    models: dict[str, Model]
    outputs: dict[str, dict[str, dict[str, list[str]]]]  # system -> testset -> utt -> words
    testsets: list[TestSet]
    seconds: float

    def report(self, testset: str, system: str, subset: Sequence[str] | None = None) -> EvalReport:
        ts = next(t for t in self.testsets if t.name == testset)
        keys = list(ts.references) if subset is None else list(subset)
        return evaluate({k: self.outputs[system][testset][k] for k in keys},
                        {k: ts.references[k] for k in keys},
                        {k: ts.lattices[k] for k in keys})

    def ser(self, testset: str, system: str, subset: Sequence[str] | None = None) -> float:
        return self.report(testset, system, subset).ser


def vocabulary(graph: KnowledgeGraph, templates: Sequence[Template]) -> set[str]:
    words = {w for e in graph.entities.values() for n in e.names for w in n.words}
    words.update(t for tpl in templates for t in tpl.tokens if not is_nonterminal(t))
    return words


def relation_pairs(graph: KnowledgeGraph, ids: Sequence[str]) -> set[tuple[str, str]]:
    """Pairs of entities in one utterance that the graph relates (either direction)."""
    out = set()
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if any(r.entity_id == b for r in graph.entities[a].relationships) or \
                    any(r.entity_id == a for r in graph.entities[b].relationships):
                out.add((a, b))
    return out


def signature(graph: KnowledgeGraph, ids: Sequence[str]) -> str:
    """Entity-type signature of an utterance, e.g. ``city/state``."""
    if not ids:
        return GENERAL
    return "/".join(graph.entities[i].types[0][0] for i in ids)


def _examples(corpus, channel, nbest, prefix, symbols) -> list[TrainingExample]:
    out = []
    for i, (words, _) in enumerate(corpus):
        key = f"{prefix}-{i:05d}"
        _, paths = corrupt_to_lattice(words, channel, key, nbest, symbols)
        out.append(TrainingExample(key, list(words), [(list(w), b) for w, b in paths]))
    return out


def _testset(name, stratum, corpus, channel, symbols) -> TestSet:
    refs, ids, lats = {}, {}, {}
    for i, (words, used) in enumerate(corpus):
        key = f"{name}-{i:05d}"
        lats[key], _ = corrupt_to_lattice(words, channel, key, 1, symbols)
        refs[key], ids[key] = list(words), list(used)
    return TestSet(name, stratum, refs, ids, lats)


def rescore_all(rescorer: Rescorer, lattices: dict[str, Wfst], workers: int = 1
                ) -> dict[str, list[str]]:
    keys = sorted(lattices)
    if workers <= 1:
        return {k: rescorer.rescore(lattices[k])[0].words for k in keys}
    with ThreadPoolExecutor(workers) as pool:
        results = pool.map(lambda k: rescorer.rescore(lattices[k])[0].words, keys)
        return dict(zip(keys, results))


def run_experiment(graph: KnowledgeGraph, templates: Sequence[Template],
                   general: Sequence[Template], confusions: dict[str, list[str]],
                   config: ExperimentConfig | None = None) -> ExperimentResult:
    config = config or ExperimentConfig()
    t0 = time.perf_counter()
    pool = confusion_pool(vocabulary(graph, list(templates) + list(general)), confusions)
    channel = NoiseChannelConfig(config.substitution_rate, pool, config.breadth, config.seed)
    symbols = SymbolTable()

    per = [config.train_synth // 3 + (i < config.train_synth % 3) for i in range(3)]
    examples: list[TrainingExample] = []
    for stratum, n in zip(STRATA, per):
        corpus = sample_utterances(templates, graph, stratum, n, f"{config.seed}:train:{stratum}")
        examples += _examples(corpus, channel, config.nbest, f"train-{stratum}", symbols)
    n_general = round(config.train_synth * config.general_ratio)
    corpus = sample_utterances(general, graph, None, n_general, f"{config.seed}:train:general")
    examples += _examples(corpus, channel, config.nbest, "train-general", symbols)
    log.info("built %d training examples", len(examples))

    testsets = []
    for stratum in STRATA:
        corpus = sample_utterances(templates, graph, stratum, config.test_size,
                                   f"{config.seed}:test:{stratum}")
        testsets.append(_testset(stratum, stratum, corpus, channel, symbols))
    corpus = sample_utterances(general, graph, None, config.test_size, f"{config.seed}:test:general")
    testsets.append(_testset(GENERAL, "-", corpus, channel, symbols))

    outputs: dict = {"baseline": {ts.name: {k: best_path(lat)[0] for k, lat in ts.lattices.items()}
                                  for ts in testsets}}
    models = {}
    for variant in config.variants:
        feats = feature_set(templates, variant)
        model = train(examples, feats, graph, config.trainer)
        models[variant] = model
        rescorer = Rescorer(model, graph)
        outputs[variant] = {ts.name: rescore_all(rescorer, ts.lattices, config.workers)
                            for ts in testsets}
        log.info("variant %s: %d features", variant, len(feats))
    return ExperimentResult(config, models, outputs, testsets, time.perf_counter() - t0)


def report_rows(result: ExperimentResult, graph: KnowledgeGraph, system: str) -> list[tuple]:
    """Rows ``(testset, stratum, #entities, #relations, baseline, system, oracle)``
    broken down by entity-type signature, plus one aggregate row per test set."""
    rows = []
    for ts in result.testsets:
        groups: dict[str, list[str]] = {}
        for k, ids in ts.entity_ids.items():
            groups.setdefault(signature(graph, ids), []).append(k)
        parts = sorted(groups.items()) if len(groups) > 1 else []
        for name, keys in parts + [("all" if ts.name != GENERAL else GENERAL, list(ts.references))]:
            ents = {i for k in keys for i in ts.entity_ids[k]}
            rels = set().union(*(relation_pairs(graph, ts.entity_ids[k]) for k in keys))
            base = result.report(ts.name, "baseline", keys)
            sys_ = result.report(ts.name, system, keys)
            rows.append((name, ts.stratum, len(ents), len(rels), base.ser, sys_.ser,
                         base.oracle_ser))
    return rows
