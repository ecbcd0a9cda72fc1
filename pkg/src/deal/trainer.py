"""Averaged structured perceptron over n-best lists.

Each example's gold is its oracle hypothesis (fewest word edits to the
reference, then higher base score, then earlier rank).  When the current
model prefers a different hypothesis the weights move toward the gold's
feature vector and away from the prediction's.  The vector is
``(base_score, count_1, ..., count_F)``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureNGram, Model, renumber
from .kg import KnowledgeGraph
from .rescorer import HypothesisScorer


@dataclass
class TrainingExample:
    utt_id: str
    reference: list[str]
    nbest: list[tuple[list[str], float]]

    def __post_init__(self):
        if not self.nbest:
            raise ValueError(f"{self.utt_id}: empty n-best list")
        for _, b in self.nbest:
            if not np.isfinite(b):
                raise ValueError(f"{self.utt_id}: non-finite base score")


@dataclass
class TrainerConfig:
    epochs: int = 10
    learning_rate: float = 1.0
    averaging: bool = True
    seed: int = 0
    train_base_weight: bool = True
    base_weight_init: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Word-level Levenshtein distance."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def oracle_index(example: TrainingExample) -> int:
    return min(range(len(example.nbest)),
               key=lambda i: (edit_distance(example.nbest[i][0], example.reference),
                              -example.nbest[i][1], i))


def oracle_hypothesis(example: TrainingExample) -> tuple[list[str], float]:
    return example.nbest[oracle_index(example)]


def feature_matrix(example: TrainingExample, scorer: HypothesisScorer, n_features: int) -> np.ndarray:
    """Rows are hypotheses, columns ``(base, count_1..count_F)``."""
    phi = np.zeros((len(example.nbest), n_features + 1))
    for i, (words, base) in enumerate(example.nbest):
        phi[i, 0] = base
        for fid, c in scorer.counts(words).items():
            phi[i, fid] = c
    return phi


def train(examples: Sequence[TrainingExample], feature_set: Sequence[FeatureNGram],
          graph: KnowledgeGraph, config: TrainerConfig | None = None) -> Model:
    config = config or TrainerConfig()
    if not examples:
        raise ValueError("no training examples")
    features = renumber(feature_set, dedupe=False)
    zero = Model(config.base_weight_init, [FeatureNGram(f.id, f.tokens, 0.0) for f in features])
    scorer = HypothesisScorer(zero, graph)
    data = [(feature_matrix(ex, scorer, len(features)), oracle_index(ex)) for ex in examples]

    w = np.zeros(len(features) + 1)
    w[0] = config.base_weight_init
    # lazy averaging: total = sum of w over all steps
    total = np.zeros_like(w)
    stamp = np.zeros_like(w)
    step = 0
    rng = random.Random(config.seed)
    order = list(range(len(data)))
    for _ in range(config.epochs):
        rng.shuffle(order)
        for k in order:
            phi, gold = data[k]
            pred = int(np.argmax(phi @ w))
            step += 1
            if pred != gold and not np.array_equal(phi[pred], phi[gold]):
                delta = config.learning_rate * (phi[gold] - phi[pred])
                if not config.train_base_weight:
                    delta[0] = 0.0
                changed = np.nonzero(delta)[0]
                total[changed] += w[changed] * (step - 1 - stamp[changed])
                stamp[changed] = step - 1
                w[changed] += delta[changed]
    if config.averaging:
        total += w * (step - stamp)
        w = total / step
    return zero.with_weights(w.tolist())


def training_error(examples: Sequence[TrainingExample], model: Model,
                   graph: KnowledgeGraph) -> float:
    """Fraction of examples whose top-scoring hypothesis is not the oracle."""
    scorer = HypothesisScorer(model, graph)
    wrong = 0
    for ex in examples:
        totals = [scorer.score(words, base).total for words, base in ex.nbest]
        pred = max(range(len(totals)), key=lambda i: (totals[i], -i))
        wrong += ex.nbest[pred][0] != oracle_hypothesis(ex)[0]
    return wrong / len(examples)


# ---------------------------------------------------------------------------
# files

def parse_training(text: str) -> list[TrainingExample]:
    """Blocks of ``utt<TAB>REF<TAB>words`` then ``HYP<TAB>base<TAB>words`` lines."""
    examples, cur = [], None
    for n, line in enumerate(text.splitlines() + [""], 1):
        if not line.strip():
            if cur is not None:
                examples.append(TrainingExample(*cur))
                cur = None
            continue
        f = line.split("\t")
        if len(f) != 3:
            raise ValueError(f"line {n}: expected three tab-separated fields")
        if f[1] == "REF":
            if cur is not None:
                raise ValueError(f"line {n}: missing blank line before new example")
            cur = (f[0], f[2].split(), [])
        elif f[0] == "HYP" and cur is not None:
            try:
                cur[2].append((f[2].split(), float(f[1])))
            except ValueError:
                raise ValueError(f"line {n}: bad base score {f[1]!r}") from None
        else:
            raise ValueError(f"line {n}: expected a REF or HYP line")
    return examples


def format_training(examples: Sequence[TrainingExample]) -> str:
    blocks = []
    for ex in examples:
        lines = [f"{ex.utt_id}\tREF\t{' '.join(ex.reference)}"]
        lines += [f"HYP\t{b!r}\t{' '.join(w)}" for w, b in ex.nbest]
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def load_training(path: str | Path) -> list[TrainingExample]:
    return parse_training(Path(path).read_text(encoding="utf-8"))
