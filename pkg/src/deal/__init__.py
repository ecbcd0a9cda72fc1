"""Knowledge-graph-aware discriminative rescoring of recognition lattices."""

from .features import FeatureNGram, Model, Template, feature_set
from .kg import KnowledgeGraph, load_kg, parse_kg
from .rescorer import Rescorer, rescore_lattice, rescore_nbest, score_hypothesis
from .trainer import TrainerConfig, TrainingExample, train

__all__ = ["FeatureNGram", "Model", "Template", "feature_set", "KnowledgeGraph", "load_kg",
           "parse_kg", "Rescorer", "rescore_lattice", "rescore_nbest", "score_hypothesis",
           "TrainerConfig", "TrainingExample", "train"]

__version__ = "0.1.0"
