"""Feature n-grams over words and entity non-terminals.

Concrete syntax: tokens are separated by whitespace.  A non-terminal is
written ``<type[;pop=head|torso|tail][;wc>=1|2|3][;rel=relation@k]>`` where
spaces inside type and relation names become underscores and ``@k`` names
the k-th non-terminal (1-based) earlier in the same n-gram.  ``<s>`` and
``</s>`` are sentence-boundary words, not non-terminals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

from .kg import TIERS, NonTerminalSpec
from .fst import _fmt

BOS, EOS = "<s>", "</s>"
BASE_NAME = "<base>"

Token = Union[str, NonTerminalSpec]

MODES = ("none", "wc", "pop", "both")
VARIANTS = ("deal", "deal-r", "deal-rc", "deal-rp", "deal-rpc")


class FeatureError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def is_nonterminal(tok: Token) -> bool:
    return isinstance(tok, NonTerminalSpec)


def parse_token(text: str) -> Token:
    if text in (BOS, EOS):
        return text
    if not (text.startswith("<") and text.endswith(">")):
        if "<" in text or ">" in text:
            raise FeatureError(f"malformed token {text!r}")
        return text.lower()
    parts = text[1:-1].split(";")
    type_name = parts[0].replace("_", " ").strip()
    if not type_name:
        raise FeatureError(f"empty entity type in {text!r}")
    kw: dict = {}
    for cond in parts[1:]:
        if cond.startswith("pop="):
            tier = cond[4:]
            if tier not in TIERS:
                raise FeatureError(f"unknown popularity tier {tier!r} in {text!r}")
            kw["pop_tier"] = tier
        elif cond.startswith("wc>="):
            if cond[4:] not in ("1", "2", "3"):
                raise FeatureError(f"word-count condition must be 1, 2 or 3 in {text!r}")
            kw["min_word_count"] = int(cond[4:])
        elif cond.startswith("rel="):
            rel, at, k = cond[4:].rpartition("@")
            if not at or not rel or not k.isdigit() or int(k) < 1:
                raise FeatureError(f"relation condition must read rel=NAME@k in {text!r}")
            kw["relation"] = (rel.replace("_", " "), int(k))
        else:
            raise FeatureError(f"unknown condition {cond!r} in {text!r}")
    return NonTerminalSpec(type_name, **kw)


def parse_tokens(text: str) -> tuple[Token, ...]:
    tokens = tuple(parse_token(t) for t in text.split())
    n_nt = 0
    for tok in tokens:
        if is_nonterminal(tok):
            if tok.relation is not None and tok.relation[1] > n_nt:
                raise FeatureError(
                    f"{tok} refers to non-terminal {tok.relation[1]} but only {n_nt} precede it")
            n_nt += 1
    return tokens


def format_tokens(tokens: Iterable[Token]) -> str:
    return " ".join(str(t) for t in tokens)


@dataclass(frozen=True)
class FeatureNGram:
    id: int
    tokens: tuple[Token, ...]
    weight: float = 0.0

    def __post_init__(self):
        if not any(is_nonterminal(t) for t in self.tokens):
            raise FeatureError(f"feature {format_tokens(self.tokens)!r} has no non-terminal")

    @property
    def text(self) -> str:
        return format_tokens(self.tokens)

    @property
    def nonterminals(self) -> list[NonTerminalSpec]:
        return [t for t in self.tokens if is_nonterminal(t)]


@dataclass(frozen=True)
class Template:
    tokens: tuple[Token, ...]
    frequency: float = 1.0

    @property
    def text(self) -> str:
        return format_tokens(self.tokens)


@dataclass
class Model:
    """Base-score weight plus an ordered list of weighted feature n-grams."""

    base_weight: float = 1.0
    features: list[FeatureNGram] = field(default_factory=list)

    def __post_init__(self):
        ids = [f.id for f in self.features]
        if ids != list(range(1, len(ids) + 1)):
            raise FeatureError("feature ids must be dense and ordered 1..F")

    @property
    def weights(self) -> list[float]:
        return [self.base_weight] + [f.weight for f in self.features]

    def with_weights(self, weights: Sequence[float]) -> "Model":
        if len(weights) != len(self.features) + 1:
            raise ValueError("weight vector length must be F + 1")
        return Model(float(weights[0]),
                     [replace(f, weight=float(w)) for f, w in zip(self.features, weights[1:])])


def parse_feature(text: str, id: int = 1, weight: float = 0.0) -> FeatureNGram:
    return FeatureNGram(id, parse_tokens(text), weight)


def renumber(features: Iterable[FeatureNGram], dedupe: bool = True) -> list[FeatureNGram]:
    """Dense ids 1..F in input order; later duplicates of a token sequence are dropped."""
    out, seen = [], set()
    for f in features:
        if dedupe:
            if f.tokens in seen:
                continue
            seen.add(f.tokens)
        out.append(replace(f, id=len(out) + 1))
    return out


def _window(tokens: Sequence[Token], start: int, n: int) -> tuple[Token, ...]:
    """Slice of a token list with relation references re-based to the slice."""
    before = sum(1 for t in tokens[:start] if is_nonterminal(t))
    out = []
    for tok in tokens[start:start + n]:
        if is_nonterminal(tok) and tok.relation is not None:
            k = tok.relation[1] - before
            tok = tok.replace(relation=(tok.relation[0], k) if k >= 1 else None)
        out.append(tok)
    return tuple(out)


def extract_features(templates: Sequence[Template]) -> list[FeatureNGram]:
    """Boundary-padded 3-grams with a non-terminal, and 4-grams with one at each end."""
    grams = []
    for tpl in templates:
        toks = (BOS,) + tuple(tpl.tokens) + (EOS,)
        for i in range(len(toks) - 2):
            w = _window(toks, i, 3)
            if any(is_nonterminal(t) for t in w):
                grams.append(w)
        for i in range(len(toks) - 3):
            w = _window(toks, i, 4)
            if is_nonterminal(w[0]) and is_nonterminal(w[-1]):
                grams.append(w)
    return renumber(FeatureNGram(0, g) for g in grams)


def _condition_all(f: FeatureNGram, **cond) -> FeatureNGram:
    return replace(f, tokens=tuple(t.replace(**cond) if is_nonterminal(t) else t
                                   for t in f.tokens))


def factor_features(features: Sequence[FeatureNGram], mode: str) -> list[FeatureNGram]:
    """Replace each feature by conditioned variants (word count and/or popularity)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "none":
        return renumber(features, dedupe=False)
    out = []
    for f in features:
        if mode in ("wc", "both"):
            out.extend(_condition_all(f, min_word_count=k) for k in (1, 2, 3))
        if mode in ("pop", "both"):
            out.extend(_condition_all(f, pop_tier=t) for t in TIERS)
    return renumber(out)


def strip_relations(features: Sequence[FeatureNGram]) -> list[FeatureNGram]:
    return renumber(_condition_all(f, relation=None) for f in features)


def feature_set(templates: Sequence[Template], variant: str = "deal-rpc") -> list[FeatureNGram]:
    """Feature inventory for one of the named model variants.

    ``deal`` drops relation conditions; ``-r`` adds the relation-conditioned
    n-grams; ``c``/``p`` add word-count/popularity factored copies.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    base = extract_features(templates)
    plain = strip_relations(base)
    if variant == "deal":
        return plain
    with_rel = renumber(plain + base)
    mode = {"deal-r": "none", "deal-rc": "wc", "deal-rp": "pop", "deal-rpc": "both"}[variant]
    if mode == "none":
        return with_rel
    return renumber(with_rel + factor_features(with_rel, mode))


# ---------------------------------------------------------------------------
# files

def _lines(text: str):
    for n, line in enumerate(text.splitlines(), 1):
        if line.strip() and not line.startswith("#"):
            yield n, line


def _float(s: str, n: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise FeatureError(f"bad number {s!r}", n) from None


def parse_model(text: str) -> Model:
    """Model or feature file; a leading ``0<TAB><base><TAB>w0`` line sets w0 (default 1)."""
    base = 1.0
    feats = []
    for n, line in _lines(text):
        f = line.split("\t")
        if len(f) != 3:
            raise FeatureError("expected 'id<TAB>feature<TAB>weight'", n)
        if f[0] == "0":
            if f[1] != BASE_NAME or feats:
                raise FeatureError("feature id 0 is reserved for the leading <base> line", n)
            base = _float(f[2], n)
            continue
        try:
            fid = int(f[0])
        except ValueError:
            raise FeatureError(f"bad feature id {f[0]!r}", n) from None
        try:
            feats.append(FeatureNGram(fid, parse_tokens(f[1]), _float(f[2], n)))
        except FeatureError as exc:
            if exc.line is not None:
                raise
            raise FeatureError(str(exc), n) from None
    try:
        return Model(base, feats)
    except FeatureError as exc:
        raise FeatureError(str(exc), None) from None


def format_model(model: Model) -> str:
    lines = [f"0\t{BASE_NAME}\t{_fmt(model.base_weight)}"]
    lines += [f"{f.id}\t{f.text}\t{_fmt(f.weight)}" for f in model.features]
    return "\n".join(lines) + "\n"


def format_features(features: Sequence[FeatureNGram]) -> str:
    return "".join(f"{f.id}\t{f.text}\t{_fmt(f.weight)}\n" for f in features)


def load_model(path: str | Path) -> Model:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def parse_templates(text: str) -> list[Template]:
    out = []
    for n, line in _lines(text):
        body, _, freq = line.rpartition("\t")
        if not body:
            raise FeatureError("expected 'template<TAB>frequency'", n)
        try:
            tokens = parse_tokens(body)
        except FeatureError as exc:
            raise FeatureError(str(exc), n) from None
        for t in tokens:
            if is_nonterminal(t) and (t.pop_tier or t.min_word_count):
                raise FeatureError("template non-terminals take relation conditions only", n)
        fr = _float(freq, n)
        if not fr > 0 or fr == float("inf"):
            raise FeatureError("template frequency must be positive and finite", n)
        out.append(Template(tokens, fr))
    return out


def format_templates(templates: Sequence[Template]) -> str:
    return "".join(f"{t.text}\t{t.frequency!r}\n" for t in templates)


def load_templates(path: str | Path) -> list[Template]:
    return parse_templates(Path(path).read_text(encoding="utf-8"))
