"""``deal`` command line: compile, rescore, train, synth, eval, dump-rkg, experiment.

Exit status is 0 on success, 1 on runtime failure and 2 on usage or input
parse errors.  Every command that writes output also writes
``<output>.manifest.json`` recording arguments and input digests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .compiler import build_rtop
from .expander import dump_rkg
from .features import feature_set, load_model, load_templates, save_model, VARIANTS
from .fst import SymbolTable, read_text, write_text
from .kg import load_kg
from .rescorer import Rescorer
from .synth import (STRATA, NoiseChannelConfig, confusion_pool, corrupt_to_lattice, evaluate,
                    format_corpus, format_report, load_confusions, parse_corpus,
                    sample_utterances)
from .trainer import TrainerConfig, TrainingExample, format_training, load_training, train

log = logging.getLogger("deal")


class UsageError(Exception):
    """Bad arguments or unparsable input; exit status 2."""


def _load(what: str, path: str, loader: Callable):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {path}: no such file or directory")
    try:
        return loader(p)
    except (ValueError, UnicodeDecodeError) as exc:
        raise UsageError(f"{what} {path}: {exc}") from None


def digest(path: str | Path) -> str:
    """sha256 of a file, or of the sorted (name, content) pairs of a directory."""
    p = Path(path)
    h = hashlib.sha256()
    if p.is_dir():
        for f in sorted(p.rglob("*")):
            if f.is_file():
                h.update(str(f.relative_to(p)).encode() + b"\0")
                h.update(f.read_bytes())
    else:
        h.update(p.read_bytes())
    return h.hexdigest()


def write_manifest(out: str | Path, args: argparse.Namespace, inputs: dict[str, str],
                   extra: dict | None = None) -> Path:
    params = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.command,
        "version": __version__,
        "arguments": params,
        "inputs": {k: {"path": v, "sha256": digest(v)} for k, v in sorted(inputs.items()) if v},
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# lattices on disk: <utt>.fst plus <utt>.syms or a shared words.syms

def lattice_ids(directory: Path) -> list[str]:
    return sorted(p.stem for p in directory.glob("*.fst"))


def read_lattice(directory: Path, utt: str, negate: bool = False):
    own = directory / f"{utt}.syms"
    syms = own if own.exists() else directory / "words.syms"
    symbols = SymbolTable.from_text(syms.read_text(encoding="utf-8"))
    return read_text((directory / f"{utt}.fst").read_text(encoding="utf-8"), symbols, negate)


def write_lattice(directory: Path, utt: str, lattice) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{utt}.fst").write_text(write_text(lattice), encoding="utf-8")
    (directory / f"{utt}.syms").write_text(lattice.symbols.to_text(), encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands

def cmd_compile(args) -> int:
    model = _load("model", args.model, load_model)
    rtop = build_rtop(model)
    _write(args.out, write_text(rtop.fst))
    _write(args.out + ".syms", rtop.symbols.to_text())
    write_manifest(args.out, args, {"model": args.model})
    print(f"states {rtop.fst.num_states} arcs {rtop.fst.num_arcs}")
    return 0


def _rescore_one(rescorer: Rescorer, directory: Path, utt: str, negate: bool) -> str:
    try:
        lattice = read_lattice(directory, utt, negate)
        best, _ = rescorer.rescore(lattice)
    except (OSError, ValueError) as exc:
        log.error("%s: %s", utt, exc)
        return f"{utt}\tERROR\t{exc}\n"
    return f"{utt}\t{' '.join(best.words)}\t{best.total!r}\t{best.base_score!r}\t{best.fires()}\n"


def cmd_rescore(args) -> int:
    graph = _load("knowledge graph", args.kg, load_kg)
    model = _load("model", args.model, load_model)
    directory = Path(args.lattices)
    if not directory.is_dir():
        raise UsageError(f"lattice directory {args.lattices} does not exist")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    utts = lattice_ids(directory)
    rescorer = Rescorer(model, graph, shared_cache=args.shared_cache)
    run = lambda u: _rescore_one(rescorer, directory, u, args.negate_weights)
    if args.workers == 1:
        lines = [run(u) for u in utts]
    else:
        with ThreadPoolExecutor(args.workers) as pool:
            lines = list(pool.map(run, utts))
    _write(args.out, "".join(lines))
    write_manifest(args.out, args, {"kg": args.kg, "model": args.model, "lattices": args.lattices})
    failed = sum(line.split("\t", 2)[1] == "ERROR" for line in lines)
    print(f"rescored {len(utts) - failed} of {len(utts)} lattices")
    return 1 if failed else 0


def cmd_train(args) -> int:
    graph = _load("knowledge graph", args.kg, load_kg)
    examples = _load("training file", args.training, load_training)
    templates = _load("templates", args.templates, load_templates)
    if not examples:
        raise UsageError(f"training file {args.training} has no examples")
    config = TrainerConfig(epochs=args.epochs, learning_rate=args.learning_rate,
                           averaging=not args.no_averaging, seed=args.seed,
                           train_base_weight=not args.fixed_base_weight)
    model = train(examples, feature_set(templates, args.variant), graph, config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out)
    write_manifest(args.out, args, {"kg": args.kg, "training": args.training,
                                    "templates": args.templates})
    print(f"trained {len(model.features)} features on {len(examples)} examples, "
          f"w0 = {model.base_weight!r}")
    return 0


def cmd_synth(args) -> int:
    graph = _load("knowledge graph", args.kg, load_kg)
    templates = _load("templates", args.templates, load_templates)
    stratum = None if args.stratum == "none" else args.stratum
    corpus = sample_utterances(templates, graph, stratum, args.n, args.seed)
    keys = [f"{args.prefix}-{i:05d}" for i in range(len(corpus))]
    _write(args.out, format_corpus({k: w for k, (w, _) in zip(keys, corpus)}))
    inputs = {"kg": args.kg, "templates": args.templates, "confusions": args.confusions}
    if args.lattices or args.nbest_out:
        vocab = {w for e in graph.entities.values() for n in e.names for w in n.words}
        vocab.update(w for words, _ in corpus for w in words)
        extra = _load("confusion file", args.confusions, load_confusions) if args.confusions else {}
        channel = NoiseChannelConfig(args.substitution_rate, confusion_pool(vocab, extra),
                                     args.breadth, args.channel_seed)
        examples = []
        for key, (words, _) in zip(keys, corpus):
            lattice, paths = corrupt_to_lattice(words, channel, key, args.nbest)
            if args.lattices:
                write_lattice(Path(args.lattices), key, lattice)
            examples.append(TrainingExample(key, list(words), [(list(w), b) for w, b in paths]))
        if args.nbest_out:
            _write(args.nbest_out, format_training(examples))
    write_manifest(args.out, args, inputs,
                   {"outputs": {"corpus": {"path": args.out, "sha256": digest(args.out)}}})
    print(f"wrote {len(corpus)} utterances")
    return 0


def _read_outputs(path: Path) -> dict[str, list[str]]:
    """Corpus lines or rescore lines (words are the second field either way)."""
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        f = line.split("\t")
        if len(f) < 2:
            raise ValueError(f"line {n}: expected 'utt_id<TAB>words'")
        out[f[0]] = [] if f[1] == "ERROR" and len(f) == 3 else f[1].split()
    return out


def cmd_eval(args) -> int:
    hyp = _load("system output", args.hyp, _read_outputs)
    ref = _load("reference corpus", args.ref,
                lambda p: parse_corpus(p.read_text(encoding="utf-8")))
    lattices = None
    if args.lattices:
        d = Path(args.lattices)
        try:
            lattices = {u: read_lattice(d, u) for u in ref}
        except (OSError, ValueError) as exc:
            raise UsageError(f"lattices {args.lattices}: {exc}") from None
    try:
        report = evaluate(hyp, ref, lattices)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    oracle = "-" if report.oracle_ser is None else f"{report.oracle_ser!r}"
    text = f"utterances {report.utterances}\nSER {report.ser!r}\noracle SER {oracle}\n"
    sys.stdout.write(text)
    if args.out:
        _write(args.out, text)
        write_manifest(args.out, args, {"hyp": args.hyp, "ref": args.ref,
                                        "lattices": args.lattices})
    return 0


def cmd_dump_rkg(args) -> int:
    graph = _load("knowledge graph", args.kg, load_kg)
    model = _load("model", args.model, load_model)
    fst, _ = dump_rkg(build_rtop(model), graph, args.max_states)
    _write(args.out, write_text(fst))
    _write(args.out + ".syms", fst.symbols.to_text())
    write_manifest(args.out, args, {"kg": args.kg, "model": args.model})
    print(f"states {fst.num_states} arcs {fst.num_arcs}")
    return 0


def cmd_experiment(args) -> int:
    from .experiment import ExperimentConfig, report_rows, run_experiment
    from .toydata import data_path, general_templates, toy_confusions, toy_kg, toy_templates
    graph = _load("knowledge graph", args.kg, load_kg) if args.kg else toy_kg()
    templates = _load("templates", args.templates, load_templates) if args.templates \
        else toy_templates()
    general = _load("templates", args.general, load_templates) if args.general \
        else general_templates()
    confusions = _load("confusion file", args.confusions, load_confusions) if args.confusions \
        else toy_confusions()
    config = ExperimentConfig(seed=args.seed, train_synth=args.train_synth,
                              test_size=args.test_size, variants=tuple(args.variants),
                              trainer=TrainerConfig(epochs=args.epochs),
                              workers=args.workers)
    result = run_experiment(graph, templates, general, confusions, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for variant in config.variants:
        save_model(result.models[variant], out / f"{variant}.model")
        table = format_report(report_rows(result, graph, variant))
        (out / f"{variant}.report.txt").write_text(table, encoding="utf-8")
        summary[variant] = {ts.name: result.ser(ts.name, variant) for ts in result.testsets}
        print(f"== {variant}\n{table}")
    summary["baseline"] = {ts.name: result.ser(ts.name, "baseline") for ts in result.testsets}
    inputs = {"kg": args.kg or str(data_path("toy_kg.json")),
              "templates": args.templates or str(data_path("templates.txt")),
              "general": args.general or str(data_path("general_templates.txt")),
              "confusions": args.confusions or str(data_path("confusions.txt"))}
    write_manifest(out / "experiment", args, inputs, {"ser": summary,
                                                      "seconds": round(result.seconds, 1)})
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"deal {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="build the feature-tagging transducer from a model")
    c.add_argument("model")
    c.add_argument("-o", "--out", required=True, help="automaton text file (symbols go to OUT.syms)")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("rescore", help="rescore a directory of lattices")
    r.add_argument("--kg", required=True)
    r.add_argument("--model", required=True)
    r.add_argument("--lattices", required=True, help="directory of <utt>.fst (+ .syms) files")
    r.add_argument("-o", "--out", required=True)
    r.add_argument("--shared-cache", action="store_true",
                   help="keep one on-demand automaton across all lattices")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--negate-weights", action="store_true",
                   help="lattice weights are costs (lower is better)")
    r.set_defaults(func=cmd_rescore)

    t = sub.add_parser("train", help="averaged perceptron over n-best lists")
    t.add_argument("--kg", required=True)
    t.add_argument("--training", required=True)
    t.add_argument("--templates", required=True)
    t.add_argument("--variant", choices=VARIANTS, default="deal-rpc")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--learning-rate", type=float, default=1.0)
    t.add_argument("--no-averaging", action="store_true")
    t.add_argument("--fixed-base-weight", action="store_true", help="keep w0 at 1")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("-o", "--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", help="sample a corpus and optionally corrupt it")
    s.add_argument("--kg", required=True)
    s.add_argument("--templates", required=True)
    s.add_argument("--stratum", choices=STRATA + ("none",), default="tail")
    s.add_argument("-n", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--prefix", default="utt")
    s.add_argument("-o", "--out", required=True, help="corpus file")
    s.add_argument("--lattices", help="write noisy lattices to this directory")
    s.add_argument("--nbest-out", help="write an n-best training file")
    s.add_argument("--nbest", type=int, default=20)
    s.add_argument("--confusions")
    s.add_argument("--substitution-rate", type=float, default=0.3)
    s.add_argument("--breadth", type=int, default=3)
    s.add_argument("--channel-seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="sentence error rate")
    e.add_argument("--hyp", required=True, help="corpus or rescore output")
    e.add_argument("--ref", required=True)
    e.add_argument("--lattices", help="also report oracle SER")
    e.add_argument("-o", "--out")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("dump-rkg", help="materialize the KG-expanded transducer (debug)")
    d.add_argument("--kg", required=True)
    d.add_argument("--model", required=True)
    d.add_argument("--max-states", type=int, default=100000)
    d.add_argument("-o", "--out", required=True)
    d.set_defaults(func=cmd_dump_rkg)

    x = sub.add_parser("experiment", help="synth, train, rescore and report on the toy world")
    x.add_argument("--kg")
    x.add_argument("--templates")
    x.add_argument("--general")
    x.add_argument("--confusions")
    x.add_argument("--seed", type=int, default=13)
    x.add_argument("--train-synth", type=int, default=2000)
    x.add_argument("--test-size", type=int, default=500)
    x.add_argument("--epochs", type=int, default=5)
    x.add_argument("--variants", nargs="+", choices=VARIANTS,
                   default=["deal", "deal-r", "deal-rpc"])
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("-o", "--out", required=True, help="output directory")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"deal {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("failure", exc_info=True)
        print(f"deal {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
