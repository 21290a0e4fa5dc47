"""Command-line entry point: synth, train, eval, predict, ablate and gradcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 data/model
incompatibility, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .data import (
    CorpusError,
    SyntheticSpec,
    Vocab,
    build_vocabs,
    corpus_stats,
    dump_corpus,
    generate_synthetic,
    load_corpus,
)
from .data.example import atomic_write_text
from .evaluation import VocabMismatchError, ablation_report, check_compatible, evaluate
from .model import Hyperparams
from .training import (
    CheckpointError,
    ConfigError,
    NumericError,
    TrainConfig,
    format_config,
    history_csv,
    load_checkpoint,
    load_config,
    save_checkpoint,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_INCOMPATIBLE, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "DPN_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def resolve_seed(flag: int | None, configured: int) -> int:
    """An explicit ``--seed`` wins, then ``DPN_SEED``, then the config value."""
    if flag is not None:
        return flag
    env = _env_seed()
    return configured if env is None else env


def _echo(lines: str) -> None:
    for line in lines.rstrip("\n").splitlines():
        print(line if line.startswith("#") or not line else f"# {line}")
    sys.stdout.flush()


def _load_settings(args) -> tuple[Hyperparams, TrainConfig]:
    hyper, cfg = load_config(args.config) if args.config else (Hyperparams(), TrainConfig())
    overrides = {}
    if getattr(args, "attn", None) is not None:
        overrides["attn"] = args.attn
    if getattr(args, "dual", None) is not None:
        overrides["dual"] = args.dual
    if getattr(args, "max_epochs", None) is not None:
        overrides["max_epochs"] = args.max_epochs
    overrides["seed"] = resolve_seed(getattr(args, "seed", None), cfg.seed)
    return hyper, replace(cfg, **overrides)


# --- synth --------------------------------------------------------------------

def parse_mix(text: str) -> dict[str, float]:
    """``normal=0.5,seo_1_to_n=0.25`` into a pattern weight dict."""
    mix = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, sep, weight = part.partition("=")
        if not sep:
            raise UsageError(f"bad --mix entry {part!r}; expected pattern=weight")
        try:
            mix[name.strip()] = float(weight)
        except ValueError:
            raise UsageError(f"bad weight in --mix entry {part!r}") from None
    if not mix:
        raise UsageError("--mix is empty")
    return mix


def parse_relations(text: str) -> tuple[str, ...]:
    if text.isdigit():
        return tuple(f"r{i}" for i in range(int(text)))
    return tuple(r.strip() for r in text.split(",") if r.strip())


def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed, 0)
    try:
        spec = SyntheticSpec(n_sentences=args.sentences, vocab_size=args.vocab_size,
                             relation_labels=parse_relations(args.relations),
                             pattern_mix=parse_mix(args.mix), seed=seed)
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _echo(f"seed = {seed}\nsentences = {spec.n_sentences}\nvocab_size = {spec.vocab_size}\n"
          f"relations = {','.join(spec.relation_labels)}\n"
          f"mix = {','.join(f'{k}={v}' for k, v in spec.pattern_mix.items())}")
    corpus = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "corpus.jsonl", dump_corpus(corpus))
    stats = corpus_stats(corpus).to_json()
    atomic_write_text(out / "stats.json", json.dumps(stats, indent=1, sort_keys=True) + "\n")
    if corpus:
        build_vocabs(corpus).save(out / "vocab.json")
    else:
        print("empty corpus: no vocab.json written")
    print(f"wrote {len(corpus)} sentences to {out / 'corpus.jsonl'}")
    print(json.dumps(stats["histogram"], sort_keys=True))
    return EXIT_OK


# --- train --------------------------------------------------------------------

def cmd_train(args) -> int:
    hyper, cfg = _load_settings(args)
    _echo(format_config(hyper, cfg))
    train_set = load_corpus(args.train)
    dev_set = load_corpus(args.dev) if args.dev else None
    resume = resume_best = None
    if args.resume:
        resume = load_checkpoint(Path(args.resume) / "last.ckpt")
        best_path = Path(args.resume) / "best.ckpt"
        resume_best = load_checkpoint(best_path) if best_path.exists() else None
    if not dev_set:
        print("no dev set: early stopping disabled, training runs max_epochs")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(record):
        dev = "" if record.dev_f1 is None else f"  dev P {record.dev_precision:.4f} " \
              f"R {record.dev_recall:.4f} F1 {record.dev_f1:.4f}"
        print(f"epoch {record.epoch:>3}  loss {record.loss:.5f}{dev}", flush=True)

    result = train(train_set, dev_set, cfg, hyper, resume=resume, resume_best=resume_best,
                   glove=args.glove, on_epoch=progress)
    save_checkpoint(result.checkpoint, out / "best.ckpt")
    save_checkpoint(result.last, out / "last.ckpt")
    result.checkpoint.vocab.save(out / "vocab.json")
    atomic_write_text(out / "history.csv", history_csv(result.history))
    atomic_write_text(out / "config.cfg", format_config(result.checkpoint.hyper, cfg))
    best = result.checkpoint
    f1 = next((r.dev_f1 for r in result.history if r.epoch == best.epoch), None)
    print(f"best epoch {best.epoch}" + ("" if f1 is None else f"  dev F1 {f1:.4f}"))
    print(f"wrote {out / 'best.ckpt'}, {out / 'last.ckpt'}, {out / 'history.csv'}")
    return EXIT_OK


# --- eval / predict -----------------------------------------------------------

def _model_header(ckpt, dual) -> None:
    _echo(format_config(ckpt.hyper, ckpt.config or TrainConfig())
          + f"\ndecoders = {'dual' if dual else 'forward'}\nepoch = {ckpt.epoch}\n"
            f"vocab_hash = {ckpt.vocab_hash}")


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.model)
    dual = ckpt.dual if args.dual is None else args.dual
    _model_header(ckpt, dual)
    expected = Vocab.load(args.vocab).hash() if args.vocab else None
    data = load_corpus(args.data)
    report = evaluate(ckpt, data, dual=dual, expected_vocab_hash=expected,
                      label=Path(args.data).name)
    print(report.format_text())
    if args.report:
        atomic_write_text(args.report, json.dumps(report.to_json(), indent=1) + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.model)
    dual = ckpt.dual if args.dual is None else args.dual
    _model_header(ckpt, dual)
    data = load_corpus(args.input, require_triples=False)
    net = ckpt.network()
    check_compatible(net, data)
    lines = []
    for ex in data:
        record = ex.to_json()
        record["triples"] = net.predict(ex, dual=dual).to_json(ex)
        lines.append(json.dumps(record, ensure_ascii=False) + "\n")
    atomic_write_text(args.out, "".join(lines))
    print(f"wrote predictions for {len(data)} sentences to {args.out}")
    return EXIT_OK


# --- ablate -------------------------------------------------------------------

VARIANTS = (("single/forward", "single", False), ("single/dual", "single", True),
            ("multi/forward", "multi", False), ("multi/dual", "multi", True))


def cmd_ablate(args) -> int:
    hyper, cfg = _load_settings(args)
    _echo(format_config(hyper, cfg))
    root = Path(args.data_dir)
    train_set = load_corpus(root / "train.jsonl")
    dev_path = root / "dev.jsonl"
    dev_set = load_corpus(dev_path) if dev_path.exists() else None
    test_path = root / "test.jsonl"
    test_set = load_corpus(test_path) if test_path.exists() else (dev_set or train_set)
    variants = []
    for label, attn, dual in VARIANTS:
        print(f"training {label}", flush=True)
        result = train(train_set, dev_set, replace(cfg, attn=attn, dual=dual), hyper)
        variants.append((label, result.checkpoint, dual))
    table = ablation_report(variants, test_set, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "ablation.txt", table.text() + "\n")
    atomic_write_text(out / "ablation.json", table.dumps())
    print(table.text())
    return EXIT_OK


# --- gradcheck ----------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .diagnostics import format_results, run_all

    _echo(f"seed = 0\nseeds_per_op = {args.seeds}\neps = 1e-05\ntol = 0.0001\ndtype = float64")
    results = run_all(seeds=args.seeds, max_coords=args.max_coords)
    print(format_results(results))
    failed = [r.name for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {total:.1f}s")
    return EXIT_OK if not failed else EXIT_NUMERIC


# --- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dualpointer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--sentences", type=int, default=300)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--mix", default="normal=0.5,seo_1_to_n=0.25,seo_n_to_1=0.25",
                   help="pattern weights, e.g. normal=0.5,seo_1_to_n=0.5 "
                        "(patterns: normal, seo_1_to_n, seo_n_to_1, chain)")
    s.add_argument("--vocab-size", type=int, default=60)
    s.add_argument("--relations", default="5", help="a count or a comma-separated label list")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model",
                       description="Train a dual pointer network.  With --dual false only the "
                                   "object decoder is trained: the subject terms are dropped and "
                                   "the loss becomes alpha*CE_pos + (1-alpha)*CE_rel.")
    t.add_argument("--config", help="key = value config file (defaults when omitted)")
    t.add_argument("--train", required=True, help="training corpus (JSONL)")
    t.add_argument("--dev", help="dev corpus; without it early stopping is off")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--glove", help="GloVe-format text file for word vectors")
    t.add_argument("--attn", choices=("single", "multi"))
    t.add_argument("--dual", type=_bool, metavar="true|false")
    t.add_argument("--seed", type=int)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--resume", metavar="DIR", help="continue from DIR/last.ckpt")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", help="write the JSON report here")
    e.add_argument("--vocab", help="vocab.json the data was prepared with; must match the model")
    e.add_argument("--dual", type=_bool, metavar="true|false",
                   help="override the checkpoint's decoder setting")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="extract triples from a corpus")
    r.add_argument("--model", required=True)
    r.add_argument("--input", required=True, help="JSONL with tokens and entities")
    r.add_argument("--out", required=True, help="output JSONL")
    r.add_argument("--dual", type=_bool, metavar="true|false")
    r.set_defaults(func=cmd_predict)

    a = sub.add_parser("ablate", help="train and compare the four attention/decoder variants")
    a.add_argument("--config")
    a.add_argument("--data-dir", required=True,
                   help="directory with train.jsonl and optional dev.jsonl, test.jsonl")
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--max-epochs", type=int)
    a.set_defaults(func=cmd_ablate)

    g = sub.add_parser("gradcheck", help="finite-difference check of every op and the model")
    g.add_argument("--seeds", type=int, default=5)
    g.add_argument("--max-coords", type=int, default=200)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VocabMismatchError, CheckpointError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
