"""``morphoseq`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import (CorpusError, FeatureSet, Segmentation, by_language, corpus_stats,
                     parse_corpus, split_stats, write_corpus)
from .evaluation import (ExperimentSettings, language_split, render_report, run_experiment,
                         sub_seed, train_model)
from .heatmap import trace_to_csv, trace_to_svg
from .numcore import NumericError
from .seq2seq import ModelConfig, predict
from .tokenizer import Mode, detokenize, encode_query, format_tokens

log = logging.getLogger("morphoseq")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _modes(value: str) -> list[Mode]:
    return list(Mode) if value == "both" else [Mode.parse(value)]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: Path, argv, config=None, seeds=None, corpus=None, started=None):
    manifest = {
        "command": list(argv),
        "cwd": os.getcwd(),
        "config": config,
        "seeds": seeds or {},
        "corpus": str(corpus) if corpus else None,
        "corpus_sha256": _sha256(corpus) if corpus else None,
        "tool_version": __version__,
        "started": started or _now(),
        "finished": _now(),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _config(args) -> ModelConfig:
    return ModelConfig(embed_dim=args.embed, hidden_dim=args.hidden, batch_size=args.batch,
                       epochs=args.epochs, seed=args.seed)


def _settings(args) -> ExperimentSettings:
    return ExperimentSettings(n_holdout_lemmas=args.holdout, test_fraction=args.test_fraction,
                              split_scheme=args.split_scheme, train_size=args.train_size,
                              test_max=args.test_max, n_permutations=args.permutations)


# -- commands --------------------------------------------------------------

def cmd_stats(args, argv):
    entries = parse_corpus(Path(args.corpus))
    lines = ["lang\tlemmas\twords"]
    for lang, c in corpus_stats(entries).items():
        lines.append(f"{lang}\t{c['lemmas']}\t{c['words']}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.tsv").write_text(text, encoding="utf-8")
        write_manifest(out, argv, corpus=args.corpus)


def cmd_prepare(args, argv):
    started = _now()
    entries = parse_corpus(Path(args.corpus))
    out = Path(args.out)
    settings = _settings(args)
    cols = ["unseen_lemmas", "unseen_words", "seen_lemmas", "seen_words", "test_words",
            "train_words", "total_lemmas", "total_words"]
    rows = ["lang\t" + "\t".join(cols)]
    seeds = {}
    for lang, items in by_language(entries).items():
        split = language_split(items, args.seed, lang, settings)
        seeds[lang] = split.seed
        d = out / lang
        d.mkdir(parents=True, exist_ok=True)
        for part in ("train", "test", "unseen"):
            with open(d / f"{part}.tsv", "w", encoding="utf-8", newline="\n") as fh:
                write_corpus(getattr(split, part), fh)
        st = split_stats(split)
        rows.append(lang + "\t" + "\t".join(str(st[c]) for c in cols))
    text = "\n".join(rows) + "\n"
    (out / "split_stats.tsv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    write_manifest(out, argv, seeds={"seed": args.seed, "split": seeds}, corpus=args.corpus,
                   started=started)


def cmd_train(args, argv):
    started = _now()
    entries = parse_corpus(Path(args.corpus))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _config(args)
    for mode in _modes(args.mode):
        model = train_model(entries, mode, config)
        save_checkpoint(model.params, model.config, model.vocab, str(out / f"model-{mode.value}.ckpt"))
        with open(out / f"loss-{mode.value}.tsv", "w", encoding="utf-8") as fh:
            fh.write("epoch\tloss\n")
            for i, loss in enumerate(model.losses, start=1):
                fh.write(f"{i}\t{loss!r}\n")
        print(f"{mode.value}: {len(model.losses)} epochs, final loss "
              f"{model.losses[-1] if model.losses else float('nan'):.6f}")
    write_manifest(out, argv, config.to_dict(), {"seed": args.seed}, args.corpus, started)


def _query(args):
    try:
        lemma = Segmentation.parse(args.lemma)
        return lemma, FeatureSet.parse(args.lemma_feats), FeatureSet.parse(args.form_feats)
    except CorpusError as exc:
        raise CorpusError(f"bad query: {exc}") from None


def _queries(args):
    if args.inputs:
        return [(e.lemma_seg, e.lemma_feats, e.form_feats) for e in parse_corpus(Path(args.inputs))]
    if args.lemma is None or args.lemma_feats is None or args.form_feats is None:
        raise UsageError("give --inputs FILE or all of --lemma, --lemma-feats, --form-feats")
    return [_query(args)]


def cmd_predict(args, argv):
    params, config, vocab = load_checkpoint(args.checkpoint)
    for lemma, lf, ff in _queries(args):
        tokens = encode_query(lemma, lf, ff, vocab.mode)
        out, _ = predict(params, vocab, tokens, config.max_decode_len)
        if args.dump_tokens:
            print(f"input:\t{format_tokens(tokens)}")
            print(f"output:\t{format_tokens(out)}")
        print(detokenize(out))


def cmd_attn_export(args, argv):
    started = _now()
    params, config, vocab = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (lemma, lf, ff) in enumerate(_queries(args), start=1):
        tokens = encode_query(lemma, lf, ff, vocab.mode)
        pred, trace = predict(params, vocab, tokens, config.max_decode_len)
        stem = f"attn-{i:03d}"
        (out / f"{stem}.csv").write_text(trace_to_csv(trace), encoding="utf-8")
        title = f"{lemma.surface} -> {detokenize(pred)} ({vocab.mode.value})"
        (out / f"{stem}.svg").write_text(trace_to_svg(trace, title), encoding="utf-8")
        print(f"{stem}\t{lemma.surface}\t{detokenize(pred)}")
    write_manifest(out, argv, config.to_dict(), {"model_seed": config.seed}, args.inputs, started)


def cmd_experiment(args, argv):
    started = _now()
    entries = parse_corpus(Path(args.corpus))
    config = _config(args)
    settings = _settings(args)
    modes = _modes(args.mode)
    results = []
    models = None
    for exp_id in sorted(set(args.ids)):
        res = run_experiment(exp_id, entries, config, args.seed, modes, settings, models)
        if exp_id in (1, 2):
            models = {lang: lr.models for lang, lr in res.languages.items()}
        results.append(res)
    text, table_csv = render_report(results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(table_csv, encoding="utf-8")
    sys.stdout.write(text)
    seeds = {"seed": args.seed}
    for lang in by_language(entries):
        seeds[lang] = {s: sub_seed(args.seed, s, lang) for s in ("split", "low-resource",
                                                                   "model-1", "model-3")}
    write_manifest(out, argv, {**config.to_dict(), **vars(settings)}, seeds, args.corpus, started)


def cmd_rerun(args, argv):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    command = list(manifest["command"])
    if args.out:
        out = os.path.abspath(args.out)
        if "--out" in command:
            command[command.index("--out") + 1] = out
        else:
            command += ["--out", out]
    # relative paths in the recorded command are relative to the original cwd
    here = os.getcwd()
    os.chdir(manifest.get("cwd") or here)
    try:
        return main(command)
    finally:
        os.chdir(here)


# -- parser ----------------------------------------------------------------

def _add_model_flags(p):
    d = ModelConfig()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch", type=int, default=d.batch_size)
    p.add_argument("--hidden", type=int, default=d.hidden_dim)
    p.add_argument("--embed", type=int, default=d.embed_dim)


def _add_split_flags(p):
    s = ExperimentSettings()
    p.add_argument("--holdout", type=int, default=s.n_holdout_lemmas,
                   help="lemmas held out as unseen (default %(default)s)")
    p.add_argument("--test-fraction", type=float, default=s.test_fraction)
    p.add_argument("--split-scheme", choices=["forms", "lemmas"], default=s.split_scheme,
                   help="forms: per-lemma 80/20 of forms; lemmas: one test form from 20%% of lemmas")
    p.add_argument("--train-size", type=int, default=s.train_size)
    p.add_argument("--test-max", type=int, default=s.test_max)
    p.add_argument("--permutations", type=int, default=s.n_permutations)


def _add_query_flags(p):
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inputs", help="corpus-TSV file; lemma and feature columns are used")
    p.add_argument("--lemma", help="lemma segmentation, e.g. '|retrogradi|nen'")
    p.add_argument("--lemma-feats", help="e.g. 'ADJ;Case=Nom;Number=Sing'")
    p.add_argument("--form-feats", help="e.g. 'ADJ;Case=Par;Number=Sing'")


def build_parser() -> Parser:
    parser = Parser(prog="morphoseq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="lemma and word counts per language")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("prepare", help="validate and split a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_split_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on every entry of a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["char", "charmorph", "both"], default="charmorph")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="inflect one lemma (or a file of queries)")
    _add_query_flags(p)
    p.add_argument("--dump-tokens", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", help="run experiments 1, 2 and/or 3")
    p.add_argument("ids", nargs="+", type=int, choices=[1, 2, 3])
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["char", "charmorph", "both"], default="both")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("attn-export", help="write attention heatmaps (CSV + SVG)")
    _add_query_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attn_export)

    p = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args, argv)
        return EXIT_OK if rc is None else rc
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"morphoseq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"morphoseq: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, CheckpointError, OSError, ValueError) as exc:
        print(f"morphoseq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
