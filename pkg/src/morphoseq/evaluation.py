"""Scoring, paired significance and the three experiment harnesses."""

from __future__ import annotations

import csv
import io
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
from rapidfuzz.distance import Levenshtein as _levenshtein

from . import corpus as corpus_mod
from .corpus import CorpusSplit, InflectionEntry, make_rng
from .seq2seq import AttentionTrace, ModelConfig, predict, train
from .tokenizer import Mode, Vocabulary, detokenize, encode_input

log = logging.getLogger(__name__)

MODES = (Mode.CHAR_MORPHEME, Mode.CHAR_ONLY)
ALPHA = 0.05


def levenshtein_indel(a: str, b: str) -> int:
    """Edit distance with insert/delete cost 1 and substitution cost 2."""
    return _levenshtein.distance(a, b, weights=(1, 1, 2))


def lev_ratio(w1: str, w2: str) -> float:
    """Similarity ``(|w1| + |w2| - dist) / (|w1| + |w2|)``; 1.0 for two empty strings."""
    total = len(w1) + len(w2)
    if total == 0:
        return 1.0
    return (total - levenshtein_indel(w1, w2)) / total


@dataclass
class PredictionRecord:
    entry: InflectionEntry
    target_surface: str
    predicted_surface: str
    correct: bool
    ratio: float
    attention: Optional[AttentionTrace] = None


@dataclass
class EvalReport:
    lang: str
    mode: Mode
    experiment: int
    test_size: int
    right: int
    wrong: int
    accuracy: float
    mean_ratio: float
    records: list = field(default_factory=list, repr=False)

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord], lang: str, mode,
                     experiment: int) -> "EvalReport":
        n = len(records)
        right = sum(r.correct for r in records)
        return cls(lang, Mode.parse(mode), experiment, n, right, n - right,
                   right / n if n else 0.0,
                   sum(r.ratio for r in records) / n if n else 0.0,
                   list(records))


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    n_permutations: int
    statistic: float
    significant: bool


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MORPHOSEQ_THREADS", "1")))
    except ValueError:
        return 1


def predict_entry(params, vocab: Vocabulary, entry: InflectionEntry,
                  max_len: Optional[int] = None, keep_attention: bool = False) -> PredictionRecord:
    tokens, trace = predict(params, vocab, encode_input(entry, vocab.mode), max_len)
    guess = detokenize(tokens)
    return PredictionRecord(entry, entry.form, guess, guess == entry.form,
                            lev_ratio(entry.form, guess), trace if keep_attention else None)


def evaluate(params, vocab: Vocabulary, test_entries: Sequence[InflectionEntry],
             config: Optional[ModelConfig] = None, *, lang: Optional[str] = None,
             experiment: int = 0, keep_attention: bool = False,
             threads: Optional[int] = None) -> EvalReport:
    max_len = config.max_decode_len if config is not None else None
    threads = threads or thread_count()

    def one(e):
        return predict_entry(params, vocab, e, max_len, keep_attention)

    if threads > 1 and len(test_entries) > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(one, test_entries))
    else:
        records = [one(e) for e in test_entries]
    if lang is None:
        lang = test_entries[0].lang if test_entries else ""
    return EvalReport.from_records(records, lang, vocab.mode, experiment)


def _aligned(records_a, records_b) -> bool:
    if len(records_a) != len(records_b):
        return False
    return all(a.entry.key() == b.entry.key() and a.target_surface == b.target_surface
               for a, b in zip(records_a, records_b))


def paired_significance(records_a: Sequence[PredictionRecord],
                        records_b: Sequence[PredictionRecord],
                        n_permutations: int = 10000, seed: int = 0,
                        alpha: float = ALPHA) -> SignificanceResult:
    """Two-sided paired approximate-randomization test on exact-match accuracy.

    Each permutation swaps the two systems' outcomes on an item with
    probability 1/2; p = (hits + 1) / (n_permutations + 1).
    """
    if not _aligned(records_a, records_b):
        raise ValueError("records must be paired on identical test items in the same order")
    if n_permutations <= 0:
        raise ValueError("n_permutations must be positive")
    a = np.array([r.correct for r in records_a], dtype=np.int64)
    b = np.array([r.correct for r in records_b], dtype=np.int64)
    n = len(a)
    if n == 0:
        return SignificanceResult(1.0, n_permutations, 0.0, False)
    diff = a - b
    observed = abs(int(diff.sum()))
    rng = make_rng(seed)
    hits = 0
    chunk = max(1, min(n_permutations, 2_000_000 // max(n, 1)))
    done = 0
    while done < n_permutations:
        k = min(chunk, n_permutations - done)
        signs = rng.integers(0, 2, size=(k, n), dtype=np.int64) * 2 - 1
        hits += int((np.abs(signs @ diff) >= observed).sum())
        done += k
    p = (hits + 1) / (n_permutations + 1)
    return SignificanceResult(p, n_permutations, float(diff.sum()) / n, p <= alpha)


# -- experiments ----------------------------------------------------------

def sub_seed(seed: int, stage: str, lang: str = "") -> int:
    """Deterministic per-stage seed derived from the single user seed."""
    key = [seed, zlib.crc32(stage.encode()), zlib.crc32(lang.encode())]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


@dataclass
class TrainedModel:
    params: dict
    vocab: Vocabulary
    config: ModelConfig
    losses: list


@dataclass
class LanguageResult:
    lang: str
    reports: Dict[Mode, EvalReport]
    significance: Optional[SignificanceResult] = None
    models: Dict[Mode, TrainedModel] = field(default_factory=dict, repr=False)
    split: Optional[CorpusSplit] = field(default=None, repr=False)


@dataclass
class ExperimentResult:
    experiment: int
    seed: int
    languages: Dict[str, LanguageResult]


@dataclass(frozen=True)
class ExperimentSettings:
    n_holdout_lemmas: int = 100
    test_fraction: float = 0.2
    split_scheme: str = "forms"
    train_size: int = 3000
    test_max: int = 500
    n_permutations: int = 10000


def train_model(entries, mode, config: ModelConfig, callback=None) -> TrainedModel:
    vocab = Vocabulary.build(entries, mode)
    config = replace(config, vocab_size=len(vocab))
    params, losses = train(entries, vocab, config, callback)
    return TrainedModel(params, vocab, config, losses)


def language_split(entries, seed: int, lang: str, settings: ExperimentSettings) -> CorpusSplit:
    return corpus_mod.split_standard(
        entries, sub_seed(seed, "split", lang), settings.n_holdout_lemmas,
        settings.test_fraction, settings.split_scheme)


def run_experiment(exp_id: int, entries: Sequence[InflectionEntry], config: ModelConfig,
                   seed: int, modes: Iterable = MODES,
                   settings: ExperimentSettings = ExperimentSettings(),
                   models: Optional[Dict[str, Dict[Mode, TrainedModel]]] = None,
                   keep_attention: bool = False) -> ExperimentResult:
    """Run experiment 1, 2 or 3 for every language in ``entries``.

    1: train on the standard split's train set, test on its test set.
    2: same models as 1 (reused from ``models`` when given), test on unseen lemmas.
    3: retrain on the low-resource subsample, test on its reduced test set.
    All modes share splits, seeds and hyperparameters.
    """
    if exp_id not in (1, 2, 3):
        raise ValueError(f"experiment must be 1, 2 or 3, not {exp_id}")
    modes = [Mode.parse(m) for m in modes]
    results = {}
    for lang, lang_entries in corpus_mod.by_language(entries).items():
        split = language_split(lang_entries, seed, lang, settings)
        if exp_id == 3:
            split = corpus_mod.split_low_resource(
                split, sub_seed(seed, "low-resource", lang), settings.train_size, settings.test_max)
        test = split.unseen if exp_id == 2 else split.test
        if exp_id == 2 and not test:
            raise ValueError(f"{lang}: no unseen lemmas to evaluate experiment 2 on")
        stage = "model-3" if exp_id == 3 else "model-1"
        model_config = replace(config, seed=sub_seed(seed, stage, lang))
        trained = {}
        reports = {}
        for mode in modes:
            cached = None if exp_id == 3 or models is None else models.get(lang, {}).get(mode)
            if cached is None:
                log.info("%s: training %s model for experiment %d on %d items",
                         lang, mode.value, exp_id, len(split.train))
                cached = train_model(split.train, mode, model_config)
            trained[mode] = cached
            reports[mode] = evaluate(cached.params, cached.vocab, test, cached.config,
                                     lang=lang, experiment=exp_id, keep_attention=keep_attention)
        sig = None
        if len(modes) == 2:
            sig = paired_significance(reports[modes[0]].records, reports[modes[1]].records,
                                      settings.n_permutations, sub_seed(seed, f"sig-{exp_id}", lang))
        results[lang] = LanguageResult(lang, reports, sig, trained, split)
    return ExperimentResult(exp_id, seed, results)


# -- reporting --------------------------------------------------------------

CSV_COLUMNS = ["lang", "mode", "experiment", "test", "right", "wrong", "acc", "lev",
               "p_value", "significant"]


def _row_name(lang: str, mode: Mode) -> str:
    return lang if mode is Mode.CHAR_MORPHEME else f"{lang}_char"


def macro_average(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def render_report(results: Sequence[ExperimentResult]) -> tuple[str, str]:
    """Text results table and CSV for one or more experiment results.

    Text marks: ``*`` = strictly better of the pair on that column, ``†`` =
    accuracy difference significant at p <= 0.05 (on the better model).
    Total rows are unweighted means over languages.
    """
    text_lines = []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for res in results:
        text_lines.append(f"Experiment {res.experiment}")
        header = f"{'lang':<12}{'Test':>7}{'Right':>8}{'Wrong':>8}{'Acc':>10}{'Lev':>10}"
        text_lines.append(header)
        text_lines.append("-" * len(header))
        totals: Dict[Mode, list] = {}
        for lang, lr in res.languages.items():
            modes = list(lr.reports)
            best_acc = _best(lr, "accuracy")
            best_lev = _best(lr, "mean_ratio")
            for mode in modes:
                rep = lr.reports[mode]
                totals.setdefault(mode, []).append(rep)
                sig = lr.significance
                dagger = sig is not None and sig.significant and best_acc is mode
                acc_txt = f"{rep.accuracy:.4f}" + ("*" if best_acc is mode else "") + ("†" if dagger else "")
                lev_txt = f"{rep.mean_ratio:.4f}" + ("*" if best_lev is mode else "")
                text_lines.append(
                    f"{_row_name(lang, mode):<12}{rep.test_size:>7}{rep.right:>8}{rep.wrong:>8}"
                    f"{acc_txt:>10}{lev_txt:>10}")
                writer.writerow([lang, mode.value, res.experiment, rep.test_size, rep.right,
                                 rep.wrong, repr(rep.accuracy), repr(rep.mean_ratio),
                                 "" if sig is None else repr(sig.p_value),
                                 "" if sig is None else int(sig.significant)])
        for mode, reps in totals.items():
            acc = macro_average([r.accuracy for r in reps])
            lev = macro_average([r.mean_ratio for r in reps])
            label = "Total" if mode is Mode.CHAR_MORPHEME else "Total char"
            text_lines.append(f"{label:<12}{'':>7}{'':>8}{'':>8}{acc:>10.4f}{lev:>10.4f}")
            writer.writerow(["Total", mode.value, res.experiment, "", "", "", repr(acc),
                             repr(lev), "", ""])
        text_lines.append("")
    return "\n".join(text_lines), buf.getvalue()


def _best(lr: LanguageResult, attr: str) -> Optional[Mode]:
    if len(lr.reports) != 2:
        return None
    (m1, r1), (m2, r2) = lr.reports.items()
    v1, v2 = getattr(r1, attr), getattr(r2, attr)
    if v1 == v2:
        return None
    return m1 if v1 > v2 else m2


_INT_COLUMNS = ("experiment", "test", "right", "wrong")
_FLOAT_COLUMNS = ("acc", "lev", "p_value")


def parse_report_csv(text: str) -> list[dict]:
    """Read a report CSV back; numeric cells become int/float, blanks become None."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        for col in _INT_COLUMNS:
            row[col] = int(row[col]) if row[col] else None
        for col in _FLOAT_COLUMNS:
            row[col] = float(row[col]) if row[col] else None
        row["significant"] = bool(int(row["significant"])) if row["significant"] else None
        rows.append(row)
    return rows
