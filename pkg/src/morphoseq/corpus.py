"""Morpheme-segmented inflection corpora: data model, TSV ingestion, counts
and the seeded train/test/unseen split protocols.

Corpus TSV (UTF-8, one record per line, ``#`` starts a comment)::

    lang <TAB> lemma-seg <TAB> lemma-feats <TAB> form-seg <TAB> form-feats

A segmentation is written ``pre1;pre2|stem|suf1;suf2`` (affix fields may be
empty, e.g. ``|Haus|``); features are ``POS;Key=Val;Key=Val``.
"""

from __future__ import annotations

import io
import math
import re
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

ZERO = "∅"
EOW = "<\\w>"
RESERVED = (ZERO, EOW, " ", "\t")

_LANG_RE = re.compile(r"^[a-z]{3}$")


class CorpusError(ValueError):
    """Base class for corpus problems; carries an optional line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorpusParseError(CorpusError):
    pass


class CorpusValidationError(CorpusError):
    pass


@dataclass(frozen=True)
class FeatureSet:
    pos: str
    features: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.pos or "=" in self.pos or ";" in self.pos:
            raise CorpusValidationError(f"bad part-of-speech tag {self.pos!r}")
        keys = [k for k, _ in self.features]
        if len(set(keys)) != len(keys):
            raise CorpusValidationError(f"duplicate feature key in {keys}")
        for k, v in self.features:
            for part in (k, v):
                if not part or any(c in part for c in "=;") or _has_reserved(part):
                    raise CorpusValidationError(f"bad feature {k}={v}")
        # canonical order keeps serialization deterministic
        object.__setattr__(self, "features", tuple(sorted(self.features)))

    @classmethod
    def parse(cls, text: str) -> "FeatureSet":
        parts = text.strip().split(";")
        if not parts or not parts[0]:
            raise CorpusValidationError(f"feature set {text!r} lacks a POS")
        pos, rest = parts[0], parts[1:]
        if "=" in pos:
            raise CorpusValidationError(f"feature set {text!r} must start with a POS tag")
        feats = []
        for item in rest:
            if item.count("=") != 1:
                raise CorpusValidationError(f"unknown feature syntax {item!r}")
            k, v = item.split("=")
            feats.append((k, v))
        return cls(pos, tuple(feats))

    def tags(self) -> list[str]:
        """POS followed by ``Key=Value`` strings, in canonical order."""
        return [self.pos] + [f"{k}={v}" for k, v in self.features]

    def __str__(self) -> str:
        return ";".join(self.tags())


def _has_reserved(s: str) -> bool:
    return any(r in s for r in RESERVED) or "\n" in s or "\r" in s


@dataclass(frozen=True)
class Segmentation:
    prefixes: tuple[str, ...]
    stem: str
    suffixes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "prefixes", tuple(self.prefixes))
        object.__setattr__(self, "suffixes", tuple(self.suffixes))
        if not self.stem:
            raise CorpusValidationError("empty stem")
        for seg in (*self.prefixes, self.stem, *self.suffixes):
            if not seg:
                raise CorpusValidationError("empty affix segment")
            if _has_reserved(seg) or "|" in seg or ";" in seg:
                raise CorpusValidationError(f"segment {seg!r} contains a reserved symbol")

    @classmethod
    def parse(cls, text: str) -> "Segmentation":
        fields = text.split("|")
        if len(fields) != 3:
            raise CorpusValidationError(f"segmentation {text!r} needs exactly two '|'")
        pre, stem, suf = fields
        prefixes = tuple(pre.split(";")) if pre else ()
        suffixes = tuple(suf.split(";")) if suf else ()
        return cls(prefixes, stem, suffixes)

    @property
    def surface(self) -> str:
        return "".join(self.prefixes) + self.stem + "".join(self.suffixes)

    def __str__(self) -> str:
        return f"{';'.join(self.prefixes)}|{self.stem}|{';'.join(self.suffixes)}"


@dataclass(frozen=True)
class InflectionEntry:
    lang: str
    lemma_seg: Segmentation
    lemma_feats: FeatureSet
    form_seg: Segmentation
    form_feats: FeatureSet
    line: Optional[int] = field(default=None, compare=False)

    @property
    def lemma(self) -> str:
        return self.lemma_seg.surface

    @property
    def form(self) -> str:
        return self.form_seg.surface

    def key(self) -> tuple[str, str, FeatureSet]:
        """Identity used for split disjointness."""
        return (self.lemma, self.form, self.form_feats)

    def to_tsv(self) -> str:
        return "\t".join(
            [self.lang, str(self.lemma_seg), str(self.lemma_feats),
             str(self.form_seg), str(self.form_feats)]
        )


@dataclass(frozen=True)
class CorpusSplit:
    train: list
    test: list
    unseen: list
    seed: int


def parse_line(line: str, lineno: Optional[int] = None,
               languages: Optional[Iterable[str]] = None) -> InflectionEntry:
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) != 5:
        raise CorpusParseError(f"expected 5 tab-separated columns, got {len(cols)}", lineno)
    lang = cols[0]
    if not _LANG_RE.match(lang):
        raise CorpusValidationError(f"{lang!r} is not an ISO 639-3 code", lineno)
    if languages is not None and lang not in languages:
        raise CorpusValidationError(f"language {lang!r} is not configured", lineno)
    try:
        return InflectionEntry(
            lang,
            Segmentation.parse(cols[1]),
            FeatureSet.parse(cols[2]),
            Segmentation.parse(cols[3]),
            FeatureSet.parse(cols[4]),
            line=lineno,
        )
    except CorpusError as exc:
        raise type(exc)(str(exc), lineno) from None


def parse_corpus(source, languages: Optional[Iterable[str]] = None) -> list[InflectionEntry]:
    """Parse a corpus from bytes, a str, a path-like or a binary/text stream."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    elif hasattr(source, "read"):
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    else:
        with open(source, "rb") as fh:
            text = fh.read().decode("utf-8")
    langs = set(languages) if languages is not None else None
    entries = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        entries.append(parse_line(line, lineno, langs))
    return entries


def write_corpus(entries: Iterable[InflectionEntry], sink) -> None:
    for e in entries:
        sink.write(e.to_tsv() + "\n")


def corpus_stats(entries: Sequence[InflectionEntry]) -> dict[str, dict[str, int]]:
    """Per-language ``{"lemmas": distinct lemma surfaces, "words": entries}``."""
    lemmas: dict[str, set] = {}
    words: Counter = Counter()
    for e in entries:
        lemmas.setdefault(e.lang, set()).add(e.lemma)
        words[e.lang] += 1
    return {lang: {"lemmas": len(lemmas[lang]), "words": words[lang]}
            for lang in sorted(lemmas)}


def split_stats(split: CorpusSplit) -> dict[str, int]:
    """Split-size columns for one language's split."""
    seen = split.train + split.test
    return {
        "unseen_lemmas": len({e.lemma for e in split.unseen}),
        "unseen_words": len(split.unseen),
        "seen_lemmas": len({e.lemma for e in seen}),
        "seen_words": len(seen),
        "test_words": len(split.test),
        "train_words": len(split.train),
        "total_lemmas": len({e.lemma for e in seen + split.unseen}),
        "total_words": len(seen) + len(split.unseen),
    }


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; the only RNG used for splitting."""
    return np.random.Generator(np.random.Philox(seed))


def group_by_lemma(entries: Sequence[InflectionEntry]) -> "OrderedDict[str, list]":
    groups: OrderedDict[str, list] = OrderedDict()
    for e in entries:
        groups.setdefault(e.lemma, []).append(e)
    return groups


def _units(forms: list) -> list[list]:
    # duplicate (lemma, form, feats) records must land on the same side
    units: OrderedDict = OrderedDict()
    for e in forms:
        units.setdefault(e.key(), []).append(e)
    return list(units.values())


def split_standard(entries: Sequence[InflectionEntry], seed: int,
                   n_holdout_lemmas: int = 100, test_fraction: float = 0.2,
                   scheme: str = "forms") -> CorpusSplit:
    """Hold out ``n_holdout_lemmas`` lemmas, then split the rest train/test.

    ``scheme="forms"``: every lemma with k >= 2 distinct forms sends
    ceil(test_fraction * k) of them (never all) to test.
    ``scheme="lemmas"``: floor(test_fraction * seen lemmas) lemmas, drawn among
    those with >= 2 distinct forms, each send one form to test.
    Lists preserve corpus order within each side.
    """
    if scheme not in ("forms", "lemmas"):
        raise ValueError(f"unknown split scheme {scheme!r}")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    groups = group_by_lemma(entries)
    lemmas = sorted(groups)
    if len(lemmas) <= n_holdout_lemmas:
        raise ValueError(
            f"corpus has {len(lemmas)} lemmas; need more than {n_holdout_lemmas} to hold out"
        )
    rng = make_rng(seed)
    held = set(lemmas[i] for i in rng.choice(len(lemmas), n_holdout_lemmas, replace=False))
    seen_lemmas = [lem for lem in lemmas if lem not in held]

    to_test: set[int] = set()
    if scheme == "forms":
        for lem in seen_lemmas:
            units = _units(groups[lem])
            k = len(units)
            if k < 2:
                continue
            n = min(math.ceil(test_fraction * k), k - 1)
            for i in rng.choice(k, n, replace=False):
                to_test.update(id(e) for e in units[i])
    else:
        eligible = [lem for lem in seen_lemmas if len(_units(groups[lem])) >= 2]
        n = min(math.floor(test_fraction * len(seen_lemmas)), len(eligible))
        for j in sorted(rng.choice(len(eligible), n, replace=False)):
            units = _units(groups[eligible[j]])
            pick = units[int(rng.integers(len(units)))]
            to_test.update(id(e) for e in pick)

    train, test, unseen = [], [], []
    for e in entries:
        if e.lemma in held:
            unseen.append(e)
        elif id(e) in to_test:
            test.append(e)
        else:
            train.append(e)
    return CorpusSplit(train, test, unseen, seed)


def split_low_resource(split: CorpusSplit, seed: int, train_size: int = 3000,
                       test_max: int = 500) -> CorpusSplit:
    """Subsample train to ``train_size`` and test to ``test_max`` items."""
    if not split.train:
        raise ValueError("cannot subsample an empty training set")
    rng = make_rng(seed)

    def sample(items, n):
        if n >= len(items):
            return list(items)
        idx = np.sort(rng.choice(len(items), n, replace=False))
        return [items[i] for i in idx]

    return CorpusSplit(sample(split.train, train_size), sample(split.test, test_max),
                       list(split.unseen), seed)


def check_split(split: CorpusSplit, require_seen: bool = True) -> None:
    """Raise ``AssertionError`` if a split breaks the disjointness contract."""
    keys = [set(e.key() for e in part) for part in (split.train, split.test, split.unseen)]
    assert not keys[0] & keys[1], "train/test overlap"
    assert not keys[0] & keys[2], "train/unseen overlap"
    assert not keys[1] & keys[2], "test/unseen overlap"
    unseen_lemmas = {e.lemma for e in split.unseen}
    train_lemmas = {e.lemma for e in split.train}
    assert not unseen_lemmas & (train_lemmas | {e.lemma for e in split.test}), \
        "unseen lemma leaked into train/test"
    if require_seen:
        missing = {e.lemma for e in split.test} - train_lemmas
        assert not missing, f"test lemmas absent from train: {sorted(missing)[:5]}"


def by_language(entries: Iterable[InflectionEntry]) -> "OrderedDict[str, list]":
    out: OrderedDict[str, list] = OrderedDict()
    for e in entries:
        out.setdefault(e.lang, []).append(e)
    return OrderedDict(sorted(out.items()))
