"""Symbol streams for the two input regimes.

``charmorph``: stem split into characters, each affix kept whole, empty
prefix/suffix slots filled with the zero morpheme.
``char``: the whole word split into characters.

Both regimes share the feature block ``IN=<tag>... OUT=<tag>...``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import EOW, ZERO, FeatureSet, InflectionEntry, Segmentation


class Mode(str, enum.Enum):
    CHAR_MORPHEME = "charmorph"
    CHAR_ONLY = "char"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        return cls(value)


class Kind(enum.IntEnum):
    PAD = 0
    UNKNOWN = 1
    ZERO = 2
    END_OF_WORD = 3
    FEATURE_IN = 4
    FEATURE_OUT = 5
    STEM_CHAR = 6
    AFFIX = 7


@dataclass(frozen=True, order=True)
class Token:
    kind: Kind
    text: str

    def __post_init__(self):
        if self.kind is Kind.ZERO and self.text != ZERO:
            raise ValueError("zero-morpheme token must read ∅")
        if self.kind is Kind.END_OF_WORD and self.text != EOW:
            raise ValueError("end-of-word token must read <\\w>")
        if self.kind is Kind.STEM_CHAR and len(self.text) != 1:
            raise ValueError(f"stem-char token must be one character, got {self.text!r}")

    def __str__(self) -> str:
        return self.text


PAD_TOKEN = Token(Kind.PAD, "<pad>")
UNK_TOKEN = Token(Kind.UNKNOWN, "<unk>")
ZERO_TOKEN = Token(Kind.ZERO, ZERO)
EOW_TOKEN = Token(Kind.END_OF_WORD, EOW)
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, ZERO_TOKEN, EOW_TOKEN)
PAD, UNK, ZERO_ID, EOW_ID = range(4)


def feature_block(lemma_feats: FeatureSet, form_feats: FeatureSet) -> list[Token]:
    return ([Token(Kind.FEATURE_IN, "IN=" + t) for t in lemma_feats.tags()]
            + [Token(Kind.FEATURE_OUT, "OUT=" + t) for t in form_feats.tags()])


def segment_tokens(seg: Segmentation, mode) -> list[Token]:
    mode = Mode.parse(mode)
    if mode is Mode.CHAR_ONLY:
        return [Token(Kind.STEM_CHAR, c) for c in seg.surface]
    out = [Token(Kind.AFFIX, p) for p in seg.prefixes] or [ZERO_TOKEN]
    out += [Token(Kind.STEM_CHAR, c) for c in seg.stem]
    out += [Token(Kind.AFFIX, s) for s in seg.suffixes] or [ZERO_TOKEN]
    return out


def encode_query(lemma_seg: Segmentation, lemma_feats: FeatureSet,
                 form_feats: FeatureSet, mode) -> list[Token]:
    return feature_block(lemma_feats, form_feats) + segment_tokens(lemma_seg, mode) + [EOW_TOKEN]


def encode_input(entry: InflectionEntry, mode) -> list[Token]:
    return encode_query(entry.lemma_seg, entry.lemma_feats, entry.form_feats, mode)


def encode_target(entry: InflectionEntry, mode) -> list[Token]:
    return segment_tokens(entry.form_seg, mode) + [EOW_TOKEN]


def detokenize(tokens: Iterable[Token]) -> str:
    out = []
    for t in tokens:
        if t.kind is Kind.END_OF_WORD:
            break
        if t.kind in (Kind.STEM_CHAR, Kind.AFFIX):
            out.append(t.text)
    return "".join(out)


def format_tokens(tokens: Iterable[Token]) -> str:
    return " ".join(t.text for t in tokens)


class Vocabulary:
    """Token <-> index map. Indices 0-3 are pad, unknown, ∅ and <\\w>."""

    def __init__(self, mode, tokens: Sequence[Token]):
        self.mode = Mode.parse(mode)
        self.itos: list[Token] = list(tokens)
        if tuple(self.itos[:4]) != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocabulary")

    @classmethod
    def build(cls, train_entries: Sequence[InflectionEntry], mode) -> "Vocabulary":
        if not train_entries:
            raise ValueError("cannot build a vocabulary from no entries")
        seen = set()
        for e in train_entries:
            seen.update(encode_input(e, mode))
            seen.update(encode_target(e, mode))
        seen.difference_update(RESERVED_TOKENS)
        return cls(mode, list(RESERVED_TOKENS) + sorted(seen))

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.mode == other.mode and self.itos == other.itos

    def index(self, token: Token) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens: Iterable[Token]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[Token]:
        return [self.itos[i] for i in ids]
