"""Generated agglutinative toy language with a fully regular paradigm.

Every form is ``stem + number suffix + case suffix``; the lemma is the bare
stem (nominative singular). Nothing is irregular, so a model that learned
the morphology should inflect unseen stems perfectly.
"""

from __future__ import annotations

import itertools

from .corpus import FeatureSet, InflectionEntry, Segmentation, make_rng

CONSONANTS = "ptkmnslrvh"
VOWELS = "aeiou"

NUMBERS = (("Sing", ""), ("Plur", "it"), ("Dual", "ke"), ("Pauc", "mo"))
CASES = (("Nom", ""), ("Gen", "n"), ("Par", "ta"), ("Ine", "ssa"), ("Ela", "sta"))

LANG = "qaa"  # ISO 639 local-use code


def slots():
    """All 20 (number, case) paradigm cells in a fixed order."""
    return list(itertools.product(NUMBERS, CASES))


def make_stems(n: int, seed: int, min_syll: int = 2, max_syll: int = 3) -> list[str]:
    rng = make_rng(seed)
    stems: list[str] = []
    seen = set()
    while len(stems) < n:
        k = int(rng.integers(min_syll, max_syll + 1))
        stem = "".join(CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
                       for _ in range(k))
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    return stems


def make_corpus(n_stems: int = 40, n_slots: int = 20, seed: int = 0,
                lang: str = LANG) -> list[InflectionEntry]:
    cells = slots()[:n_slots]
    lemma_feats = FeatureSet("NOUN", (("Case", "Nom"), ("Number", "Sing")))
    entries = []
    for stem in make_stems(n_stems, seed):
        lemma_seg = Segmentation((), stem, ())
        for (num, nsuf), (case, csuf) in cells:
            suffixes = tuple(s for s in (nsuf, csuf) if s)
            entries.append(InflectionEntry(
                lang, lemma_seg, lemma_feats,
                Segmentation((), stem, suffixes),
                FeatureSet("NOUN", (("Case", case), ("Number", num))),
            ))
    return entries
