import io
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import RETRO_LINE, entry
from morphoseq.corpus import (CorpusParseError, CorpusValidationError, FeatureSet, Segmentation,
                              check_split, corpus_stats, parse_corpus, split_low_resource,
                              split_standard, split_stats, write_corpus)


def test_parse_segmented_line():
    (e,) = parse_corpus(RETRO_LINE.encode("utf-8"))
    assert e.lemma == "retrogradinen"
    assert e.form == "retrogradista"
    assert e.lemma_seg.suffixes == ("nen",)
    assert e.form_feats.tags() == ["ADJ", "Case=Par", "Number=Sing"]


def test_parse_stem_only():
    (e,) = parse_corpus(b"deu\t|Haus|\tNOUN;Case=Nom;Number=Sing\t|H\xc3\xa4us|er\tNOUN;Number=Plur\n")
    assert e.lemma_seg.prefixes == () and e.lemma_seg.suffixes == ()
    assert e.form == "Häuser"


def test_parse_skips_comments_and_blank_lines():
    text = "# header\n\n" + RETRO_LINE + "\n"
    assert len(parse_corpus(text)) == 1


def test_parse_accepts_streams():
    assert len(parse_corpus(io.BytesIO(RETRO_LINE.encode()))) == 1
    assert len(parse_corpus(io.StringIO(RETRO_LINE))) == 1


def test_zero_morpheme_in_segment_rejected_with_line_number():
    bad = RETRO_LINE.replace("|retrogradi|sta", "|retrogradi|∅")
    with pytest.raises(CorpusValidationError) as exc:
        parse_corpus("# c\n" + bad)
    assert exc.value.line == 2


@pytest.mark.parametrize("line, err", [
    ("fin\t|a|\tADJ", CorpusParseError),
    ("fin\t|a\tADJ\t|a|\tADJ", CorpusValidationError),
    ("fin\t||x\tADJ\t|a|\tADJ", CorpusValidationError),
    ("fin\t|a|\tADJ;Case\t|a|\tADJ", CorpusValidationError),
    ("fin\t|a|\tCase=Nom\t|a|\tADJ", CorpusValidationError),
    ("fin\t|a|\tADJ;Case=Nom;Case=Gen\t|a|\tADJ", CorpusValidationError),
    ("finn\t|a|\tADJ\t|a|\tADJ", CorpusValidationError),
    ("fin\t|a<\\w>|\tADJ\t|a|\tADJ", CorpusValidationError),
    ("fin\t|a b|\tADJ\t|a|\tADJ", CorpusValidationError),
])
def test_malformed_lines(line, err):
    with pytest.raises(err) as exc:
        parse_corpus(line)
    assert exc.value.line == 1


def test_unconfigured_language_rejected():
    with pytest.raises(CorpusValidationError):
        parse_corpus(RETRO_LINE, languages={"deu"})


def test_features_canonical_order():
    fs = FeatureSet.parse("VERB;Tense=Past;Mood=Ind;Number=Plur")
    assert str(fs) == "VERB;Mood=Ind;Number=Plur;Tense=Past"
    assert fs == FeatureSet.parse("VERB;Number=Plur;Tense=Past;Mood=Ind")


def test_segmentation_surface_and_roundtrip():
    seg = Segmentation.parse("ge;x|mach|t;e")
    assert seg.surface == "gexmachte"
    assert Segmentation.parse(str(seg)) == seg


def test_write_then_parse_roundtrip(retro):
    buf = io.StringIO()
    write_corpus([retro, retro], buf)
    assert parse_corpus(buf.getvalue()) == [retro, retro]


def test_stats_examples():
    assert corpus_stats([]) == {}
    forms = [entry("|Haus|", f"|Haus|{s}") for s in ("e", "es", "er")]
    assert corpus_stats(forms) == {"deu": {"lemmas": 1, "words": 3}}


# -- splits -------------------------------------------------------------------

def paradigm_corpus(n_lemmas, forms_per_lemma, lang="deu"):
    out = []
    for i in range(n_lemmas):
        stem = f"s{i}"
        for j in range(forms_per_lemma):
            out.append(entry(f"|{stem}|", f"|{stem}|x{j}", form_feats=f"NOUN;Slot={j}", lang=lang))
    return out


def test_danish_shaped_split():
    # Danish-sized: 5699 lemmas with two forms each, 100 lemmas / 200 words held out
    corpus = paradigm_corpus(5699, 2)
    assert corpus_stats(corpus)["deu"] == {"lemmas": 5699, "words": 11398}
    split = split_standard(corpus, seed=3)
    st_ = split_stats(split)
    assert st_["unseen_lemmas"] == 100 and st_["unseen_words"] == 200
    check_split(split)


def test_danish_shaped_split_lemma_scheme_counts():
    corpus = paradigm_corpus(5699, 2)
    split = split_standard(corpus, seed=3, scheme="lemmas")
    st_ = split_stats(split)
    assert (st_["test_words"], st_["train_words"]) == (1119, 10079)
    check_split(split)


def test_single_form_lemma_goes_to_train():
    corpus = paradigm_corpus(5, 3) + [entry("|solo|", "|solo|s")]
    for seed in range(10):
        split = split_standard(corpus, seed, n_holdout_lemmas=1)
        if any(e.lemma == "solo" for e in split.unseen):
            continue
        assert [e for e in split.train if e.lemma == "solo"]
        assert not [e for e in split.test if e.lemma == "solo"]


def test_split_deterministic():
    corpus = paradigm_corpus(30, 4)
    assert split_standard(corpus, 11, n_holdout_lemmas=5) == split_standard(corpus, 11, n_holdout_lemmas=5)
    assert split_standard(corpus, 11, n_holdout_lemmas=5) != split_standard(corpus, 12, n_holdout_lemmas=5)


def test_split_too_few_lemmas():
    with pytest.raises(ValueError):
        split_standard(paradigm_corpus(100, 2), seed=0)


def test_per_lemma_test_share():
    split = split_standard(paradigm_corpus(20, 10), seed=0, n_holdout_lemmas=2)
    per_lemma = Counter(e.lemma for e in split.test)
    assert set(per_lemma.values()) == {2}  # ceil(0.2 * 10)


def test_low_resource_sizes():
    split = split_standard(paradigm_corpus(500, 12), seed=0)
    low = split_low_resource(split, seed=1)
    assert len(low.train) == 3000 and len(low.test) == 500
    assert low.unseen == split.unseen
    assert set(map(id, low.train)) <= set(map(id, split.train))
    assert set(map(id, low.test)) <= set(map(id, split.test))


def test_low_resource_small_test_kept():
    split = split_standard(paradigm_corpus(200, 2), seed=0)
    assert len(split.test) == 100
    low = split_low_resource(split, seed=1)
    assert len(low.test) == 100
    assert low.train == split.train  # train_size >= |train|


def test_low_resource_empty_train():
    from morphoseq.corpus import CorpusSplit
    with pytest.raises(ValueError):
        split_low_resource(CorpusSplit([], [], [], 0), seed=0)


@st.composite
def corpora(draw):
    n_lemmas = draw(st.integers(2, 25))
    entries = []
    for i in range(n_lemmas):
        k = draw(st.integers(1, 6))
        for j in range(k):
            slot = draw(st.integers(0, 4))
            e = entry(f"|l{i}|", f"|l{i}|f{slot}", form_feats=f"NOUN;Slot={slot}",
                      lang=draw(st.sampled_from(["deu", "fin"])))
            entries.append(e)
    return entries


@settings(max_examples=100, deadline=None)
@given(corpora(), st.integers(0, 2**32 - 1), st.data())
def test_split_invariants(corpus, seed, data):
    n_lemmas = len({e.lemma for e in corpus})
    holdout = data.draw(st.integers(0, n_lemmas - 1))
    scheme = data.draw(st.sampled_from(["forms", "lemmas"]))
    split = split_standard(corpus, seed, n_holdout_lemmas=holdout, scheme=scheme)
    check_split(split)
    merged = split.train + split.test + split.unseen
    assert Counter(map(id, merged)) == Counter(map(id, corpus))
    assert len({e.lemma for e in split.unseen}) == holdout
    assert split == split_standard(corpus, seed, n_holdout_lemmas=holdout, scheme=scheme)
