import numpy as np
import pytest

from morphoseq.corpus import FeatureSet, InflectionEntry, Segmentation, parse_line
from morphoseq.seq2seq import ModelConfig, init_params

RETRO_LINE = "fin\t|retrogradi|nen\tADJ;Case=Nom;Number=Sing\t|retrogradi|sta\tADJ;Case=Par;Number=Sing"


@pytest.fixture
def retro():
    return parse_line(RETRO_LINE)


def entry(lemma_seg, form_seg, lemma_feats="NOUN;Case=Nom;Number=Sing",
          form_feats="NOUN;Case=Gen;Number=Sing", lang="deu"):
    return InflectionEntry(lang, Segmentation.parse(lemma_seg), FeatureSet.parse(lemma_feats),
                           Segmentation.parse(form_seg), FeatureSet.parse(form_feats))


def small_params(seed, vocab_size=12, embed=8, hidden=6, jitter_biases=True):
    """Tiny random model; biases are jittered so their gradients are non-trivial."""
    p = init_params(ModelConfig(embed_dim=embed, hidden_dim=hidden, seed=seed), vocab_size)
    if jitter_biases:
        rng = np.random.default_rng(seed + 1000)
        for k, v in p.items():
            if v.ndim == 1:
                p[k] = rng.uniform(-0.5, 0.5, v.shape)
    return p


def random_pairs(seed, vocab_size=12, n=3, max_src=6, max_tgt=5):
    """Random (input ids, target ids) pairs over non-pad tokens, targets ending in <\\w>."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        src = list(rng.integers(1, vocab_size, rng.integers(1, max_src + 1))) + [3]
        tgt = list(rng.integers(1, vocab_size, rng.integers(0, max_tgt))) + [3]
        pairs.append(([int(x) for x in src], [int(x) for x in tgt]))
    return pairs


# acceptance criteria log, printed once at the end of the session
ACCEPTANCE: dict = {}


def record_criterion(number, title, ok, detail=""):
    status = "PASS" if ok else ("SKIP" if ok is None else "FAIL")
    ACCEPTANCE[number] = f"[{status}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
