import numpy as np
import pytest

from clearir.corpus import Document, Query, attach_tokens, build_vocabulary
from clearir.lexical import build_index


def random_texts(rng, n_docs, n_words=60, min_len=1, max_len=30, zipf=True):
    words = [f"w{i}" for i in range(n_words)]
    p = 1.0 / np.arange(1, n_words + 1) if zipf else np.ones(n_words)
    p /= p.sum()
    return [" ".join(rng.choice(words, size=int(rng.integers(min_len, max_len + 1)), p=p))
            for _ in range(n_docs)]


def make_collection(rng, n_docs, **kw):
    texts = random_texts(rng, n_docs, **kw)
    vocab = build_vocabulary(texts)
    docs = attach_tokens([Document(f"d{i:04d}", t) for i, t in enumerate(texts)], vocab)
    return docs, vocab


def make_queries(rng, vocab, n, max_len=4, oov=False):
    out = []
    for j in range(n):
        toks = list(rng.choice(vocab.tokens, size=int(rng.integers(1, max_len + 1))))
        if oov and j % 3 == 0:
            toks.append("unseenterm")
        out.append(Query(f"q{j}", " ".join(toks)))
    return attach_tokens(out, vocab)


@pytest.fixture
def small_index():
    rng = np.random.default_rng(0)
    docs, vocab = make_collection(rng, 200)
    return build_index(docs, vocab), docs, vocab


@pytest.fixture
def toy():
    texts = ["a b a", "b c", "a d d d"]
    vocab = build_vocabulary(texts)
    docs = attach_tokens([Document(f"d{i + 1}", t) for i, t in enumerate(texts)], vocab)
    return docs, vocab


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
