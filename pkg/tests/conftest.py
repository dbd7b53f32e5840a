import os

import pytest

from autocurriculum.textgen import synth_corpus


@pytest.fixture(scope="session")
def small_corpus_path(tmp_path_factory):
    """A ~60k-character deterministic corpus shared across the session."""
    root = tmp_path_factory.mktemp("corpus")
    path = os.path.join(root, "small_corpus.txt")
    with open(path, "w", encoding="utf-8") as f:
        f.write(synth_corpus(60_000, seed=5))
    return path
