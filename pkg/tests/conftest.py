from pathlib import Path

import pytest

from docstruct.io import load_corpus
from docstruct.trees import EdgeScores

DATA = Path(__file__).parent / "data"


@pytest.fixture
def micro_corpus_path():
    return DATA / "micro_corpus.jsonl"


@pytest.fixture
def graph_corpus_path():
    return DATA / "graph_corpus.jsonl"


@pytest.fixture
def micro_docs(micro_corpus_path):
    return {d.id: d for d in load_corpus(micro_corpus_path)}


def random_scores(rng, n, scale=1.0):
    return EdgeScores(rng.normal(scale=scale, size=(n, n)), rng.normal(scale=scale, size=n))
