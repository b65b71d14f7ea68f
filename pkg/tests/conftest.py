import json
from pathlib import Path

import numpy as np
import pytest

from hanjakit.corpus import CharAnnotation, Corpus, DocumentRecord
from hanjakit.geometry import Box
from hanjakit.raster import Raster
from hanjakit.synth import Glyph, GlyphBank

FIXTURES = Path(__file__).parent / "fixtures"

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LOG: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LOG:
        terminalreporter.write_line(line)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def corpus12_dir():
    return FIXTURES / "corpus12"


def make_doc(doc_id, boxes_labels, dims=(1000, 800), style="cursive"):
    anns = tuple(
        CharAnnotation(Box(*box), label, f"{doc_id}-a{i}") for i, (box, label) in enumerate(boxes_labels)
    )
    return DocumentRecord(doc_id, f"{doc_id}.png", dims, anns, style)


def stub_corpus(n, dims=(1000, 800), per_doc=4, prefix="d"):
    """n documents, each with `per_doc` boxes spread over the page."""
    docs = []
    w, h = dims
    for d in range(n):
        items = []
        for i in range(per_doc):
            x = (i * 97 + d * 13) % (w - 60)
            y = (i * 151 + d * 29) % (h - 60)
            items.append(((x, y, 40, 50), "ABCDEFG"[(i + d) % 7]))
        docs.append(make_doc(f"{prefix}{d:04d}", items, dims))
    return Corpus(docs)


def write_label_files(corpus, directory):
    from hanjakit.corpus import write_corpus

    return write_corpus(corpus, directory)


def random_glyph(rng, min_side=20, max_side=40):
    h = int(rng.integers(min_side, max_side + 1))
    w = int(rng.integers(min_side, max_side + 1))
    px = np.full((h, w), 230, dtype=np.uint8)
    for _ in range(4):
        y = int(rng.integers(0, h - 2))
        px[y : y + 2, int(rng.integers(0, w // 2)) : int(rng.integers(w // 2, w))] = int(rng.integers(0, 80))
    return Raster(px)


def make_bank(classes, rng, per_class=2):
    bank = GlyphBank()
    for c in classes:
        for n in range(per_class):
            bank.add(c, Glyph(random_glyph(rng), f"src-{c}", f"g{n}"))
    return bank


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
