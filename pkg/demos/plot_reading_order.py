"""
Vertical reading order
======================

Classical pages are read in columns, right to left, each column top to
bottom. Boxes are grouped into columns by their horizontal centres.
"""

from pathlib import Path

from hanjakit.corpus import load_corpus
from hanjakit.geometry import Box
from hanjakit.reading_order import cluster_columns, order_document, sequence_text

# two columns of two boxes; the right column comes first
boxes = [Box(10, 0, 30, 30), Box(12, 40, 30, 30), Box(110, 0, 30, 30), Box(108, 40, 30, 30)]
layout = cluster_columns(boxes)
print(len(layout), "columns:", [[b.x for b in col] for col in layout.columns])

# on an annotated page the labels become text, one line per column
DATA = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus12"
page = load_corpus(DATA).documents[0]
text, sidecar = order_document(page.annotations)
print(text)
print(sidecar[:160], "...")

# non-cursive pages may be read left to right instead
print(sequence_text(cluster_columns(page.annotations, right_to_left=False)).splitlines()[0])
