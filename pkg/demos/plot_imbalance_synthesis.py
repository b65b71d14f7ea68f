"""
Class imbalance and synthetic pages
===================================

Counting against a class universe shows which classes never occur and how
unevenly the rest are spread. Glyphs cut from annotated pages can then be
pasted onto blank grid pages to fill the gaps.
"""

from pathlib import Path

import numpy as np

from hanjakit.corpus import class_inventory, load_class_universe, load_corpus
from hanjakit.reading_order import cluster_columns, sequence_text
from hanjakit.synth import GridSpec, compose_synthetic_page, deficits, harvest_glyphs, imbalance_metrics

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
corpus = load_corpus(FIXTURES / "corpus12")
universe = load_class_universe(FIXTURES / "universe.txt")

hist = class_inventory(corpus)
report = imbalance_metrics(hist, universe)
print(f"{len(report.missing)} of {report.universe_size} classes missing")
print(f"gini {report.gini:.3f}, max/min {report.max_min_ratio:.1f}")

# classes below 12 samples and how many each still needs
need = deficits(hist, universe, 12)
print(sum(need.values()), "samples short across", len(need), "classes")

# glyph bank from the annotated pages, then one synthetic page
bank = harvest_glyphs(corpus)
wanted = [c for c in need if c in bank][:20]
grid = GridSpec(columns=4, rows=5)
page, record = compose_synthetic_page(bank, grid, wanted, np.random.default_rng(0), "synth00")
print("page", page.width, "x", page.height, "with", len(record.annotations), "characters")

# the page reads back in the order it was composed
print(sequence_text(cluster_columns(record.annotations)).replace("\n", "") == "".join(wanted))
