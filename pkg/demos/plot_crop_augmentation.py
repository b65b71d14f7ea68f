"""
Random-crop augmentation
========================

Each page yields k random crops. A box survives a crop when at least
``visibility_tau`` of its area stays inside; survivors are clipped and
shifted into crop coordinates.
"""

import tempfile
from pathlib import Path

from hanjakit.augment import LADDER_MULTIPLIERS, CropParams, augment_corpus, expected_total, materialize
from hanjakit.corpus import load_corpus

DATA = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus12"
corpus = load_corpus(DATA)

params = CropParams(min_fraction=0.4, max_fraction=0.9, min_crop_px=64, visibility_tau=0.5)
aug = augment_corpus(corpus, k=3, params=params, seed=1)

first = aug.crops[0]
print("crop", first.record.doc_id, "region", tuple(first.region))
print("kept", len(first.record.annotations), "of", len(corpus.get(first.source_doc_id).annotations), "boxes")

# the combined training set is originals plus crops: N * (1 + k)
print("combined size:", len(aug.combined()), "=", expected_total(len(corpus), 3))

# the multiplier ladder, computed for a 1020-page training split
for k in LADDER_MULTIPLIERS:
    print(f"  x{k:<3d} -> {expected_total(1020, k)}")

# write images and labels; the result loads like any other corpus
with tempfile.TemporaryDirectory() as tmp:
    written = materialize(aug, tmp)
    print("written:", len(written), "pages,", len(list(Path(tmp).glob("*.png"))), "images")
