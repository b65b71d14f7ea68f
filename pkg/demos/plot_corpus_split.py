"""
Loading a corpus and splitting it
=================================

Label files are JSON, one per page. We load the small fixture corpus,
check it, count its classes and make the seeded train/validation split.
"""

from pathlib import Path

from hanjakit.corpus import class_inventory, load_corpus, split_corpus, validate_corpus

DATA = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus12"

corpus = load_corpus(DATA)
print(f"{len(corpus)} pages, {corpus.annotation_count()} characters")

# validation findings: errors block downstream steps, warnings do not
report = validate_corpus(corpus)
print("valid:", report.is_valid, "| findings:", len(report))

# class histogram, most frequent first
hist = class_inventory(corpus)
print("top classes:", hist.most_common()[:5])

# The split shuffles the sorted doc_ids with a seeded generator, so it
# does not depend on file system order. floor(N * 0.12) pages go to
# validation; 1158 pages would give 1020 / 138.
split = split_corpus(corpus, val_fraction=0.12, seed=7)
print("train:", len(split.train), "val:", split.val)
