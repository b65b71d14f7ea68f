"""
Scoring detections with and without variant correction
======================================================

Detections are matched to ground truth greedily by confidence at an IoU
threshold. Raw accuracy needs the exact label; variant accuracy also
accepts any member of the same equivalence class.
"""

from pathlib import Path

from hanjakit.coco import import_detections
from hanjakit.corpus import load_corpus
from hanjakit.evaluation import compare_policies
from hanjakit.variants import compile_equivalence, sample_table

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
corpus = load_corpus(FIXTURES / "corpus12")
dets = import_detections(FIXTURES / "detections12.json", corpus=corpus)

correction = compare_policies(dets, corpus, compile_equivalence(sample_table()))
print(correction.report.format_table())
print(f"variant correction adds {100 * correction.delta:.2f} points")

# characters whose verdict flips once variants are accepted
for change in correction.changed[:5]:
    print(change.doc_id, change.annotation_id, change.truth, "<-", change.predicted)

# per-class table, ready for a spreadsheet
print(correction.to_csv().splitlines()[:4])
