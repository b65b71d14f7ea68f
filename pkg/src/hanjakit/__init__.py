"""Corpus engineering and evaluation tools for character-level OCR of
handwritten hanja documents."""

__version__ = "0.1.0"

from .augment import (
    AugmentedCorpus,
    CropParams,
    CropRegion,
    augment_corpus,
    clip_annotations,
    crop_image,
    expected_total,
    sample_crop_region,
)
from .corpus import (
    CharAnnotation,
    ClassHistogram,
    Corpus,
    DocumentRecord,
    ParseError,
    SplitResult,
    ValidationError,
    class_inventory,
    load_corpus,
    parse_label_file,
    serialize_label_file,
    split_corpus,
    validate_corpus,
)
from .evaluation import Detection, EvalReport, Matching, compare_policies, evaluate, match_detections, score
from .geometry import Box, iou
from .raster import Raster
from .reading_order import ColumnLayout, cluster_columns, sequence_text
from .synth import GlyphBank, GridSpec, compose_synthetic_page, harvest_glyphs, imbalance_metrics, missing_classes
from .variants import EquivalenceIndex, VariantTable, compile_equivalence, load_variant_table
