"""Weak-supervision toolchain for table detection and structure datasets.

Turns Word and LaTeX sources into labeled datasets by rewriting their
markup, rendering annotated and control variants, and diffing the aligned
page images; includes the matching evaluation suite.
"""

__version__ = "0.1.0"

from .colors import SENTINEL_GREEN, SENTINEL_WHITE, SentinelColor
from .config import PipelineConfig, load_config
from .dataset import CorpusStats, DatasetRecord, corpus_stats, make_splits, qc_sample
from .docx_borders import TableNodeSpan, locate_tables, make_control, recolor_borders
from .extraction import (
    PixelMask,
    TableBBox,
    diff_pages,
    extract_boxes,
    filter_labeled_pages,
    mask_to_boxes,
)
from .ingest import DocxPackage, SourceDocument, SourceKind, repack_docx, scan_corpus, unpack_docx
from .latex_borders import EnvSpan, locate_tabular_envs, make_control_latex, wrap_fcolorbox
from .metrics import (
    DetectionMetrics,
    ErrorTaxonomy,
    LengthBucketReport,
    bleu4,
    classify_errors,
    detection_prf,
    exact_match_by_length,
    length_distribution,
)
from .pipeline import run_pipeline
from .rendering import PageImage, PagePair, RenderConfig, pair_pages, rasterize, render_to_pdf
from .structure import (
    FilledTable,
    OcrBlock,
    TagSequence,
    detect_row_groups,
    fill_cells,
    latexml_to_tags,
    word_xml_to_tags,
)

__all__ = [
    "__version__",
    "SentinelColor", "SENTINEL_GREEN", "SENTINEL_WHITE",
    "PipelineConfig", "load_config",
    "SourceDocument", "SourceKind", "DocxPackage", "scan_corpus", "unpack_docx", "repack_docx",
    "TableNodeSpan", "locate_tables", "recolor_borders", "make_control",
    "EnvSpan", "locate_tabular_envs", "wrap_fcolorbox", "make_control_latex",
    "RenderConfig", "PageImage", "PagePair", "render_to_pdf", "rasterize", "pair_pages",
    "PixelMask", "TableBBox", "diff_pages", "mask_to_boxes", "extract_boxes",
    "filter_labeled_pages",
    "TagSequence", "OcrBlock", "FilledTable", "word_xml_to_tags", "latexml_to_tags",
    "detect_row_groups", "fill_cells",
    "DetectionMetrics", "ErrorTaxonomy", "LengthBucketReport", "detection_prf", "bleu4",
    "exact_match_by_length", "classify_errors", "length_distribution",
    "DatasetRecord", "CorpusStats", "corpus_stats", "make_splits", "qc_sample",
    "run_pipeline",
]
