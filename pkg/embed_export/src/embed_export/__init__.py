"""Transformer embedding export for case-based extractive QA.

Reads a saved dataset file, embeds masked questions and passage spans
with a frozen pretrained transformer, and writes the embedding files
that caseqa's imported encoder backend loads.
"""

from .align import AlignmentError, align_span
from .embedfile import QUESTION_KIND, SPAN_KIND, write_embedding_file
from .exporter import POOLING_MODES, VALID_TARGETS, ExportError, ExportJob, ExportReport, export
from .records import CaseRecord, DatasetFormatError, SpanRecord, read_dataset_records

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "CaseRecord",
    "DatasetFormatError",
    "ExportError",
    "ExportJob",
    "ExportReport",
    "POOLING_MODES",
    "QUESTION_KIND",
    "SPAN_KIND",
    "SpanRecord",
    "VALID_TARGETS",
    "align_span",
    "export",
    "read_dataset_records",
    "write_embedding_file",
    "__version__",
]
