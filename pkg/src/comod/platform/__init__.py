"""Operational shell: file ingestion, persistence, HTTP service, CLI."""

from .schemas import (
    DatasetManifest,
    ScoredInstance,
    ingest_annotations,
    ingest_scores,
    write_annotations,
    write_scores,
)
from .store import CalibrationBundle, load_calibration, persist_calibration

__all__ = [
    "DatasetManifest",
    "ScoredInstance",
    "ingest_annotations",
    "ingest_scores",
    "write_annotations",
    "write_scores",
    "CalibrationBundle",
    "persist_calibration",
    "load_calibration",
]
