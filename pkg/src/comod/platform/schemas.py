"""Flat-file dataset schemas and validated ingestion.

Two row-per-comment file kinds, each in CSV or JSONL flavor:

* annotations: ``id, votes[, text]`` — votes are a ``;``-joined binary string
  in CSV and a JSON list in JSONL.
* scores: ``id, p_toxic, d_hat[, bin_0..bin_{B-1}][, f_0..f_k]``.

Ingestion rejects exactly the rows that violate the type invariants and
names their position; it never coerces bad values.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

from ..annotations import AnnotationRecord, LabeledInstance, build_labeled, filter_min_annotators
from ..conformal_class import ClassProbs
from ..conformal_reg import RegOutput
from ..errors import (
    DomainError,
    DuplicateId,
    EmptyDataset,
    InvalidProbability,
    SchemaError,
)

SCHEMA_VERSION = "1"
FORMATS = ("csv", "jsonl")


@dataclass(frozen=True)
class ScoredInstance:
    """Model outputs for one comment, joined to routing by id."""

    id: str
    probs: ClassProbs
    reg: RegOutput
    text: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    schema_version: str
    source: str  # "file" | "simulator"
    n: int
    annotation_method: str
    min_annotators: int
    checksum: str
    rng_algorithm: str | None = None
    seed: int | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def file_checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _check_format(format: str):
    if format not in FORMATS:
        raise SchemaError(f"format must be one of {FORMATS}, got {format!r}")


def _parse_votes(raw, row_num: int) -> tuple[int, ...]:
    if isinstance(raw, str):
        parts = [p for p in raw.split(";") if p != ""]
    elif isinstance(raw, list):
        parts = raw
    else:
        raise SchemaError(f"row {row_num}: votes must be a list or ';'-joined string")
    votes = []
    for p in parts:
        if isinstance(p, bool) or p not in (0, 1, "0", "1"):
            raise SchemaError(f"row {row_num}: vote value {p!r} outside {{0, 1}}")
        votes.append(int(p))
    if not votes:
        raise SchemaError(f"row {row_num}: empty vote list")
    return tuple(votes)


def _iter_rows(path: Path, format: str):
    if format == "csv":
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            yield from enumerate(reader, start=1)
    else:
        with path.open() as fh:
            for row_num, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield row_num, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"row {row_num}: invalid JSON ({exc})") from exc


def read_annotation_records(path: str | Path, format: str = "jsonl") -> list[AnnotationRecord]:
    """Parse and validate raw annotation rows."""
    _check_format(format)
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    records = []
    seen: set[str] = set()
    for row_num, row in _iter_rows(path, format):
        if "id" not in row or row["id"] in (None, ""):
            raise SchemaError(f"row {row_num}: missing id")
        record_id = str(row["id"])
        if record_id in seen:
            raise DuplicateId(f"row {row_num}: duplicate id {record_id!r}")
        seen.add(record_id)
        if "votes" not in row or row["votes"] in (None, ""):
            raise SchemaError(f"row {row_num}: missing votes")
        votes = _parse_votes(row["votes"], row_num)
        text = row.get("text") or None
        records.append(AnnotationRecord(id=record_id, votes=votes, text=text))
    if not records:
        raise EmptyDataset(f"{path} contains no rows")
    return records


def ingest_annotations(
    path: str | Path,
    format: str = "jsonl",
    min_annotators: int = 10,
    method: str = "distance",
    source: str = "file",
    rng_algorithm: str | None = None,
    seed: int | None = None,
) -> tuple[list[LabeledInstance], DatasetManifest]:
    """Validated records -> labeled instances, filtered by annotator count."""
    records = read_annotation_records(path, format)
    kept = filter_min_annotators(records, min_annotators)
    if not kept:
        raise EmptyDataset(
            f"no records with at least {min_annotators} annotators in {path}"
        )
    labeled = [build_labeled(r, method) for r in kept]
    manifest = DatasetManifest(
        schema_version=SCHEMA_VERSION,
        source=source,
        n=len(labeled),
        annotation_method=method,
        min_annotators=min_annotators,
        checksum=file_checksum(path),
        rng_algorithm=rng_algorithm,
        seed=seed,
    )
    return labeled, manifest


def _float_field(row: dict, key: str, row_num: int) -> float:
    try:
        return float(row[key])
    except (KeyError, TypeError, ValueError):
        raise SchemaError(f"row {row_num}: missing or non-numeric {key!r}") from None


def ingest_scores(path: str | Path, format: str = "jsonl") -> list[ScoredInstance]:
    """Parse model scores; bad probability rows are rejected with their position."""
    _check_format(format)
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    instances = []
    seen: set[str] = set()
    for row_num, row in _iter_rows(path, format):
        if "id" not in row or row["id"] in (None, ""):
            raise SchemaError(f"row {row_num}: missing id")
        record_id = str(row["id"])
        if record_id in seen:
            raise DuplicateId(f"row {row_num}: duplicate id {record_id!r}")
        seen.add(record_id)

        p_toxic = _float_field(row, "p_toxic", row_num)
        if "p_nontoxic" in row and row["p_nontoxic"] not in (None, ""):
            p_nontoxic = _float_field(row, "p_nontoxic", row_num)
        else:
            p_nontoxic = 1.0 - p_toxic
        d_hat = _float_field(row, "d_hat", row_num)

        bin_keys = sorted(
            (
                k
                for k in row
                if k.startswith("bin_") and k[4:].isdigit() and row[k] not in (None, "")
            ),
            key=lambda k: int(k[4:]),
        )
        bin_probs = (
            tuple(_float_field(row, k, row_num) for k in bin_keys) if bin_keys else None
        )
        if format == "jsonl" and isinstance(row.get("bin_probs"), list):
            bin_probs = tuple(float(v) for v in row["bin_probs"])

        feat_keys = sorted(
            (
                k
                for k in row
                if k.startswith("f_") and k[2:].isdigit() and row[k] not in (None, "")
            ),
            key=lambda k: int(k[2:]),
        )
        features = (
            tuple(_float_field(row, k, row_num) for k in feat_keys) if feat_keys else None
        )
        if format == "jsonl" and isinstance(row.get("features"), list):
            features = tuple(float(v) for v in row["features"])

        try:
            probs = ClassProbs(p_toxic=p_toxic, p_nontoxic=p_nontoxic)
            reg = RegOutput(d_hat=d_hat, bin_probs=bin_probs, features=features)
        except (InvalidProbability, DomainError, SchemaError) as exc:
            raise type(exc)(f"row {row_num}: {exc}") from exc
        instances.append(
            ScoredInstance(id=record_id, probs=probs, reg=reg, text=row.get("text") or None)
        )
    if not instances:
        raise EmptyDataset(f"{path} contains no rows")
    return instances


def write_annotations(records: list[AnnotationRecord], path: str | Path, format: str = "jsonl"):
    _check_format(format)
    path = Path(path)
    if format == "jsonl":
        with path.open("w") as fh:
            for r in records:
                fh.write(
                    json.dumps({"id": r.id, "votes": list(r.votes), "text": r.text}) + "\n"
                )
    else:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "votes", "text"])
            for r in records:
                writer.writerow([r.id, ";".join(str(v) for v in r.votes), r.text or ""])


def write_scores(instances: list[ScoredInstance], path: str | Path, format: str = "jsonl"):
    _check_format(format)
    path = Path(path)
    if format == "jsonl":
        with path.open("w") as fh:
            for s in instances:
                row = {"id": s.id, "p_toxic": s.probs.p_toxic, "d_hat": s.reg.d_hat}
                if s.reg.bin_probs is not None:
                    row["bin_probs"] = list(s.reg.bin_probs)
                if s.reg.features is not None:
                    row["features"] = list(s.reg.features)
                if s.text is not None:
                    row["text"] = s.text
                fh.write(json.dumps(row) + "\n")
    else:
        n_bins = len(instances[0].reg.bin_probs) if instances[0].reg.bin_probs else 0
        n_feats = len(instances[0].reg.features) if instances[0].reg.features else 0
        header = ["id", "p_toxic", "d_hat"]
        header += [f"bin_{i}" for i in range(n_bins)]
        header += [f"f_{i}" for i in range(n_feats)]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for s in instances:
                row = [s.id, repr(s.probs.p_toxic), repr(s.reg.d_hat)]
                row += [repr(v) for v in (s.reg.bin_probs or ())]
                row += [repr(v) for v in (s.reg.features or ())]
                writer.writerow(row)


def write_manifest(manifest: DatasetManifest, path: str | Path):
    Path(path).write_text(json.dumps(manifest.as_dict(), indent=2) + "\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    raw = json.loads(Path(path).read_text())
    return DatasetManifest(**raw)
