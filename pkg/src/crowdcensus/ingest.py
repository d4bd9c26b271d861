"""On-disk data contracts: record and response parsing, pre-filters, pooling.

File schemas (UTF-8 CSV with a header row; a ``.json`` file holding a list
of objects with the same field names is accepted everywhere a CSV is):

records.csv
    collection_id,entity_id,display_name,source_url,scrape_date

responses.csv
    hit_id,worker_id,collection_id,entity_id,duration_secs,iia,
    gender,gender_conf,ethnicities,ethnicity_text,ethnicity_conf,
    country,origin_conf,birth_year,birth_conf

``ethnicities`` is a ``|``-separated list of category tokens; confidence
columns take ``1``/``2``/``3`` (thirds).  An empty cell means the question
was not answered.  A missing confidence invalidates that single answer.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from .errors import DuplicateKey, MalformedRow, MissingColumn, OrphanResponse

RecordKey = tuple[str, str]

# Scrape-time pre-filter: names containing any of these (case-insensitive)
# denote firms, not individual artists.
FIRM_MARKERS = ("company", "& co", "& sons")

RECORD_COLUMNS = ["collection_id", "entity_id", "display_name", "source_url", "scrape_date"]
RESPONSE_COLUMNS = [
    "hit_id", "worker_id", "collection_id", "entity_id", "duration_secs", "iia",
    "gender", "gender_conf", "ethnicities", "ethnicity_text", "ethnicity_conf",
    "country", "origin_conf", "birth_year", "birth_conf",
]


class Confidence(Enum):
    """Worker-reported confidence grade; weights are exact thirds."""

    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def weight(self) -> Fraction:
        return _CONFIDENCE_WEIGHTS[self]


_CONFIDENCE_WEIGHTS = {
    Confidence.LOW: Fraction(1, 3),
    Confidence.MEDIUM: Fraction(2, 3),
    Confidence.HIGH: Fraction(1),
}

_CONFIDENCE_FROM_THIRDS = {"1": Confidence.LOW, "2": Confidence.MEDIUM, "3": Confidence.HIGH}
_THIRDS_FROM_CONFIDENCE = {v: k for k, v in _CONFIDENCE_FROM_THIRDS.items()}


class IIAAnswer(Enum):
    YES = "yes"
    NO = "no"
    CANNOT_DETERMINE = "cannot_determine"


class GenderCategory(Enum):
    MAN = "man"
    WOMAN = "woman"
    NONBINARY = "nonbinary"
    UNKNOWN = "unknown"
    NOT_IIA = "not_iia"


class EthnicityCategory(Enum):
    """Census-derived multiple-choice list offered to workers."""

    ASIAN = "asian"
    BLACK = "black_african_american"
    HISPANIC = "hispanic_latinx"
    WHITE = "white"
    AMERICAN_INDIAN = "american_indian_alaska_native"
    PACIFIC_ISLANDER = "native_hawaiian_pacific_islander"
    MIDDLE_EASTERN = "middle_eastern_north_african"


@dataclass(frozen=True)
class EntityRecord:
    collection_id: str
    entity_id: str
    display_name: str
    source_url: Optional[str] = None
    scrape_date: Optional[date] = None

    @property
    def key(self) -> RecordKey:
        return (self.collection_id, self.entity_id)


@dataclass(frozen=True)
class GenderAnswer:
    category: GenderCategory
    confidence: Confidence


@dataclass(frozen=True)
class EthnicityAnswer:
    categories: frozenset[EthnicityCategory]
    confidence: Confidence
    free_text: Optional[str] = None


@dataclass(frozen=True)
class OriginAnswer:
    country: str
    confidence: Confidence


@dataclass(frozen=True)
class BirthAnswer:
    raw: str
    confidence: Confidence


@dataclass(frozen=True)
class AnnotationResponse:
    """One worker's answers for one entity-collection record."""

    hit_id: str
    worker_id: str
    record_key: RecordKey
    duration_secs: float
    iia_answer: IIAAnswer
    gender_answer: Optional[GenderAnswer] = None
    ethnicity_answer: Optional[EthnicityAnswer] = None
    origin_answer: Optional[OriginAnswer] = None
    birth_answer: Optional[BirthAnswer] = None


def _response_sort_key(r: AnnotationResponse):
    return (r.record_key, r.hit_id, r.worker_id)


@dataclass
class ResponsePool:
    """Responses grouped per record key, in canonical order.

    Duplicate deployments of the same record land in one list; exact
    duplicate rows are kept once.  Records without responses keep an
    empty list so coverage accounting sees them.
    """

    by_record: dict[RecordKey, tuple[AnnotationResponse, ...]] = field(default_factory=dict)

    def record_keys(self) -> list[RecordKey]:
        return sorted(self.by_record)

    def responses(self) -> Iterable[AnnotationResponse]:
        for key in self.record_keys():
            yield from self.by_record[key]

    @property
    def n_responses(self) -> int:
        return sum(len(v) for v in self.by_record.values())

    def worker_ids(self) -> set[str]:
        return {r.worker_id for r in self.responses()}

    def summary(self) -> dict:
        counts = [len(v) for v in self.by_record.values()]
        return {
            "records": len(self.by_record),
            "responses": self.n_responses,
            "workers": len(self.worker_ids()),
            "min_responses_per_record": min(counts) if counts else 0,
            "max_responses_per_record": max(counts) if counts else 0,
        }


# ---------------------------------------------------------------------------
# Generic table IO (shared by every stage so emitted tables stay re-parseable)

def read_table(path, required_columns: Iterable[str]) -> list[dict]:
    """Read a CSV (or JSON list) file into dicts, checking required columns."""
    path = Path(path)
    required = list(required_columns)
    if path.suffix.lower() == ".json":
        rows = json.loads(path.read_text(encoding="utf-8"))
        if rows:
            for name in required:
                if name not in rows[0]:
                    raise MissingColumn(name)
        return [{k: ("" if v is None else str(v)) for k, v in row.items()} for row in rows]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for name in required:
            if name not in header:
                raise MissingColumn(name)
        return [dict(row) for row in reader]


def write_table(path, columns: list[str], rows: Iterable[dict]) -> None:
    """Write dicts as CSV with a fixed column order and LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


# ---------------------------------------------------------------------------
# Records

def parse_records(path) -> list[EntityRecord]:
    """Parse the record table; duplicate (collection_id, entity_id) rows are rejected."""
    rows = read_table(path, RECORD_COLUMNS)
    records: list[EntityRecord] = []
    seen: set[RecordKey] = set()
    for line_no, row in enumerate(rows, start=2):  # header is line 1
        collection_id = (row.get("collection_id") or "").strip()
        entity_id = (row.get("entity_id") or "").strip()
        display_name = (row.get("display_name") or "").strip()
        if not collection_id or not entity_id:
            raise MalformedRow(line_no, "collection_id and entity_id are required")
        if not display_name:
            raise MalformedRow(line_no, "display_name must be nonempty")
        key = (collection_id, entity_id)
        if key in seen:
            raise DuplicateKey(key)
        seen.add(key)
        raw_date = (row.get("scrape_date") or "").strip()
        try:
            scrape_date = date.fromisoformat(raw_date) if raw_date else None
        except ValueError as exc:
            raise MalformedRow(line_no, f"bad scrape_date {raw_date!r}: {exc}") from exc
        source_url = (row.get("source_url") or "").strip() or None
        records.append(EntityRecord(collection_id, entity_id, display_name, source_url, scrape_date))
    return sorted(records, key=lambda r: r.key)


def write_records(path, records: Iterable[EntityRecord]) -> None:
    rows = [
        {
            "collection_id": r.collection_id,
            "entity_id": r.entity_id,
            "display_name": r.display_name,
            "source_url": r.source_url or "",
            "scrape_date": r.scrape_date.isoformat() if r.scrape_date else "",
        }
        for r in sorted(records, key=lambda r: r.key)
    ]
    write_table(path, RECORD_COLUMNS, rows)


def prefilter_firms(records: Iterable[EntityRecord]) -> tuple[list[EntityRecord], list[EntityRecord]]:
    """Drop records whose display name contains a firm marker (case-insensitive)."""
    kept, dropped = [], []
    for record in records:
        name = record.display_name.lower()
        if any(marker in name for marker in FIRM_MARKERS):
            dropped.append(record)
        else:
            kept.append(record)
    return kept, dropped


# ---------------------------------------------------------------------------
# Responses

def _parse_confidence(raw: str) -> Optional[Confidence]:
    raw = raw.strip()
    if not raw:
        return None
    if raw in _CONFIDENCE_FROM_THIRDS:
        return _CONFIDENCE_FROM_THIRDS[raw]
    try:
        return Confidence(raw.lower())
    except ValueError:
        return None


def _parse_enum(enum_cls, raw: str, line_no: int, what: str):
    try:
        return enum_cls(raw.strip().lower())
    except ValueError as exc:
        raise MalformedRow(line_no, f"bad {what} value {raw!r}") from exc


def parse_responses(path) -> list[AnnotationResponse]:
    """Parse worker responses; answers lacking a confidence are treated as unanswered."""
    rows = read_table(path, RESPONSE_COLUMNS)
    responses = []
    for line_no, row in enumerate(rows, start=2):
        hit_id = (row.get("hit_id") or "").strip()
        worker_id = (row.get("worker_id") or "").strip()
        collection_id = (row.get("collection_id") or "").strip()
        entity_id = (row.get("entity_id") or "").strip()
        if not (hit_id and worker_id and collection_id and entity_id):
            raise MalformedRow(line_no, "hit_id, worker_id, collection_id, entity_id are required")
        try:
            duration = float(row.get("duration_secs") or 0.0)
        except ValueError as exc:
            raise MalformedRow(line_no, f"bad duration_secs {row.get('duration_secs')!r}") from exc
        if duration < 0:
            raise MalformedRow(line_no, "duration_secs must be >= 0")
        iia = _parse_enum(IIAAnswer, row.get("iia") or "", line_no, "iia")

        gender_answer = None
        raw_gender = (row.get("gender") or "").strip()
        if raw_gender:
            conf = _parse_confidence(row.get("gender_conf") or "")
            if conf is not None:
                category = _parse_enum(GenderCategory, raw_gender, line_no, "gender")
                gender_answer = GenderAnswer(category, conf)

        ethnicity_answer = None
        raw_eth = (row.get("ethnicities") or "").strip()
        raw_text = (row.get("ethnicity_text") or "").strip()
        if raw_eth or raw_text:
            conf = _parse_confidence(row.get("ethnicity_conf") or "")
            if conf is not None:
                categories = frozenset(
                    _parse_enum(EthnicityCategory, tok, line_no, "ethnicity")
                    for tok in raw_eth.split("|")
                    if tok.strip()
                )
                ethnicity_answer = EthnicityAnswer(categories, conf, raw_text or None)

        origin_answer = None
        raw_country = (row.get("country") or "").strip()
        if raw_country:
            conf = _parse_confidence(row.get("origin_conf") or "")
            if conf is not None:
                origin_answer = OriginAnswer(raw_country, conf)

        birth_answer = None
        raw_birth = (row.get("birth_year") or "").strip()
        if raw_birth:
            conf = _parse_confidence(row.get("birth_conf") or "")
            if conf is not None:
                birth_answer = BirthAnswer(raw_birth, conf)

        responses.append(
            AnnotationResponse(
                hit_id=hit_id,
                worker_id=worker_id,
                record_key=(collection_id, entity_id),
                duration_secs=duration,
                iia_answer=iia,
                gender_answer=gender_answer,
                ethnicity_answer=ethnicity_answer,
                origin_answer=origin_answer,
                birth_answer=birth_answer,
            )
        )
    return sorted(responses, key=_response_sort_key)


def write_responses(path, responses: Iterable[AnnotationResponse]) -> None:
    rows = []
    for r in sorted(responses, key=_response_sort_key):
        row = {
            "hit_id": r.hit_id,
            "worker_id": r.worker_id,
            "collection_id": r.record_key[0],
            "entity_id": r.record_key[1],
            "duration_secs": format(r.duration_secs, "g"),
            "iia": r.iia_answer.value,
            "gender": "", "gender_conf": "",
            "ethnicities": "", "ethnicity_text": "", "ethnicity_conf": "",
            "country": "", "origin_conf": "",
            "birth_year": "", "birth_conf": "",
        }
        if r.gender_answer:
            row["gender"] = r.gender_answer.category.value
            row["gender_conf"] = _THIRDS_FROM_CONFIDENCE[r.gender_answer.confidence]
        if r.ethnicity_answer:
            row["ethnicities"] = "|".join(sorted(c.value for c in r.ethnicity_answer.categories))
            row["ethnicity_text"] = r.ethnicity_answer.free_text or ""
            row["ethnicity_conf"] = _THIRDS_FROM_CONFIDENCE[r.ethnicity_answer.confidence]
        if r.origin_answer:
            row["country"] = r.origin_answer.country
            row["origin_conf"] = _THIRDS_FROM_CONFIDENCE[r.origin_answer.confidence]
        if r.birth_answer:
            row["birth_year"] = r.birth_answer.raw
            row["birth_conf"] = _THIRDS_FROM_CONFIDENCE[r.birth_answer.confidence]
        rows.append(row)
    write_table(path, RESPONSE_COLUMNS, rows)


def pool_responses(
    responses: Iterable[AnnotationResponse],
    records: Iterable[EntityRecord],
) -> ResponsePool:
    """Group responses per record key, merging duplicate deployments.

    Every record gets an entry (possibly empty); a response referencing a
    key absent from ``records`` raises OrphanResponse.  Output order is
    canonical, so pooling is invariant to input permutation.
    """
    known = {r.key for r in records}
    grouped: dict[RecordKey, list[AnnotationResponse]] = {key: [] for key in known}
    for response in responses:
        if response.record_key not in known:
            raise OrphanResponse(response.record_key)
        grouped[response.record_key].append(response)
    by_record = {}
    for key in sorted(grouped):
        seen = []
        for response in sorted(grouped[key], key=_response_sort_key):
            if response not in seen:  # exact duplicate rows collapse to one
                seen.append(response)
        by_record[key] = tuple(seen)
    return ResponsePool(by_record)
