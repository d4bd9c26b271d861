"""Confidence-weighted consensus inference over pooled responses.

Per record: an individual-identifiable-artist (IIA) verdict by majority
vote, then optional gender, ethnicity, region, and birth-decade
inferences.  All scores are exact rationals; floats appear only at
presentation time.

Score conventions:
  gender     mean of (-1 for man, +1 for woman) x confidence weight, in [-1, 1];
             inferred when |score| >= gender_threshold (inclusive).
  ethnicity  per-category mean of weight x selection indicator, in [0, 1];
             inferred when score > ethnicity_threshold (strict).
  region     like ethnicity over GEO3 regions; inferred when
             score >= region_threshold (inclusive).
  birth      unweighted z-filter, then a confidence-weighted mean year
             rounded to the nearest decade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .config import DECADE_HALF_UP, CampaignConfig
from .errors import NoUsableResponses
from .ingest import (
    AnnotationResponse,
    EthnicityCategory,
    GenderCategory,
    IIAAnswer,
    RecordKey,
    ResponsePool,
)
from .regions import Region, RegionMap


class IIAVerdict(Enum):
    IIA = "iia"
    NON_IIA = "non_iia"
    UNDETERMINED = "undetermined"


class InferredGender(Enum):
    MAN = "man"
    WOMAN = "woman"


class EthnicityGroup(Enum):
    """Five analysis categories, plus a sentinel for multi-category records."""

    ASIAN = "asian"
    BLACK = "black_african_american"
    HISPANIC = "hispanic_latinx"
    WHITE = "white"
    OTHER = "other"
    MULTIPLE_EXCLUDED = "multiple_excluded"


ETHNICITY_GROUPS = (
    EthnicityGroup.ASIAN,
    EthnicityGroup.BLACK,
    EthnicityGroup.HISPANIC,
    EthnicityGroup.WHITE,
    EthnicityGroup.OTHER,
)

# Rare census categories collapse into "other" for analysis.
COLLAPSE = {
    EthnicityCategory.ASIAN: EthnicityGroup.ASIAN,
    EthnicityCategory.BLACK: EthnicityGroup.BLACK,
    EthnicityCategory.HISPANIC: EthnicityGroup.HISPANIC,
    EthnicityCategory.WHITE: EthnicityGroup.WHITE,
    EthnicityCategory.AMERICAN_INDIAN: EthnicityGroup.OTHER,
    EthnicityCategory.PACIFIC_ISLANDER: EthnicityGroup.OTHER,
    EthnicityCategory.MIDDLE_EASTERN: EthnicityGroup.OTHER,
}

GENDER_VALUE = {GenderCategory.MAN: -1, GenderCategory.WOMAN: +1}


@dataclass
class ConsensusInference:
    """Final inferences for one record; support counts per attribute.

    n_gender / n_ethnicity / n_region / n_birth count the usable responses
    for that attribute (for birth: responses surviving the outlier filter).
    """

    record_key: RecordKey
    iia: IIAVerdict
    n_responses: int = 0
    gender: Optional[InferredGender] = None
    gender_score: Optional[Fraction] = None
    n_gender: int = 0
    ethnicity: Optional[EthnicityGroup] = None
    ethnicity_scores: dict = field(default_factory=dict)
    n_ethnicity: int = 0
    region: Optional[Region] = None
    region_score: Optional[Fraction] = None
    n_region: int = 0
    birth_decade: Optional[int] = None
    n_birth: int = 0
    repaired: frozenset = frozenset()

    def value_of(self, attribute: str):
        """Canonical string value of an attribute, or None when not inferred."""
        if attribute == "gender":
            return self.gender.value if self.gender else None
        if attribute == "ethnicity":
            if self.ethnicity is None or self.ethnicity is EthnicityGroup.MULTIPLE_EXCLUDED:
                return None
            return self.ethnicity.value
        if attribute == "region":
            return self.region.value if self.region else None
        if attribute == "birth_decade":
            return str(self.birth_decade) if self.birth_decade is not None else None
        raise KeyError(attribute)


ATTRIBUTES = ("gender", "ethnicity", "region", "birth_decade")


# ---------------------------------------------------------------------------
# IIA

def infer_iia(
    responses: Sequence[AnnotationResponse],
    config: CampaignConfig,
) -> tuple[IIAVerdict, list[AnnotationResponse]]:
    """Majority-vote IIA verdict; dissenting responses are dropped.

    IIA requires at least min_support responses and a strict majority of
    Yes answers (an exact tie is NON_IIA).  When the verdict is IIA, the
    retained list excludes responses answering No; otherwise nothing flows
    downstream and the retained list is empty.
    """
    responses = list(responses)
    if len(responses) < config.min_support:
        return IIAVerdict.UNDETERMINED, []
    yes = sum(1 for r in responses if r.iia_answer is IIAAnswer.YES)
    if 2 * yes > len(responses):
        retained = [r for r in responses if r.iia_answer is not IIAAnswer.NO]
        return IIAVerdict.IIA, retained
    return IIAVerdict.NON_IIA, []


# ---------------------------------------------------------------------------
# Gender

def usable_gender_answers(responses: Iterable[AnnotationResponse]):
    """Gender answers that carry a vote: man or woman only.

    Nonbinary, unknown, and not-IIA answers are excluded from scoring, as
    are responses that skipped the question.
    """
    out = []
    for r in responses:
        a = r.gender_answer
        if a is not None and a.category in GENDER_VALUE:
            out.append(a)
    return out


def gender_score(responses: Sequence[AnnotationResponse], config: CampaignConfig) -> Fraction:
    """Mean of value x confidence weight over usable answers, in [-1, 1]."""
    answers = usable_gender_answers(responses)
    if not answers:
        raise NoUsableResponses("no usable gender answers")
    total = sum(
        GENDER_VALUE[a.category] * config.weight(a.confidence.value) for a in answers
    )
    return Fraction(total, 1) / len(answers)


def infer_gender(
    responses: Sequence[AnnotationResponse], config: CampaignConfig
) -> Optional[InferredGender]:
    answers = usable_gender_answers(responses)
    if len(answers) < config.min_support:
        return None
    score = gender_score(responses, config)
    if score <= -config.gender_threshold:
        return InferredGender.MAN
    if score >= config.gender_threshold:
        return InferredGender.WOMAN
    return None


# ---------------------------------------------------------------------------
# Ethnicity

def ethnicity_scores(
    responses: Sequence[AnnotationResponse], config: CampaignConfig
) -> tuple[dict, dict, int]:
    """Per-group (scores, selection counts, n) over category-selecting responses.

    Free-text entries never contribute; a response that offered only free
    text is not counted in n.  Selecting several raw categories that
    collapse to the same group counts once for that group.
    """
    votes = []
    for r in responses:
        a = r.ethnicity_answer
        if a is None or not a.categories:
            continue
        groups = frozenset(COLLAPSE[c] for c in a.categories)
        votes.append((groups, config.weight(a.confidence.value)))
    n = len(votes)
    scores = {g: Fraction(0) for g in ETHNICITY_GROUPS}
    counts = {g: 0 for g in ETHNICITY_GROUPS}
    for groups, weight in votes:
        for g in groups:
            scores[g] += weight
            counts[g] += 1
    if n:
        scores = {g: s / n for g, s in scores.items()}
    return scores, counts, n


def infer_ethnicity(
    responses: Sequence[AnnotationResponse], config: CampaignConfig
) -> Optional[EthnicityGroup]:
    """Single qualifying group, or MULTIPLE_EXCLUDED when two or more qualify.

    A group qualifies when its score strictly exceeds the threshold and at
    least min_support responses selected it.
    """
    scores, counts, n = ethnicity_scores(responses, config)
    if n == 0:
        return None
    qualifying = [
        g for g in ETHNICITY_GROUPS
        if scores[g] > config.ethnicity_threshold and counts[g] >= config.min_support
    ]
    if not qualifying:
        return None
    if len(qualifying) > 1:
        return EthnicityGroup.MULTIPLE_EXCLUDED
    return qualifying[0]


# ---------------------------------------------------------------------------
# Region

def region_scores(
    responses: Sequence[AnnotationResponse],
    region_map: RegionMap,
    config: CampaignConfig,
) -> tuple[dict, dict, int, list[str]]:
    """Per-region (scores, counts, n, unresolved country names).

    Countries missing from the region map are excluded from n and reported
    back to the caller instead of aborting the record.
    """
    votes = []
    unknown = []
    for r in responses:
        a = r.origin_answer
        if a is None:
            continue
        region = region_map.get(a.country)
        if region is None:
            unknown.append(a.country)
            continue
        votes.append((region, config.weight(a.confidence.value)))
    n = len(votes)
    scores = {region: Fraction(0) for region in Region}
    counts = {region: 0 for region in Region}
    for region, weight in votes:
        scores[region] += weight
        counts[region] += 1
    if n:
        scores = {region: s / n for region, s in scores.items()}
    return scores, counts, n, unknown


def infer_region(
    responses: Sequence[AnnotationResponse],
    region_map: RegionMap,
    config: CampaignConfig,
) -> Optional[Region]:
    scores, counts, n, _ = region_scores(responses, region_map, config)
    if n == 0:
        return None
    qualifying = [
        region for region in Region
        if scores[region] >= config.region_threshold and counts[region] >= config.min_support
    ]
    if not qualifying:
        return None
    # With the default 0.8 threshold at most one region can qualify; under a
    # permissive threshold take the best-scoring one, ties by region name.
    return max(qualifying, key=lambda region: (scores[region], region.value))


# ---------------------------------------------------------------------------
# Birth decade

def parse_birth_year(raw: str) -> Optional[int]:
    """Accept only plain 3- or 4-digit integers."""
    text = raw.strip()
    if text.isdigit() and 3 <= len(text) <= 4:
        return int(text)
    return None


def round_to_decade(year: Fraction, mode: str) -> int:
    """Round to the nearest multiple of 10; ties go down unless mode is half-up."""
    if mode == DECADE_HALF_UP:
        return 10 * math.floor((year + 5) / 10)
    return 10 * math.ceil((year - 5) / 10)


def _zfilter_years(years: Sequence[tuple[int, Fraction]], config: CampaignConfig):
    """Drop outliers by |z| > z_cut unless within typo tolerance of the mean.

    The z-score uses the unweighted mean and population standard deviation;
    with fewer than three years or zero variance nothing is dropped.  All
    comparisons are exact: |z| > c is tested as (y - mean)^2 > c^2 * var.
    """
    n = len(years)
    if n <= 2:
        return list(years)
    mean = Fraction(sum(y for y, _ in years), n)
    var = sum((Fraction(y) - mean) ** 2 for y, _ in years) / n
    if var == 0:
        return list(years)
    kept = []
    for y, w in years:
        dev = Fraction(y) - mean
        if dev * dev > config.z_cut ** 2 * var and abs(dev) > config.typo_tolerance_years:
            continue
        kept.append((y, w))
    return kept


def infer_birth_decade(
    responses: Sequence[AnnotationResponse], config: CampaignConfig
) -> Optional[int]:
    years = []
    for r in responses:
        a = r.birth_answer
        if a is None:
            continue
        year = parse_birth_year(a.raw)
        if year is not None:
            years.append((year, config.weight(a.confidence.value)))
    kept = _zfilter_years(years, config)
    if len(kept) < config.min_support:
        return None
    weighted = sum(Fraction(y) * w for y, w in kept) / sum(w for _, w in kept)
    return round_to_decade(weighted, config.decade_rounding)


def surviving_birth_years(
    responses: Sequence[AnnotationResponse], config: CampaignConfig
) -> int:
    """Count of parsed years remaining after the outlier filter."""
    years = []
    for r in responses:
        a = r.birth_answer
        if a is None:
            continue
        year = parse_birth_year(a.raw)
        if year is not None:
            years.append((year, config.weight(a.confidence.value)))
    return len(_zfilter_years(years, config))


# ---------------------------------------------------------------------------
# Whole-record and whole-pool drivers

@dataclass
class CoverageTally:
    """Per-collection counts mirroring the coverage table layout."""

    sampled: int = 0
    iia: int = 0
    cgi: int = 0
    cei: int = 0
    cri: int = 0
    cbi: int = 0

    def add(self, other: "CoverageTally") -> None:
        self.sampled += other.sampled
        self.iia += other.iia
        self.cgi += other.cgi
        self.cei += other.cei
        self.cri += other.cri
        self.cbi += other.cbi


@dataclass
class ConsensusResult:
    inferences: list[ConsensusInference]
    tallies: dict[str, CoverageTally]
    diagnostics: dict

    def overall_tally(self) -> CoverageTally:
        total = CoverageTally()
        for tally in self.tallies.values():
            total.add(tally)
        return total


def infer_record(
    record_key: RecordKey,
    responses: Sequence[AnnotationResponse],
    region_map: RegionMap,
    config: CampaignConfig,
) -> tuple[ConsensusInference, list[str]]:
    """Run the full per-record pipeline: IIA verdict, then four attributes."""
    verdict, retained = infer_iia(responses, config)
    inference = ConsensusInference(record_key=record_key, iia=verdict, n_responses=len(responses))
    notes: list[str] = []
    if verdict is not IIAVerdict.IIA:
        return inference, notes

    answers = usable_gender_answers(retained)
    inference.n_gender = len(answers)
    if answers:
        inference.gender_score = gender_score(retained, config)
    inference.gender = infer_gender(retained, config)

    scores, _, n_eth = ethnicity_scores(retained, config)
    inference.n_ethnicity = n_eth
    inference.ethnicity_scores = {g.value: scores[g] for g in ETHNICITY_GROUPS} if n_eth else {}
    inference.ethnicity = infer_ethnicity(retained, config)
    if inference.ethnicity is EthnicityGroup.MULTIPLE_EXCLUDED:
        notes.append("ethnicity: multiple categories qualified; record excluded")

    r_scores, _, n_reg, unknown = region_scores(retained, region_map, config)
    inference.n_region = n_reg
    inference.region = infer_region(retained, region_map, config)
    if inference.region is not None:
        inference.region_score = r_scores[inference.region]
    for name in unknown:
        notes.append(f"region: unknown country {name!r}")

    inference.n_birth = surviving_birth_years(retained, config)
    inference.birth_decade = infer_birth_decade(retained, config)
    return inference, notes


def run_consensus(
    pool: ResponsePool,
    region_map: RegionMap,
    config: CampaignConfig,
) -> ConsensusResult:
    """Infer every record in the pool and tally per-collection coverage."""
    inferences = []
    tallies: dict[str, CoverageTally] = {}
    per_record_notes: dict[str, list[str]] = {}
    unknown_countries: dict[str, int] = {}
    for key in pool.record_keys():
        inference, notes = infer_record(key, pool.by_record[key], region_map, config)
        inferences.append(inference)
        if notes:
            per_record_notes["/".join(key)] = notes
            for note in notes:
                if note.startswith("region: unknown country"):
                    name = note.split("'")[1]
                    unknown_countries[name] = unknown_countries.get(name, 0) + 1
        tally = tallies.setdefault(key[0], CoverageTally())
        tally.sampled += 1
        if inference.iia is IIAVerdict.IIA:
            tally.iia += 1
            tally.cgi += inference.gender is not None
            tally.cei += inference.ethnicity in ETHNICITY_GROUPS
            tally.cri += inference.region is not None
            tally.cbi += inference.birth_decade is not None
    diagnostics = {
        "records_with_notes": per_record_notes,
        "unknown_countries": dict(sorted(unknown_countries.items())),
    }
    return ConsensusResult(inferences, dict(sorted(tallies.items())), diagnostics)


# ---------------------------------------------------------------------------
# Inference table IO

INFERENCE_COLUMNS = [
    "collection_id", "entity_id", "iia", "gender", "gender_score", "ethnicity",
    "region", "birth_decade", "n_gender", "n_ethnicity", "n_region", "n_birth",
]


def format_score(score: Optional[Fraction]) -> str:
    """Presentation-time rounding of an exact score."""
    if score is None:
        return ""
    return f"{float(score):.6f}"


def write_inferences(path, inferences: Iterable[ConsensusInference]) -> None:
    from .ingest import write_table

    rows = []
    for inf in sorted(inferences, key=lambda i: i.record_key):
        rows.append({
            "collection_id": inf.record_key[0],
            "entity_id": inf.record_key[1],
            "iia": inf.iia.value,
            "gender": inf.gender.value if inf.gender else "",
            "gender_score": format_score(inf.gender_score),
            "ethnicity": inf.ethnicity.value if inf.ethnicity else "",
            "region": inf.region.value if inf.region else "",
            "birth_decade": inf.birth_decade if inf.birth_decade is not None else "",
            "n_gender": inf.n_gender,
            "n_ethnicity": inf.n_ethnicity,
            "n_region": inf.n_region,
            "n_birth": inf.n_birth,
        })
    write_table(path, INFERENCE_COLUMNS, rows)


def read_inferences(path) -> list[ConsensusInference]:
    from .ingest import read_table

    rows = read_table(path, INFERENCE_COLUMNS)
    inferences = []
    for row in rows:
        inf = ConsensusInference(
            record_key=(row["collection_id"], row["entity_id"]),
            iia=IIAVerdict(row["iia"]),
        )
        if row.get("gender"):
            inf.gender = InferredGender(row["gender"])
        if row.get("gender_score"):
            inf.gender_score = Fraction(row["gender_score"])
        if row.get("ethnicity"):
            inf.ethnicity = EthnicityGroup(row["ethnicity"])
        if row.get("region"):
            inf.region = Region(row["region"])
        if row.get("birth_decade"):
            inf.birth_decade = int(row["birth_decade"])
        for name in ("n_gender", "n_ethnicity", "n_region", "n_birth"):
            setattr(inf, name, int(row.get(name) or 0))
        inferences.append(inf)
    return inferences
