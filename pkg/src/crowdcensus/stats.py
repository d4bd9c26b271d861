"""Proportion estimates, simultaneous intervals, outlier tests, sample plans.

Confidence intervals use the Wilson score construction.  Families of
intervals and of leave-one-out tests are Bonferroni-adjusted so the
familywise error rate stays at the requested alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from statistics import NormalDist
from typing import Iterable, Mapping, Optional, Sequence

from .consensus import (
    ATTRIBUTES,
    ETHNICITY_GROUPS,
    ConsensusInference,
    IIAVerdict,
    InferredGender,
)
from .errors import InvalidInput
from .ingest import EntityRecord, RecordKey
from .regions import REGION_ORDER, Region

_STD_NORMAL = NormalDist()


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF (rational approximation, <=1e-9 abs error)."""
    if not 0 < p < 1:
        raise InvalidInput(f"quantile argument must be in (0, 1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


# ---------------------------------------------------------------------------
# Wilson score intervals

@dataclass
class ProportionEstimate:
    group: str
    category: str
    k: int
    n: int
    p_hat: float
    ci_low: float
    ci_high: float
    alpha_effective: float


def wilson_ci(k: int, n: int, alpha: float) -> tuple[float, float]:
    """Wilson score interval for k successes in n trials.

    Endpoints are clamped to [0, 1]; the boundary cases k=0 and k=n pin
    the corresponding endpoint exactly.
    """
    if n < 1 or not 0 <= k <= n:
        raise InvalidInput(f"need 0 <= k <= n with n >= 1, got k={k} n={n}")
    if not 0 < alpha < 1:
        raise InvalidInput(f"alpha must be in (0, 1), got {alpha}")
    z = normal_quantile(1 - alpha / 2)
    p = k / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    low = 0.0 if k == 0 else max(0.0, center - half)
    high = 1.0 if k == n else min(1.0, center + half)
    return low, high


def proportion_estimate(group: str, category: str, k: int, n: int, alpha: float) -> ProportionEstimate:
    low, high = wilson_ci(k, n, alpha)
    return ProportionEstimate(group, category, k, n, k / n, low, high, alpha)


def simultaneous_cis(
    estimates: Sequence[ProportionEstimate], alpha: float
) -> list[ProportionEstimate]:
    """Recompute a family of intervals at alpha/m (Bonferroni)."""
    m = len(estimates)
    if m < 1:
        raise InvalidInput("family must contain at least one estimate")
    return [
        proportion_estimate(e.group, e.category, e.k, e.n, alpha / m) for e in estimates
    ]


# ---------------------------------------------------------------------------
# Leave-one-out outlier tests

class Direction(Enum):
    HIGHER = "higher"
    LOWER = "lower"
    NOT_SIGNIFICANT = "none"


@dataclass
class OutlierResult:
    group: str
    category: str
    direction: Direction
    p_raw: float
    p_adjusted: float
    pool_proportion: float
    note: str = ""


def two_proportion_z(k1: int, n1: int, k2: int, n2: int, pooled: bool = True) -> tuple[float, float]:
    """Two-sided z-test for p1 - p2; returns (z, p_value).

    With pooled=True the variance uses the pooled proportion; otherwise the
    unpooled (Wald) variance.  Degenerate variance yields z=0, p=1.
    """
    p1, p2 = k1 / n1, k2 / n2
    if pooled:
        p = (k1 + k2) / (n1 + n2)
        var = p * (1 - p) * (1 / n1 + 1 / n2)
    else:
        var = p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2
    if var <= 0:
        return 0.0, 1.0
    z = (p1 - p2) / math.sqrt(var)
    p_value = math.erfc(abs(z) / math.sqrt(2))
    return z, p_value


def leave_one_out_tests(
    counts: Mapping[str, tuple[int, int]],
    category: str,
    alpha: float,
    pooled: bool = True,
) -> list[OutlierResult]:
    """Test each group's proportion against the pool excluding that group.

    counts maps group -> (k, n) for one category.  Raw two-sided p-values
    are Bonferroni-adjusted by the number of groups; direction is reported
    only for significant results.
    """
    groups = sorted(counts)
    if len(groups) < 2:
        raise InvalidInput("leave-one-out tests need at least two groups")
    for g in groups:
        if counts[g][1] < 1:
            raise InvalidInput(f"group {g!r} has no trials")
    total_k = sum(counts[g][0] for g in groups)
    total_n = sum(counts[g][1] for g in groups)
    m = len(groups)
    results = []
    for g in groups:
        k, n = counts[g]
        rest_k, rest_n = total_k - k, total_n - n
        if rest_n == 0:
            raise InvalidInput("a single group cannot be compared to an empty pool")
        rest_p = rest_k / rest_n
        pool_p = (k + rest_k) / (n + rest_n)
        if pool_p in (0.0, 1.0):
            results.append(
                OutlierResult(g, category, Direction.NOT_SIGNIFICANT, 1.0, 1.0, rest_p,
                              note="degenerate pooled proportion")
            )
            continue
        _, p_raw = two_proportion_z(k, n, rest_k, rest_n, pooled=pooled)
        p_adj = min(1.0, p_raw * m)
        if p_adj < alpha:
            direction = Direction.HIGHER if k / n > rest_p else Direction.LOWER
        else:
            direction = Direction.NOT_SIGNIFICANT
        results.append(OutlierResult(g, category, direction, p_raw, p_adj, rest_p))
    return results


# ---------------------------------------------------------------------------
# Sample-size planning

@dataclass
class PilotSummary:
    """Stage-1 outcome for one group: draw size and usable-record rate."""

    stage1_draw: int
    iia_rate: float
    proportion: Optional[float] = None  # worst case 0.5 when absent
    group: str = ""


@dataclass
class SamplePlan:
    group: str
    target_moe: float
    confidence: float
    pilot_iia_rate: float
    pilot_proportion: float
    required_iia: int
    required_raw: int
    stage2_draw: int

    def as_dict(self) -> dict:
        return {
            "group": self.group,
            "target_moe": self.target_moe,
            "confidence": self.confidence,
            "pilot_iia_rate": self.pilot_iia_rate,
            "pilot_proportion": self.pilot_proportion,
            "required_iia": self.required_iia,
            "required_raw": self.required_raw,
            "stage2_draw": self.stage2_draw,
        }


def plan_sample(pilot: PilotSummary, target_moe: float, confidence: float) -> SamplePlan:
    """Required sample for a target margin of error, inflated by the IIA rate.

    required_iia = ceil(z^2 p (1-p) / moe^2); required_raw inflates by the
    pilot IIA yield; stage-2 is whatever stage 1 has not already drawn.
    """
    if not 0 < pilot.iia_rate <= 1:
        raise InvalidInput(f"iia_rate must be in (0, 1], got {pilot.iia_rate}")
    if not 0 < target_moe < 0.5:
        raise InvalidInput(f"target_moe must be in (0, 0.5), got {target_moe}")
    if not 0 < confidence < 1:
        raise InvalidInput(f"confidence must be in (0, 1), got {confidence}")
    if pilot.stage1_draw < 0:
        raise InvalidInput("stage1_draw must be >= 0")
    p = 0.5 if pilot.proportion is None else pilot.proportion
    if not 0 < p < 1:
        raise InvalidInput(f"pilot proportion must be in (0, 1), got {p}")
    z = normal_quantile(1 - (1 - confidence) / 2)
    required_iia = math.ceil(z * z * p * (1 - p) / (target_moe * target_moe))
    required_raw = math.ceil(required_iia / pilot.iia_rate)
    stage2 = max(0, required_raw - pilot.stage1_draw)
    return SamplePlan(
        group=pilot.group,
        target_moe=target_moe,
        confidence=confidence,
        pilot_iia_rate=pilot.iia_rate,
        pilot_proportion=p,
        required_iia=required_iia,
        required_raw=required_raw,
        stage2_draw=stage2,
    )


# ---------------------------------------------------------------------------
# Demographic and mission tables

GENDER_CATEGORY = "woman"
DIVERSITY_CATEGORIES = (GENDER_CATEGORY,) + tuple(g.value for g in ETHNICITY_GROUPS)


@dataclass
class TableRow:
    group: str
    category: str
    estimate: ProportionEstimate
    flag: Direction = Direction.NOT_SIGNIFICANT


@dataclass
class DemographicTable:
    """Per-group and pooled category proportions with outlier flags."""

    rows: list[TableRow] = field(default_factory=list)
    outliers: list[OutlierResult] = field(default_factory=list)
    family_size: int = 0
    alpha: float = 0.05

    def row(self, group: str, category: str) -> Optional[TableRow]:
        for r in self.rows:
            if r.group == group and r.category == category:
                return r
        return None


def _attribute_value(inference: ConsensusInference, exclude_repaired: bool, attribute: str):
    if exclude_repaired and attribute in inference.repaired:
        return None
    return inference.value_of(attribute)


def gender_counts(
    inferences: Sequence[ConsensusInference], exclude_repaired: bool = False
) -> dict[str, tuple[int, int]]:
    """Per-collection (women, confident-gender) counts."""
    out: dict[str, list[int]] = {}
    for inf in inferences:
        value = _attribute_value(inf, exclude_repaired, "gender")
        if value is None:
            continue
        cell = out.setdefault(inf.record_key[0], [0, 0])
        cell[1] += 1
        if value == InferredGender.WOMAN.value:
            cell[0] += 1
    return {g: (k, n) for g, (k, n) in out.items()}


def ethnicity_counts(
    inferences: Sequence[ConsensusInference], exclude_repaired: bool = False
) -> dict[str, dict[str, int]]:
    """Per-collection counts per analysis category (exclusion sentinel omitted)."""
    out: dict[str, dict[str, int]] = {}
    for inf in inferences:
        value = _attribute_value(inf, exclude_repaired, "ethnicity")
        if value is None:
            continue
        cell = out.setdefault(inf.record_key[0], {g.value: 0 for g in ETHNICITY_GROUPS})
        cell[value] += 1
    return out


def unique_entities(
    inferences: Sequence[ConsensusInference],
    identity_groups: Mapping[str, Sequence[RecordKey]],
) -> list[list[ConsensusInference]]:
    """Partition inferences into unique entities via the reconcile links.

    Records absent from every link group are singleton entities.
    """
    by_key = {inf.record_key: inf for inf in inferences}
    grouped_keys: set[RecordKey] = set()
    entities = []
    for ident in sorted(identity_groups):
        members = [by_key[k] for k in identity_groups[ident] if k in by_key]
        if members:
            entities.append(members)
            grouped_keys.update(m.record_key for m in members)
    for inf in inferences:
        if inf.record_key not in grouped_keys:
            entities.append([inf])
    return entities


def _entity_value(members: Sequence[ConsensusInference], attribute: str, exclude_repaired: bool):
    """Unique confident value for an entity, or None when absent or conflicting."""
    values = set()
    for m in members:
        v = _attribute_value(m, exclude_repaired, attribute)
        if v is not None:
            values.add(v)
    if len(values) == 1:
        return values.pop()
    return None


def pooled_unique_counts(
    inferences: Sequence[ConsensusInference],
    identity_groups: Mapping[str, Sequence[RecordKey]],
    exclude_repaired: bool = False,
) -> dict[str, tuple[int, int]]:
    """Overall (k, n) per diversity category counting duplicate entities once."""
    entities = unique_entities(
        [inf for inf in inferences if inf.iia is IIAVerdict.IIA], identity_groups
    )
    counts = {category: 0 for category in DIVERSITY_CATEGORIES}
    n_gender = 0
    n_ethnicity = 0
    for members in entities:
        gender = _entity_value(members, "gender", exclude_repaired)
        if gender is not None:
            n_gender += 1
            if gender == InferredGender.WOMAN.value:
                counts[GENDER_CATEGORY] += 1
        ethnicity = _entity_value(members, "ethnicity", exclude_repaired)
        if ethnicity is not None:
            n_ethnicity += 1
            counts[ethnicity] += 1
    out = {GENDER_CATEGORY: (counts[GENDER_CATEGORY], n_gender)}
    for g in ETHNICITY_GROUPS:
        out[g.value] = (counts[g.value], n_ethnicity)
    return out


OVERALL_GROUP = "overall"


def demographic_table(
    inferences: Sequence[ConsensusInference],
    identity_groups: Mapping[str, Sequence[RecordKey]],
    alpha: float = 0.05,
    family_size: Optional[int] = None,
    pooled_variance: bool = True,
    exclude_repaired: bool = False,
) -> DemographicTable:
    """Diversity table: per-group rows with simultaneous CIs and outlier flags.

    Per-group intervals within one category form a Bonferroni family (size
    defaults to the number of groups); the overall row pools unique
    entities and is reported unadjusted at alpha.
    """
    g_counts = gender_counts(inferences, exclude_repaired)
    e_counts = ethnicity_counts(inferences, exclude_repaired)
    groups = sorted(set(g_counts) | set(e_counts))
    m = family_size if family_size else max(1, len(groups))
    table = DemographicTable(family_size=m, alpha=alpha)

    def add_category(category: str, per_group: dict[str, tuple[int, int]]):
        estimates = {
            g: proportion_estimate(g, category, k, n, alpha / m)
            for g, (k, n) in sorted(per_group.items()) if n > 0
        }
        flags = {}
        if len(estimates) >= 2:
            loo_counts = {g: (e.k, e.n) for g, e in estimates.items()}
            for result in leave_one_out_tests(loo_counts, category, alpha, pooled=pooled_variance):
                table.outliers.append(result)
                flags[result.group] = result.direction
        for g, est in estimates.items():
            table.rows.append(TableRow(g, category, est, flags.get(g, Direction.NOT_SIGNIFICANT)))

    add_category(GENDER_CATEGORY, g_counts)
    for group_enum in ETHNICITY_GROUPS:
        category = group_enum.value
        per_group = {
            g: (cells[category], sum(cells.values())) for g, cells in e_counts.items()
        }
        add_category(category, per_group)

    for category, (k, n) in pooled_unique_counts(inferences, identity_groups, exclude_repaired).items():
        if n > 0:
            est = proportion_estimate(OVERALL_GROUP, category, k, n, alpha)
            table.rows.append(TableRow(OVERALL_GROUP, category, est))
    return table


@dataclass
class MissionRow:
    """Per-group region proportions plus the average birth year."""

    group: str
    region_proportions: dict  # region value -> float in [0, 1]
    avg_birth_year: float
    n_region: int = 0
    n_birth: int = 0


def mission_table(
    inferences: Sequence[ConsensusInference],
    records: Sequence[EntityRecord],
    exclude_repaired: bool = False,
) -> list[MissionRow]:
    """Collection-mission profile: region mix and mean decade-rounded birth year.

    Within each collection duplicate display names count once (first record
    key wins); the year average runs over confident birth decades.
    """
    from .reconcile import identity_key

    names = {r.key: r.display_name for r in records}
    seen: set[tuple[str, str]] = set()
    region_cells: dict[str, dict[str, int]] = {}
    year_cells: dict[str, list[int]] = {}
    for inf in sorted(inferences, key=lambda i: i.record_key):
        if inf.iia is not IIAVerdict.IIA:
            continue
        group = inf.record_key[0]
        name = names.get(inf.record_key)
        dedupe = (group, identity_key(name)) if name else (group, "/".join(inf.record_key))
        if dedupe in seen:
            continue
        seen.add(dedupe)
        region = _attribute_value(inf, exclude_repaired, "region")
        if region is not None:
            cell = region_cells.setdefault(group, {r.value: 0 for r in REGION_ORDER})
            cell[region] += 1
        decade = _attribute_value(inf, exclude_repaired, "birth_decade")
        if decade is not None:
            year_cells.setdefault(group, []).append(int(decade))
    rows = []
    for group in sorted(set(region_cells) | set(year_cells)):
        regions = region_cells.get(group, {r.value: 0 for r in REGION_ORDER})
        n_region = sum(regions.values())
        years = year_cells.get(group, [])
        rows.append(
            MissionRow(
                group=group,
                region_proportions={
                    r: (k / n_region if n_region else 0.0) for r, k in regions.items()
                },
                avg_birth_year=(sum(years) / len(years)) if years else 0.0,
                n_region=n_region,
                n_birth=len(years),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Serialization

STATS_COLUMNS = [
    "group", "category", "k", "n", "percent", "ci_low", "ci_high",
    "alpha_effective", "flag",
]


def table_rows_for_csv(table: DemographicTable) -> list[dict]:
    rows = []
    for r in table.rows:
        e = r.estimate
        rows.append({
            "group": r.group,
            "category": r.category,
            "k": e.k,
            "n": e.n,
            "percent": f"{100 * e.p_hat:.1f}",
            "ci_low": f"{100 * e.ci_low:.1f}",
            "ci_high": f"{100 * e.ci_high:.1f}",
            "alpha_effective": f"{e.alpha_effective:.6g}",
            "flag": r.flag.value,
        })
    return rows


def table_as_dict(table: DemographicTable) -> dict:
    return {
        "alpha": table.alpha,
        "family_size": table.family_size,
        "rows": table_rows_for_csv(table),
        "outliers": [
            {
                "group": o.group,
                "category": o.category,
                "direction": o.direction.value,
                "p_raw": o.p_raw,
                "p_adjusted": o.p_adjusted,
                "pool_proportion": o.pool_proportion,
                "note": o.note,
            }
            for o in table.outliers
        ],
    }
