"""Cross-collection consistency checks, manual repairs, and reference comparison.

Entities are linked by exact name match after normalization (Unicode NFC,
trimmed, internal whitespace collapsed, case-folded); no fuzzy matching.
Repairs are proposals only until explicitly approved and applied.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .consensus import ATTRIBUTES, ConsensusInference, EthnicityGroup, IIAVerdict, InferredGender
from .errors import InvalidInput, UnknownRepairTarget
from .ingest import EntityRecord, RecordKey, read_table, write_table
from .regions import Region


def identity_key(display_name: str) -> str:
    """Exact-match identity: NFC, trim, collapse whitespace, casefold."""
    text = unicodedata.normalize("NFC", display_name)
    return " ".join(text.split()).casefold()


class ConsistencyStatus(Enum):
    CONSISTENT = "consistent"
    CONFLICT = "conflict"
    PARTIAL_MISSING = "partial_missing"


@dataclass(frozen=True)
class Repair:
    record_key: RecordKey
    attribute: str
    new_value: str
    reason: str


@dataclass
class AttributeFinding:
    identity: str
    attribute: str
    status: ConsistencyStatus
    values: dict  # record_key -> value string or None
    proposal: Optional[Repair] = None


@dataclass
class ConsistencyReport:
    findings: list[AttributeFinding] = field(default_factory=list)

    def proposals(self) -> list[Repair]:
        return [f.proposal for f in self.findings if f.proposal is not None]

    def by_status(self, status: ConsistencyStatus) -> list[AttributeFinding]:
        return [f for f in self.findings if f.status is status]

    def as_dict(self) -> dict:
        return {
            "findings": [
                {
                    "identity": f.identity,
                    "attribute": f.attribute,
                    "status": f.status.value,
                    "values": {"/".join(k): v for k, v in sorted(f.values.items())},
                    "proposal": (
                        {
                            "collection_id": f.proposal.record_key[0],
                            "entity_id": f.proposal.record_key[1],
                            "attribute": f.proposal.attribute,
                            "new_value": f.proposal.new_value,
                            "reason": f.proposal.reason,
                        }
                        if f.proposal
                        else None
                    ),
                }
                for f in self.findings
            ]
        }


def link_duplicates(
    inferences: Sequence[ConsensusInference],
    records: Sequence[EntityRecord],
) -> dict[str, list[RecordKey]]:
    """Group record keys sharing a normalized name; singletons are omitted."""
    names = {r.key: r.display_name for r in records}
    groups: dict[str, list[RecordKey]] = {}
    for inf in inferences:
        name = names.get(inf.record_key)
        if name is None:
            continue
        groups.setdefault(identity_key(name), []).append(inf.record_key)
    return {
        ident: sorted(keys)
        for ident, keys in sorted(groups.items())
        if len(keys) >= 2
    }


def check_consistency(
    groups: Mapping[str, Sequence[RecordKey]],
    inferences: Sequence[ConsensusInference],
) -> ConsistencyReport:
    """Classify each linked group per attribute and propose fill-ins.

    Only records with an IIA verdict participate; a missing value means an
    IIA record without a confident inference (a multi-category ethnicity
    exclusion counts as missing).  Conflict takes precedence over
    PartialMissing when both distinct values and gaps are present.
    """
    by_key = {inf.record_key: inf for inf in inferences}
    report = ConsistencyReport()
    for ident, keys in sorted(groups.items()):
        members = [by_key[k] for k in keys if k in by_key and by_key[k].iia is IIAVerdict.IIA]
        if len(members) < 2:
            continue
        for attribute in ATTRIBUTES:
            values = {m.record_key: m.value_of(attribute) for m in members}
            present = [v for v in values.values() if v is not None]
            distinct = sorted(set(present))
            missing = [k for k, v in values.items() if v is None]
            if len(distinct) >= 2:
                status = ConsistencyStatus.CONFLICT
            elif present and missing:
                status = ConsistencyStatus.PARTIAL_MISSING
            else:
                status = ConsistencyStatus.CONSISTENT
            if status is ConsistencyStatus.CONSISTENT:
                continue
            if status is ConsistencyStatus.PARTIAL_MISSING:
                # One proposal per gap so every missing slot can be approved.
                reason = f"fill-missing from {len(present)} consistent sibling inference(s)"
                for gap in missing:
                    report.findings.append(
                        AttributeFinding(
                            ident, attribute, status, values,
                            Repair(gap, attribute, distinct[0], reason),
                        )
                    )
            else:
                report.findings.append(AttributeFinding(ident, attribute, status, values))
    return report


def _parse_attribute_value(attribute: str, raw: str):
    raw = raw.strip()
    if attribute == "gender":
        return InferredGender(raw.lower())
    if attribute == "ethnicity":
        group = EthnicityGroup(raw.lower())
        if group is EthnicityGroup.MULTIPLE_EXCLUDED:
            raise InvalidInput("cannot repair ethnicity to the exclusion sentinel")
        return group
    if attribute == "region":
        return Region(raw)
    if attribute == "birth_decade":
        decade = int(raw)
        if decade % 10 != 0:
            raise InvalidInput(f"birth_decade must be a multiple of 10, got {decade}")
        return decade
    raise InvalidInput(f"unknown attribute {attribute!r}")


def apply_repairs(
    inferences: Sequence[ConsensusInference],
    repairs: Sequence[Repair],
) -> tuple[list[ConsensusInference], list[dict]]:
    """Apply approved repairs; everything outside the approved set is untouched.

    Returns the new inference list and an audit log of
    (record, attribute, old, new, reason) rows.
    """
    by_key = {inf.record_key: inf for inf in inferences}
    audit = []
    patched: dict[RecordKey, ConsensusInference] = {}
    for repair in repairs:
        target = patched.get(repair.record_key) or by_key.get(repair.record_key)
        if target is None or repair.attribute not in ATTRIBUTES:
            raise UnknownRepairTarget(repair.record_key, repair.attribute)
        old = target.value_of(repair.attribute)
        value = _parse_attribute_value(repair.attribute, repair.new_value)
        updated = replace(
            target,
            repaired=target.repaired | {repair.attribute},
            ethnicity_scores=dict(target.ethnicity_scores),
        )
        setattr(updated, repair.attribute, value)
        patched[repair.record_key] = updated
        audit.append({
            "collection_id": repair.record_key[0],
            "entity_id": repair.record_key[1],
            "attribute": repair.attribute,
            "old": old or "",
            "new": updated.value_of(repair.attribute),
            "reason": repair.reason,
        })
    result = [patched.get(inf.record_key, inf) for inf in inferences]
    return result, audit


# ---------------------------------------------------------------------------
# External reference comparison

UNKNOWN_LABEL = "unknown"
NOT_SAMPLED_LABEL = "not_sampled"


@dataclass
class ReferenceComparison:
    """Cross-tab of reference labels vs inference outcomes, per attribute."""

    cells: dict = field(default_factory=dict)  # attribute -> {(ref, inferred): count}
    members: dict = field(default_factory=dict)  # attribute -> {(ref, inferred): [keys]}

    def count(self, attribute: str, reference: str, inferred: str) -> int:
        return self.cells.get(attribute, {}).get((reference, inferred), 0)

    def agreement_rate(self, attribute: str) -> Optional[float]:
        """Matches over reference-labeled records that were sampled."""
        table = self.cells.get(attribute, {})
        matched = sum(c for (ref, inf), c in table.items() if ref == inf)
        compared = sum(c for (_, inf), c in table.items() if inf != NOT_SAMPLED_LABEL)
        return matched / compared if compared else None

    def as_dict(self) -> dict:
        out = {}
        for attribute, table in sorted(self.cells.items()):
            out[attribute] = {
                "cells": [
                    {"reference": ref, "inferred": inf, "count": count}
                    for (ref, inf), count in sorted(table.items())
                ],
                "agreement_rate": self.agreement_rate(attribute),
            }
        return out


def _canonical_label(attribute: str, raw: str) -> str:
    raw = raw.strip()
    try:
        value = _parse_attribute_value(attribute, raw)
    except (ValueError, InvalidInput):
        return raw.casefold()
    return value.value if hasattr(value, "value") else str(value)


def compare_reference(
    inferences: Sequence[ConsensusInference],
    records: Sequence[EntityRecord],
    reference_rows: Iterable[Mapping[str, str]],
) -> ReferenceComparison:
    """Cross-tabulate reference labels against inferences.

    ``name_or_key`` is either ``collection_id:entity_id`` (when that key
    exists) or a display name matched by normalized identity; every record
    matching the name contributes one comparison.  Rows matching nothing
    count under the not-sampled column.
    """
    by_key = {inf.record_key: inf for inf in inferences}
    by_name: dict[str, list[RecordKey]] = {}
    for record in records:
        if record.key in by_key:
            by_name.setdefault(identity_key(record.display_name), []).append(record.key)
    comparison = ReferenceComparison()
    for row in reference_rows:
        attribute = row["attribute"].strip()
        if attribute not in ATTRIBUTES:
            raise InvalidInput(f"unknown attribute {attribute!r} in reference file")
        ref_label = _canonical_label(attribute, row["label"])
        raw_target = row["name_or_key"].strip()
        targets: list[RecordKey] = []
        if ":" in raw_target:
            collection_id, _, entity_id = raw_target.partition(":")
            key = (collection_id.strip(), entity_id.strip())
            if key in by_key:
                targets = [key]
        if not targets:
            targets = sorted(by_name.get(identity_key(raw_target), []))
        table = comparison.cells.setdefault(attribute, {})
        cell_members = comparison.members.setdefault(attribute, {})
        if not targets:
            cell = (ref_label, NOT_SAMPLED_LABEL)
            table[cell] = table.get(cell, 0) + 1
            cell_members.setdefault(cell, []).append(raw_target)
            continue
        for key in targets:
            inferred = by_key[key].value_of(attribute) or UNKNOWN_LABEL
            cell = (ref_label, inferred)
            table[cell] = table.get(cell, 0) + 1
            cell_members.setdefault(cell, []).append("/".join(key))
    return comparison


# ---------------------------------------------------------------------------
# Repairs and reference file IO

REPAIR_COLUMNS = ["collection_id", "entity_id", "attribute", "new_value", "reason"]
REFERENCE_COLUMNS = ["name_or_key", "attribute", "label"]


def read_repairs(path) -> list[Repair]:
    rows = read_table(path, REPAIR_COLUMNS)
    return [
        Repair(
            record_key=(row["collection_id"].strip(), row["entity_id"].strip()),
            attribute=row["attribute"].strip(),
            new_value=row["new_value"].strip(),
            reason=(row.get("reason") or "").strip(),
        )
        for row in rows
    ]


def write_repairs(path, repairs: Iterable[Repair]) -> None:
    rows = [
        {
            "collection_id": r.record_key[0],
            "entity_id": r.record_key[1],
            "attribute": r.attribute,
            "new_value": r.new_value,
            "reason": r.reason,
        }
        for r in repairs
    ]
    write_table(path, REPAIR_COLUMNS, rows)


def read_reference(path) -> list[dict]:
    return read_table(path, REFERENCE_COLUMNS)
