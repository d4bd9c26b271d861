"""Worker-quality metrics, bad-faith flagging, and exclusion application.

Flagging is advisory: a worker is flagged only above a volume gate, and
exclusion is applied as a separate, explicit step so a human can confirm
the list first.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .config import CampaignConfig
from .consensus import IIAVerdict, infer_iia
from .ingest import IIAAnswer, ResponsePool, read_table, write_table


class Provenance(Enum):
    MANUAL = "manual"
    FLAGGED = "flagged"


@dataclass
class WorkerProfile:
    worker_id: str
    n_responses: int
    median_duration_secs: float
    fast_fraction: Fraction
    consensus_agreement: Optional[Fraction] = None


@dataclass(frozen=True)
class ExclusionList:
    worker_ids: frozenset[str]
    provenance: Provenance

    def __len__(self):
        return len(self.worker_ids)


@dataclass
class RemovalReport:
    removed_total: int = 0
    removed_per_worker: dict = field(default_factory=dict)
    removed_per_record: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "removed_total": self.removed_total,
            "removed_per_worker": dict(sorted(self.removed_per_worker.items())),
            "removed_per_record": {
                "/".join(k): v for k, v in sorted(self.removed_per_record.items())
            },
        }


def profile_workers(
    pool: ResponsePool,
    fast_cutoff_secs: float,
    agreement: Optional[Mapping[str, Fraction]] = None,
) -> list[WorkerProfile]:
    """One profile per worker, ordered by descending volume then id."""
    durations: dict[str, list[float]] = {}
    for response in pool.responses():
        durations.setdefault(response.worker_id, []).append(response.duration_secs)
    profiles = []
    for worker_id, secs in durations.items():
        fast = sum(1 for s in secs if s <= fast_cutoff_secs)
        profiles.append(
            WorkerProfile(
                worker_id=worker_id,
                n_responses=len(secs),
                median_duration_secs=statistics.median(secs),
                fast_fraction=Fraction(fast, len(secs)),
                consensus_agreement=(agreement or {}).get(worker_id),
            )
        )
    profiles.sort(key=lambda p: (-p.n_responses, p.worker_id))
    return profiles


def iia_agreement(
    pool: ResponsePool,
    config: CampaignConfig,
    exclude: frozenset[str] = frozenset(),
) -> dict[str, Fraction]:
    """Fraction of each worker's IIA answers matching a provisional consensus.

    The provisional verdict per record is computed from workers outside
    ``exclude`` so suspects do not shape their own yardstick.  Records with
    an undetermined provisional verdict do not count for anyone.
    """
    hits: dict[str, int] = {}
    totals: dict[str, int] = {}
    for key in pool.record_keys():
        responses = pool.by_record[key]
        trusted = [r for r in responses if r.worker_id not in exclude]
        verdict, _ = infer_iia(trusted, config)
        if verdict is IIAVerdict.UNDETERMINED:
            continue
        expected = IIAAnswer.YES if verdict is IIAVerdict.IIA else IIAAnswer.NO
        for r in responses:
            totals[r.worker_id] = totals.get(r.worker_id, 0) + 1
            if r.iia_answer is expected:
                hits[r.worker_id] = hits.get(r.worker_id, 0) + 1
    return {
        worker: Fraction(hits.get(worker, 0), total) for worker, total in totals.items()
    }


def flag_suspects(
    profiles: Iterable[WorkerProfile],
    volume_threshold: int,
    fast_fraction_threshold: Fraction,
    agreement_threshold: Fraction,
) -> ExclusionList:
    """Flag prolific workers who answer too fast or disagree with consensus.

    A worker is flagged iff n_responses >= volume_threshold AND
    (fast_fraction >= fast_fraction_threshold OR, when agreement is
    available, consensus_agreement < agreement_threshold).
    """
    flagged = set()
    for p in profiles:
        if p.n_responses < volume_threshold:
            continue
        if p.fast_fraction >= fast_fraction_threshold:
            flagged.add(p.worker_id)
        elif p.consensus_agreement is not None and p.consensus_agreement < agreement_threshold:
            flagged.add(p.worker_id)
    return ExclusionList(frozenset(flagged), Provenance.FLAGGED)


def apply_exclusions(
    pool: ResponsePool,
    lists: Iterable[ExclusionList],
) -> tuple[ResponsePool, RemovalReport]:
    """Drop all responses by listed workers; untouched responses pass through."""
    excluded: set[str] = set()
    for lst in lists:
        excluded |= lst.worker_ids
    report = RemovalReport()
    by_record = {}
    for key in pool.record_keys():
        kept = []
        for response in pool.by_record[key]:
            if response.worker_id in excluded:
                report.removed_total += 1
                report.removed_per_worker[response.worker_id] = (
                    report.removed_per_worker.get(response.worker_id, 0) + 1
                )
                report.removed_per_record[key] = report.removed_per_record.get(key, 0) + 1
            else:
                kept.append(response)
        by_record[key] = tuple(kept)
    return ResponsePool(by_record), report


def screen_pool(
    pool: ResponsePool,
    config: CampaignConfig,
    fast_cutoff_secs: float = 30.0,
    volume_threshold: int = 500,
    fast_fraction_threshold: Fraction = Fraction(1, 2),
    agreement_threshold: Fraction = Fraction(3, 5),
) -> tuple[list[WorkerProfile], ExclusionList]:
    """Two-pass screening: duration flags first, then agreement scoring.

    Pass one flags on volume + speed alone; pass two computes consensus
    agreement with those preliminary suspects held out, then re-flags.
    """
    preliminary = flag_suspects(
        profile_workers(pool, fast_cutoff_secs),
        volume_threshold, fast_fraction_threshold, Fraction(0),
    )
    agreement = iia_agreement(pool, config, exclude=preliminary.worker_ids)
    profiles = profile_workers(pool, fast_cutoff_secs, agreement=agreement)
    flags = flag_suspects(
        profiles, volume_threshold, fast_fraction_threshold, agreement_threshold
    )
    return profiles, flags


# ---------------------------------------------------------------------------
# Exclusion-list IO

EXCLUSION_COLUMNS = ["worker_id", "provenance"]


def read_exclusions(path) -> list[ExclusionList]:
    rows = read_table(path, EXCLUSION_COLUMNS)
    by_provenance: dict[Provenance, set[str]] = {}
    for row in rows:
        prov = Provenance(row["provenance"].strip().lower())
        by_provenance.setdefault(prov, set()).add(row["worker_id"].strip())
    return [
        ExclusionList(frozenset(ids), prov)
        for prov, ids in sorted(by_provenance.items(), key=lambda kv: kv[0].value)
    ]


def write_exclusions(path, lists: Iterable[ExclusionList]) -> None:
    rows = []
    for lst in lists:
        for worker_id in sorted(lst.worker_ids):
            rows.append({"worker_id": worker_id, "provenance": lst.provenance.value})
    write_table(path, EXCLUSION_COLUMNS, rows)
