"""Country-to-region lookups over the seven UN GEO3 regions.

The mapping ships as an editable CSV (``data/geo3_regions.csv``) covering
UN member states, common territories, aliases, and historical entities.
Unknown countries are explicit lookup failures, never silent guesses.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Optional

from .errors import InvalidInput, UnknownCountry
from .ingest import read_table


class Region(Enum):
    AFRICA = "Africa"
    ASIA_PACIFIC = "Asia and the Pacific"
    EUROPE = "Europe"
    LATIN_AMERICA = "Latin America and the Caribbean"
    NORTH_AMERICA = "North America"
    WEST_ASIA = "West Asia"
    POLAR = "Polar"


REGION_ORDER = (
    Region.AFRICA,
    Region.ASIA_PACIFIC,
    Region.EUROPE,
    Region.LATIN_AMERICA,
    Region.NORTH_AMERICA,
    Region.WEST_ASIA,
    Region.POLAR,
)


def normalize_country(name: str) -> str:
    """Canonical lookup key: NFC, trimmed, whitespace-collapsed, case-folded."""
    text = unicodedata.normalize("NFC", name)
    return " ".join(text.split()).casefold()


@dataclass
class RegionMap:
    mapping: dict[str, Region]

    @classmethod
    def from_rows(cls, rows) -> "RegionMap":
        mapping: dict[str, Region] = {}
        for row in rows:
            key = normalize_country(row["country"])
            if not key:
                continue
            try:
                region = Region(row["region"])
            except ValueError as exc:
                raise InvalidInput(f"unknown region {row['region']!r} for {row['country']!r}") from exc
            if key in mapping and mapping[key] is not region:
                raise InvalidInput(f"country {row['country']!r} mapped to two regions")
            mapping[key] = region
        return cls(mapping)

    @classmethod
    def from_csv(cls, path) -> "RegionMap":
        return cls.from_rows(read_table(path, ["country", "region"]))

    @classmethod
    def default(cls) -> "RegionMap":
        ref = resources.files("crowdcensus").joinpath("data/geo3_regions.csv")
        with resources.as_file(ref) as path:
            return cls.from_csv(path)

    def __contains__(self, country: str) -> bool:
        return normalize_country(country) in self.mapping

    def get(self, country: str) -> Optional[Region]:
        return self.mapping.get(normalize_country(country))

    def resolve(self, country: str) -> Region:
        region = self.get(country)
        if region is None:
            raise UnknownCountry(country)
        return region
