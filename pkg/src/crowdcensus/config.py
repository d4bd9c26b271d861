"""Campaign configuration: every tunable threshold, with production defaults.

Thresholds are stored as exact rationals so that comparisons such as
"score >= 0.65" or "score > 0.65" are decided without floating-point
epsilons.  The config file format is flat ``key = value`` lines; values
may be decimals ("0.65"), ratios ("13/20"), or integers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

from .errors import InvalidInput

DECADE_HALF_DOWN = "half-down"
DECADE_HALF_UP = "half-up"


@dataclass(frozen=True)
class CampaignConfig:
    """Thresholds and weights governing consensus inference.

    gender_threshold      minimum |mean gender score| for an inference (inclusive)
    ethnicity_threshold   ethnicity score must strictly exceed this
    region_threshold      minimum region score for an inference (inclusive)
    min_support           minimum responses backing a specific inference
    z_cut                 birth-year outlier cut on |z|
    typo_tolerance_years  outliers this close to the mean are kept as typos
    decade_rounding       tie rule when a mean year ends in 5: half-down or half-up
    weight_low/medium/high  confidence weights applied to votes
    """

    gender_threshold: Fraction = Fraction("0.65")
    ethnicity_threshold: Fraction = Fraction("0.65")
    region_threshold: Fraction = Fraction("0.8")
    min_support: int = 3
    z_cut: Fraction = Fraction(1)
    typo_tolerance_years: Fraction = Fraction(1)
    decade_rounding: str = DECADE_HALF_DOWN
    weight_low: Fraction = Fraction(1, 3)
    weight_medium: Fraction = Fraction(2, 3)
    weight_high: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("gender_threshold", "ethnicity_threshold", "region_threshold"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidInput(f"{name} must be in (0, 1], got {value}")
        if self.min_support < 1:
            raise InvalidInput(f"min_support must be >= 1, got {self.min_support}")
        if self.z_cut <= 0:
            raise InvalidInput(f"z_cut must be > 0, got {self.z_cut}")
        if self.typo_tolerance_years < 0:
            raise InvalidInput("typo_tolerance_years must be >= 0")
        if self.decade_rounding not in (DECADE_HALF_DOWN, DECADE_HALF_UP):
            raise InvalidInput(f"unknown decade_rounding {self.decade_rounding!r}")
        for name in ("weight_low", "weight_medium", "weight_high"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidInput(f"{name} must be in (0, 1], got {value}")

    def weight(self, grade) -> Fraction:
        """Confidence weight for a grade (Low/Medium/High)."""
        return {
            "low": self.weight_low,
            "medium": self.weight_medium,
            "high": self.weight_high,
        }[grade.value if hasattr(grade, "value") else str(grade).lower()]

    def with_overrides(self, **kwargs) -> "CampaignConfig":
        return replace(self, **kwargs)

    def as_dict(self) -> dict:
        """JSON-safe snapshot (rationals rendered as strings)."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = str(value) if isinstance(value, Fraction) else value
        return out


_FRACTION_FIELDS = {
    "gender_threshold", "ethnicity_threshold", "region_threshold",
    "z_cut", "typo_tolerance_years",
    "weight_low", "weight_medium", "weight_high",
}
_INT_FIELDS = {"min_support"}


def parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FRACTION_FIELDS:
        return Fraction(raw)
    return raw


def load_config(path) -> CampaignConfig:
    """Parse a flat key=value config file into a CampaignConfig.

    Unknown keys are rejected so typos do not silently keep defaults.
    """
    known = {f.name for f in fields(CampaignConfig)}
    overrides = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidInput(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in known:
            raise InvalidInput(f"{path}:{line_no}: unknown config key {key!r}")
        overrides[key] = parse_value(key, raw)
    return CampaignConfig(**overrides)


def dump_config(config: CampaignConfig) -> str:
    """Render a config as the flat key=value format accepted by load_config."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
