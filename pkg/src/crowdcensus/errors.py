"""Exception types shared across the pipeline stages."""


class CrowdCensusError(Exception):
    """Base class for all pipeline errors."""


class MalformedRow(CrowdCensusError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateKey(CrowdCensusError):
    def __init__(self, key):
        super().__init__(f"duplicate record key {key!r}")
        self.key = key


class MissingColumn(CrowdCensusError):
    def __init__(self, name):
        super().__init__(f"missing required column {name!r}")
        self.name = name


class OrphanResponse(CrowdCensusError):
    def __init__(self, record_key):
        super().__init__(f"response references unknown record {record_key!r}")
        self.record_key = record_key


class NoUsableResponses(CrowdCensusError):
    """No response carries a usable answer for the requested attribute."""


class UnknownCountry(CrowdCensusError):
    def __init__(self, name):
        super().__init__(f"country {name!r} not present in the region map")
        self.name = name


class UnknownRepairTarget(CrowdCensusError):
    def __init__(self, record_key, attribute):
        super().__init__(f"repair targets unknown record/attribute {record_key!r}/{attribute}")
        self.record_key = record_key
        self.attribute = attribute


class InvalidInput(CrowdCensusError):
    """An argument is outside its documented domain."""


class InvalidSpec(CrowdCensusError):
    """A synthetic-campaign spec violates its invariants."""


class DimensionMismatch(CrowdCensusError):
    """Feature vectors do not share the same coordinate set."""


class MissingFeature(CrowdCensusError):
    def __init__(self, group, coordinate):
        super().__init__(f"group {group!r} has no value for coordinate {coordinate!r}")
        self.group = group
        self.coordinate = coordinate


class InvalidK(CrowdCensusError):
    """Requested cluster count is outside [1, number of leaves]."""


class LeafMismatch(CrowdCensusError):
    """Two partitions do not cover the same leaf set."""


class KeyMismatch(CrowdCensusError):
    """Inference and ground-truth record keys do not line up."""


class StageMissing(CrowdCensusError):
    def __init__(self, stage):
        super().__init__(f"pipeline stage {stage!r} has not produced output")
        self.stage = stage


class StageFailed(CrowdCensusError):
    """Wraps an exception raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
