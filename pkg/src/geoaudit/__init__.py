"""geoaudit: audit IP prefix registrations for geographic consistency."""

from .classify import ConsistencyClass, ConsistencyRecord, classify_one
from .registry import (
    Registration,
    RegionMap,
    Rir,
    Status,
    default_region_map,
    parse_prefix,
    range_to_cidrs,
)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyClass",
    "ConsistencyRecord",
    "Registration",
    "RegionMap",
    "Rir",
    "Status",
    "classify_one",
    "default_region_map",
    "parse_prefix",
    "range_to_cidrs",
    "__version__",
]
