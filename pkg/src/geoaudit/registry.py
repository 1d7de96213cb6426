"""Core registry domain types: RIRs, prefixes, registrations, the region map.

Prefixes are plain ipaddress network objects (IPv4Network / IPv6Network),
always in canonical form: parsing rejects anything with host bits set.
"""

from __future__ import annotations

import csv
import datetime
import enum
import ipaddress
import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import IO, Iterable, Iterator, Mapping

from .errors import InvertedRange, MalformedPrefix, MixedFamily, UnknownCountry

Prefix = ipaddress.IPv4Network | ipaddress.IPv6Network
Addr = ipaddress.IPv4Address | ipaddress.IPv6Address


class Rir(enum.Enum):
    """The five regional internet registries."""

    ARIN = "ARIN"
    RIPE = "RIPE"
    APNIC = "APNIC"
    LACNIC = "LACNIC"
    AFRINIC = "AFRINIC"

    def __str__(self) -> str:
        return self.value


RIR_ORDER = (Rir.ARIN, Rir.RIPE, Rir.APNIC, Rir.LACNIC, Rir.AFRINIC)


class Status(enum.Enum):
    """Normalized registration status."""

    ALLOCATED = "allocated"
    ASSIGNED = "assigned"
    LEGACY_OR_UNKNOWN = "legacy_or_unknown"

    def __str__(self) -> str:
        return self.value


def parse_address(text: str) -> Addr:
    try:
        return ipaddress.ip_address(text.strip())
    except ValueError as exc:
        raise MalformedPrefix(f"bad address {text!r}: {exc}") from None


def parse_prefix(text: str) -> Prefix:
    """Parse a CIDR prefix, rejecting non-canonical forms (host bits set)."""
    try:
        return ipaddress.ip_network(text.strip(), strict=True)
    except ValueError as exc:
        raise MalformedPrefix(f"bad prefix {text!r}: {exc}") from None


def prefix_sort_key(prefix: Prefix) -> tuple[int, int, int]:
    return (prefix.version, int(prefix.network_address), prefix.prefixlen)


def range_to_cidrs(start: Addr | str, end: Addr | str) -> list[Prefix]:
    """Split an inclusive address range into the minimal list of CIDR blocks.

    The result covers the range exactly, in address order, and no two
    adjacent blocks can be merged into a larger legal block.
    """
    lo = parse_address(start) if isinstance(start, str) else start
    hi = parse_address(end) if isinstance(end, str) else end
    if lo.version != hi.version:
        raise MixedFamily(f"range mixes IPv{lo.version} and IPv{hi.version}")
    if int(lo) > int(hi):
        raise InvertedRange(f"range start {lo} above end {hi}")
    return list(ipaddress.summarize_address_range(lo, hi))


def address_units(prefix: Prefix) -> float:
    """Size of a prefix in routing-table units: /24 equivalents for IPv4,
    /48 equivalents for IPv6. Fractional for more-specific prefixes."""
    base = 24 if prefix.version == 4 else 48
    return 2.0 ** (base - prefix.prefixlen)


def is_country_code(text: str) -> bool:
    return len(text) == 2 and text.isalpha() and text.isascii() and text == text.upper()


@dataclass(frozen=True)
class Registration:
    """One registered block from a bulk WHOIS dump, reduced to the fields
    the audit needs."""

    prefix: Prefix
    rir: Rir
    org_id: str | None = None
    org_country: str | None = None
    status: Status = Status.LEGACY_OR_UNKNOWN
    last_updated: datetime.date | None = None
    source_range: str | None = None
    flags: tuple[str, ...] = ()

    def with_flag(self, flag: str) -> "Registration":
        if flag in self.flags:
            return self
        return replace(self, flags=self.flags + (flag,))

    def to_json(self) -> dict:
        return {
            "prefix": str(self.prefix),
            "rir": self.rir.value,
            "org_country": self.org_country,
            "org_id": self.org_id,
            "status": self.status.value,
            "last_updated": self.last_updated.isoformat() if self.last_updated else None,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Registration":
        raw_date = obj.get("last_updated")
        return cls(
            prefix=parse_prefix(obj["prefix"]),
            rir=Rir(obj["rir"]),
            org_id=obj.get("org_id"),
            org_country=obj.get("org_country"),
            status=Status(obj.get("status", "legacy_or_unknown")),
            last_updated=datetime.date.fromisoformat(raw_date) if raw_date else None,
            flags=tuple(obj.get("flags", ())),
        )


def write_registrations(regs: Iterable[Registration], fp: IO[str]) -> int:
    n = 0
    for reg in regs:
        fp.write(json.dumps(reg.to_json(), sort_keys=True) + "\n")
        n += 1
    return n


def load_registrations(fp: IO[str]) -> list[Registration]:
    regs = []
    for line in fp:
        line = line.strip()
        if line:
            regs.append(Registration.from_json(json.loads(line)))
    return regs


# Exact per-RIR country counts published by the registries; the bundled
# mapping snapshot is validated against them on load.
OFFICIAL_COUNTRY_COUNTS = {
    Rir.ARIN: 29,
    Rir.RIPE: 73,
    Rir.APNIC: 54,
    Rir.LACNIC: 31,
    Rir.AFRINIC: 57,
}


class RegionMap:
    """Immutable country-code to RIR mapping."""

    def __init__(self, entries: Mapping[str, Rir]):
        for cc in entries:
            if not is_country_code(cc):
                raise ValueError(f"bad country code {cc!r}")
        self._entries = dict(sorted(entries.items()))
        by_rir: dict[Rir, set[str]] = {rir: set() for rir in Rir}
        for cc, rir in self._entries.items():
            by_rir[rir].add(cc)
        self._by_rir = {rir: frozenset(ccs) for rir, ccs in by_rir.items()}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, country: str) -> bool:
        return country in self._entries

    def __iter__(self):
        return iter(self._entries)

    def rir_of(self, country: str) -> Rir:
        try:
            return self._entries[country]
        except KeyError:
            raise UnknownCountry(f"country {country!r} not in region map") from None

    def countries_of(self, rir: Rir) -> frozenset[str]:
        return self._by_rir[rir]

    def counts(self) -> dict[Rir, int]:
        return {rir: len(self._by_rir[rir]) for rir in Rir}


def data_lines(fp: IO[str]) -> Iterator[str]:
    """Bundled CSVs carry '#' comment lines documenting their provenance."""
    return (line for line in fp if not line.lstrip().startswith("#"))


def load_region_map(fp: IO[str]) -> RegionMap:
    """Load a region map from CSV with a country,rir header."""
    reader = csv.DictReader(data_lines(fp))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["country", "rir"]:
        raise ValueError(f"region map must have a country,rir header, got {reader.fieldnames}")
    entries: dict[str, Rir] = {}
    for row in reader:
        cc = row["country"].strip().upper()
        if cc in entries:
            raise ValueError(f"duplicate country {cc} in region map")
        entries[cc] = Rir(row["rir"].strip().upper())
    return RegionMap(entries)


def check_official_counts(region_map: RegionMap) -> None:
    counts = region_map.counts()
    if counts != OFFICIAL_COUNTRY_COUNTS:
        raise ValueError(f"region map counts {counts} differ from official {OFFICIAL_COUNTRY_COUNTS}")
    if len(region_map) != sum(OFFICIAL_COUNTRY_COUNTS.values()):
        raise ValueError("region map total does not match official count")


def default_region_map() -> RegionMap:
    """The bundled country-to-RIR snapshot, checked against official counts."""
    ref = resources.files("geoaudit.data").joinpath("region_map.csv")
    with ref.open("r", encoding="utf-8") as fp:
        region_map = load_region_map(fp)
    check_official_counts(region_map)
    return region_map
