"""Bulk WHOIS dump ingestion.

Dumps are blank-line-delimited key/value records. Per-registry attribute
names come from a dialect table (see data/dialects.ini); everything after
key lookup is shared. Network records become Registration rows, organization
records feed a side table used to resolve org countries afterwards.
"""

from __future__ import annotations

import configparser
import dataclasses
import datetime
import gzip
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Iterator

from .errors import UnknownDialect, UnreadableStream
from .registry import (
    Prefix,
    Registration,
    Rir,
    Status,
    is_country_code,
    parse_address,
    parse_prefix,
    prefix_sort_key,
    range_to_cidrs,
)

_DIALECT_LIST_KEYS = (
    "net_keys",
    "status_keys",
    "org_ref_keys",
    "country_keys",
    "updated_keys",
    "org_id_keys",
    "org_name_keys",
    "org_country_keys",
    "maintainer_keys",
    "skip_markers",
    "transfer_markers",
)


@dataclass(frozen=True)
class Dialect:
    rir: Rir
    net_keys: tuple[str, ...]
    status_keys: tuple[str, ...]
    org_ref_keys: tuple[str, ...]
    country_keys: tuple[str, ...]
    updated_keys: tuple[str, ...]
    org_id_keys: tuple[str, ...]
    org_name_keys: tuple[str, ...]
    org_country_keys: tuple[str, ...]
    maintainer_keys: tuple[str, ...]
    skip_markers: tuple[str, ...]
    transfer_markers: tuple[str, ...]


def load_dialects(fp: IO[str]) -> dict[Rir, Dialect]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_file(fp)
    out: dict[Rir, Dialect] = {}
    for section in parser.sections():
        rir = Rir(section.upper())
        fields: dict[str, tuple[str, ...]] = {}
        for key in _DIALECT_LIST_KEYS:
            raw = parser.get(section, key, fallback="")
            items = tuple(part.strip().lower() for part in raw.split(",") if part.strip())
            fields[key] = items
        if not fields["net_keys"]:
            raise ValueError(f"dialect {section} has no net_keys")
        out[rir] = Dialect(rir=rir, **fields)
    return out


def default_dialects() -> dict[Rir, Dialect]:
    ref = resources.files("geoaudit.data").joinpath("dialects.ini")
    with ref.open("r", encoding="utf-8") as fp:
        return load_dialects(fp)


def dialect_for(rir: Rir, dialects: dict[Rir, Dialect] | None = None) -> Dialect:
    table = dialects if dialects is not None else default_dialects()
    try:
        return table[rir]
    except KeyError:
        raise UnknownDialect(f"no dialect for {rir}") from None


class RawRecord:
    """One record as an ordered list of (key, value) pairs. Keys keep their
    original spelling; matching is case-insensitive."""

    def __init__(self, pairs: list[tuple[str, str]]):
        self.pairs = pairs

    def first(self, keys: Iterable[str]) -> str | None:
        for want in keys:
            for key, value in self.pairs:
                if key.lower() == want:
                    return value
        return None

    def all(self, keys: Iterable[str]) -> list[str]:
        wanted = set(keys)
        return [value for key, value in self.pairs if key.lower() in wanted]

    def has_any(self, keys: Iterable[str]) -> bool:
        wanted = set(keys)
        return any(key.lower() in wanted for key, _ in self.pairs)

    def values(self) -> list[str]:
        return [value for _, value in self.pairs]


def open_text(path: str) -> IO[str]:
    """Open a text file, decompressing gzip transparently (magic sniff)."""
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        raw = gzip.open(path, "rb")
    else:
        raw = open(path, "rb")
    return io.TextIOWrapper(raw, encoding="utf-8", errors="replace")


def iter_raw_records(stream: Iterable[str]) -> Iterator[RawRecord]:
    """Split a dump stream into records on blank lines.

    Comment lines (# or %) are dropped; continuation lines (leading
    whitespace or +) extend the previous value.
    """
    pairs: list[tuple[str, str]] = []
    try:
        for line in stream:
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                if pairs:
                    yield RawRecord(pairs)
                    pairs = []
                continue
            if line.startswith("#") or line.startswith("%"):
                continue
            if line[0] in " \t+" and pairs:
                key, value = pairs[-1]
                pairs[-1] = (key, (value + " " + line.lstrip(" \t+").strip()).strip())
                continue
            if ":" not in line:
                continue
            key, _, value = line.partition(":")
            pairs.append((key.strip(), value.strip()))
    except (OSError, EOFError, gzip.BadGzipFile) as exc:
        # truncated gzip surfaces as EOFError rather than BadGzipFile
        raise UnreadableStream(f"cannot read dump: {exc}") from None
    if pairs:
        yield RawRecord(pairs)


def normalize_status(text: str | None) -> Status:
    """Collapse the registry status zoo onto three values. Anything with an
    alloc token is Allocated, an assign token Assigned, the rest legacy or
    unknown."""
    if not text:
        return Status.LEGACY_OR_UNKNOWN
    lowered = text.lower()
    if "alloc" in lowered:
        return Status.ALLOCATED
    if "assign" in lowered:
        return Status.ASSIGNED
    return Status.LEGACY_OR_UNKNOWN


_DATE_PATTERNS = ("%Y-%m-%d", "%Y%m%d", "%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%d %H:%M:%S")


def parse_date(text: str | None) -> datetime.date | None:
    # RPSL changed attributes put an email before the date, so every
    # whitespace token is a candidate
    if not text:
        return None
    for token in text.strip().split():
        for pattern in _DATE_PATTERNS:
            try:
                return datetime.datetime.strptime(token, pattern).date()
            except ValueError:
                continue
        if "T" in token:
            try:
                return datetime.date.fromisoformat(token.split("T", 1)[0])
            except ValueError:
                pass
    return None


@dataclass
class Organization:
    org_id: str
    name: str | None = None
    country: str | None = None


@dataclass
class IngestReport:
    """Counters for one dump. The identity

        registrations_emitted + duplicates_dropped + not_managed_skipped
            + malformed_skipped == net_records_read + split_extra_blocks

    holds for every parse; see check_identity()."""

    rir: Rir
    net_records_read: int = 0
    org_records_read: int = 0
    other_records: int = 0
    registrations_emitted: int = 0
    duplicates_dropped: int = 0
    not_managed_skipped: int = 0
    malformed_skipped: int = 0
    non_cidr_ranges_split: int = 0
    split_extra_blocks: int = 0
    unresolved_orgs: int = 0
    circular_refs_dropped: int = 0
    transfers_dropped: int = 0
    status_variants_seen: dict[str, str] = field(default_factory=dict)

    def check_identity(self) -> bool:
        produced = (
            self.registrations_emitted
            + self.duplicates_dropped
            + self.not_managed_skipped
            + self.malformed_skipped
        )
        return produced == self.net_records_read + self.split_extra_blocks


def _pad_short_v4(text: str) -> str:
    # LACNIC writes 45.5.160/22 for 45.5.160.0/22
    addr, _, plen = text.partition("/")
    dots = addr.count(".")
    if 0 < dots < 3 and ":" not in addr:
        addr = addr + ".0" * (3 - dots)
    return f"{addr}/{plen}"


def _parse_net_value(value: str) -> tuple[list[Prefix], str | None]:
    """Parse a net attribute value into CIDR blocks. Returns (blocks,
    source_range) where source_range is set when the value was a range."""
    value = value.strip()
    if " - " in value or (" " not in value and "-" in value and "/" not in value and ":" not in value):
        start, _, end = value.partition("-")
        blocks = range_to_cidrs(parse_address(start), parse_address(end))
        return blocks, f"{start.strip()}-{end.strip()}"
    if "/" in value:
        return [parse_prefix(_pad_short_v4(value))], None
    # a bare address registers the single-host block
    addr = parse_address(value)
    return [parse_prefix(f"{addr}/{32 if addr.version == 4 else 128}")], None


def _find_transfer(values: Iterable[str], markers: tuple[str, ...]) -> Rir | None:
    for value in values:
        lowered = value.lower()
        for marker in markers:
            pos = lowered.find(marker)
            if pos < 0:
                continue
            tail = lowered[pos + len(marker):]
            match = re.search(r"(arin|ripe|apnic|lacnic|afrinic)", tail)
            if match:
                return Rir(match.group(1).upper())
    return None


def parse_bulk_whois(
    stream: Iterable[str],
    rir: Rir,
    dialects: dict[Rir, Dialect] | None = None,
) -> tuple[list[Registration], dict[str, Organization], IngestReport]:
    """Parse one registry dump into registrations plus an org side table.

    Within a dump, duplicate records for the same prefix collapse to the
    most recently updated one (ties: lexicographically larger org_id wins).
    """
    dialect = dialect_for(rir, dialects)
    report = IngestReport(rir=rir)
    provisional: list[Registration] = []
    orgs: dict[str, Organization] = {}

    for rec in iter_raw_records(stream):
        if rec.has_any(dialect.net_keys):
            report.net_records_read += 1
            if any(m in v.lower() for v in rec.values() for m in dialect.skip_markers):
                report.not_managed_skipped += 1
                continue
            raw_net = rec.first(dialect.net_keys)
            try:
                blocks, source_range = _parse_net_value(raw_net)
            except Exception:
                report.malformed_skipped += 1
                continue
            if len(blocks) > 1:
                report.non_cidr_ranges_split += 1
                report.split_extra_blocks += len(blocks) - 1

            raw_status = rec.first(dialect.status_keys)
            status = normalize_status(raw_status)
            if raw_status:
                report.status_variants_seen.setdefault(raw_status, status.value)

            org_ref = rec.first(dialect.org_ref_keys)
            raw_country = rec.first(dialect.country_keys)
            country = None
            if raw_country:
                token = raw_country.strip().upper()[:2]
                if is_country_code(token):
                    country = token
            updated = parse_date(rec.first(dialect.updated_keys))

            flags: list[str] = []
            if len(blocks) > 1:
                flags.append("split_from_range")
            for maint in rec.all(dialect.maintainer_keys):
                flags.append(f"mnt:{maint}")
            transfer_dest = _find_transfer(rec.values(), dialect.transfer_markers)
            if transfer_dest is not None:
                flags.append(f"transfer_to:{transfer_dest.value}")

            for block in blocks:
                provisional.append(
                    Registration(
                        prefix=block,
                        rir=rir,
                        org_id=org_ref,
                        org_country=country,
                        status=status,
                        last_updated=updated,
                        source_range=source_range,
                        flags=tuple(flags),
                    )
                )
        elif rec.has_any(dialect.org_id_keys) and rec.has_any(dialect.org_name_keys):
            report.org_records_read += 1
            org_id = rec.first(dialect.org_id_keys)
            raw_country = rec.first(dialect.org_country_keys)
            country = None
            if raw_country:
                token = raw_country.strip().upper()[:2]
                if is_country_code(token):
                    country = token
            orgs[org_id] = Organization(
                org_id=org_id,
                name=rec.first(dialect.org_name_keys),
                country=country,
            )
        else:
            report.other_records += 1

    # collapse duplicate prefixes: newest last_updated wins, then larger org_id
    best: dict[tuple, Registration] = {}
    for reg in provisional:
        key = prefix_sort_key(reg.prefix)
        old = best.get(key)
        if old is None:
            best[key] = reg
            continue
        report.duplicates_dropped += 1
        old_rank = (old.last_updated or datetime.date.min, old.org_id or "")
        new_rank = (reg.last_updated or datetime.date.min, reg.org_id or "")
        if new_rank > old_rank:
            best[key] = reg

    emitted = sorted(best.values(), key=lambda r: prefix_sort_key(r.prefix))
    report.registrations_emitted = len(emitted)
    return emitted, orgs, report


def link_organizations(
    regs: Iterable[Registration],
    orgs: dict[str, Organization],
) -> tuple[list[Registration], int]:
    """Resolve org references into org_country. The org record wins over an
    inline country; the inline country survives only unresolved references.
    Returns the rewritten rows and the count of dangling references."""
    out: list[Registration] = []
    unresolved = 0
    for reg in regs:
        org = orgs.get(reg.org_id) if reg.org_id else None
        if org is not None and org.country:
            out.append(dataclasses.replace(reg, org_country=org.country))
            continue
        if reg.org_id and org is None:
            unresolved += 1
            reg = reg.with_flag("org_unresolved")
        if reg.org_country is None:
            reg = reg.with_flag("no_org_country")
        out.append(reg)
    return out, unresolved


def _transfer_dest(reg: Registration) -> Rir | None:
    for flag in reg.flags:
        if flag.startswith("transfer_to:"):
            return Rir(flag.split(":", 1)[1])
    return None


def drop_circular_transfers(
    regs_by_rir: dict[Rir, list[Registration]],
) -> tuple[dict[Rir, list[Registration]], dict[Rir, int], dict[Rir, int]]:
    """Resolve transfer annotations across dumps.

    A record annotated as transferred away is dropped from its source dump.
    When two dumps each claim the same prefix was transferred to the other,
    both records are dropped and counted as circular."""
    annotated: dict[tuple[Rir, tuple], Rir] = {}
    for rir, regs in regs_by_rir.items():
        for reg in regs:
            dest = _transfer_dest(reg)
            if dest is not None:
                annotated[(rir, prefix_sort_key(reg.prefix))] = dest

    circular: dict[Rir, int] = {rir: 0 for rir in regs_by_rir}
    transferred: dict[Rir, int] = {rir: 0 for rir in regs_by_rir}
    out: dict[Rir, list[Registration]] = {}
    for rir, regs in regs_by_rir.items():
        kept: list[Registration] = []
        for reg in regs:
            dest = _transfer_dest(reg)
            if dest is None:
                kept.append(reg)
                continue
            key = prefix_sort_key(reg.prefix)
            if annotated.get((dest, key)) == rir:
                circular[rir] += 1
            else:
                transferred[rir] += 1
        out[rir] = kept
    return out, circular, transferred
