"""Aggregations over audit output: out-of-region organizations, class
distributions, registration characteristics, geolocation-database checks,
lease-list overlap, and the CSV/summary writers behind the report command.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .classify import (
    CLASS_ORDER,
    FILTER_ORDER,
    ConsistencyClass,
    ConsistencyRecord,
    pipeline_counts,
)
from .registry import (
    Prefix,
    RegionMap,
    Registration,
    Rir,
    RIR_ORDER,
    Status,
    address_units,
    parse_prefix,
    prefix_sort_key,
)
from .trie import PrefixTrie


@dataclass
class OroStats:
    """Out-of-region organizations for one registry and family."""

    rir: Rir
    family: int
    prefixes: int = 0
    oro_prefixes: int = 0
    unknown_org: int = 0
    units: float = 0.0
    oro_units: float = 0.0

    @property
    def prefix_fraction(self) -> float:
        return self.oro_prefixes / self.prefixes if self.prefixes else 0.0

    @property
    def unit_fraction(self) -> float:
        return self.oro_units / self.units if self.units else 0.0


def _union_units(prefixes: Sequence[Prefix]) -> float:
    """Sum address units over the union of the given prefixes: overlapping
    blocks count once, at the widest covering block."""
    total = 0.0
    last_end = -1
    for prefix in sorted(prefixes, key=prefix_sort_key):
        start = int(prefix.network_address)
        if start <= last_end:
            continue  # contained in a block already counted
        total += address_units(prefix)
        last_end = int(prefix.broadcast_address if prefix.version == 4 else prefix[-1])
    return total


def oro_stats(
    regs: Iterable[Registration],
    region_map: RegionMap,
) -> dict[tuple[Rir, int], OroStats]:
    """Count registrations whose organization sits outside the registering
    region, per registry and family, in prefixes and in address units."""
    rows: dict[tuple[Rir, int], OroStats] = {}
    all_prefixes: dict[tuple[Rir, int], list[Prefix]] = {}
    oro_prefixes: dict[tuple[Rir, int], list[Prefix]] = {}
    for reg in regs:
        key = (reg.rir, reg.prefix.version)
        row = rows.setdefault(key, OroStats(rir=reg.rir, family=reg.prefix.version))
        row.prefixes += 1
        all_prefixes.setdefault(key, []).append(reg.prefix)
        if reg.org_country is None or reg.org_country not in region_map:
            row.unknown_org += 1
            continue
        if region_map.rir_of(reg.org_country) != reg.rir:
            row.oro_prefixes += 1
            oro_prefixes.setdefault(key, []).append(reg.prefix)
    for key, row in rows.items():
        row.units = _union_units(all_prefixes.get(key, ()))
        row.oro_units = _union_units(oro_prefixes.get(key, ()))
    return rows


def distribution(
    records: Iterable[ConsistencyRecord],
    family: int | None = None,
) -> dict[Rir | None, dict[ConsistencyClass, float]]:
    """Per-registry class fractions over classified records; the None row is
    the overall total. Every row sums to 1."""
    counts: dict[Rir | None, dict[ConsistencyClass, int]] = {}
    for rec in records:
        if rec.cls is None:
            continue
        if family is not None and rec.prefix.version != family:
            continue
        for key in (rec.rir_reg, None):
            row = counts.setdefault(key, {cls: 0 for cls in CLASS_ORDER})
            row[rec.cls] += 1
    out: dict[Rir | None, dict[ConsistencyClass, float]] = {}
    for key, row in counts.items():
        total = sum(row.values())
        out[key] = {cls: row[cls] / total for cls in CLASS_ORDER}
    return out


def characteristics(
    records: Iterable[ConsistencyRecord],
    regs_by_prefix: Mapping[Prefix, Registration],
) -> tuple[dict[tuple[ConsistencyClass, Status], int], dict[tuple[ConsistencyClass, int | None], int]]:
    """Cross-tabulate class against registration status and last-updated year."""
    by_status: dict[tuple[ConsistencyClass, Status], int] = {}
    by_year: dict[tuple[ConsistencyClass, int | None], int] = {}
    for rec in records:
        if rec.cls is None:
            continue
        reg = regs_by_prefix.get(rec.prefix)
        if reg is None:
            continue
        skey = (rec.cls, reg.status)
        by_status[skey] = by_status.get(skey, 0) + 1
        year = reg.last_updated.year if reg.last_updated else None
        ykey = (rec.cls, year)
        by_year[ykey] = by_year.get(ykey, 0) + 1
    return by_status, by_year


@dataclass(frozen=True)
class GeoDbEntry:
    prefix: Prefix
    country: str


def load_geodb(fp: IO[str]) -> list[GeoDbEntry]:
    """CSV with a prefix,country header: one provider's geolocation table."""
    reader = csv.DictReader(fp)
    want = ["prefix", "country"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != want:
        raise ValueError(f"geodb needs a prefix,country header, got {reader.fieldnames}")
    return [
        GeoDbEntry(prefix=parse_prefix(row["prefix"]), country=row["country"].strip().upper())
        for row in reader
    ]


@dataclass
class DetectionStats:
    eligible: int = 0
    detected: int = 0
    no_coverage: int = 0

    @property
    def covered(self) -> int:
        return self.eligible - self.no_coverage

    @property
    def fraction(self) -> float:
        # detection rate over prefixes the provider actually covers
        return self.detected / self.covered if self.covered else 0.0


def geodb_detection(
    records: Iterable[ConsistencyRecord],
    providers: Mapping[str, Sequence[GeoDbEntry]],
    region_map: RegionMap,
    require_geo_agreement: bool = False,
) -> dict[str, dict[Rir, DetectionStats]]:
    """How often each provider places measured-inconsistent prefixes (RI/FI)
    outside their registered region.

    Default criterion: the provider's country maps to a registry other than
    the registering one. With require_geo_agreement the provider's region
    must also be one the measurements found feasible."""
    tries_by_provider: dict[str, dict[int, PrefixTrie]] = {}
    for name, entries in providers.items():
        tries = {4: PrefixTrie(4), 6: PrefixTrie(6)}
        for entry in entries:
            tries[entry.prefix.version].insert(entry.prefix, entry.country)
        tries_by_provider[name] = tries

    out: dict[str, dict[Rir, DetectionStats]] = {
        name: {rir: DetectionStats() for rir in RIR_ORDER} for name in providers
    }
    for rec in records:
        if rec.cls not in (ConsistencyClass.RI, ConsistencyClass.FI):
            continue
        probe_addr = rec.prefix.network_address
        for name, tries in tries_by_provider.items():
            stats = out[name][rec.rir_reg]
            stats.eligible += 1
            hit = tries[rec.prefix.version].longest_match(probe_addr)
            if hit is None:
                stats.no_coverage += 1
                continue
            _, country = hit
            if country not in region_map:
                stats.no_coverage += 1
                continue
            provider_rir = region_map.rir_of(country)
            detected = provider_rir != rec.rir_reg
            if require_geo_agreement:
                detected = detected and provider_rir in rec.rir_geo
            if detected:
                stats.detected += 1
    return out


@dataclass
class LeasingStats:
    records: int = 0
    overlapping: int = 0

    @property
    def fraction(self) -> float:
        return self.overlapping / self.records if self.records else 0.0


def leasing_overlap(
    records: Iterable[ConsistencyRecord],
    leased: Iterable[Prefix],
) -> dict[tuple[Rir, ConsistencyClass], LeasingStats]:
    """Overlap between measured-inconsistent prefixes and a lease list.

    Any relation counts: exact, contained in a leased block, or containing
    one. Rows exist for every (registry, RI/FI) pair."""
    tries = {4: PrefixTrie(4), 6: PrefixTrie(6)}
    for prefix in leased:
        tries[prefix.version].insert(prefix, True)
    out = {
        (rir, cls): LeasingStats()
        for rir in RIR_ORDER
        for cls in (ConsistencyClass.RI, ConsistencyClass.FI)
    }
    for rec in records:
        if rec.cls not in (ConsistencyClass.RI, ConsistencyClass.FI):
            continue
        stats = out[(rec.rir_reg, rec.cls)]
        stats.records += 1
        trie = tries[rec.prefix.version]
        overlap = (
            trie.lookup_exact(rec.prefix) is not None
            or bool(trie.covering(rec.prefix))
            or bool(trie.enumerate_contained(rec.prefix))
        )
        if overlap:
            stats.overlapping += 1
    return out


def sankey_edges(
    records: Iterable[ConsistencyRecord],
    region_map: RegionMap,
) -> list[tuple[Rir, Rir, int]]:
    """Flow counts from registered region to measured region, the latter
    taken as the region of the minimum-RTT vantage's country on the first
    classified target."""
    counts: dict[tuple[Rir, Rir], int] = {}
    for rec in records:
        if rec.cls is None:
            continue
        dest: Rir | None = None
        for outcome in rec.targets:
            if outcome.cls is not None and outcome.vantage_country in region_map:
                dest = region_map.rir_of(outcome.vantage_country)
                break
        if dest is None:
            continue
        key = (rec.rir_reg, dest)
        counts[key] = counts.get(key, 0) + 1
    return [(src, dst, n) for (src, dst), n in sorted(counts.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))]


def write_distribution_csv(rows: Mapping[Rir | None, Mapping[ConsistencyClass, float]], fp: IO[str]) -> None:
    writer = csv.writer(fp)
    writer.writerow(["rir"] + [cls.value for cls in CLASS_ORDER])
    for rir in list(RIR_ORDER) + [None]:
        if rir not in rows:
            continue
        label = rir.value if rir else "ALL"
        writer.writerow([label] + [f"{rows[rir][cls]:.6f}" for cls in CLASS_ORDER])


def write_oro_csv(rows: Mapping[tuple[Rir, int], OroStats], fp: IO[str]) -> None:
    writer = csv.writer(fp)
    writer.writerow([
        "rir", "family", "prefixes", "oro_prefixes", "prefix_fraction",
        "address_units", "oro_address_units", "unit_fraction", "unknown_org",
    ])
    for (rir, family) in sorted(rows, key=lambda k: (k[1], k[0].value)):
        row = rows[(rir, family)]
        writer.writerow([
            rir.value, family, row.prefixes, row.oro_prefixes, f"{row.prefix_fraction:.6f}",
            f"{row.units:.3f}", f"{row.oro_units:.3f}", f"{row.unit_fraction:.6f}", row.unknown_org,
        ])


def write_characteristics_csv(
    by_status: Mapping[tuple[ConsistencyClass, Status], int],
    by_year: Mapping[tuple[ConsistencyClass, int | None], int],
    status_fp: IO[str],
    year_fp: IO[str],
) -> None:
    writer = csv.writer(status_fp)
    writer.writerow(["class", "status", "count"])
    for (cls, status), count in sorted(by_status.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        writer.writerow([cls.value, status.value, count])
    writer = csv.writer(year_fp)
    writer.writerow(["class", "year", "count"])
    for (cls, year), count in sorted(by_year.items(), key=lambda kv: (kv[0][0].value, kv[0][1] or 0)):
        writer.writerow([cls.value, year if year is not None else "unknown", count])


def write_geodb_csv(stats: Mapping[str, Mapping[Rir, DetectionStats]], fp: IO[str]) -> None:
    writer = csv.writer(fp)
    writer.writerow(["provider", "rir", "eligible", "covered", "detected", "fraction", "no_coverage"])
    for name in sorted(stats):
        for rir in RIR_ORDER:
            row = stats[name][rir]
            if row.eligible == 0:
                continue
            writer.writerow([name, rir.value, row.eligible, row.covered, row.detected,
                             f"{row.fraction:.6f}", row.no_coverage])


def write_leasing_csv(stats: Mapping[tuple[Rir, ConsistencyClass], LeasingStats], fp: IO[str]) -> None:
    writer = csv.writer(fp)
    writer.writerow(["rir", "class", "records", "overlapping", "fraction"])
    for (rir, cls), row in sorted(stats.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        if row.records == 0:
            continue
        writer.writerow([rir.value, cls.value, row.records, row.overlapping, f"{row.fraction:.6f}"])


def write_sankey_csv(edges: Sequence[tuple[Rir, Rir, int]], fp: IO[str]) -> None:
    writer = csv.writer(fp)
    writer.writerow(["source_rir", "dest_rir", "count"])
    for src, dst, count in edges:
        writer.writerow([src.value, dst.value, count])


def write_summary(records: Sequence[ConsistencyRecord], fp: IO[str]) -> None:
    counts = pipeline_counts(records)
    fp.write("prefix audit summary\n")
    fp.write("====================\n\n")
    fp.write(f"candidate prefixes : {counts.candidates}\n")
    for reason in FILTER_ORDER:
        n = counts.filtered.get(reason, 0)
        if n:
            fp.write(f"filtered {reason.value:<22}: {n}\n")
    fp.write(f"classified         : {counts.classified}\n\n")
    if counts.classified:
        fp.write("class distribution\n")
        for cls in CLASS_ORDER:
            n = counts.by_class.get(cls, 0)
            fp.write(f"  {cls.value}: {n} ({n / counts.classified:.1%})\n")
    identity = "holds" if counts.check_identity() else "BROKEN"
    fp.write(f"\naccounting identity: {identity}\n")
