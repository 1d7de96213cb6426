"""Vantage point inventory: filtering, stable per-region sets, per-prefix plans.

Plans draw three vantages from each registry region plus five from the
organization's country, deduplicated, so a prefix sees at most 19 probes.
Selection rotates deterministically with a prefix hash so load spreads
without losing reproducibility.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .registry import Prefix, RegionMap, Registration, Rir, RIR_ORDER

REGIONAL_PICKS = 3
COUNTRY_PICKS = 5
STABLE_SET_CAP = 10


@dataclass(frozen=True)
class VantagePoint:
    id: str
    kind: str  # "anchor" or "probe"
    country: str
    lat: float
    lon: float
    asn: int | None = None
    connected: bool = True

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "country": self.country,
            "lat": self.lat,
            "lon": self.lon,
            "asn": self.asn,
            "connected": self.connected,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "VantagePoint":
        return cls(
            id=str(obj["id"]),
            kind=obj.get("kind", "probe"),
            country=obj["country"].strip().upper(),
            lat=float(obj["lat"]),
            lon=float(obj["lon"]),
            asn=obj.get("asn"),
            connected=bool(obj.get("connected", True)),
        )


def load_vantages(fp: IO[str]) -> list[VantagePoint]:
    out = []
    for line in fp:
        line = line.strip()
        if line:
            out.append(VantagePoint.from_json(json.loads(line)))
    return out


def load_bad_ids(fp: IO[str]) -> set[str]:
    out = set()
    for line in fp:
        token = line.split("#", 1)[0].strip()
        if token:
            out.add(token)
    return out


def load_default_coords(fp: IO[str]) -> set[tuple[float, float]]:
    """Known per-country default coordinates (csv country,lat,lon). A vantage
    sitting exactly on one of these was never really geolocated."""
    import csv

    reader = csv.DictReader(fp)
    out = set()
    for row in reader:
        out.add((round(float(row["lat"]), 6), round(float(row["lon"]), 6)))
    return out


@dataclass
class VantageFilterReport:
    kept: int = 0
    disconnected: int = 0
    bad_id: int = 0
    default_coords: int = 0


def filter_vantages(
    vantages: Iterable[VantagePoint],
    bad_ids: set[str] | None = None,
    default_coords: set[tuple[float, float]] | None = None,
) -> tuple[list[VantagePoint], VantageFilterReport]:
    """Drop disconnected vantages, known-bad ids, and vantages parked on a
    default coordinate."""
    bad_ids = bad_ids or set()
    default_coords = default_coords or set()
    report = VantageFilterReport()
    kept = []
    for v in vantages:
        if not v.connected:
            report.disconnected += 1
            continue
        if v.id in bad_ids:
            report.bad_id += 1
            continue
        if (round(v.lat, 6), round(v.lon, 6)) in default_coords:
            report.default_coords += 1
            continue
        kept.append(v)
    report.kept = len(kept)
    return kept, report


def _greedy_distinct_asn(candidates: Sequence[VantagePoint], cap: int, seen_asns: set) -> list[VantagePoint]:
    """Pick up to cap, preferring unseen ASNs, ties by id."""
    remaining = sorted(candidates, key=lambda v: v.id)
    chosen: list[VantagePoint] = []
    while remaining and len(chosen) < cap:
        pick = None
        for v in remaining:
            if v.asn is not None and v.asn not in seen_asns:
                pick = v
                break
        if pick is None:
            pick = remaining[0]
        chosen.append(pick)
        remaining.remove(pick)
        if pick.asn is not None:
            seen_asns.add(pick.asn)
    return chosen


def _stable_subset(candidates: Sequence[VantagePoint], cap: int) -> tuple[VantagePoint, ...]:
    anchors = [v for v in candidates if v.kind == "anchor"]
    probes = [v for v in candidates if v.kind != "anchor"]
    seen: set = set()
    chosen = _greedy_distinct_asn(anchors, cap, seen)
    chosen += _greedy_distinct_asn(probes, cap - len(chosen), seen)
    return tuple(chosen)


@dataclass
class VantageSet:
    per_rir: dict[Rir, tuple[VantagePoint, ...]] = field(default_factory=dict)
    per_country: dict[str, tuple[VantagePoint, ...]] = field(default_factory=dict)
    unmapped_country: int = 0

    def by_id(self) -> dict[str, VantagePoint]:
        out: dict[str, VantagePoint] = {}
        for pool in self.per_rir.values():
            for v in pool:
                out[v.id] = v
        for pool in self.per_country.values():
            for v in pool:
                out[v.id] = v
        return out


def select_stable_sets(
    vantages: Iterable[VantagePoint],
    region_map: RegionMap,
    cap: int = STABLE_SET_CAP,
) -> VantageSet:
    """Build the stable per-country and per-RIR pools (anchors first, then
    greedy ASN diversity, ties by id; at most cap per pool)."""
    by_country: dict[str, list[VantagePoint]] = {}
    for v in vantages:
        by_country.setdefault(v.country, []).append(v)

    vset = VantageSet()
    by_rir: dict[Rir, list[VantagePoint]] = {rir: [] for rir in Rir}
    for cc in sorted(by_country):
        vset.per_country[cc] = _stable_subset(by_country[cc], cap)
        if cc in region_map:
            by_rir[region_map.rir_of(cc)].extend(by_country[cc])
        else:
            vset.unmapped_country += len(by_country[cc])
    for rir in RIR_ORDER:
        vset.per_rir[rir] = _stable_subset(by_rir[rir], cap)
    return vset


def prefix_rotation(prefix: Prefix) -> int:
    """Stable non-negative hash used to rotate pool picks per prefix."""
    digest = hashlib.sha256(str(prefix).encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def _rotate_pick(pool: Sequence[VantagePoint], count: int, offset: int) -> list[VantagePoint]:
    if not pool:
        return []
    count = min(count, len(pool))
    start = offset % len(pool)
    return [pool[(start + i) % len(pool)] for i in range(count)]


@dataclass(frozen=True)
class VantagePlan:
    vantages: tuple[VantagePoint, ...]
    no_country_vantage: bool = False
    used_regional_fallback: bool = False


def plan_vantages(reg: Registration, vset: VantageSet, region_map: RegionMap) -> VantagePlan:
    """Assemble the probe set for one registration: three per registry region
    plus five in the organization's country (or the registering region's pool
    when no organization country is known), deduplicated by id."""
    offset = prefix_rotation(reg.prefix)
    picks: list[VantagePoint] = []
    for rir in RIR_ORDER:
        picks += _rotate_pick(vset.per_rir.get(rir, ()), REGIONAL_PICKS, offset)

    no_country = False
    fallback = False
    cc = reg.org_country
    if cc is None:
        fallback = True
        pool = vset.per_rir.get(reg.rir, ())
    else:
        pool = vset.per_country.get(cc, ())
        if not pool:
            no_country = True
    if pool:
        picks += _rotate_pick(pool, COUNTRY_PICKS, offset)

    seen: set[str] = set()
    unique = []
    for v in picks:
        if v.id not in seen:
            seen.add(v.id)
            unique.append(v)
    return VantagePlan(
        vantages=tuple(unique),
        no_country_vantage=no_country,
        used_regional_fallback=fallback,
    )
