"""Consistency taxonomy and the prefix audit pipeline.

A prefix is judged on three views of region: where it is registered
(rir_reg), where its organization sits (rir_org), and where measurement
places it (rir_geo, a set). Five classes cover every combination:

  FC  fully consistent     same org region, used where registered
  OC  org-consistent       foreign org, used in the org's region
  OI  org-inconsistent     foreign org, used in the registered region
  RI  region-inconsistent  home org, used somewhere else entirely
  FI  fully inconsistent   foreign org, used in neither region

Filters run in a fixed order before classification: unresponsive, anycast,
NIR-managed, then BGP alignment. Order matters for the accounting: a prefix
removed at one stage is never counted at a later one.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .bgp import Alignment, Rib, align
from .errors import EmptyGeoSet, NoResponses
from .geo import FeasibleRegion, GeoConfig, infer_region
from .registry import (
    Addr,
    Prefix,
    RegionMap,
    Registration,
    Rir,
    parse_address,
    parse_prefix,
    prefix_sort_key,
)
from .targets import TargetPlan
from .trie import PrefixTrie
from .vantage import VantagePoint


class ConsistencyClass(enum.Enum):
    FC = "FC"
    OC = "OC"
    OI = "OI"
    RI = "RI"
    FI = "FI"

    def __str__(self) -> str:
        return self.value


CLASS_ORDER = (
    ConsistencyClass.FC,
    ConsistencyClass.OC,
    ConsistencyClass.OI,
    ConsistencyClass.RI,
    ConsistencyClass.FI,
)


class FilterReason(enum.Enum):
    UNRESPONSIVE = "unresponsive"
    ANYCAST = "anycast"
    NIR = "nir"
    BGP_SUPERNET_OR_MIXED = "bgp_supernet_or_mixed"
    UNADVERTISED = "unadvertised"
    NO_ORG_COUNTRY = "no_org_country"
    CONFLICTING = "conflicting"

    def __str__(self) -> str:
        return self.value


FILTER_ORDER = (
    FilterReason.UNRESPONSIVE,
    FilterReason.ANYCAST,
    FilterReason.NIR,
    FilterReason.BGP_SUPERNET_OR_MIXED,
    FilterReason.UNADVERTISED,
    FilterReason.NO_ORG_COUNTRY,
    FilterReason.CONFLICTING,
)


def classify_one(
    rir_reg: Rir,
    rir_org: Rir | None,
    rir_geo: frozenset[Rir] | set[Rir],
) -> ConsistencyClass:
    """Apply the five-class rule.

    A missing org region is treated as matching the registered region, so
    such prefixes can only be FC or RI. Org-consistent beats
    org-inconsistent when the geo set contains both candidate regions."""
    if not rir_geo:
        raise EmptyGeoSet(f"no feasible region for {rir_reg} prefix")
    if rir_org is None or rir_org == rir_reg:
        return ConsistencyClass.FC if rir_reg in rir_geo else ConsistencyClass.RI
    if rir_org in rir_geo:
        return ConsistencyClass.OC
    if rir_reg in rir_geo:
        return ConsistencyClass.OI
    return ConsistencyClass.FI


@dataclass(frozen=True)
class TargetOutcome:
    target: Addr
    responded: bool
    vantage_id: str | None = None
    vantage_country: str | None = None
    min_rtt_ms: float | None = None
    radius_km: float | None = None
    rirs: frozenset[Rir] = frozenset()
    cls: ConsistencyClass | None = None

    def to_json(self) -> dict:
        return {
            "target": str(self.target),
            "responded": self.responded,
            "vantage_id": self.vantage_id,
            "vantage_country": self.vantage_country,
            "min_rtt_ms": self.min_rtt_ms,
            "radius_km": self.radius_km,
            "rirs": sorted(r.value for r in self.rirs),
            "class": self.cls.value if self.cls else None,
        }


@dataclass(frozen=True)
class ConsistencyRecord:
    """One row of audit output: exactly one of cls / filter_reason is set."""

    prefix: Prefix
    rir_reg: Rir
    rir_org: Rir | None = None
    org_country: str | None = None
    rir_geo: frozenset[Rir] = frozenset()
    cls: ConsistencyClass | None = None
    filter_reason: FilterReason | None = None
    flags: tuple[str, ...] = ()
    targets: tuple[TargetOutcome, ...] = ()

    def to_json(self) -> dict:
        return {
            "prefix": str(self.prefix),
            "rir_reg": self.rir_reg.value,
            "rir_org": self.rir_org.value if self.rir_org else None,
            "org_country": self.org_country,
            "rir_geo": sorted(r.value for r in self.rir_geo),
            "class": self.cls.value if self.cls else None,
            "filter_reason": self.filter_reason.value if self.filter_reason else None,
            "flags": list(self.flags),
            "targets": [t.to_json() for t in self.targets],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ConsistencyRecord":
        targets = tuple(
            TargetOutcome(
                target=parse_address(t["target"]),
                responded=t["responded"],
                vantage_id=t.get("vantage_id"),
                vantage_country=t.get("vantage_country"),
                min_rtt_ms=t.get("min_rtt_ms"),
                radius_km=t.get("radius_km"),
                rirs=frozenset(Rir(r) for r in t.get("rirs", ())),
                cls=ConsistencyClass(t["class"]) if t.get("class") else None,
            )
            for t in obj.get("targets", ())
        )
        return cls(
            prefix=parse_prefix(obj["prefix"]),
            rir_reg=Rir(obj["rir_reg"]),
            rir_org=Rir(obj["rir_org"]) if obj.get("rir_org") else None,
            org_country=obj.get("org_country"),
            rir_geo=frozenset(Rir(r) for r in obj.get("rir_geo", ())),
            cls=ConsistencyClass(obj["class"]) if obj.get("class") else None,
            filter_reason=FilterReason(obj["filter_reason"]) if obj.get("filter_reason") else None,
            flags=tuple(obj.get("flags", ())),
            targets=targets,
        )


def write_records(records: Iterable[ConsistencyRecord], fp: IO[str]) -> int:
    n = 0
    for rec in records:
        fp.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
        n += 1
    return n


def load_records(fp: IO[str]) -> list[ConsistencyRecord]:
    out = []
    for line in fp:
        line = line.strip()
        if line:
            out.append(ConsistencyRecord.from_json(json.loads(line)))
    return out


def reconcile_targets(outcomes: Sequence[TargetOutcome]) -> tuple[ConsistencyClass | None, bool]:
    """Combine per-target classes: (class, conflicting). Two responsive
    targets that disagree are a conflict; otherwise the lone class wins."""
    classes = [o.cls for o in outcomes if o.cls is not None]
    if not classes:
        return None, False
    if len(set(classes)) > 1:
        return None, True
    return classes[0], False


@dataclass
class AuditConfig:
    region_map: RegionMap
    geo: GeoConfig
    strict_no_org: bool = False


def _overlaps(prefix: Prefix, trie: PrefixTrie) -> bool:
    if trie.lookup_exact(prefix) is not None:
        return True
    if trie.covering(prefix):
        return True
    return bool(trie.enumerate_contained(prefix))


def build_prefix_set(prefixes: Iterable[Prefix]) -> dict[int, PrefixTrie]:
    tries = {4: PrefixTrie(4), 6: PrefixTrie(6)}
    for prefix in prefixes:
        tries[prefix.version].insert(prefix, True)
    return tries


def _is_nir_managed(reg: Registration, nir_markers: Sequence[str]) -> bool:
    """Markers hit on the org id or on maintainer flags, case-insensitive."""
    if not nir_markers:
        return False
    haystacks = [reg.org_id or ""] + [f for f in reg.flags if f.startswith("mnt:")]
    lowered = [h.lower() for h in haystacks]
    return any(marker.lower() in h for h in lowered for marker in nir_markers if marker)


def audit_prefix(
    plan: TargetPlan,
    results_by_target: Mapping[Addr, Sequence],
    vantages_by_id: Mapping[str, VantagePoint],
    rib: Rib,
    anycast: dict[int, PrefixTrie],
    nir_markers: Sequence[str],
    config: AuditConfig,
) -> ConsistencyRecord:
    """Run the filter chain and classification for a single prefix."""
    reg = plan.registration
    flags = list(reg.flags)

    outcomes: list[TargetOutcome] = []
    any_response = False
    for target in plan.targets:
        results = results_by_target.get(target, ())
        responded = any(res.rtts_ms for res in results)
        any_response = any_response or responded
        outcomes.append(TargetOutcome(target=target, responded=responded))

    def record(**kwargs) -> ConsistencyRecord:
        return ConsistencyRecord(
            prefix=reg.prefix,
            rir_reg=reg.rir,
            org_country=reg.org_country,
            flags=tuple(flags),
            **kwargs,
        )

    rir_org = None
    if reg.org_country is not None:
        if reg.org_country in config.region_map:
            rir_org = config.region_map.rir_of(reg.org_country)
        else:
            flags.append("org_country_unmapped")

    # (1) unresponsive
    if not any_response:
        return record(rir_org=rir_org, filter_reason=FilterReason.UNRESPONSIVE,
                      targets=tuple(outcomes))
    # (2) anycast overlap
    if _overlaps(reg.prefix, anycast[reg.prefix.version]):
        return record(rir_org=rir_org, filter_reason=FilterReason.ANYCAST,
                      targets=tuple(outcomes))
    # (3) NIR-managed space
    if _is_nir_managed(reg, nir_markers):
        return record(rir_org=rir_org, filter_reason=FilterReason.NIR,
                      targets=tuple(outcomes))
    # (4) BGP alignment
    alignment = align(reg.prefix, rib)
    if alignment.moas:
        flags.append("moas")
    if alignment.alignment in (Alignment.SUPERNET, Alignment.MIXED_AS):
        return record(rir_org=rir_org, filter_reason=FilterReason.BGP_SUPERNET_OR_MIXED,
                      targets=tuple(outcomes))
    if alignment.alignment is Alignment.UNADVERTISED:
        return record(rir_org=rir_org, filter_reason=FilterReason.UNADVERTISED,
                      targets=tuple(outcomes))
    # strict mode refuses to classify without an org country
    if config.strict_no_org and rir_org is None:
        return record(rir_org=None, filter_reason=FilterReason.NO_ORG_COUNTRY,
                      targets=tuple(outcomes))
    if reg.org_country is None and "no_org_country" not in flags:
        flags.append("no_org_country")

    # (5) per-target inference and classification
    final_outcomes: list[TargetOutcome] = []
    for outcome in outcomes:
        if not outcome.responded:
            final_outcomes.append(outcome)
            continue
        try:
            region: FeasibleRegion = infer_region(
                results_by_target.get(outcome.target, ()),
                vantages_by_id, config.geo, config.region_map,
            )
        except NoResponses:
            final_outcomes.append(outcome)
            continue
        try:
            cls = classify_one(reg.rir, rir_org, region.rirs)
        except EmptyGeoSet:
            flags.append("empty_geo_set")
            final_outcomes.append(outcome)
            continue
        vantage = vantages_by_id[region.vantage_id]
        final_outcomes.append(TargetOutcome(
            target=outcome.target,
            responded=True,
            vantage_id=region.vantage_id,
            vantage_country=vantage.country,
            min_rtt_ms=region.rtt_ms,
            radius_km=region.radius_km,
            rirs=region.rirs,
            cls=cls,
        ))

    rir_geo = frozenset().union(*(o.rirs for o in final_outcomes)) if final_outcomes else frozenset()

    # (6) reconciliation across targets
    cls, conflict = reconcile_targets(final_outcomes)
    if conflict:
        return record(rir_org=rir_org, rir_geo=rir_geo,
                      filter_reason=FilterReason.CONFLICTING, targets=tuple(final_outcomes))
    if cls is None:
        # responsive targets all failed inference; treat as unresponsive
        return record(rir_org=rir_org, rir_geo=rir_geo,
                      filter_reason=FilterReason.UNRESPONSIVE, targets=tuple(final_outcomes))
    return record(rir_org=rir_org, rir_geo=rir_geo, cls=cls, targets=tuple(final_outcomes))


def audit_pipeline(
    plans: Iterable[TargetPlan],
    results_by_target: Mapping[Addr, Sequence],
    vantages_by_id: Mapping[str, VantagePoint],
    rib: Rib,
    anycast_prefixes: Iterable[Prefix],
    nir_markers: Sequence[str],
    config: AuditConfig,
) -> list[ConsistencyRecord]:
    """Classify every plan; exactly one record per prefix, sorted by prefix."""
    anycast = build_prefix_set(anycast_prefixes)
    records = []
    for plan in sorted(plans, key=lambda p: prefix_sort_key(p.prefix)):
        records.append(audit_prefix(
            plan, results_by_target, vantages_by_id, rib, anycast, nir_markers, config,
        ))
    return records


@dataclass
class PipelineCounts:
    candidates: int = 0
    classified: int = 0
    filtered: dict[FilterReason, int] = field(default_factory=dict)
    by_class: dict[ConsistencyClass, int] = field(default_factory=dict)

    def check_identity(self) -> bool:
        return self.candidates == self.classified + sum(self.filtered.values())


def pipeline_counts(records: Iterable[ConsistencyRecord]) -> PipelineCounts:
    counts = PipelineCounts(
        filtered={reason: 0 for reason in FILTER_ORDER},
        by_class={cls: 0 for cls in CLASS_ORDER},
    )
    for rec in records:
        counts.candidates += 1
        if rec.cls is not None:
            counts.classified += 1
            counts.by_class[rec.cls] += 1
        elif rec.filter_reason is not None:
            counts.filtered[rec.filter_reason] += 1
    return counts
