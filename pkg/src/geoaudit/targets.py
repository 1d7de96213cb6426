"""Target selection: hitlist loading, alias exclusion, per-prefix plans.

Each hitlist address is matched to its most specific registered prefix;
every prefix keeps at most two targets (the lowest addresses), so the probe
budget stays bounded and no address is probed for two prefixes.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

from .registry import (
    Addr,
    Prefix,
    Registration,
    parse_address,
    parse_prefix,
    prefix_sort_key,
)
from .trie import PrefixTrie

TARGETS_PER_PREFIX = 2


@dataclass(frozen=True)
class HitlistEntry:
    addr: Addr
    score: int | None = None


def load_hitlist_v4(fp: IO[str]) -> list[HitlistEntry]:
    """CSV with an addr,score header; score is an integer 0..100."""
    import csv

    reader = csv.DictReader(fp)
    want = ["addr", "score"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != want:
        raise ValueError(f"v4 hitlist needs an addr,score header, got {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(HitlistEntry(addr=parse_address(row["addr"]), score=int(row["score"])))
    return out


def load_hitlist_v6(fp: IO[str]) -> list[HitlistEntry]:
    """One IPv6 address per line; no responsiveness scores."""
    out = []
    for line in fp:
        token = line.split("#", 1)[0].strip()
        if token:
            out.append(HitlistEntry(addr=parse_address(token), score=None))
    return out


def load_prefix_list(fp: IO[str]) -> list[Prefix]:
    """One prefix per line with # comments; used for alias/anycast/lease lists."""
    out = []
    for line in fp:
        token = line.split("#", 1)[0].strip()
        if token:
            out.append(parse_prefix(token))
    return out


def exclude_aliased(
    entries: Iterable[HitlistEntry],
    aliased: Iterable[Prefix],
) -> tuple[list[HitlistEntry], int]:
    """Drop entries that fall inside any aliased prefix."""
    tries: dict[int, PrefixTrie] = {4: PrefixTrie(4), 6: PrefixTrie(6)}
    for prefix in aliased:
        tries[prefix.version].insert(prefix, True)
    kept = []
    dropped = 0
    for entry in entries:
        if tries[entry.addr.version].longest_match(entry.addr) is None:
            kept.append(entry)
        else:
            dropped += 1
    return kept, dropped


@dataclass(frozen=True)
class TargetPlan:
    registration: Registration
    targets: tuple[Addr, ...]

    @property
    def prefix(self) -> Prefix:
        return self.registration.prefix

    def to_json(self) -> dict:
        return {
            "registration": self.registration.to_json(),
            "targets": [str(t) for t in self.targets],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TargetPlan":
        return cls(
            registration=Registration.from_json(obj["registration"]),
            targets=tuple(parse_address(t) for t in obj["targets"]),
        )


def write_plans(plans: Iterable[TargetPlan], fp: IO[str]) -> int:
    n = 0
    for plan in plans:
        fp.write(json.dumps(plan.to_json(), sort_keys=True) + "\n")
        n += 1
    return n


def load_plans(fp: IO[str]) -> list[TargetPlan]:
    out = []
    for line in fp:
        line = line.strip()
        if line:
            out.append(TargetPlan.from_json(json.loads(line)))
    return out


def registration_trie(regs: Iterable[Registration]) -> tuple[dict[int, PrefixTrie], int]:
    """Index registrations by prefix, both families. When two registries
    carry the same prefix, the most recently updated row wins (ties: larger
    registry name); the survivor is flagged. Returns (tries, collisions)."""
    import datetime

    tries = {4: PrefixTrie(4), 6: PrefixTrie(6)}
    collisions = 0
    for reg in regs:
        trie = tries[reg.prefix.version]
        old = trie.lookup_exact(reg.prefix)
        if old is None:
            trie.insert(reg.prefix, reg)
            continue
        collisions += 1
        old_rank = (old.last_updated or datetime.date.min, old.rir.value)
        new_rank = (reg.last_updated or datetime.date.min, reg.rir.value)
        winner = reg if new_rank > old_rank else old
        trie.insert(reg.prefix, winner.with_flag("cross_rir_duplicate"))
    return tries, collisions


def build_target_plans(
    regs: Iterable[Registration],
    entries: Iterable[HitlistEntry],
    min_score: int = 0,
) -> list[TargetPlan]:
    """Assign hitlist addresses to their most specific registered prefix.

    Scored entries below min_score are dropped; unscored (IPv6) entries
    always pass. At most TARGETS_PER_PREFIX lowest addresses per prefix."""
    tries, _ = registration_trie(regs)
    per_prefix: dict[tuple, tuple[Registration, list[Addr]]] = {}
    for entry in entries:
        if entry.score is not None and entry.score < min_score:
            continue
        hit = tries[entry.addr.version].longest_match(entry.addr)
        if hit is None:
            continue
        _, reg = hit
        key = prefix_sort_key(reg.prefix)
        per_prefix.setdefault(key, (reg, []))[1].append(entry.addr)

    plans = []
    for key in sorted(per_prefix):
        reg, addrs = per_prefix[key]
        addrs = sorted(set(addrs), key=int)[:TARGETS_PER_PREFIX]
        plans.append(TargetPlan(registration=reg, targets=tuple(addrs)))
    return plans


def sample_plans(plans: Iterable[TargetPlan], fraction: float, seed: int) -> list[TargetPlan]:
    """Deterministic subsample: sorts by prefix, keeps round(n * fraction).

    Sorting first makes the choice independent of input order."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    ordered = sorted(plans, key=lambda p: prefix_sort_key(p.prefix))
    k = round(len(ordered) * fraction)
    picked = random.Random(seed).sample(ordered, k)
    picked.sort(key=lambda p: prefix_sort_key(p.prefix))
    return picked
