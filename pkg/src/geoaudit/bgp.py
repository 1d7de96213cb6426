"""Alignment of registered prefixes against a BGP routing table.

Precedence: an exact route wins, then any covering route, then contained
routes. A registered block only advertised in pieces is a Supernet when all
pieces share an origin, MixedAS otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import IO, Iterable

from .errors import MalformedRoute
from .registry import Prefix, Registration, Rir, parse_prefix
from .trie import PrefixTrie


class Alignment(enum.Enum):
    ALIGNED = "aligned"
    SUBNET = "subnet"
    SUPERNET = "supernet"
    MIXED_AS = "mixed_as"
    UNADVERTISED = "unadvertised"

    def __str__(self) -> str:
        return self.value


# column order used in tables
ALIGNMENT_ORDER = (
    Alignment.SUBNET,
    Alignment.ALIGNED,
    Alignment.SUPERNET,
    Alignment.MIXED_AS,
    Alignment.UNADVERTISED,
)


@dataclass
class Rib:
    """Route table: per-family tries mapping prefix -> frozenset of origins."""

    v4: PrefixTrie
    v6: PrefixTrie
    default_routes_dropped: int = 0

    def trie(self, family: int) -> PrefixTrie:
        return self.v4 if family == 4 else self.v6

    @property
    def route_count(self) -> int:
        return len(self.v4) + len(self.v6)


def load_rib(fp: IO[str]) -> Rib:
    """Read routes from lines of "<prefix> <origin_asn>".

    Comment lines (#) and blanks are skipped; default routes (/0) are
    dropped and counted; repeated prefixes merge their origins."""
    origins: dict[Prefix, set[int]] = {}
    dropped = 0
    for lineno, line in enumerate(fp, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise MalformedRoute(f"line {lineno}: expected '<prefix> <origin_asn>', got {text!r}")
        try:
            prefix = parse_prefix(parts[0])
            asn_text = parts[1]
            asn = int(asn_text[2:] if asn_text.upper().startswith("AS") else asn_text)
        except Exception as exc:
            raise MalformedRoute(f"line {lineno}: {exc}") from None
        if prefix.prefixlen == 0:
            dropped += 1
            continue
        origins.setdefault(prefix, set()).add(asn)

    rib = Rib(v4=PrefixTrie(4), v6=PrefixTrie(6), default_routes_dropped=dropped)
    for prefix, asns in origins.items():
        rib.trie(prefix.version).insert(prefix, frozenset(asns))
    rib.v4.freeze()
    rib.v6.freeze()
    return rib


@dataclass(frozen=True)
class AlignmentResult:
    alignment: Alignment
    origins: frozenset[int] = frozenset()
    covering_route: Prefix | None = None
    contained_routes: int = 0
    moas: bool = False


def align(prefix: Prefix, rib: Rib) -> AlignmentResult:
    trie = rib.trie(prefix.version)
    exact = trie.lookup_exact(prefix)
    if exact is not None:
        return AlignmentResult(Alignment.ALIGNED, origins=exact, moas=len(exact) > 1)
    covering = trie.covering(prefix)
    if covering:
        route, asns = covering[-1]  # most specific covering route
        return AlignmentResult(Alignment.SUBNET, origins=asns, covering_route=route, moas=len(asns) > 1)
    contained = trie.enumerate_contained(prefix)
    if contained:
        common = frozenset.intersection(*(asns for _, asns in contained))
        if common:
            return AlignmentResult(Alignment.SUPERNET, origins=common, contained_routes=len(contained))
        every = frozenset().union(*(asns for _, asns in contained))
        return AlignmentResult(Alignment.MIXED_AS, origins=every, contained_routes=len(contained))
    return AlignmentResult(Alignment.UNADVERTISED)


def alignment_table(
    regs: Iterable[Registration],
    rib: Rib,
    family: int | None = None,
) -> dict[Rir, dict[Alignment, float]]:
    """Fraction of each registry's prefixes in each alignment class. Rows
    appear only for registries with at least one prefix and sum to 1."""
    counts: dict[Rir, dict[Alignment, int]] = {}
    for reg in regs:
        if family is not None and reg.prefix.version != family:
            continue
        row = counts.setdefault(reg.rir, {a: 0 for a in Alignment})
        row[align(reg.prefix, rib).alignment] += 1
    table: dict[Rir, dict[Alignment, float]] = {}
    for rir, row in counts.items():
        total = sum(row.values())
        table[rir] = {a: row[a] / total for a in ALIGNMENT_ORDER}
    return table
