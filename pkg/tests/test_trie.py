import ipaddress
import random

import pytest

from geoaudit.errors import FamilyMismatch
from geoaudit.registry import parse_address, parse_prefix
from geoaudit.trie import PrefixTrie


def linear_longest_match(prefixes, addr):
    """Reference: scan every prefix, keep the most specific containing one."""
    best = None
    for p in prefixes:
        if addr in p and (best is None or p.prefixlen > best.prefixlen):
            best = p
    return best


def random_v4_prefixes(rng, n):
    out = set()
    while len(out) < n:
        plen = rng.randint(8, 30)
        net = rng.randrange(0, 2**32) & ~((1 << (32 - plen)) - 1)
        out.add(ipaddress.ip_network((net, plen)))
    return sorted(out, key=lambda p: (int(p.network_address), p.prefixlen))


def random_v6_prefixes(rng, n):
    out = set()
    while len(out) < n:
        plen = rng.randint(16, 64)
        net = rng.randrange(0, 2**128) & ~((1 << (128 - plen)) - 1)
        out.add(ipaddress.ip_network((net, plen)))
    return sorted(out, key=lambda p: (int(p.network_address), p.prefixlen))


def test_longest_match_basic():
    trie = PrefixTrie(4)
    for text in ["10.0.0.0/8", "10.1.0.0/16", "10.1.2.0/24", "192.0.2.0/24"]:
        trie.insert(parse_prefix(text), text)
    assert len(trie) == 4
    hit = trie.longest_match(parse_address("10.1.2.3"))
    assert hit is not None and str(hit[0]) == "10.1.2.0/24"
    hit = trie.longest_match(parse_address("10.1.9.9"))
    assert hit is not None and str(hit[0]) == "10.1.0.0/16"
    hit = trie.longest_match(parse_address("10.200.0.1"))
    assert hit is not None and str(hit[0]) == "10.0.0.0/8"
    assert trie.longest_match(parse_address("11.0.0.1")) is None


def test_insert_returns_displaced_value():
    trie = PrefixTrie(4)
    p = parse_prefix("10.0.0.0/8")
    assert trie.insert(p, "first") is None
    assert trie.insert(p, "second") == "first"
    assert len(trie) == 1
    assert trie.lookup_exact(p) == "second"


def test_lookup_exact_does_not_fall_back():
    trie = PrefixTrie(4)
    trie.insert(parse_prefix("10.0.0.0/8"), "a")
    assert trie.lookup_exact(parse_prefix("10.0.0.0/8")) == "a"
    assert trie.lookup_exact(parse_prefix("10.0.0.0/16")) is None
    assert trie.lookup_exact(parse_prefix("11.0.0.0/8")) is None


def test_longest_match_matches_linear_scan_v4():
    rng = random.Random(2003)
    prefixes = random_v4_prefixes(rng, 500)
    trie = PrefixTrie(4)
    for i, p in enumerate(prefixes):
        trie.insert(p, i)
    trie.freeze()
    for _ in range(2000):
        if rng.random() < 0.5:
            base = rng.choice(prefixes)
            addr = ipaddress.ip_address(
                int(base.network_address) + rng.randrange(0, base.num_addresses))
        else:
            addr = ipaddress.ip_address(rng.randrange(0, 2**32))
        want = linear_longest_match(prefixes, addr)
        got = trie.longest_match(addr)
        if want is None:
            assert got is None
        else:
            assert got is not None and got[0] == want
            assert got[1] == prefixes.index(want)


def test_longest_match_matches_linear_scan_v6():
    rng = random.Random(2011)
    prefixes = random_v6_prefixes(rng, 300)
    trie = PrefixTrie(6)
    for i, p in enumerate(prefixes):
        trie.insert(p, i)
    for _ in range(1000):
        if rng.random() < 0.6:
            base = rng.choice(prefixes)
            off = rng.randrange(0, min(base.num_addresses, 2**64))
            addr = ipaddress.ip_address(int(base.network_address) + off)
        else:
            addr = ipaddress.ip_address(rng.randrange(0, 2**128))
        want = linear_longest_match(prefixes, addr)
        got = trie.longest_match(addr)
        assert (got is None) == (want is None)
        if want is not None:
            assert got[0] == want


def test_covering_returns_general_to_specific():
    trie = PrefixTrie(4)
    for text in ["10.0.0.0/8", "10.1.0.0/16", "10.1.2.0/24", "10.2.0.0/16"]:
        trie.insert(parse_prefix(text), text)
    got = trie.covering(parse_prefix("10.1.2.0/25"))
    assert [str(p) for p, _ in got] == ["10.0.0.0/8", "10.1.0.0/16", "10.1.2.0/24"]
    # strictness: the query prefix itself is not covering
    got = trie.covering(parse_prefix("10.1.2.0/24"))
    assert [str(p) for p, _ in got] == ["10.0.0.0/8", "10.1.0.0/16"]
    assert trie.covering(parse_prefix("172.16.0.0/12")) == []


def test_covering_matches_linear_scan():
    rng = random.Random(2017)
    prefixes = random_v4_prefixes(rng, 300)
    trie = PrefixTrie(4)
    for p in prefixes:
        trie.insert(p, str(p))
    for _ in range(500):
        q = rng.choice(prefixes)
        want = sorted(
            (p for p in prefixes if p.prefixlen < q.prefixlen and q.subnet_of(p)),
            key=lambda p: p.prefixlen)
        got = [p for p, _ in trie.covering(q)]
        assert got == want


def test_enumerate_contained_in_address_order():
    trie = PrefixTrie(4)
    for text in ["10.0.0.0/8", "10.1.0.0/16", "10.1.2.0/24", "10.128.0.0/9", "11.0.0.0/8"]:
        trie.insert(parse_prefix(text), text)
    got = trie.enumerate_contained(parse_prefix("10.0.0.0/8"))
    assert [str(p) for p, _ in got] == [
        "10.0.0.0/8", "10.1.0.0/16", "10.1.2.0/24", "10.128.0.0/9",
    ]
    got = trie.enumerate_contained(parse_prefix("0.0.0.0/0"))
    assert len(got) == 5


def test_enumerate_contained_matches_linear_scan():
    rng = random.Random(2027)
    prefixes = random_v4_prefixes(rng, 300)
    trie = PrefixTrie(4)
    for p in prefixes:
        trie.insert(p, str(p))
    queries = [rng.choice(prefixes) for _ in range(200)]
    queries += [ipaddress.ip_network((rng.randrange(0, 2**32) & ~0xFFFF, 16)) for _ in range(100)]
    for q in queries:
        want = sorted(
            (p for p in prefixes if p.prefixlen >= q.prefixlen and p.subnet_of(q)),
            key=lambda p: (int(p.network_address), p.prefixlen))
        got = [p for p, _ in trie.enumerate_contained(q)]
        assert got == want


def test_iteration_yields_all_entries_in_address_order():
    rng = random.Random(2029)
    prefixes = random_v4_prefixes(rng, 200)
    trie = PrefixTrie(4)
    for p in rng.sample(prefixes, len(prefixes)):
        trie.insert(p, None)
    got = [p for p, _ in trie]
    assert got == prefixes


def test_freeze_blocks_insert():
    trie = PrefixTrie(4)
    trie.insert(parse_prefix("10.0.0.0/8"), 1)
    trie.freeze()
    with pytest.raises(RuntimeError):
        trie.insert(parse_prefix("11.0.0.0/8"), 2)
    assert trie.longest_match(parse_address("10.0.0.1")) is not None


def test_family_mismatch():
    trie = PrefixTrie(4)
    with pytest.raises(FamilyMismatch):
        trie.insert(parse_prefix("2001:db8::/32"), 1)
    with pytest.raises(FamilyMismatch):
        trie.longest_match(parse_address("2001:db8::1"))
    with pytest.raises(ValueError):
        PrefixTrie(5)


def test_path_compression_keeps_lookups_shallow():
    # 256 sibling /16s: a compressed trie resolves a lookup in a handful of
    # node visits, far below the sibling count
    trie = PrefixTrie(4)
    for x in range(256):
        trie.insert(parse_prefix(f"10.{x}.0.0/16"), x)
    steps = trie.lookup_steps(parse_address("10.77.1.2"))
    assert steps <= 10
    hit = trie.longest_match(parse_address("10.77.1.2"))
    assert hit is not None and hit[1] == 77

    # a nested chain is the worst case: steps track chain depth
    chain = PrefixTrie(4)
    for plen in range(8, 25):
        chain.insert(ipaddress.ip_network((10 << 24, plen)), plen)
    steps = chain.lookup_steps(parse_address("10.0.0.1"))
    assert steps <= 18
