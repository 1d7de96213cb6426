"""Binary radix trie with path compression, keyed by CIDR prefix.

One trie holds one address family. All read operations are safe under
concurrent readers once the trie is frozen (or simply no longer mutated);
nothing in the read paths writes shared state.
"""

from __future__ import annotations

import ipaddress
from typing import Any, Iterator

from .errors import FamilyMismatch
from .registry import Addr, Prefix


class _Node:
    __slots__ = ("net", "plen", "value", "has_value", "left", "right")

    def __init__(self, net: int, plen: int):
        self.net = net
        self.plen = plen
        self.value: Any = None
        self.has_value = False
        self.left: _Node | None = None
        self.right: _Node | None = None


def _common_prefix_len(a: int, b: int, max_len: int, bits: int) -> int:
    diff = a ^ b
    if diff == 0:
        return max_len
    return min(max_len, bits - diff.bit_length())


class PrefixTrie:
    """Maps prefixes of one family to values; supports longest-prefix match,
    exact lookup, covering-prefix walks and contained-prefix enumeration."""

    def __init__(self, family: int):
        if family not in (4, 6):
            raise ValueError(f"family must be 4 or 6, not {family!r}")
        self.family = family
        self._bits = 32 if family == 4 else 128
        self._root = _Node(0, 0)
        self._size = 0
        self._frozen = False

    def __len__(self) -> int:
        return self._size

    def freeze(self) -> None:
        self._frozen = True

    def _check_key(self, prefix: Prefix) -> tuple[int, int]:
        if prefix.version != self.family:
            raise FamilyMismatch(f"IPv{prefix.version} key in IPv{self.family} trie")
        return int(prefix.network_address), prefix.prefixlen

    def _bit(self, net: int, i: int) -> int:
        return (net >> (self._bits - 1 - i)) & 1

    def _as_prefix(self, node: _Node) -> Prefix:
        return ipaddress.ip_network((node.net, node.plen))

    def insert(self, prefix: Prefix, value: Any) -> Any:
        """Insert, returning the displaced value for a repeated key (else None)."""
        if self._frozen:
            raise RuntimeError("trie is frozen")
        net, plen = self._check_key(prefix)
        bits = self._bits
        cur = self._root
        while True:
            if cur.plen == plen and cur.net == net:
                displaced = cur.value if cur.has_value else None
                if not cur.has_value:
                    self._size += 1
                cur.value = value
                cur.has_value = True
                return displaced
            b = self._bit(net, cur.plen)
            child = cur.right if b else cur.left
            if child is None:
                leaf = _Node(net, plen)
                leaf.value = value
                leaf.has_value = True
                if b:
                    cur.right = leaf
                else:
                    cur.left = leaf
                self._size += 1
                return None
            cpl = _common_prefix_len(net, child.net, min(plen, child.plen), bits)
            if cpl == child.plen:
                cur = child
                continue
            # key diverges inside the child's edge: split at the fork
            mid = _Node(net & ~((1 << (bits - cpl)) - 1) if cpl < bits else net, cpl)
            if self._bit(child.net, cpl):
                mid.right = child
            else:
                mid.left = child
            if cpl == plen:
                mid.value = value
                mid.has_value = True
            else:
                leaf = _Node(net, plen)
                leaf.value = value
                leaf.has_value = True
                if self._bit(net, cpl):
                    mid.right = leaf
                else:
                    mid.left = leaf
            if b:
                cur.right = mid
            else:
                cur.left = mid
            self._size += 1
            return None

    def _walk(self, net: int, plen: int) -> Iterator[_Node]:
        """Yield the nodes on the path from the root whose prefix contains
        (net, plen), most general first, ending at the deepest match."""
        cur = self._root
        while True:
            yield cur
            if cur.plen >= plen:
                return
            b = self._bit(net, cur.plen)
            child = cur.right if b else cur.left
            if child is None:
                return
            cpl = _common_prefix_len(net, child.net, min(plen, child.plen), self._bits)
            if cpl < child.plen:
                return
            cur = child

    def longest_match(self, addr: Addr) -> tuple[Prefix, Any] | None:
        if addr.version != self.family:
            raise FamilyMismatch(f"IPv{addr.version} key in IPv{self.family} trie")
        best = None
        for node in self._walk(int(addr), self._bits):
            if node.has_value:
                best = node
        if best is None:
            return None
        return self._as_prefix(best), best.value

    def lookup_steps(self, addr: Addr) -> int:
        """Node visits for a longest_match on addr; cost instrumentation."""
        if addr.version != self.family:
            raise FamilyMismatch(f"IPv{addr.version} key in IPv{self.family} trie")
        return sum(1 for _ in self._walk(int(addr), self._bits))

    def lookup_exact(self, prefix: Prefix) -> Any:
        net, plen = self._check_key(prefix)
        for node in self._walk(net, plen):
            if node.plen == plen and node.net == net:
                return node.value if node.has_value else None
        return None

    def covering(self, prefix: Prefix) -> list[tuple[Prefix, Any]]:
        """Inserted prefixes strictly less specific than, and containing, prefix."""
        net, plen = self._check_key(prefix)
        out = []
        for node in self._walk(net, plen):
            if node.has_value and node.plen < plen:
                out.append((self._as_prefix(node), node.value))
        return out

    def enumerate_contained(self, prefix: Prefix) -> list[tuple[Prefix, Any]]:
        """Inserted prefixes equal to or more specific than prefix, in
        address order."""
        net, plen = self._check_key(prefix)
        bits = self._bits
        out: list[tuple[Prefix, Any]] = []

        def visit(node: _Node) -> None:
            if node.has_value:
                out.append((self._as_prefix(node), node.value))
            if node.left is not None:
                visit(node.left)
            if node.right is not None:
                visit(node.right)

        cur = self._root
        while True:
            if cur.plen >= plen:
                if plen == 0 or (cur.net >> (bits - plen)) == (net >> (bits - plen)):
                    visit(cur)
                return out
            b = self._bit(net, cur.plen)
            child = cur.right if b else cur.left
            if child is None:
                return out
            cpl = _common_prefix_len(net, child.net, min(plen, child.plen), bits)
            if cpl < min(plen, child.plen):
                return out
            cur = child

    def __iter__(self) -> Iterator[tuple[Prefix, Any]]:
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.has_value:
                yield self._as_prefix(node), node.value
            if node.right is not None:
                stack.append(node.right)
            if node.left is not None:
                stack.append(node.left)
