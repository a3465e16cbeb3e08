"""Bidirectional network model: nodes, links, and per-direction capacities.

A link between two nodes carries an independent integer capacity in each
direction. Allocation itself is per directed link and lives in
:mod:`bamsim.engine`; this module only validates structure and capacity.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import DuplicateNodeError, SelfLinkError, UnknownEndpointError, UnknownLinkError


@dataclass(frozen=True)
class NetworkGraph:
    """Immutable set of nodes plus directed per-link capacities.

    ``capacity`` maps a directed pair ``(i, j)`` to the non-negative number
    of resource units node ``i`` may consume toward ``j``. Both directions
    of every link are always present.
    """

    nodes: tuple[str, ...]
    links: tuple[tuple[str, str], ...]
    capacity: dict[tuple[str, str], int]

    def has_link(self, i: str, j: str) -> bool:
        return (i, j) in self.capacity

    def directed_links(self) -> list[tuple[str, str]]:
        """All directed pairs, forward direction first per declared link."""
        out = []
        for a, b in self.links:
            out.append((a, b))
            out.append((b, a))
        return out


@dataclass(frozen=True)
class ConnectivityMatrix:
    """0/1 adjacency over the node order of the originating graph."""

    nodes: tuple[str, ...]
    entries: tuple[tuple[int, ...], ...]

    def at(self, i: str, j: str) -> int:
        return self.entries[self.nodes.index(i)][self.nodes.index(j)]


@dataclass(frozen=True)
class CapacityCheck:
    """Outcome of checking class constraints against a link capacity."""

    ok: bool
    capacity: int
    total_constraint: int

    @property
    def deficit(self) -> int:
        return max(0, self.total_constraint - self.capacity)


def build_network(nodes: Sequence[str], links: Sequence[tuple]) -> NetworkGraph:
    """Build a validated graph.

    Each entry of ``links`` is ``(a, b, capacity_ab, capacity_ba)``; the
    reverse capacity may be omitted, in which case it equals the forward one.

    Raises:
        DuplicateNodeError: a node identifier appears twice.
        UnknownEndpointError: a link references an undeclared node.
        SelfLinkError: a link connects a node to itself.
        ValueError: a capacity is negative.
    """
    seen: set[str] = set()
    for n in nodes:
        if n in seen:
            raise DuplicateNodeError(n)
        seen.add(n)

    link_pairs: list[tuple[str, str]] = []
    capacity: dict[tuple[str, str], int] = {}
    for entry in links:
        if len(entry) == 3:
            a, b, fwd = entry
            rev = fwd
        else:
            a, b, fwd, rev = entry
        for endpoint in (a, b):
            if endpoint not in seen:
                raise UnknownEndpointError(endpoint)
        if a == b:
            raise SelfLinkError(a)
        if fwd < 0 or rev < 0:
            raise ValueError(f"negative capacity on link {a!r}-{b!r}")
        link_pairs.append((a, b))
        capacity[(a, b)] = int(fwd)
        capacity[(b, a)] = int(rev)

    return NetworkGraph(nodes=tuple(nodes), links=tuple(link_pairs), capacity=capacity)


def connectivity(graph: NetworkGraph) -> ConnectivityMatrix:
    """Adjacency matrix of the graph: symmetric, zero diagonal."""
    index = {n: i for i, n in enumerate(graph.nodes)}
    size = len(graph.nodes)
    rows = [[0] * size for _ in range(size)]
    for a, b in graph.links:
        rows[index[a]][index[b]] = 1
        rows[index[b]][index[a]] = 1
    return ConnectivityMatrix(nodes=graph.nodes, entries=tuple(tuple(r) for r in rows))


def validate_capacity(graph: NetworkGraph, link: tuple[str, str], classes) -> CapacityCheck:
    """Check that the class constraints configured on ``link`` fit its capacity.

    The check passes when the sum of all class constraints does not exceed
    the directed link's capacity.

    Raises:
        UnknownLinkError: ``link`` is not a directed pair of the graph.
    """
    if link not in graph.capacity:
        raise UnknownLinkError(link)
    total = sum(c.constraint for c in classes)
    cap = graph.capacity[link]
    return CapacityCheck(ok=total <= cap, capacity=cap, total_constraint=total)
