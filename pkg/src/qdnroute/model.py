"""Core QDN data types and the probabilistic entanglement-link model.

A quantum data network is an undirected graph whose nodes hold a limited
number of qubits and whose edges bundle a limited number of lossy quantum
channels.  Establishing a link on one channel is a Bernoulli trial repeated
over many attempts per time slot; routes succeed only if every edge on them
succeeds.  Everything downstream (allocation, selection, control) is built
on the closed-form success probabilities defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np


class MissingAllocationError(KeyError):
    """A route edge has no channel-count entry in the allocation."""


def channel_success_prob(p_tilde: float, attempts: int) -> float:
    """Success probability of a single channel after repeated attempts.

    A channel whose per-attempt success probability is ``p_tilde`` and which
    is tried ``attempts`` times within a slot succeeds with probability
    ``1 - (1 - p_tilde)**attempts``.  Evaluated in log domain: per-attempt
    probabilities around 2e-4 with thousands of attempts would otherwise
    lose precision.
    """
    if not 0.0 < p_tilde < 1.0:
        raise ValueError(f"p_tilde must lie in (0, 1), got {p_tilde}")
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    return -math.expm1(attempts * math.log1p(-p_tilde))


def edge_success_prob(p_e: float, n_e: float) -> float:
    """Probability that at least one of ``n_e`` parallel channels succeeds.

    ``n_e`` may be fractional (>= 1): the continuous-relaxed allocator
    evaluates the same closed form ``1 - (1 - p_e)**n_e`` at real arguments.
    ``p_e`` may round to exactly 1.0 when many attempts saturate double
    precision; the limit value 1.0 is returned.
    """
    if not 0.0 < p_e <= 1.0:
        raise ValueError(f"p_e must lie in (0, 1], got {p_e}")
    if n_e < 1:
        raise ValueError(f"n_e must be >= 1, got {n_e}")
    if p_e == 1.0:
        return 1.0
    return -math.expm1(n_e * math.log1p(-p_e))


@dataclass(frozen=True)
class EdgeSpec:
    """One undirected edge: endpoints, channel capacity, link model."""

    u: int
    v: int
    channels: int
    p_attempt: float
    attempts: int


@dataclass(frozen=True)
class QdnGraph:
    """Undirected QDN graph with per-node qubit and per-edge channel capacity.

    Nodes are dense integers ``0..node_count-1``; edges are dense integers
    indexing ``edges``.  Construction normalizes endpoints to ``u < v``,
    rejects self-loops and duplicates, and precomputes the per-channel
    success probability of every edge.  Instances are immutable and safe to
    share across concurrent trials.
    """

    qubit_caps: tuple[int, ...]
    edges: tuple[EdgeSpec, ...]
    p_edge: tuple[float, ...] = field(init=False, repr=False, compare=False)
    # log of per-channel failure probability, cached for the allocator
    log_fail: tuple[float, ...] = field(init=False, repr=False, compare=False)
    incident: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.qubit_caps)
        if n < 1:
            raise ValueError("graph needs at least one node")
        if any(q < 0 for q in self.qubit_caps):
            raise ValueError("qubit capacities must be >= 0")
        normalized = []
        seen: set[tuple[int, int]] = set()
        incident: list[list[int]] = [[] for _ in range(n)]
        for eid, e in enumerate(self.edges):
            u, v = (e.u, e.v) if e.u < e.v else (e.v, e.u)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({e.u}, {e.v}) references unknown node")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            if e.channels < 0:
                raise ValueError("channel capacity must be >= 0")
            normalized.append(EdgeSpec(u, v, e.channels, e.p_attempt, e.attempts))
            incident[u].append(eid)
            incident[v].append(eid)
        object.__setattr__(self, "edges", tuple(normalized))
        p_edge = tuple(channel_success_prob(e.p_attempt, e.attempts) for e in self.edges)
        object.__setattr__(self, "p_edge", p_edge)
        # Clamped so near-certain links (p_edge rounding to 1.0) keep the
        # allocator's log-domain arithmetic finite.
        object.__setattr__(
            self,
            "log_fail",
            tuple(-700.0 if p == 1.0 else max(math.log1p(-p), -700.0) for p in p_edge),
        )
        object.__setattr__(self, "incident", tuple(tuple(ids) for ids in incident))

    @property
    def node_count(self) -> int:
        return len(self.qubit_caps)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        """(neighbor, edge id) pairs of node ``v``, sorted by neighbor id."""
        out = []
        for eid in self.incident[v]:
            e = self.edges[eid]
            out.append((e.v if e.u == v else e.u, eid))
        out.sort()
        return out


@dataclass(frozen=True)
class SlotCapacities:
    """Qubits and channels actually available in one slot.

    Exogenous occupancy by other users may leave fewer resources than the
    base capacities; entries never exceed them.
    """

    q_caps: tuple[int, ...]
    w_caps: tuple[int, ...]

    @classmethod
    def from_graph(cls, graph: QdnGraph) -> "SlotCapacities":
        return cls(tuple(graph.qubit_caps), tuple(e.channels for e in graph.edges))


@dataclass(frozen=True)
class Route:
    """A simple path, stored both as an edge sequence and a node sequence.

    ``request_id`` identifies which request the route serves; candidate
    routes are built unbound (``request_id=None``) and bound on assignment.
    """

    request_id: int | None
    edges: tuple[int, ...]
    nodes: tuple[int, ...]

    @property
    def hops(self) -> int:
        return len(self.edges)

    @classmethod
    def from_nodes(cls, graph: QdnGraph, nodes: Sequence[int],
                   request_id: int | None = None) -> "Route":
        """Build and validate a route from its node sequence."""
        if len(nodes) < 2:
            raise ValueError("a route needs at least two nodes")
        if len(set(nodes)) != len(nodes):
            raise ValueError(f"route revisits a node: {nodes}")
        lookup = {}
        for eid, e in enumerate(graph.edges):
            lookup[(e.u, e.v)] = eid
        edge_ids = []
        for a, b in zip(nodes, nodes[1:]):
            key = (a, b) if a < b else (b, a)
            if key not in lookup:
                raise ValueError(f"nodes {a} and {b} are not adjacent")
            edge_ids.append(lookup[key])
        return cls(request_id, tuple(edge_ids), tuple(nodes))


class Allocation:
    """Per-(request, edge) positive channel counts for one slot, frozen."""

    __slots__ = ("_entries", "_cost")

    def __init__(self, entries: Mapping[tuple[int, int], int]):
        checked = {}
        for key, n in entries.items():
            if n < 1 or n != int(n):
                raise ValueError(f"allocation for {key} must be a positive integer, got {n}")
            checked[key] = int(n)
        self._entries = MappingProxyType(checked)
        self._cost = sum(checked.values())

    @property
    def cost(self) -> int:
        """Total channels (equivalently qubit pairs) consumed this slot."""
        return self._cost

    def get(self, request_id: int, edge_id: int) -> int:
        try:
            return self._entries[(request_id, edge_id)]
        except KeyError:
            raise MissingAllocationError(
                f"no allocation for request {request_id} on edge {edge_id}"
            ) from None

    def items(self):
        return self._entries.items()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __eq__(self, other) -> bool:
        return isinstance(other, Allocation) and dict(self._entries) == dict(other._entries)

    def __repr__(self) -> str:
        return f"Allocation({dict(self._entries)!r})"


def route_success_prob(graph: QdnGraph, route: Route, alloc: Allocation) -> float:
    """End-to-end success probability of a route: product over its edges."""
    prob = 1.0
    for eid in route.edges:
        n = alloc.get(route.request_id, eid)
        prob *= edge_success_prob(graph.p_edge[eid], n)
    return prob


def slot_utility(graph: QdnGraph, routes: Iterable[Route], alloc: Allocation) -> float:
    """Proportional-fairness utility: sum of log success probabilities.

    Natural logs; empty request sets score 0.  Always <= 0.
    """
    total = 0.0
    for route in routes:
        total += math.log(route_success_prob(graph, route, alloc))
    return total


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a capacity check, listing each overloaded node and edge."""

    ok: bool
    node_violations: tuple[tuple[int, int, int], ...]  # (node, load, cap)
    edge_violations: tuple[tuple[int, int, int], ...]  # (edge, load, cap)

    def __bool__(self) -> bool:
        return self.ok


def verify_feasible(graph: QdnGraph, caps: SlotCapacities,
                    routes: Iterable[Route], alloc: Allocation) -> FeasibilityReport:
    """Check the qubit and channel capacity constraints for one slot.

    A node's load counts the channels of every allocated edge incident to
    it, summed across requests; an edge's load sums the channels that all
    requests place on it.
    """
    node_load = [0] * graph.node_count
    edge_load = [0] * graph.edge_count
    for route in routes:
        for eid in route.edges:
            n = alloc.get(route.request_id, eid)
            e = graph.edges[eid]
            node_load[e.u] += n
            node_load[e.v] += n
            edge_load[eid] += n
    node_bad = tuple(
        (v, load, cap)
        for v, (load, cap) in enumerate(zip(node_load, caps.q_caps))
        if load > cap
    )
    edge_bad = tuple(
        (eid, load, cap)
        for eid, (load, cap) in enumerate(zip(edge_load, caps.w_caps))
        if load > cap
    )
    return FeasibilityReport(not node_bad and not edge_bad, node_bad, edge_bad)


def monte_carlo_route_success(graph: QdnGraph, route: Route, alloc: Allocation,
                              samples: int, seed) -> float:
    """Empirical route success rate from channel-level Bernoulli sampling.

    Each sample draws every allocated channel independently; an edge
    succeeds if any of its channels does, the route if every edge does.
    Validation oracle for the closed-form probabilities.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    ok = np.ones(samples, dtype=bool)
    for eid in route.edges:
        n = alloc.get(route.request_id, eid)
        p = graph.p_edge[eid]
        hits = rng.random((samples, n)) < p
        ok &= hits.any(axis=1)
    return float(ok.mean())
