"""Random QDN generation, per-slot capacity fluctuation, and request arrivals.

Topologies follow the Waxman model: nodes placed uniformly in a square,
each pair connected with probability ``beta * exp(-d / (alpha * d_max))``.
All sampling is keyed by ``(seed, stream, t)`` through numpy's seed
sequences, so a run is fully reproducible and the workload stream does not
shift when unrelated parameters change.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import EdgeSpec, QdnGraph, SlotCapacities

# Sub-stream tags keeping topology, capacity, workload, and sampler draws
# independent of each other for a given seed.
STREAM_TOPOLOGY = 0
STREAM_CAPACITY = 1
STREAM_WORKLOAD = 2
STREAM_GIBBS = 3

_MAX_GENERATION_RETRIES = 100


class GenerationError(RuntimeError):
    """Random topology generation could not produce a usable graph."""


@dataclass(frozen=True)
class WaxmanParams:
    """Waxman random-graph parameters over a square placement area.

    ``degree_band``, when set, rejects draws whose mean node degree falls
    outside the interval, the same way disconnected draws are rejected; the
    benchmark setup pins its topologies near degree 4.
    """

    node_count: int = 20
    alpha: float = 0.5
    beta: float = 0.5
    side: float = 100.0
    seed: int = 0
    degree_band: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise ValueError("node_count must be >= 2")
        if not 0.0 < self.alpha <= 1.0 or not 0.0 < self.beta <= 1.0:
            raise ValueError("alpha and beta must lie in (0, 1]")
        if self.side <= 0:
            raise ValueError("side must be positive")
        if self.degree_band is not None and self.degree_band[0] > self.degree_band[1]:
            raise ValueError("degree_band must be (lo, hi) with lo <= hi")


@dataclass(frozen=True)
class CapacityDistributions:
    """Capacity ranges and the per-edge link model.

    ``fluctuation`` selects whether slot capacities stay at the values drawn
    at generation time (``static``) or are redrawn uniformly every slot
    (``redraw``).  In redraw mode the graph's base capacities are pinned to
    the range maxima so per-slot draws never exceed them.
    """

    qubit_range: tuple[int, int] = (10, 16)
    channel_range: tuple[int, int] = (5, 8)
    fluctuation: str = "static"
    p_attempt: float = 2e-4
    attempts: int = 4000

    def __post_init__(self) -> None:
        for lo, hi in (self.qubit_range, self.channel_range):
            if not 1 <= lo <= hi:
                raise ValueError(f"capacity range [{lo}, {hi}] must satisfy 1 <= lo <= hi")
        if self.fluctuation not in ("static", "redraw"):
            raise ValueError(f"unknown fluctuation mode {self.fluctuation!r}")
        if not 0.0 < self.p_attempt < 1.0:
            raise ValueError("p_attempt must lie in (0, 1)")
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")


@dataclass(frozen=True)
class WorkloadParams:
    """Per-slot request process: a uniform number of random SD pairs."""

    sd_range: tuple[int, int] = (1, 5)
    f_max: int = 5

    def __post_init__(self) -> None:
        lo, hi = self.sd_range
        if not 0 <= lo <= hi:
            raise ValueError(f"sd_range [{lo}, {hi}] must satisfy 0 <= lo <= hi")
        if hi > self.f_max:
            raise ValueError("sd_range upper bound exceeds f_max")


def _place_nodes(rng: np.random.Generator, count: int, side: float) -> np.ndarray:
    return rng.uniform(0.0, side, size=(count, 2))


def _draw_edges(rng: np.random.Generator, points: np.ndarray,
                alpha: float, beta: float) -> list[tuple[int, int]]:
    """Test each unordered pair once with the Waxman probability."""
    n = len(points)
    diffs = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=2))
    d_max = dist.max()
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            prob = beta * np.exp(-dist[u, v] / (alpha * d_max)) if d_max > 0 else beta
            if rng.random() < prob:
                edges.append((u, v))
    return edges


def _connected(node_count: int, edges: list[tuple[int, int]]) -> bool:
    if node_count == 0:
        return True
    adj: list[list[int]] = [[] for _ in range(node_count)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        for nbr in adj[stack.pop()]:
            if nbr not in seen:
                seen.add(nbr)
                stack.append(nbr)
    return len(seen) == node_count


def generate_waxman(params: WaxmanParams, caps: CapacityDistributions) -> QdnGraph:
    """Draw a connected Waxman QDN with randomized capacities.

    Draws that are disconnected, or that miss the configured degree band,
    are resampled wholesale (placements included) rather than patched, to
    avoid biasing the edge distribution; after 100 failures a
    GenerationError is raised.  Deterministic given the seed.
    """
    q_lo, q_hi = caps.qubit_range
    w_lo, w_hi = caps.channel_range
    for attempt in range(_MAX_GENERATION_RETRIES):
        rng = np.random.default_rng([params.seed, STREAM_TOPOLOGY, attempt])
        points = _place_nodes(rng, params.node_count, params.side)
        pairs = _draw_edges(rng, points, params.alpha, params.beta)
        if not _connected(params.node_count, pairs):
            continue
        if params.degree_band is not None:
            degree = 2 * len(pairs) / params.node_count
            if not params.degree_band[0] <= degree <= params.degree_band[1]:
                continue
        if caps.fluctuation == "redraw":
            qubit_caps = tuple([q_hi] * params.node_count)
            channel_caps = [w_hi] * len(pairs)
        else:
            qubit_caps = tuple(int(x) for x in rng.integers(q_lo, q_hi + 1, params.node_count))
            channel_caps = [int(x) for x in rng.integers(w_lo, w_hi + 1, len(pairs))]
        edges = tuple(
            EdgeSpec(u, v, w, caps.p_attempt, caps.attempts)
            for (u, v), w in zip(pairs, channel_caps)
        )
        return QdnGraph(qubit_caps, edges)
    raise GenerationError(
        f"no connected Waxman graph in {_MAX_GENERATION_RETRIES} draws "
        f"(n={params.node_count}, alpha={params.alpha}, beta={params.beta})"
    )


def sample_slot_capacities(graph: QdnGraph, caps: CapacityDistributions,
                           t: int, seed: int) -> SlotCapacities:
    """Available capacities for slot ``t``; deterministic given (seed, t)."""
    if caps.fluctuation == "static":
        return SlotCapacities.from_graph(graph)
    rng = np.random.default_rng([seed, STREAM_CAPACITY, t])
    q_lo, q_hi = caps.qubit_range
    w_lo, w_hi = caps.channel_range
    q = tuple(int(x) for x in rng.integers(q_lo, q_hi + 1, graph.node_count))
    w = tuple(int(x) for x in rng.integers(w_lo, w_hi + 1, graph.edge_count))
    return SlotCapacities(q, w)


def sample_requests(graph: QdnGraph, workload: WorkloadParams,
                    t: int, seed: int) -> list[tuple[int, int]]:
    """Random (source, destination) pairs for slot ``t``.

    The pair count is uniform over ``sd_range``; each pair is a uniformly
    random ordered pair of distinct nodes.  Pairs may repeat within a slot
    (repeat requests are separate SD pairs).  Deterministic given (seed, t).
    """
    if graph.node_count < 2:
        raise ValueError("need at least 2 nodes to sample SD pairs")
    rng = np.random.default_rng([seed, STREAM_WORKLOAD, t])
    lo, hi = workload.sd_range
    count = int(rng.integers(lo, hi + 1))
    pairs = []
    for _ in range(count):
        s, d = rng.choice(graph.node_count, size=2, replace=False)
        pairs.append((int(s), int(d)))
    return pairs


# ---------------------------------------------------------------------------
# Serialization: graph documents and workload replay files.

def graph_to_dict(graph: QdnGraph) -> dict:
    attempts = {e.attempts for e in graph.edges}
    doc: dict = {
        "nodes": [{"id": i, "qubits": q} for i, q in enumerate(graph.qubit_caps)],
        "edges": [
            {"id": i, "u": e.u, "v": e.v, "channels": e.channels, "p_attempt": e.p_attempt}
            for i, e in enumerate(graph.edges)
        ],
    }
    if len(attempts) == 1:
        doc["attempts"] = attempts.pop()
    else:
        for entry, e in zip(doc["edges"], graph.edges):
            entry["attempts"] = e.attempts
    return doc


def graph_from_dict(doc: dict) -> QdnGraph:
    default_attempts = doc.get("attempts")
    nodes = sorted(doc["nodes"], key=lambda n: n["id"])
    if [n["id"] for n in nodes] != list(range(len(nodes))):
        raise ValueError("node ids must be dense integers starting at 0")
    edges = []
    for entry in sorted(doc["edges"], key=lambda e: e["id"]):
        attempts = entry.get("attempts", default_attempts)
        if attempts is None:
            raise ValueError(f"edge {entry['id']} has no attempts value")
        edges.append(EdgeSpec(entry["u"], entry["v"], entry["channels"],
                              entry["p_attempt"], attempts))
    return QdnGraph(tuple(n["qubits"] for n in nodes), tuple(edges))


def save_graph(graph: QdnGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=2) + "\n")


def load_graph(path: str | Path) -> QdnGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))


def dump_workload(stream: list[list[tuple[int, int]]], path: str | Path) -> None:
    """Write a replay file: one line per slot, ``t: s-d s-d ...``."""
    lines = []
    for t, pairs in enumerate(stream):
        lines.append(f"{t}: " + " ".join(f"{s}-{d}" for s, d in pairs))
    Path(path).write_text("\n".join(lines) + "\n")


def load_workload(path: str | Path) -> list[list[tuple[int, int]]]:
    stream = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        _, _, rest = line.partition(":")
        pairs = []
        for token in rest.split():
            s, _, d = token.partition("-")
            pairs.append((int(s), int(d)))
        stream.append(pairs)
    return stream
