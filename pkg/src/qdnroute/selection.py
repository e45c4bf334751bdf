"""Per-slot route selection over the candidate product space.

Two searchers share the allocator as their evaluation oracle: exhaustive
enumeration for small product spaces, and a Gibbs sampler whose proposals
flip one request's route at a time and are accepted with a logistic
probability in the objective difference.  Infeasible joint selections score
negative infinity so either searcher simply avoids them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .allocation import (
    Allocation,
    InfeasibleSelectionError,
    PerSlotObjectiveParams,
    allocate,
)
from .model import QdnGraph, SlotCapacities
from .routes import SdRequest

DEFAULT_ENUMERATION_CAP = 10_000

# Iteration budget and stability window scale with the request count.
_MAX_ITERS_PER_REQUEST = 200
_STABLE_WINDOW_PER_REQUEST = 5
_INIT_RETRIES = 100

# RouteSelection: chosen candidate index per request id.
RouteSelection = dict[int, int]


class EnumerationCapError(RuntimeError):
    """The candidate product space is too large for exhaustive search."""


class AllInfeasibleError(RuntimeError):
    """No joint route selection admits even the all-ones allocation."""


@dataclass(frozen=True)
class GibbsParams:
    """Sampler controls: temperature, budgets, and the RNG seed.

    ``max_iters`` and ``stability_window`` default to 200 and 5 proposals
    per request when left unset.  ``batch_disjoint`` lets requests whose
    candidate sets share no edge evolve in the same iteration.
    """

    gamma: float = 500.0
    max_iters: int | None = None
    stability_window: int | None = None
    seed: int | Sequence[int] = 0
    batch_disjoint: bool = False

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.stability_window is not None and self.stability_window < 1:
            raise ValueError("stability_window must be >= 1")


def gibbs_accept_prob(f_new: float, f_old: float, gamma: float) -> float:
    """Probability of moving to the proposed selection.

    Logistic in the objective difference: 1 / (1 + exp((f_old - f_new) /
    gamma)).  Equal objectives give 1/2; large improvements are accepted
    almost surely.  Infinite arguments resolve to the corresponding limit.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if f_new == f_old:
        return 0.5
    if f_new == -math.inf:
        return 0.0
    if f_old == -math.inf:
        return 1.0
    z = (f_old - f_new) / gamma
    if z > 700.0:
        return 0.0
    if z < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(z))


def _evaluate(graph: QdnGraph, caps: SlotCapacities, requests: Sequence[SdRequest],
              choice: tuple[int, ...],
              params: PerSlotObjectiveParams) -> tuple[Allocation | None, float]:
    routes = [req.candidates[c] for req, c in zip(requests, choice)]
    try:
        return allocate(graph, caps, routes, params)
    except InfeasibleSelectionError:
        return None, -math.inf


def exhaustive_select(graph: QdnGraph, caps: SlotCapacities,
                      requests: Sequence[SdRequest],
                      params: PerSlotObjectiveParams,
                      enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
                      ) -> tuple[RouteSelection, Allocation, float]:
    """Evaluate every route combination and return the best.

    Ties break toward the lexicographically first index tuple.  Raises
    EnumerationCapError when the product space exceeds the cap, and
    AllInfeasibleError when no combination is feasible.
    """
    if not requests:
        raise ValueError("no requests to select routes for")
    sizes = [len(req.candidates) for req in requests]
    if any(s == 0 for s in sizes):
        raise ValueError("every request needs at least one candidate route")
    space = math.prod(sizes)
    if space > enumeration_cap:
        raise EnumerationCapError(
            f"{space} combinations exceed the cap of {enumeration_cap}; "
            "use gibbs_select"
        )
    best_choice = None
    best_alloc = None
    best_f = -math.inf
    for choice in product(*(range(s) for s in sizes)):
        alloc, f = _evaluate(graph, caps, requests, choice, params)
        if alloc is not None and f > best_f:
            best_choice, best_alloc, best_f = choice, alloc, f
    if best_choice is None:
        raise AllInfeasibleError("every route combination is infeasible")
    selection = {req.request_id: c for req, c in zip(requests, best_choice)}
    return selection, best_alloc, best_f


def _disjoint_groups(requests: Sequence[SdRequest], order: list[int]) -> list[int]:
    # Greedily extend the first request of `order` with requests whose
    # candidate edge sets are disjoint from everything picked so far.
    union: set[int] = set()
    picked = []
    for idx in order:
        edges = set()
        for route in requests[idx].candidates:
            edges.update(route.edges)
        if picked and (edges & union):
            continue
        picked.append(idx)
        union |= edges
    return picked


def gibbs_select(graph: QdnGraph, caps: SlotCapacities,
                 requests: Sequence[SdRequest],
                 params: PerSlotObjectiveParams,
                 gibbs: GibbsParams,
                 trace: list | None = None,
                 ) -> tuple[RouteSelection, Allocation, float]:
    """Gibbs-sampling route search; returns the best selection visited.

    Starts from a uniformly random feasible selection, then repeatedly
    proposes an alternative candidate for one uniformly random request and
    accepts with ``gibbs_accept_prob``.  Stops after ``stability_window``
    consecutive proposals without an accepted change, or at ``max_iters``.
    Deterministic given the seed.
    """
    if not requests:
        raise ValueError("no requests to select routes for")
    sizes = [len(req.candidates) for req in requests]
    if any(s == 0 for s in sizes):
        raise ValueError("every request needs at least one candidate route")
    count = len(requests)
    max_iters = gibbs.max_iters or _MAX_ITERS_PER_REQUEST * count
    window = gibbs.stability_window or _STABLE_WINDOW_PER_REQUEST * count
    rng = np.random.default_rng(gibbs.seed)

    memo: dict[tuple[int, ...], tuple[Allocation | None, float]] = {}

    def evaluate(choice: tuple[int, ...]) -> tuple[Allocation | None, float]:
        if choice not in memo:
            memo[choice] = _evaluate(graph, caps, requests, choice, params)
        return memo[choice]

    current = None
    f_cur = -math.inf
    for _ in range(_INIT_RETRIES):
        choice = tuple(int(rng.integers(s)) for s in sizes)
        alloc, f = evaluate(choice)
        if alloc is not None:
            current, f_cur = choice, f
            break
    if current is None:
        raise AllInfeasibleError(
            f"no feasible initial selection in {_INIT_RETRIES} draws"
        )

    best_choice, best_alloc, best_f = current, memo[current][0], f_cur
    stable = 0
    for it in range(max_iters):
        if stable >= window:
            break
        if gibbs.batch_disjoint and count > 1:
            order = [int(i) for i in rng.permutation(count)]
            flips = _disjoint_groups(requests, order)
        else:
            flips = [int(rng.integers(count))]
        proposal = list(current)
        changed_any = False
        for idx in flips:
            if sizes[idx] < 2:
                continue
            alt = int(rng.integers(sizes[idx] - 1))
            if alt >= current[idx]:
                alt += 1
            proposal[idx] = alt
            changed_any = True
        if not changed_any:
            stable += 1
            continue
        proposal = tuple(proposal)
        alloc, f_new = evaluate(proposal)
        eta = gibbs_accept_prob(f_new, f_cur, gibbs.gamma)
        accepted = rng.random() < eta
        if trace is not None:
            trace.append((it, proposal, f_cur, f_new, accepted))
        if accepted and alloc is not None:
            current, f_cur = proposal, f_new
            stable = 0
            if f_new > best_f:
                best_choice, best_alloc, best_f = proposal, alloc, f_new
        else:
            stable += 1

    selection = {req.request_id: c for req, c in zip(requests, best_choice)}
    return selection, best_alloc, best_f


def select_routes(graph: QdnGraph, caps: SlotCapacities,
                  requests: Sequence[SdRequest],
                  params: PerSlotObjectiveParams,
                  gibbs: GibbsParams | None = None,
                  enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
                  ) -> tuple[RouteSelection, Allocation, float]:
    """Exhaustive search when the product space fits the cap, Gibbs otherwise."""
    sizes = [len(req.candidates) for req in requests]
    if math.prod(sizes) <= enumeration_cap:
        return exhaustive_select(graph, caps, requests, params, enumeration_cap)
    return gibbs_select(graph, caps, requests, params, gibbs or GibbsParams())
