"""Long-horizon control: the online queue-driven policy and myopic baselines.

OSCAR prices each slot's channel usage with a virtual queue that tracks
accumulated budget overrun, so the per-slot solve needs no knowledge of
future requests or capacities.  The myopic baselines instead impose a hard
per-slot budget: MF splits the total budget evenly and forfeits leftovers,
MA re-spreads whatever remains over the remaining slots.  Evaluators for
the constraint-violation and optimality-gap bounds live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .allocation import Allocation, PerSlotObjectiveParams, delta_gap
from .model import QdnGraph, SlotCapacities, route_success_prob
from .routes import SdRequest
from .selection import (
    AllInfeasibleError,
    GibbsParams,
    RouteSelection,
    select_routes,
)

POLICIES = ("OSCAR", "MF", "MA")


@dataclass(frozen=True)
class BudgetParams:
    """Horizon-level budget contract and control weights."""

    total_budget: int
    horizon: int
    V: float
    q0: float = 0.0

    def __post_init__(self) -> None:
        if self.total_budget <= 0:
            raise ValueError("total_budget must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.V <= 0:
            raise ValueError("V must be positive")
        if self.q0 < 0:
            raise ValueError("q0 must be >= 0")


@dataclass(frozen=True)
class ControllerState:
    """Virtual queue length, spend so far, and position in the horizon."""

    q: float
    cumulative_cost: int = 0
    slot: int = 0
    policy: str = "OSCAR"

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.q < 0:
            raise ValueError("queue length must be >= 0")


@dataclass(frozen=True)
class SlotRecord:
    """What one slot produced, as handed to the experiment harness."""

    t: int
    policy: str
    success_probs: tuple[float, ...]
    utility: float
    cost: int
    q_after: float
    unserved: int


def queue_update(q: float, cost: int, total_budget: int, horizon: int) -> float:
    """Virtual-queue recursion: ``max(0, q + cost - C/T)``."""
    if q < 0 or cost < 0:
        raise ValueError("queue length and cost must be >= 0")
    return max(0.0, q + cost - total_budget / horizon)


def _solve_slot(graph: QdnGraph, caps: SlotCapacities,
                requests: Sequence[SdRequest], V: float, q: float,
                cost_cap: int | None, gibbs: GibbsParams | None,
                enumeration_cap: int,
                ) -> tuple[RouteSelection, Allocation | None, float, tuple[float, ...], int]:
    """Select and allocate for the servable requests of one slot.

    Returns (selection, allocation, utility, per-request success probs,
    unserved count).  Requests without candidates are unserved; if the
    joint problem is infeasible the whole slot goes unserved at zero cost.
    """
    servable = [r for r in requests if r.servable]
    unserved = len(requests) - len(servable)
    if not servable:
        return {}, None, 0.0, (), len(requests)
    params = PerSlotObjectiveParams(V=V, q=q, cost_cap=cost_cap)
    try:
        selection, alloc, _ = select_routes(
            graph, caps, servable, params, gibbs, enumeration_cap
        )
    except AllInfeasibleError:
        return {}, None, 0.0, (), len(requests)
    probs = []
    utility = 0.0
    for req in servable:
        route = req.candidates[selection[req.request_id]]
        p = route_success_prob(graph, route, alloc)
        probs.append(p)
        utility += math.log(p)
    return selection, alloc, utility, tuple(probs), unserved


def oscar_slot(graph: QdnGraph, caps: SlotCapacities,
               requests: Sequence[SdRequest], state: ControllerState,
               budget: BudgetParams, gibbs: GibbsParams | None = None,
               enumeration_cap: int = 10_000,
               ) -> tuple[RouteSelection, Allocation | None, SlotRecord, ControllerState]:
    """One queue-priced slot: solve with q as the cost price, then update q."""
    if state.policy != "OSCAR":
        raise ValueError(f"state carries policy {state.policy!r}, expected OSCAR")
    selection, alloc, utility, probs, unserved = _solve_slot(
        graph, caps, requests, budget.V, state.q, None, gibbs, enumeration_cap
    )
    cost = alloc.cost if alloc is not None else 0
    new_q = queue_update(state.q, cost, budget.total_budget, budget.horizon)
    record = SlotRecord(state.slot, state.policy, probs, utility, cost, new_q, unserved)
    new_state = replace(state, q=new_q, cumulative_cost=state.cumulative_cost + cost,
                        slot=state.slot + 1)
    return selection, alloc, record, new_state


def mf_slot(graph: QdnGraph, caps: SlotCapacities,
            requests: Sequence[SdRequest], state: ControllerState,
            budget: BudgetParams, gibbs: GibbsParams | None = None,
            enumeration_cap: int = 10_000,
            ) -> tuple[RouteSelection, Allocation | None, SlotRecord, ControllerState]:
    """Myopic slot under the fixed per-slot budget ``floor(C/T)``."""
    if state.policy != "MF":
        raise ValueError(f"state carries policy {state.policy!r}, expected MF")
    cap = budget.total_budget // budget.horizon
    selection, alloc, utility, probs, unserved = _solve_slot(
        graph, caps, requests, budget.V, 0.0, cap, gibbs, enumeration_cap
    )
    cost = alloc.cost if alloc is not None else 0
    record = SlotRecord(state.slot, state.policy, probs, utility, cost, 0.0, unserved)
    new_state = replace(state, cumulative_cost=state.cumulative_cost + cost,
                        slot=state.slot + 1)
    return selection, alloc, record, new_state


def ma_slot(graph: QdnGraph, caps: SlotCapacities,
            requests: Sequence[SdRequest], state: ControllerState,
            budget: BudgetParams, gibbs: GibbsParams | None = None,
            enumeration_cap: int = 10_000,
            ) -> tuple[RouteSelection, Allocation | None, SlotRecord, ControllerState]:
    """Myopic slot with the leftover budget spread over remaining slots."""
    if state.policy != "MA":
        raise ValueError(f"state carries policy {state.policy!r}, expected MA")
    remaining_slots = budget.horizon - state.slot
    if remaining_slots < 1:
        raise ValueError("controller ran past its horizon")
    remaining = budget.total_budget - state.cumulative_cost
    cap = max(0, remaining // remaining_slots)
    selection, alloc, utility, probs, unserved = _solve_slot(
        graph, caps, requests, budget.V, 0.0, cap, gibbs, enumeration_cap
    )
    cost = alloc.cost if alloc is not None else 0
    record = SlotRecord(state.slot, state.policy, probs, utility, cost, 0.0, unserved)
    new_state = replace(state, cumulative_cost=state.cumulative_cost + cost,
                        slot=state.slot + 1)
    return selection, alloc, record, new_state


def run_slot(policy: str, *args, **kwargs):
    step = {"OSCAR": oscar_slot, "MF": mf_slot, "MA": ma_slot}[policy]
    return step(*args, **kwargs)


# ---------------------------------------------------------------------------
# Bound evaluators.

def max_slot_cost(graph: QdnGraph) -> int:
    """Conservative over-bound on any slot's cost: total channel capacity."""
    return sum(e.channels for e in graph.edges)


def drift_penalty_constant(c_max: float, total_budget: int, horizon: int) -> float:
    """The finite constant bounding the per-slot squared queue drift."""
    return 0.5 * (c_max - total_budget / horizon) ** 2


def theorem1_drift_bound(delta: float, B: float, V: float,
                         F: int, L: int, p_min: float) -> float:
    """Per-slot drift bound ``delta + B - V*F*L*ln(p_min)``."""
    if not 0.0 < p_min < 1.0:
        raise ValueError(f"p_min must lie in (0, 1), got {p_min}")
    return delta + B - V * F * L * math.log(p_min)


def theorem1_rhs(q0: float, horizon: int, drift_bound: float) -> float:
    """Bound on average budget overrun: ``sqrt(q0^2/T^2 + 2D/T) - q0/T``.

    Evaluated as ``(2D/T) / (sqrt(q0^2/T^2 + 2D/T) + q0/T)`` so that large
    initial queue lengths do not cancel catastrophically.
    """
    if q0 < 0 or horizon < 1 or drift_bound < 0:
        raise ValueError("q0, horizon, and drift bound must be nonnegative")
    a = q0 / horizon
    b = 2.0 * drift_bound / horizon
    if b == 0.0:
        return 0.0
    return b / (math.sqrt(a * a + b) + a)


def theorem2_gap(V: float, q0: float, horizon: int,
                 delta: float, B: float) -> float:
    """Optimality-gap bound ``(delta + B)/V + q0^2/(2VT)``; shrinks with V."""
    if V <= 0:
        raise ValueError("V must be positive")
    return (delta + B) / V + q0 * q0 / (2.0 * V * horizon)


def check_assumption1(total_budget: int, F: int, L: int, horizon: int) -> bool:
    """Whether the budget covers one channel per edge of every worst-case route."""
    return total_budget >= F * L * horizon


def bound_summary(graph: QdnGraph, budget: BudgetParams, F: int, L: int) -> dict:
    """All bound quantities for one configuration, for reporting."""
    p_min = min(graph.p_edge)
    delta = delta_gap(budget.V, F, L, p_min)
    c_max = max_slot_cost(graph)
    B = drift_penalty_constant(c_max, budget.total_budget, budget.horizon)
    D = theorem1_drift_bound(delta, B, budget.V, F, L, p_min)
    return {
        "p_min": p_min,
        "c_max": c_max,
        "delta": delta,
        "B": B,
        "D": D,
        "theorem1_rhs": theorem1_rhs(budget.q0, budget.horizon, D),
        "theorem2_gap": theorem2_gap(budget.V, budget.q0, budget.horizon, delta, B),
        "assumption1": check_assumption1(budget.total_budget, F, L, budget.horizon),
    }
