"""Per-slot channel allocation for a fixed route selection.

The per-slot problem maximizes ``V * sum(log route success) - q * cost``
over positive integer channel counts under node-qubit, edge-channel, and
optional per-slot budget constraints.  It is solved as in the two-stage
scheme: relax integrality to ``n >= 1`` (the relaxed program is concave with
linear constraints), solve the relaxation by dual decomposition, then
down-round and greedily hand out surplus.  The rounded point is guaranteed
to be feasible, component-wise within 1 of the relaxed optimum, and within
an additive gap ``delta_gap(V, F, L, p_min)`` of the integer optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .model import Allocation, QdnGraph, Route, SlotCapacities, slot_utility

_DEFAULT_GAP_TOL = 1e-6
_MAX_MULTIPLIER_UPDATES = 10_000
_NEWTON_STEPS = 60


class InfeasibleSelectionError(RuntimeError):
    """Even the all-ones allocation violates a capacity or budget cap."""


class NoConvergenceError(RuntimeError):
    """The dual solve hit its iteration cap far from optimality."""


@dataclass(frozen=True)
class PerSlotObjectiveParams:
    """Weights of the per-slot objective and an optional hard budget.

    ``V`` scales the utility term, ``q`` prices every allocated channel
    (the virtual-queue length under drift-plus-penalty control), and
    ``cost_cap`` — used by the myopic baselines — caps the slot's total
    channel count outright.
    """

    V: float
    q: float = 0.0
    cost_cap: int | None = None

    def __post_init__(self) -> None:
        if self.V <= 0:
            raise ValueError("V must be positive")
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.cost_cap is not None and self.cost_cap < 0:
            raise ValueError("cost_cap must be >= 0")


@dataclass(frozen=True)
class RelaxedSolution:
    """Feasible fractional allocation and its relaxed objective value."""

    values: dict[tuple[int, int], float]
    objective: float


def delta_gap(V: float, F: int, L: int, p_min: float) -> float:
    """Additive bound on the rounding loss: ``V * F * L * ln(2 - p_min)``."""
    if not 0.0 < p_min < 1.0:
        raise ValueError(f"p_min must lie in (0, 1), got {p_min}")
    return V * F * L * math.log(2.0 - p_min)


def per_slot_objective(graph: QdnGraph, routes: Sequence[Route],
                       alloc: Allocation, params: PerSlotObjectiveParams) -> float:
    """Drift-plus-penalty objective ``V * utility - q * cost``."""
    return params.V * slot_utility(graph, routes, alloc) - params.q * alloc.cost


class _Instance:
    """One slot's allocation problem in flat-array form.

    Variables are the (request, edge) pairs of the selected routes, in
    sorted key order.  Constraints couple variables through node loads,
    edge loads, and the optional budget; constraints that cannot bind under
    the per-variable boxes are dropped.
    """

    __slots__ = ("keys", "lna", "hi", "theta_one", "constraints",
                 "cons_of_var", "V", "q")

    def __init__(self, graph: QdnGraph, caps: SlotCapacities,
                 routes: Sequence[Route], params: PerSlotObjectiveParams):
        self.V = params.V
        self.q = params.q
        keys = []
        for route in routes:
            if route.request_id is None:
                raise ValueError("routes must be bound to a request id")
            for eid in route.edges:
                keys.append((route.request_id, eid))
        keys.sort()
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (request, edge) variable; one route per request")
        self.keys = keys
        n = len(keys)

        self.lna = []
        self.hi = []
        self.theta_one = []
        node_members: dict[int, list[int]] = {}
        edge_members: dict[int, list[int]] = {}
        edges = graph.edges
        log_fail = graph.log_fail
        p_edge = graph.p_edge
        q_caps, w_caps = caps.q_caps, caps.w_caps
        for i, (_, eid) in enumerate(keys):
            e = edges[eid]
            lna = log_fail[eid]
            box = float(min(w_caps[eid], q_caps[e.u], q_caps[e.v]))
            self.lna.append(lna)
            self.hi.append(box)
            # Price above which the unclamped stationary point drops to 1.
            a = 1.0 - p_edge[eid]
            self.theta_one.append(-self.V * lna * a / (1.0 - a))
            node_members.setdefault(e.u, []).append(i)
            node_members.setdefault(e.v, []).append(i)
            edge_members.setdefault(eid, []).append(i)

        constraints: list[tuple[tuple[int, ...], float]] = []
        for v in sorted(node_members):
            members = node_members[v]
            cap = caps.q_caps[v]
            if len(members) > cap:
                raise InfeasibleSelectionError(
                    f"node {v}: {len(members)} allocated edges exceed {cap} qubits"
                )
            if sum(self.hi[i] for i in members) > cap:
                constraints.append((tuple(members), float(cap)))
        for eid in sorted(edge_members):
            members = edge_members[eid]
            cap = caps.w_caps[eid]
            if len(members) > cap:
                raise InfeasibleSelectionError(
                    f"edge {eid}: {len(members)} requests exceed {cap} channels"
                )
            if sum(self.hi[i] for i in members) > cap:
                constraints.append((tuple(members), float(cap)))
        if params.cost_cap is not None:
            if n > params.cost_cap:
                raise InfeasibleSelectionError(
                    f"all-ones cost {n} exceeds slot budget {params.cost_cap}"
                )
            if sum(self.hi) > params.cost_cap:
                constraints.append((tuple(range(n)), float(params.cost_cap)))
        self.constraints = constraints
        self.cons_of_var: list[list[int]] = [[] for _ in range(n)]
        for ci, (members, _) in enumerate(constraints):
            for i in members:
                self.cons_of_var[i].append(ci)

    # -- relaxed program ----------------------------------------------------

    def _xstar(self, i: int, theta: float) -> float:
        """Box-clamped maximizer of ``V*ln(1-a^x) - theta*x`` over [1, hi]."""
        if theta <= 0.0:
            return self.hi[i]
        lna = self.lna[i]
        y = theta / (theta - self.V * lna)
        x = math.log(y) / lna
        if x < 1.0:
            return 1.0
        if x > self.hi[i]:
            return self.hi[i]
        return x

    def _log_p(self, i: int, x: float) -> float:
        return math.log(-math.expm1(x * self.lna[i]))

    def objective(self, x: Sequence[float]) -> float:
        V, q, lna = self.V, self.q, self.lna
        log, expm1 = math.log, math.expm1
        total = 0.0
        for i, xi in enumerate(x):
            total += V * log(-expm1(xi * lna[i])) - q * xi
        return total

    def _dual_value(self, x: list[float], theta: list[float],
                    nu: list[float]) -> float:
        V, lna = self.V, self.lna
        log, expm1 = math.log, math.expm1
        val = 0.0
        for i, xi in enumerate(x):
            val += V * log(-expm1(xi * lna[i])) - theta[i] * xi
        for nu_c, (_, cap) in zip(nu, self.constraints):
            val += nu_c * cap
        return val

    def project_feasible(self, x: list[float]) -> list[float]:
        """Scale the variables of overloaded constraints toward 1.

        Shrinking only ever lowers loads, so a few passes reach feasibility
        whenever the all-ones point is feasible (checked at build time).
        """
        projected, _ = self._project(list(x))
        return projected

    def _project(self, x: list[float]) -> tuple[list[float], bool]:
        changed = False
        for _ in range(50):
            clean = True
            for members, cap in self.constraints:
                load = sum(x[i] for i in members)
                if load > cap + 1e-12:
                    k = len(members)
                    rho = (cap - k) / (load - k) if load > k else 0.0
                    rho = min(max(rho, 0.0), 1.0)
                    for i in members:
                        x[i] = 1.0 + (x[i] - 1.0) * rho
                    clean = False
                    changed = True
            if clean:
                break
        return x, changed

    def _constraint_load(self, members: tuple[int, ...], theta: list[float],
                         shift: float) -> tuple[float, float]:
        """Load of a constraint and its derivative in the shared price shift.

        Clamped variables contribute zero slope; interior ones contribute
        ``-V / (theta * (theta - V * lna))`` from the closed-form maximizer.
        """
        V = self.V
        lna_all, hi_all = self.lna, self.hi
        load = 0.0
        slope = 0.0
        for i in members:
            th = theta[i] + shift
            if th <= 0.0:
                load += hi_all[i]
                continue
            lna = lna_all[i]
            x = math.log(th / (th - V * lna)) / lna
            if x <= 1.0:
                load += 1.0
            elif x >= hi_all[i]:
                load += hi_all[i]
            else:
                load += x
                slope += -V / (th * (th - V * lna))
        return load, slope

    def solve_relaxed(self, tol: float = _DEFAULT_GAP_TOL,
                      max_updates: int = _MAX_MULTIPLIER_UPDATES) -> tuple[list[float], float]:
        """Maximize the relaxed objective by dual decomposition.

        One nonnegative multiplier per coupling constraint; the Lagrangian
        separates into per-variable concave problems with closed-form
        solutions.  The dual is minimized by cyclic exact updates: each
        multiplier moves to where its constraint's load meets its cap (or
        to zero when slack), via safeguarded Newton steps on the monotone
        load curve.  Terminates when the relative duality gap of the
        feasibility-projected primal drops below ``tol``.
        """
        n = len(self.keys)
        if n == 0:
            return [], 0.0
        theta = [self.q] * n
        x = [self._xstar(i, theta[i]) for i in range(n)]
        if not self.constraints:
            return x, self.objective(x)

        nu = [0.0] * len(self.constraints)
        updates = 0
        best_x: list[float] | None = None
        best_f = -math.inf
        gap = math.inf
        theta_one = self.theta_one
        while updates < max_updates:
            moved = False
            for ci, (members, cap) in enumerate(self.constraints):
                old = nu[ci]
                if old == 0.0:
                    load, _ = self._constraint_load(members, theta, 0.0)
                    if load <= cap:
                        continue  # slack and unpriced: nothing to update
                updates += 1
                load0, _ = self._constraint_load(members, theta, -old)
                if load0 <= cap:
                    new = 0.0
                else:
                    # Solve load(nu) = cap on [0, price that floors all vars].
                    lo = 0.0
                    hi_nu = max(theta_one[i] - (theta[i] - old) for i in members) + 1.0
                    guess = old if 0.0 < old < hi_nu else 0.5 * hi_nu
                    tol_load = 1e-10 * (1.0 + cap)
                    for _ in range(_NEWTON_STEPS):
                        load, slope = self._constraint_load(
                            members, theta, guess - old)
                        err = load - cap
                        if abs(err) <= tol_load:
                            break
                        if err > 0.0:
                            lo = guess
                        else:
                            hi_nu = guess
                        step = guess - err / slope if slope < 0.0 else math.inf
                        guess = step if lo < step < hi_nu else 0.5 * (lo + hi_nu)
                    new = guess
                if new != old:
                    nu[ci] = new
                    delta = new - old
                    for i in members:
                        theta[i] += delta
                    if abs(delta) > 1e-12 * (1.0 + abs(old)):
                        moved = True
                if updates >= max_updates:
                    break
            x = [self._xstar(i, theta[i]) for i in range(n)]
            feas, shrunk = self._project(list(x))
            if shrunk:
                f_feas = self.objective(feas)
                dual = self._dual_value(x, theta, nu)
            else:
                # Projection was a no-op: the primal and dual sums share
                # their log terms, so evaluate both in one pass.
                V, lna_all, q_price = self.V, self.lna, self.q
                log, expm1 = math.log, math.expm1
                common = 0.0
                price_term = 0.0
                cost_term = 0.0
                for i, xi in enumerate(x):
                    common += V * log(-expm1(xi * lna_all[i]))
                    price_term += (theta[i] - q_price) * xi
                    cost_term += xi
                f_feas = common - q_price * cost_term
                dual = f_feas - price_term
                for nu_c, (_, cap) in zip(nu, self.constraints):
                    dual += nu_c * cap
            if f_feas > best_f:
                best_f, best_x = f_feas, feas
            gap = dual - f_feas
            if gap <= tol * max(1.0, abs(f_feas)):
                return feas, f_feas
            if not moved:
                break

        if best_x is None or gap > 1e-3 * max(1.0, abs(best_f)):
            raise NoConvergenceError(
                f"duality gap {gap:.3e} after {updates} multiplier updates"
            )
        return best_x, best_f

    # -- rounding -----------------------------------------------------------

    def round_down_and_fill(self, x: Sequence[float]) -> list[int]:
        """Floor the relaxed point, then add +1 surplus greedily.

        Each increment goes to the feasible variable with the largest
        positive marginal gain ``V*(ln P(n+1) - ln P(n)) - q``; ties break
        toward the smallest (request, edge) key.  Increments stop when no
        feasible one improves the objective, so the rounded-within-1
        relation to the relaxed point is preserved.
        """
        n_vars = len(self.keys)
        V, q, lna, hi = self.V, self.q, self.lna, self.hi
        constraints, cons_of_var = self.constraints, self.cons_of_var
        log, expm1, floor = math.log, math.expm1, math.floor
        counts = [max(1, floor(xi + 1e-9)) for xi in x]
        loads = [sum(counts[i] for i in members) for members, _ in constraints]
        while True:
            best_i = -1
            best_gain = 0.0
            for i in range(n_vars):
                ni = counts[i]
                if ni + 1 > hi[i]:
                    continue
                blocked = False
                for ci in cons_of_var[i]:
                    if loads[ci] + 1 > constraints[ci][1]:
                        blocked = True
                        break
                if blocked:
                    continue
                li = lna[i]
                gain = V * (log(-expm1((ni + 1) * li)) - log(-expm1(ni * li))) - q
                if gain > best_gain:
                    best_gain = gain
                    best_i = i
            if best_i < 0:
                return counts
            counts[best_i] += 1
            for ci in cons_of_var[best_i]:
                loads[ci] += 1

    def integer_objective(self, counts: Sequence[int]) -> float:
        return sum(self.V * self._log_p(i, ni) - self.q * ni
                   for i, ni in enumerate(counts))


def solve_relaxed(graph: QdnGraph, caps: SlotCapacities, routes: Sequence[Route],
                  params: PerSlotObjectiveParams,
                  tol: float = _DEFAULT_GAP_TOL) -> RelaxedSolution:
    """Solve the continuous relaxation of the per-slot allocation problem."""
    inst = _Instance(graph, caps, routes, params)
    x, objective = inst.solve_relaxed(tol=tol)
    return RelaxedSolution(dict(zip(inst.keys, x)), objective)


def round_allocation(graph: QdnGraph, caps: SlotCapacities, routes: Sequence[Route],
                     relaxed: RelaxedSolution,
                     params: PerSlotObjectiveParams) -> Allocation:
    """Round a relaxed solution to a feasible integer allocation."""
    inst = _Instance(graph, caps, routes, params)
    x = [relaxed.values[key] for key in inst.keys]
    counts = inst.round_down_and_fill(x)
    return Allocation(dict(zip(inst.keys, counts)))


def allocate(graph: QdnGraph, caps: SlotCapacities, routes: Sequence[Route],
             params: PerSlotObjectiveParams,
             tol: float = _DEFAULT_GAP_TOL) -> tuple[Allocation, float]:
    """Relaxed solve plus rounding; returns the allocation and its objective.

    Raises InfeasibleSelectionError when the routes cannot even hold one
    channel per edge under the slot's capacities.
    """
    inst = _Instance(graph, caps, routes, params)
    x, _ = inst.solve_relaxed(tol=tol)
    counts = inst.round_down_and_fill(x)
    alloc = Allocation(dict(zip(inst.keys, counts)))
    return alloc, inst.integer_objective(counts)
