"""Experiment orchestration: paired multi-trial runs, sweeps, CSV outputs.

Every trial derives its topology, capacity, and workload streams from
``seed + trial``, and all policies within a trial see byte-identical
streams, so policy comparisons are paired.  Slot records roll up into
running-average time series and final aggregates; everything is persisted
as CSV plus the resolved configuration.
"""

from __future__ import annotations

import math
import os
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .controller import (
    POLICIES,
    BudgetParams,
    ControllerState,
    SlotRecord,
    bound_summary,
    run_slot,
)
from .routes import CandidateCache, RouteConfig, build_requests
from .selection import GibbsParams
from .topology import (
    STREAM_GIBBS,
    CapacityDistributions,
    WaxmanParams,
    WorkloadParams,
    generate_waxman,
    sample_requests,
    sample_slot_capacities,
)

SLOTS_COLUMNS = ["trial", "policy", "t", "utility_avg", "success_avg",
                 "cost", "cost_cum", "q", "unserved"]
SWEEP_COLUMNS = ["param", "value", "policy", "final_utility", "final_success",
                 "final_cost", "violation_bound"]
SWEEPABLE = ("C", "node_count", "V", "q0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; ``default_config()`` gives the stock setup."""

    topology: WaxmanParams = field(default_factory=WaxmanParams)
    capacities: CapacityDistributions = field(default_factory=CapacityDistributions)
    workload: WorkloadParams = field(default_factory=WorkloadParams)
    route: RouteConfig = field(default_factory=RouteConfig)
    budget: BudgetParams = field(default_factory=lambda: BudgetParams(5000, 200, 2500.0, 10.0))
    gibbs: GibbsParams = field(default_factory=GibbsParams)
    policies: tuple[str, ...] = ("OSCAR", "MA", "MF")
    trials: int = 5
    seed: int = 0
    enumeration_cap: int = 10_000
    workers: int = 0  # 0 = one per CPU, capped at the trial count

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for p in self.policies:
            if p not in POLICIES:
                raise ValueError(f"unknown policy {p!r}")


def default_config() -> ExperimentConfig:
    """Stock configuration: 20-node degree-4 network, C=5000 over T=200 slots."""
    return ExperimentConfig(topology=WaxmanParams(degree_band=(3.5, 4.5)))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "seed": cfg.seed,
        "trials": cfg.trials,
        "policies": list(cfg.policies),
        "workers": cfg.workers,
        "enumeration_cap": cfg.enumeration_cap,
        "topology": {
            "node_count": cfg.topology.node_count,
            "alpha": cfg.topology.alpha,
            "beta": cfg.topology.beta,
            "side": cfg.topology.side,
            "degree_band": list(cfg.topology.degree_band)
            if cfg.topology.degree_band else None,
        },
        "capacities": {
            "qubit_range": list(cfg.capacities.qubit_range),
            "channel_range": list(cfg.capacities.channel_range),
            "fluctuation": cfg.capacities.fluctuation,
            "p_attempt": cfg.capacities.p_attempt,
            "attempts": cfg.capacities.attempts,
        },
        "workload": {
            "sd_range": list(cfg.workload.sd_range),
            "f_max": cfg.workload.f_max,
        },
        "route": {
            "max_candidates": cfg.route.max_candidates,
            "max_hops": cfg.route.max_hops,
        },
        "budget": {
            "total_budget": cfg.budget.total_budget,
            "horizon": cfg.budget.horizon,
            "V": cfg.budget.V,
            "q0": cfg.budget.q0,
        },
        "gibbs": {
            "gamma": cfg.gibbs.gamma,
            "max_iters": cfg.gibbs.max_iters,
            "stability_window": cfg.gibbs.stability_window,
            "batch_disjoint": cfg.gibbs.batch_disjoint,
        },
    }


def config_from_dict(doc: dict) -> ExperimentConfig:
    base = default_config()
    topo = doc.get("topology", {})
    caps = doc.get("capacities", {})
    work = doc.get("workload", {})
    route = doc.get("route", {})
    budget = doc.get("budget", {})
    gibbs = doc.get("gibbs", {})

    def pick(section: dict, key: str, fallback):
        return section[key] if key in section else fallback

    band = pick(topo, "degree_band", base.topology.degree_band)
    return ExperimentConfig(
        topology=WaxmanParams(
            node_count=pick(topo, "node_count", base.topology.node_count),
            alpha=pick(topo, "alpha", base.topology.alpha),
            beta=pick(topo, "beta", base.topology.beta),
            side=pick(topo, "side", base.topology.side),
            degree_band=tuple(band) if band else None,
        ),
        capacities=CapacityDistributions(
            qubit_range=tuple(pick(caps, "qubit_range", base.capacities.qubit_range)),
            channel_range=tuple(pick(caps, "channel_range", base.capacities.channel_range)),
            fluctuation=pick(caps, "fluctuation", base.capacities.fluctuation),
            p_attempt=pick(caps, "p_attempt", base.capacities.p_attempt),
            attempts=pick(caps, "attempts", base.capacities.attempts),
        ),
        workload=WorkloadParams(
            sd_range=tuple(pick(work, "sd_range", base.workload.sd_range)),
            f_max=pick(work, "f_max", base.workload.f_max),
        ),
        route=RouteConfig(
            max_candidates=pick(route, "max_candidates", base.route.max_candidates),
            max_hops=pick(route, "max_hops", base.route.max_hops),
        ),
        budget=BudgetParams(
            total_budget=pick(budget, "total_budget", base.budget.total_budget),
            horizon=pick(budget, "horizon", base.budget.horizon),
            V=pick(budget, "V", base.budget.V),
            q0=pick(budget, "q0", base.budget.q0),
        ),
        gibbs=GibbsParams(
            gamma=pick(gibbs, "gamma", base.gibbs.gamma),
            max_iters=pick(gibbs, "max_iters", base.gibbs.max_iters),
            stability_window=pick(gibbs, "stability_window", base.gibbs.stability_window),
            batch_disjoint=pick(gibbs, "batch_disjoint", base.gibbs.batch_disjoint),
        ),
        policies=tuple(doc.get("policies", base.policies)),
        trials=doc.get("trials", base.trials),
        seed=doc.get("seed", base.seed),
        enumeration_cap=doc.get("enumeration_cap", base.enumeration_cap),
        workers=doc.get("workers", base.workers),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML config; the literal name ``default`` gives the stock one."""
    if str(path) == "default":
        return default_config()
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    return config_from_dict(doc)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Metrics.

@dataclass
class RunMetrics:
    """Time series and final aggregates for one (policy, trial) run."""

    policy: str
    trial: int
    utility_avg: list[float]
    success_avg: list[float]
    cost: list[int]
    cost_cum: list[int]
    q: list[float]
    unserved: list[int]
    success_probs: list[float]
    final_utility: float
    final_success: float
    final_cost: int
    total_unserved: int

    @classmethod
    def from_records(cls, policy: str, trial: int,
                     records: list[SlotRecord]) -> "RunMetrics":
        utility_avg, success_avg, cost, cost_cum, q, unserved = [], [], [], [], [], []
        probs: list[float] = []
        utility_sum = 0.0
        # Success averages weight slots equally (mean of per-slot means over
        # served requests), matching how the time-evolving average is read.
        slot_mean_sum = 0.0
        served_slots = 0
        running_cost = 0
        for i, rec in enumerate(records):
            utility_sum += rec.utility
            if rec.success_probs:
                slot_mean_sum += sum(rec.success_probs) / len(rec.success_probs)
                served_slots += 1
            probs.extend(rec.success_probs)
            running_cost += rec.cost
            utility_avg.append(utility_sum / (i + 1))
            success_avg.append(slot_mean_sum / served_slots if served_slots else math.nan)
            cost.append(rec.cost)
            cost_cum.append(running_cost)
            q.append(rec.q_after)
            unserved.append(rec.unserved)
        return cls(
            policy=policy, trial=trial,
            utility_avg=utility_avg, success_avg=success_avg,
            cost=cost, cost_cum=cost_cum, q=q, unserved=unserved,
            success_probs=probs,
            final_utility=utility_avg[-1] if utility_avg else 0.0,
            final_success=success_avg[-1] if success_avg else math.nan,
            final_cost=running_cost,
            total_unserved=sum(unserved),
        )


def histogram_success_rates(probs, bin_width: float = 0.02):
    """Fixed-width histogram of per-request success probabilities on [0, 1]."""
    probs = np.asarray(list(probs), dtype=float)
    if probs.size == 0:
        raise ValueError("no success probabilities to bin")
    nbins = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, nbins + 1)
    counts, _ = np.histogram(probs, bins=edges)
    return edges, counts


# ---------------------------------------------------------------------------
# Running experiments.

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: dict[tuple[str, int], RunMetrics]
    records: dict[tuple[str, int], list[SlotRecord]]
    bounds: dict[int, dict]

    def policy_mean(self, policy: str, attr: str) -> float:
        vals = [getattr(m, attr) for (p, _), m in sorted(self.metrics.items())
                if p == policy]
        return sum(vals) / len(vals)


def _run_trial(cfg: ExperimentConfig, trial: int):
    """All policies over one trial's shared topology and workload streams."""
    seed = cfg.seed + trial
    graph = generate_waxman(replace(cfg.topology, seed=seed), cfg.capacities)
    cache = CandidateCache(graph, cfg.route)
    T = cfg.budget.horizon
    slot_caps = [sample_slot_capacities(graph, cfg.capacities, t, seed)
                 for t in range(T)]
    slot_reqs = [build_requests(graph, sample_requests(graph, cfg.workload, t, seed),
                                cfg.route, cache)
                 for t in range(T)]
    out: dict[str, list[SlotRecord]] = {}
    for policy in cfg.policies:
        q0 = cfg.budget.q0 if policy == "OSCAR" else 0.0
        state = ControllerState(q=q0, policy=policy)
        pol_tag = POLICIES.index(policy)
        records = []
        for t in range(T):
            gibbs = replace(cfg.gibbs, seed=[seed, STREAM_GIBBS, pol_tag, t])
            _, _, record, state = run_slot(
                policy, graph, slot_caps[t], slot_reqs[t], state, cfg.budget,
                gibbs, cfg.enumeration_cap,
            )
            records.append(record)
        out[policy] = records
    F = cfg.workload.sd_range[1]
    return out, bound_summary(graph, cfg.budget, F, cfg.route.max_hops)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   quiet: bool = False) -> ExperimentResult:
    """Run every (policy, trial) pair and persist CSVs when given a directory.

    Trials are independent and may run in parallel; outputs are merged in
    sorted order so the files are byte-identical regardless of worker count.
    """
    workers = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    workers = min(workers, cfg.trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(_run_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        per_trial = [_run_trial(cfg, k) for k in range(cfg.trials)]

    records: dict[tuple[str, int], list[SlotRecord]] = {}
    metrics: dict[tuple[str, int], RunMetrics] = {}
    bounds: dict[int, dict] = {}
    for trial, (trial_records, trial_bounds) in enumerate(per_trial):
        bounds[trial] = trial_bounds
        for policy, recs in trial_records.items():
            records[(policy, trial)] = recs
            metrics[(policy, trial)] = RunMetrics.from_records(policy, trial, recs)

    result = ExperimentResult(cfg, metrics, records, bounds)
    if out_dir is not None:
        _write_outputs(result, Path(out_dir))
    if not quiet:
        if not all(b["assumption1"] for b in bounds.values()):
            print("warning: budget below F*L*T; the worst-case request load "
                  "may be unservable")
        for policy in cfg.policies:
            print(
                f"{policy}: success={result.policy_mean(policy, 'final_success'):.4f} "
                f"utility={result.policy_mean(policy, 'final_utility'):.4f} "
                f"cost={result.policy_mean(policy, 'final_cost'):.1f} "
                f"({cfg.trials} trials)"
            )
    return result


def _write_outputs(result: ExperimentResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(result.config, out_dir / "config.yaml")

    with open(out_dir / "slots.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SLOTS_COLUMNS)
        for (policy, trial) in sorted(result.metrics, key=lambda k: (k[1], k[0])):
            m = result.metrics[(policy, trial)]
            for t in range(len(m.cost)):
                writer.writerow([
                    trial, policy, t, m.utility_avg[t], m.success_avg[t],
                    m.cost[t], m.cost_cum[t], m.q[t], m.unserved[t],
                ])

    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "policy", "final_utility", "final_success",
                         "final_cost", "unserved"])
        for (policy, trial) in sorted(result.metrics, key=lambda k: (k[1], k[0])):
            m = result.metrics[(policy, trial)]
            writer.writerow([trial, policy, m.final_utility, m.final_success,
                             m.final_cost, m.total_unserved])
        for policy in sorted(set(p for p, _ in result.metrics)):
            writer.writerow([
                "mean", policy,
                result.policy_mean(policy, "final_utility"),
                result.policy_mean(policy, "final_success"),
                result.policy_mean(policy, "final_cost"),
                result.policy_mean(policy, "total_unserved"),
            ])

    with open(out_dir / "histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "bin_lo", "bin_hi", "count"])
        for policy in sorted(set(p for p, _ in result.metrics)):
            probs: list[float] = []
            for (p, trial), m in sorted(result.metrics.items()):
                if p == policy:
                    probs.extend(m.success_probs)
            if not probs:
                continue
            edges, counts = histogram_success_rates(probs)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                writer.writerow([policy, float(lo), float(hi), int(c)])


# ---------------------------------------------------------------------------
# Parameter sweeps.

def calibrate_beta(node_count: int, alpha: float, side: float,
                   target_degree: float = 4.0, samples: int = 200,
                   seed: int = 1234) -> float:
    """Waxman beta that hits a target mean degree at the given size.

    Estimates the mean pair connection factor ``exp(-d / (alpha * d_max))``
    over sampled placements and inverts the expected-degree relation.
    """
    rng = np.random.default_rng([seed, node_count])
    factors = []
    for _ in range(samples):
        pts = rng.uniform(0.0, side, size=(node_count, 2))
        diffs = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(axis=2))
        d_max = dist.max()
        iu = np.triu_indices(node_count, k=1)
        factors.append(np.exp(-dist[iu] / (alpha * d_max)).mean())
    beta = target_degree / ((node_count - 1) * float(np.mean(factors)))
    return min(max(beta, 1e-6), 1.0)


def _apply_sweep_value(cfg: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    if parameter == "C":
        return replace(cfg, budget=replace(cfg.budget, total_budget=int(value)))
    if parameter == "V":
        return replace(cfg, budget=replace(cfg.budget, V=float(value)))
    if parameter == "q0":
        return replace(cfg, budget=replace(cfg.budget, q0=float(value)))
    if parameter == "node_count":
        beta = calibrate_beta(int(value), cfg.topology.alpha, cfg.topology.side)
        return replace(cfg, topology=replace(cfg.topology,
                                             node_count=int(value), beta=beta))
    raise ValueError(f"unknown sweep parameter {parameter!r}; pick one of {SWEEPABLE}")


def sweep(cfg: ExperimentConfig, parameter: str, values,
          out_dir: str | Path | None = None, quiet: bool = False) -> list[dict]:
    """Repeat the experiment across parameter values; returns sweep rows.

    Each row carries the trial-mean final aggregates for one (value,
    policy) pair plus the constraint-violation bound for that setting.
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    out_path = Path(out_dir) if out_dir is not None else None
    for value in values:
        sub_cfg = _apply_sweep_value(cfg, parameter, value)
        sub_out = out_path / f"{parameter}_{value}" if out_path else None
        result = run_experiment(sub_cfg, sub_out, quiet=quiet)
        violation = sum(b["theorem1_rhs"] for b in result.bounds.values()) / len(result.bounds)
        for policy in sub_cfg.policies:
            rows.append({
                "param": parameter,
                "value": value,
                "policy": policy,
                "final_utility": result.policy_mean(policy, "final_utility"),
                "final_success": result.policy_mean(policy, "final_success"),
                "final_cost": result.policy_mean(policy, "final_cost"),
                "violation_bound": violation,
            })
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        with open(out_path / "sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_COLUMNS)
            for row in rows:
                writer.writerow([row[c] for c in SWEEP_COLUMNS])
    return rows
