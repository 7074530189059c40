"""Prize-collecting TSP with time windows over the POI set.

Node 0 is the depot (home); nodes 1..n are POIs. The cost table is the
symmetric travel-time matrix with service durations folded in (symmetrized
by averaging when service times differ; the residual asymmetry is recorded
on the instance). Arrival times are service starts: waiting at a POI until
its window opens is allowed.

The exact solver is a depth-first branch and bound over visit sequences with
an admissible prize bound (remaining collectible prize assuming zero travel).
It returns the lexicographically smallest visit order among optimal tours.
The MILP this search matches is written out in the README (arc variables
x_ij, visit variables y_i, big-M time propagation t_j >= t_i + c_ij - M(1 -
x_ij), window bounds); the search is validated against brute-force
enumeration on small instances.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np

from .scenario import PoiRecord, ScenarioConfig


@dataclass
class PctspInstance:
    pois: tuple[PoiRecord, ...]
    depot_position: tuple[float, float, float]
    travel: np.ndarray  # (n+1, n+1) pure travel seconds, symmetric
    cost: np.ndarray  # (n+1, n+1) objective cost incl. averaged service
    service: np.ndarray  # (n+1,) seconds, 0 at depot
    prizes: np.ndarray  # (n+1,), 0 at depot
    tw_open: np.ndarray  # (n+1,)
    tw_close: np.ndarray  # (n+1,)
    alpha: float = 0.01  # prize units per second of travel cost
    t_max: float = math.inf  # mission duration cap
    asymmetry: float = 0.0  # max |c_ij - c_ji| before symmetrization

    @property
    def n_pois(self) -> int:
        return len(self.pois)

    def objective(self, prize: float, travel_cost: float) -> float:
        return prize - self.alpha * travel_cost


@dataclass(frozen=True)
class Tour:
    """A depot-to-depot visit sequence with its recomputed bookkeeping."""

    visit_order: tuple[int, ...]  # node indices, starts and ends at 0
    arrival_times: tuple[float, ...]  # service start per visited POI
    collected_prize: float
    travel_cost: float
    objective: float
    skipped: tuple[int, ...]
    optimal: bool = True

    @property
    def visited(self) -> tuple[int, ...]:
        return self.visit_order[1:-1]


def build_instance(
    scenario: ScenarioConfig,
    cruise_speed: float,
    service_time_default: float = 0.0,
    alpha: float = 0.01,
    t_max: float | None = None,
) -> PctspInstance:
    """Travel and cost tables from the scenario geometry.

    c_ij = ||pos_i - pos_j|| / cruise_speed + service_j, symmetrized by
    averaging the service contribution; POIs without a service time take
    ``service_time_default``.
    """
    if cruise_speed <= 0:
        raise ValueError("cruise_speed must be > 0")
    pois = scenario.pois
    pos = np.array([scenario.home] + [p.position for p in pois], dtype=float)
    service = np.array(
        [0.0] + [p.service_time if p.service_time > 0 else service_time_default for p in pois]
    )
    dists = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    travel = dists / cruise_speed
    cost = travel + (service[None, :] + service[:, None]) / 2.0
    np.fill_diagonal(cost, 0.0)
    asym = float(np.abs(service[None, :] - service[:, None]).max())
    cap = float(t_max) if t_max is not None else float(scenario.swarm.swarm_t_max)
    return PctspInstance(
        pois=pois,
        depot_position=scenario.home,
        travel=travel,
        cost=cost,
        service=service,
        prizes=np.array([0.0] + [p.prize for p in pois]),
        tw_open=np.array([0.0] + [p.tw_open for p in pois]),
        tw_close=np.array([math.inf] + [p.tw_close for p in pois]),
        alpha=alpha,
        t_max=cap,
        asymmetry=asym,
    )


# ---------------------------------------------------------------------------
# Time propagation and validation
# ---------------------------------------------------------------------------


def propagate_times(instance: PctspInstance, sequence) -> tuple[list[float], float, bool]:
    """Arrival (service-start) times along a depot-to-depot node sequence.

    Returns (arrivals for interior nodes, total mission time, feasible).
    Waiting until tw_open is allowed; infeasible when any arrival exceeds
    tw_close or the final depot return exceeds t_max.
    """
    arrivals: list[float] = []
    t = 0.0
    prev = sequence[0]
    for node in sequence[1:-1]:
        t = max(t + instance.travel[prev, node], instance.tw_open[node])
        arrivals.append(t)
        if t > instance.tw_close[node]:
            return arrivals, t, False
        t += instance.service[node]
        prev = node
    t += instance.travel[prev, sequence[-1]]
    return arrivals, t, t <= instance.t_max + 1e-9


def tour_travel_cost(instance: PctspInstance, sequence) -> float:
    return float(sum(instance.cost[a, b] for a, b in zip(sequence[:-1], sequence[1:])))


def make_tour(instance: PctspInstance, sequence, optimal: bool = True) -> Tour:
    seq = tuple(sequence)
    arrivals, _, feasible = propagate_times(instance, seq)
    if not feasible:
        raise ValueError(f"infeasible sequence {seq}")
    prize = float(sum(instance.prizes[i] for i in seq[1:-1]))
    cost = tour_travel_cost(instance, seq)
    visited = set(seq[1:-1])
    skipped = tuple(i for i in range(1, instance.n_pois + 1) if i not in visited)
    return Tour(
        visit_order=seq,
        arrival_times=tuple(arrivals),
        collected_prize=prize,
        travel_cost=cost,
        objective=instance.objective(prize, cost),
        skipped=skipped,
        optimal=optimal,
    )


def validate_tour(instance: PctspInstance, tour: Tour) -> str | None:
    """Recheck every Tour invariant; None when valid, else the first violation."""
    seq = tour.visit_order
    if len(seq) < 2 or seq[0] != 0 or seq[-1] != 0:
        return "tour must start and end at the depot"
    interior = seq[1:-1]
    if len(set(interior)) != len(interior):
        return "a POI is visited more than once"
    if any(not 1 <= i <= instance.n_pois for i in interior):
        return f"unknown node in {interior}"
    arrivals, total, feasible = propagate_times(instance, seq)
    for node, t in zip(interior, arrivals):
        if t > instance.tw_close[node]:
            poi = instance.pois[node - 1]
            return f"POI {poi.id}: arrival {t:.3f}s after window close {poi.tw_close:.3f}s"
    if not feasible:
        return f"mission time {total:.3f}s exceeds cap {instance.t_max:.3f}s"
    for got, want in zip(tour.arrival_times, arrivals):
        if abs(got - want) > 1e-6:
            return f"arrival time mismatch: recorded {got:.6f}, recomputed {want:.6f}"
    cost = tour_travel_cost(instance, seq)
    if abs(cost - tour.travel_cost) > 1e-6:
        return f"travel cost mismatch: recorded {tour.travel_cost:.6f}, recomputed {cost:.6f}"
    prize = float(sum(instance.prizes[i] for i in interior))
    if abs(prize - tour.collected_prize) > 1e-9:
        return f"prize mismatch: recorded {tour.collected_prize}, recomputed {prize}"
    return None


# ---------------------------------------------------------------------------
# Exact solver: branch and bound over sequences
# ---------------------------------------------------------------------------

EXACT_POI_LIMIT = 15


def solve_exact(
    instance: PctspInstance,
    deadline: float | None = None,
    poi_limit: int = EXACT_POI_LIMIT,
) -> Tour:
    """Optimal tour by depth-first branch and bound.

    Children are explored in ascending node order with "return to depot"
    first, and the incumbent is replaced only on strictly better objective,
    so the result is the lexicographically smallest optimal visit order.
    A compute ``deadline`` (seconds) returns the best incumbent found so
    far flagged non-optimal.
    """
    n = instance.n_pois
    if n > poi_limit and deadline is None:
        raise ValueError(
            f"{n} POIs exceeds the exact limit {poi_limit}; pass a deadline or use solve_heuristic"
        )
    prizes = instance.prizes
    travel = instance.travel
    cost = instance.cost
    tw_open = instance.tw_open
    tw_close = instance.tw_close
    service = instance.service
    t_max = instance.t_max
    alpha = instance.alpha

    t_limit = time.monotonic() + deadline if deadline is not None else None
    timed_out = False

    best_seq: list[int] = [0, 0]
    best_obj = -alpha * 0.0  # empty tour objective

    nodes_checked = 0

    def dfs(seq: list[int], t_now: float, cost_now: float, prize_now: float, visited: set[int]):
        nonlocal best_seq, best_obj, timed_out, nodes_checked
        nodes_checked += 1
        if t_limit is not None and nodes_checked % 256 == 0 and time.monotonic() > t_limit:
            timed_out = True
        if timed_out:
            return
        here = seq[-1]
        # Option 1: return to the depot now.
        t_home = t_now + travel[here, 0]
        if t_home <= t_max + 1e-9:
            obj = prize_now - alpha * (cost_now + cost[here, 0])
            if obj > best_obj:
                best_obj = obj
                best_seq = seq + [0]
        # Admissible bound: collect every still-open prize with zero travel.
        collectible = sum(
            prizes[v] for v in range(1, n + 1) if v not in visited and t_now <= tw_close[v]
        )
        if prize_now + collectible - alpha * cost_now <= best_obj:
            return
        for v in range(1, n + 1):
            if v in visited:
                continue
            t_v = max(t_now + travel[here, v], tw_open[v])
            if t_v > tw_close[v]:
                continue
            depart = t_v + service[v]
            if depart + travel[v, 0] > t_max + 1e-9:
                continue
            visited.add(v)
            seq.append(v)
            dfs(seq, depart, cost_now + cost[here, v], prize_now + prizes[v], visited)
            seq.pop()
            visited.remove(v)

    dfs([0], 0.0, 0.0, 0.0, set())
    return make_tour(instance, best_seq, optimal=not timed_out)


def brute_force(instance: PctspInstance) -> Tour:
    """Exhaustive oracle: enumerate every subset and permutation.

    Feasibility of a prefix is checked incrementally (waiting semantics make
    infeasible prefixes unextendable). Intended for small instances only.
    """
    n = instance.n_pois
    best: tuple[float, list[int]] | None = None

    def consider(seq: list[int]) -> None:
        nonlocal best
        arrivals, total, feasible = propagate_times(instance, seq)
        if not feasible:
            return
        prize = sum(instance.prizes[i] for i in seq[1:-1])
        obj = instance.objective(prize, tour_travel_cost(instance, seq))
        if best is None or obj > best[0] or (obj == best[0] and seq < best[1]):
            best = (obj, list(seq))

    nodes = list(range(1, n + 1))
    for r in range(n + 1):
        for subset in permutations(nodes, r):
            consider([0, *subset, 0])
    assert best is not None
    return make_tour(instance, best[1])


# ---------------------------------------------------------------------------
# Heuristic: greedy insertion + 2-opt + skip/unskip
# ---------------------------------------------------------------------------


def solve_heuristic(instance: PctspInstance) -> Tour:
    """Feasible tour from prize-per-cost greedy insertion with local search."""
    n = instance.n_pois
    seq: list[int] = [0, 0]

    def feasible(candidate: list[int]) -> bool:
        _, _, ok = propagate_times(instance, candidate)
        return ok

    def obj(candidate: list[int]) -> float:
        prize = sum(instance.prizes[i] for i in candidate[1:-1])
        return instance.objective(prize, tour_travel_cost(instance, candidate))

    # Greedy best insertion by prize-per-added-cost ratio.
    remaining = set(range(1, n + 1))
    while remaining:
        best_score = 0.0
        best_insert: tuple[int, int] | None = None
        for v in sorted(remaining):
            if instance.prizes[v] <= 0:
                continue
            for pos in range(1, len(seq)):
                candidate = seq[:pos] + [v] + seq[pos:]
                if not feasible(candidate):
                    continue
                a, b = seq[pos - 1], seq[pos]
                delta = instance.cost[a, v] + instance.cost[v, b] - instance.cost[a, b]
                gain = instance.prizes[v] - instance.alpha * delta
                if gain <= 0:
                    continue
                score = instance.prizes[v] / (delta + 1e-9) if delta > 0 else math.inf
                if best_insert is None or score > best_score:
                    best_score = score
                    best_insert = (v, pos)
        if best_insert is None:
            break
        v, pos = best_insert
        seq = seq[:pos] + [v] + seq[pos:]
        remaining.discard(v)

    # Improvement: 2-opt reversals, drop negative-value visits, retry skipped.
    improved = True
    while improved:
        improved = False
        base = obj(seq)
        for i in range(1, len(seq) - 2):
            for j in range(i + 1, len(seq) - 1):
                candidate = seq[:i] + seq[i : j + 1][::-1] + seq[j + 1 :]
                if feasible(candidate) and obj(candidate) > base + 1e-12:
                    seq = candidate
                    improved = True
                    base = obj(seq)
        for i in range(1, len(seq) - 1):
            candidate = seq[:i] + seq[i + 1 :]
            if obj(candidate) > base + 1e-12:
                seq = candidate
                improved = True
                base = obj(seq)
                break
        visited = set(seq[1:-1])
        for v in sorted(set(range(1, n + 1)) - visited):
            for pos in range(1, len(seq)):
                candidate = seq[:pos] + [v] + seq[pos:]
                if feasible(candidate) and obj(candidate) > base + 1e-12:
                    seq = candidate
                    improved = True
                    base = obj(seq)
                    break
            if improved:
                break
    return make_tour(instance, seq, optimal=False)


# ---------------------------------------------------------------------------
# Two-table text format
# ---------------------------------------------------------------------------


def save_instance(instance: PctspInstance, path: str) -> None:
    """Write the two input tables: windows/prizes and the symmetric cost matrix."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"alpha {instance.alpha!r}\n")
        f.write(f"t_max {instance.t_max!r}\n")
        f.write("[nodes]\n")
        f.write("id tw_open tw_close prize service\n")
        f.write("0 0.0 inf 0.0 0.0\n")
        for k, p in enumerate(instance.pois, start=1):
            f.write(
                f"{p.id} {instance.tw_open[k]!r} {instance.tw_close[k]!r} "
                f"{instance.prizes[k]!r} {instance.service[k]!r}\n"
            )
        f.write("[costs]\n")
        for row in instance.cost:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_instance(path: str) -> PctspInstance:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    alpha, t_max = 0.01, math.inf
    i = 0
    while i < len(lines) and not lines[i].startswith("["):
        key, val = lines[i].split()
        if key == "alpha":
            alpha = float(val)
        elif key == "t_max":
            t_max = float(val)
        i += 1
    if i >= len(lines) or lines[i] != "[nodes]":
        raise ValueError(f"{path}: missing [nodes] table")
    i += 2  # skip header row
    rows = []
    while i < len(lines) and lines[i] != "[costs]":
        parts = lines[i].split()
        rows.append(
            (int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]), float(parts[4]))
        )
        i += 1
    if i >= len(lines):
        raise ValueError(f"{path}: missing [costs] table")
    i += 1
    cost = np.array([[float(v) for v in ln.split()] for ln in lines[i:]])
    n = len(rows) - 1
    if cost.shape != (n + 1, n + 1):
        raise ValueError(f"{path}: cost matrix is {cost.shape}, expected {(n + 1, n + 1)}")
    if not np.allclose(cost, cost.T, atol=1e-9):
        raise ValueError(f"{path}: cost matrix is not symmetric")
    pois = tuple(
        PoiRecord(
            id=r[0],
            position=(0.0, 0.0, 0.0),
            prize=r[3],
            tw_open=r[1],
            tw_close=r[2],
            service_time=r[4],
        )
        for r in rows[1:]
    )
    service = np.array([r[4] for r in rows])
    travel = cost - (service[None, :] + service[:, None]) / 2.0
    np.fill_diagonal(travel, 0.0)
    return PctspInstance(
        pois=pois,
        depot_position=(0.0, 0.0, 0.0),
        travel=travel,
        cost=cost,
        service=service,
        prizes=np.array([r[3] for r in rows]),
        tw_open=np.array([r[1] for r in rows]),
        tw_close=np.array([r[2] for r in rows]),
        alpha=alpha,
        t_max=t_max,
    )
