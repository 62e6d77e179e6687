"""Exhaustive optimum for tiny planning instances.

Enumerates every replica schedule (the free y cells beyond the pinned
origin/start pattern), derives the minimal replication events each schedule
forces, and branch-and-bound places every demand slice. Pruning is
admissible only (cost lower bounds and capacity checks), so the result is
the global optimum of the selected constraint mode; ties break by the
lexicographically smallest (replica cells, placements) encoding.

Intended for instances around <= 2 servers, 2 contents, 3 requests, 4
periods; anything whose search-space estimate exceeds the cap raises
TooLarge.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .model import (
    AttendanceTuple,
    CostBreakdown,
    HIRABLE,
    Infeasible,
    PlanningInstance,
    Replication,
    Solution,
    TooLarge,
    evaluate,
)


@dataclass(frozen=True)
class _Slice:
    request: int
    content: int
    arrival: int
    amount: float
    attend_cost: float


def _slices_of(inst: PlanningInstance) -> list[_Slice]:
    out = []
    for r in inst.requests:
        for o in sorted(r.demand):
            if r.demand[o] > 0:
                out.append(_Slice(r.id, r.content, o, r.demand[o], r.attend_cost))
    return out


def _delay_cost(inst: PlanningInstance, request: int, o: int, t: int) -> float:
    """Backlog penalty of serving a slice arriving at o in period t >= o."""
    r = inst.request_by_id[request]
    amount = r.demand[o]
    return sum(r.penalty_at(tau) * amount for tau in range(o, t))


def _derive_w_literal(inst, y: set) -> list[Replication] | None:
    """Minimal replications justifying a replica schedule, printed encoding.

    Every replica period t >= start + tr on server j needs an outgoing copy
    from j at t - tr whose destination already holds the content then.
    """
    reps: list[Replication] = []
    for (k, j, t) in sorted(y):
        c = inst.content_by_id[k]
        send = t - inst.replication_delay
        if send < c.start:
            continue  # early periods need no justification
        targets = [l for l in sorted(inst.server_by_id) if (k, l, send) in y]
        if not targets:
            return None
        reps.append(Replication(k, j, targets[0], send))
    return reps


def _derive_w_corrected(inst, y: set) -> list[Replication] | None:
    """Minimal replications creating each replica run, sane encoding."""
    reps: list[Replication] = []
    for (k, j, t) in sorted(y):
        c = inst.content_by_id[k]
        if t == c.start and j == c.origin:
            continue
        if (k, j, t - 1) in y:
            continue  # persisted
        send = t - inst.replication_delay
        if send < c.start:
            return None
        sources = [l for l in sorted(inst.server_by_id) if (k, l, send) in y]
        if not sources:
            return None
        reps.append(Replication(k, sources[0], j, send))
    return reps


def _storage_ok(inst, y: set) -> bool:
    use: dict[tuple[int, int], float] = {}
    for (k, j, t) in y:
        use[(j, t)] = use.get((j, t), 0.0) + inst.content_by_id[k].size
        if use[(j, t)] > inst.server_by_id[j].storage + 1e-9:
            return False
    return True


def solve_exact(
    inst: PlanningInstance, mode: str = "literal", max_space: float = 2e7
) -> tuple[Solution, CostBreakdown]:
    """Globally optimal solution by exhaustive enumeration with safe pruning."""
    if mode not in ("literal", "corrected"):
        raise ValueError(f"unknown mode {mode!r}")
    tf = inst.horizon
    server_ids = sorted(inst.server_by_id)
    slices = _slices_of(inst)

    free_cells: list[tuple[int, int, int]] = []
    pins: set[tuple[int, int, int]] = set()
    for c in inst.contents:
        pins.add((c.id, c.origin, c.start))
        for j in server_ids:
            for t in range(c.start + 1, tf + 1):
                free_cells.append((c.id, j, t))
    space = (2.0 ** len(free_cells)) * max(
        1.0, math.prod(float(len(server_ids) * (tf - s.arrival + 1)) for s in slices)
    )
    if space > max_space:
        raise TooLarge(
            f"search space ~{space:.3g} exceeds cap {max_space:.3g} "
            f"({len(free_cells)} free replica cells, {len(slices)} slices)"
        )

    m = inst.big_m
    attend_lb = sum(
        r.attend_cost * math.ceil(r.total_demand / inst.client_bandwidth - 1e-12)
        for r in inst.requests
    )

    best_cost = math.inf
    best_key: tuple | None = None
    best: tuple[set, list[Replication], list[tuple[_Slice, int, int]]] | None = None

    # Per-slice placement cost ignoring shared capacity (admissible bound).
    def slice_floor(s: _Slice) -> float:
        opts = [
            _delay_cost(inst, s.request, s.arrival, t)
            for t in range(s.arrival, tf + 1)
        ]
        return min(opts) if opts else math.inf

    floors = [slice_floor(s) for s in slices]
    suffix_floor = [0.0] * (len(slices) + 1)
    for i in range(len(slices) - 1, -1, -1):
        suffix_floor[i] = suffix_floor[i + 1] + floors[i]

    for ones in range(len(free_cells) + 1):
        # Ascending replica-count order finds cheap incumbents early.
        for chosen in itertools.combinations(range(len(free_cells)), ones):
            y = set(pins)
            y.update(free_cells[i] for i in chosen)
            if not _storage_ok(inst, y):
                continue
            reps = (
                _derive_w_literal(inst, y)
                if mode == "literal"
                else _derive_w_corrected(inst, y)
            )
            if reps is None:
                continue
            w_cost = sum(inst.content_by_id[r.content].copy_cost for r in reps)
            # Strict pruning only, so equal-cost schedules still compete on
            # the deterministic tie-break key.
            if w_cost + attend_lb + suffix_floor[0] > best_cost + 1e-12:
                continue

            placements: list[tuple[_Slice, int, int]] = []
            bw = {(j, t): inst.server_by_id[j].bandwidth for j in server_ids for t in range(1, tf + 1)}
            client = {}
            xset: set[tuple[int, int, int]] = set()
            zset: set[tuple[int, int]] = set()

            def dfs(idx: int, cost: float) -> None:
                nonlocal best_cost, best_key, best
                if cost + suffix_floor[idx] > best_cost + 1e-12:
                    return
                if idx == len(slices):
                    key = (tuple(sorted(y)), tuple((s.request, s.arrival, j, t) for s, j, t in placements))
                    if cost < best_cost - 1e-12 or (
                        abs(cost - best_cost) <= 1e-12 and (best_key is None or key < best_key)
                    ):
                        best_cost = cost
                        best_key = key
                        best = (set(y), list(reps), list(placements))
                    return
                s = slices[idx]
                options = []
                for t in range(s.arrival, tf + 1):
                    used = client.get((s.request, t), 0.0)
                    if used + s.amount > inst.client_bandwidth + 1e-9:
                        continue
                    delay = _delay_cost(inst, s.request, s.arrival, t)
                    for j in server_ids:
                        if (s.content, j, t) not in y:
                            continue
                        if bw[(j, t)] + 1e-9 < s.amount:
                            continue
                        extra = delay
                        if (s.request, j, t) not in xset:
                            extra += s.attend_cost
                        srv = inst.server_by_id[j]
                        if srv.kind == HIRABLE and (j, inst.slot_of(t)) not in zset:
                            extra += srv.cost / m
                        options.append((extra, t, j))
                options.sort()
                for extra, t, j in options:
                    new_x = (s.request, j, t) not in xset
                    srv = inst.server_by_id[j]
                    slot = (j, inst.slot_of(t))
                    new_z = srv.kind == HIRABLE and slot not in zset
                    bw[(j, t)] -= s.amount
                    client[(s.request, t)] = client.get((s.request, t), 0.0) + s.amount
                    if new_x:
                        xset.add((s.request, j, t))
                    if new_z:
                        zset.add(slot)
                    placements.append((s, j, t))
                    dfs(idx + 1, cost + extra)
                    placements.pop()
                    if new_z:
                        zset.discard(slot)
                    if new_x:
                        xset.discard((s.request, j, t))
                    client[(s.request, t)] -= s.amount
                    bw[(j, t)] += s.amount

            dfs(0, w_cost)

    if best is None:
        raise Infeasible("no feasible replica schedule and slice placement exists")

    y, reps, placements = best
    solution = _build_solution(inst, y, reps, placements)
    return solution, evaluate(inst, solution)


def _build_solution(inst, y, reps, placements) -> Solution:
    served: dict[tuple[int, int, int], dict[int, float]] = {}
    for s, j, t in placements:
        key = (s.content, j, t)
        served.setdefault(key, {})
        served[key][s.request] = served[key].get(s.request, 0.0) + s.amount
    tuples = [
        AttendanceTuple(k, j, t, dict(sorted(req_map.items())))
        for (k, j, t), req_map in sorted(served.items())
    ]
    hires = set()
    for s, j, t in placements:
        if inst.server_by_id[j].kind == HIRABLE:
            hires.add((j, inst.slot_of(t)))
    att: dict[tuple[int, int], float] = {}
    for s, j, t in placements:
        att[(s.request, t)] = att.get((s.request, t), 0.0) + s.amount
    backlog: dict[tuple[int, int], float] = {}
    for r in inst.requests:
        carried = 0.0
        start = inst.content_by_id[r.content].start
        for t in range(start, inst.horizon + 1):
            carried = carried + r.demand_at(t) - att.get((r.id, t), 0.0)
            if carried > 1e-12:
                backlog[(r.id, t)] = carried
    return Solution(
        tuples=tuples,
        replications=list(reps),
        hires=hires,
        backlog=backlog,
        replicas=set(y),
    )
