"""Iterated local search with randomized variable neighborhood descent.

The working representation places every demand slice (request, arrival
period) on a (server, period); attendance events, replica windows,
replication events, hires, bandwidth, and costs are caches derived from the
placements. Replicas are copied from the content's origin server, arrive
after the replication delay, and persist until the horizon unless evicted
(LRU, construction only), so every intermediate solution exports to a
zero-violation solution of the corrected constraint mode.

Local search explores five event neighborhoods (Shift, Swap, Split, Merge,
d-Delay) with first-improvement acceptance and random neighborhood
ordering; a failed neighborhood leaves the candidate set until some move
improves. Perturbation applies level + 1 random feasible moves from
{Shift, Swap, Split, Merge}.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass

from .model import (
    AttendanceTuple,
    CostBreakdown,
    HIRABLE,
    Infeasible,
    OWNED,
    PlanningInstance,
    Replication,
    Solution,
    evaluate,
)

EPS = 1e-9

NEIGHBORHOODS = ("shift", "swap", "split", "merge", "ddelay")


@dataclass(frozen=True)
class IlsParams:
    iter_max: int = 2
    level_max: int = 1
    d: int = 1
    swap_sample_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iter_max < 1 or self.level_max < 0:
            raise ValueError("iter_max >= 1 and level_max >= 0 required")
        if self.d == 0:
            raise ValueError("d must be nonzero")
        if not 0 < self.swap_sample_fraction <= 1:
            raise ValueError("swap_sample_fraction in (0, 1]")


class _Window:
    """Replica presence of one content on one server over [arrive, end)."""

    __slots__ = ("arrive", "end", "uses", "origin")

    def __init__(self, arrive: int, end: int, origin: bool = False) -> None:
        self.arrive = arrive
        self.end = end
        self.uses: dict[int, int] = {}
        self.origin = origin

    def copy(self) -> "_Window":
        w = _Window(self.arrive, self.end, self.origin)
        w.uses = dict(self.uses)
        return w

    def covers(self, t: int) -> bool:
        return self.arrive <= t < self.end

    def last_use(self) -> int:
        return max(self.uses) if self.uses else -1


class _MoveFailed(Exception):
    pass


class OperationalPlan:
    """Mutable heuristic solution with incremental cost bookkeeping."""

    def __init__(self, inst: PlanningInstance) -> None:
        self.inst = inst
        self.m = inst.big_m
        tf = inst.horizon
        self.placements: dict[tuple[int, int], tuple[int, int]] = {}
        self.events: dict[tuple[int, int, int], set[tuple[int, int]]] = {}
        self.bw_used: dict[tuple[int, int], float] = {}
        self.client_used: dict[tuple[int, int], float] = {}
        self.x_count: dict[tuple[int, int, int], int] = {}
        self.z_count: dict[tuple[int, int], int] = {}
        self.windows: dict[tuple[int, int], list[_Window]] = {}
        self.occ: dict[int, list[float]] = {
            s.id: [0.0] * (tf + 2) for s in inst.servers
        }
        self.attend_cost = 0.0
        self.backlog_cost = 0.0
        self.repl_cost = 0.0
        self.fin_cost = 0.0
        # Penalty prefix sums: delay cost of a slice = (pen[t] - pen[o]) * amount.
        self._pen: dict[int, list[float]] = {}
        for r in inst.requests:
            acc = [0.0] * (tf + 2)
            for t in range(1, tf + 1):
                acc[t + 1] = acc[t] + r.penalty_at(t)
            self._pen[r.id] = acc
        # Origin replicas are pinned for the whole content lifetime.
        for c in inst.contents:
            w = _Window(c.start, tf + 1, origin=True)
            self.windows[(c.id, c.origin)] = [w]
            for t in range(c.start, tf + 1):
                self.occ[c.origin][t] += c.size
            srv = inst.server_by_id[c.origin]
            if max(self.occ[c.origin][1:]) > srv.storage + 1e-9:
                raise Infeasible(
                    f"origin server {c.origin} cannot store its own contents"
                )

    # -- cost helpers -----------------------------------------------------

    def total_cost(self) -> float:
        return self.attend_cost + self.backlog_cost + self.repl_cost + self.fin_cost

    def _delay_cost(self, req: int, o: int, t: int, amount: float) -> float:
        pen = self._pen[req]
        return (pen[t] - pen[o]) * amount

    # -- window mechanics --------------------------------------------------

    def _earliest_arrival(self, content) -> int:
        return max(content.start + self.inst.replication_delay, content.start + 1)

    def _storage_free(self, j: int, size: float, lo: int, hi: int) -> bool:
        srv = self.inst.server_by_id[j]
        occ = self.occ[j]
        return all(occ[t] + size <= srv.storage + 1e-9 for t in range(lo, hi))

    def _occupy(self, j: int, size: float, lo: int, hi: int) -> None:
        occ = self.occ[j]
        for t in range(lo, hi):
            occ[t] += size

    def _ensure_window(
        self, k: int, j: int, t: int, *, end_hint: int | None = None,
        allow_evict: bool = False,
    ) -> None:
        """Make (k, j) hold a replica at t.

        Preference order: an existing window covering t; extending the
        preceding window forward (persistence is free); retiming the next
        window's arrival back to t (same single copy); a new window, whose
        span shrinks to whatever storage allows. Only the last path charges
        a copy cost.
        """
        wins = self.windows.setdefault((k, j), [])
        for w in wins:
            if w.covers(t):
                w.uses[t] = w.uses.get(t, 0) + 1
                return
        content = self.inst.content_by_id[k]
        size = content.size
        later = [w for w in wins if w.arrive > t]
        nxt = min(later, key=lambda w: w.arrive) if later else None
        bound = nxt.arrive if nxt else self.inst.horizon + 1
        prev = [w for w in wins if w.end <= t]
        prv = max(prev, key=lambda w: w.end) if prev else None
        if prv is not None:
            if self._storage_free(j, size, prv.end, t + 1) or (
                allow_evict and self._evict_lru(j, size, prv.end, t + 1, exclude=(k, j))
            ):
                self._occupy(j, size, prv.end, t + 1)
                prv.end = t + 1
                prv.uses[t] = 1
                return
        if t < self._earliest_arrival(content):
            raise _MoveFailed("replica cannot arrive that early")
        if nxt is not None and (
            self._storage_free(j, size, t, nxt.arrive)
            or (allow_evict and self._evict_lru(j, size, t, nxt.arrive, exclude=(k, j)))
        ):
            self._occupy(j, size, t, nxt.arrive)
            nxt.arrive = t
            nxt.uses[t] = nxt.uses.get(t, 0) + 1
            return
        # New window: take the longest storable span starting at t, at
        # most up to end_hint (used when reverting) or the next window.
        if end_hint is not None:
            bound = min(bound, end_hint)
        if not self._storage_free(j, size, t, t + 1):
            if not (allow_evict and self._evict_lru(j, size, t, t + 1, exclude=(k, j))):
                raise _MoveFailed("no storage for replica")
        end = t + 1
        srv_storage = self.inst.server_by_id[j].storage
        occ = self.occ[j]
        while end < bound and occ[end] + size <= srv_storage + 1e-9:
            end += 1
        w = _Window(t, end)
        w.uses[t] = 1
        wins.append(w)
        self._occupy(j, size, t, end)
        self.repl_cost += content.copy_cost

    def _release_window(self, k: int, j: int, t: int) -> tuple[int, int] | None:
        """Drop one use at t; returns (arrive, end) if the window vanished.

        A surviving window is tightened to [min(uses), max(uses) + 1] when
        its boundary use went away, so rolled-back moves never leave phantom
        storage claims behind (spans may end up tighter than before the
        move; placements and costs are restored exactly).
        """
        wins = self.windows[(k, j)]
        for w in wins:
            if w.covers(t) and t in w.uses:
                w.uses[t] -= 1
                if w.uses[t] == 0:
                    del w.uses[t]
                if w.origin:
                    return None
                content = self.inst.content_by_id[k]
                if not w.uses:
                    wins.remove(w)
                    self._occupy(j, -content.size, w.arrive, w.end)
                    self.repl_cost -= content.copy_cost
                    return (w.arrive, w.end)
                new_arrive = min(w.uses)
                if new_arrive > w.arrive:
                    self._occupy(j, -content.size, w.arrive, new_arrive)
                    w.arrive = new_arrive
                new_end = max(w.uses) + 1
                if new_end < w.end:
                    self._occupy(j, -content.size, new_end, w.end)
                    w.end = new_end
                return None
        raise AssertionError("released a use that was never tracked")

    def _evict_lru(
        self, j: int, size: float, lo: int, hi: int, exclude: tuple[int, int]
    ) -> bool:
        """Truncate least-recently-used idle windows on j to free [lo, hi)."""
        while not self._storage_free(j, size, lo, hi):
            candidates = []
            for (k2, j2), wins in self.windows.items():
                if j2 != j or (k2, j2) == exclude:
                    continue
                for w in wins:
                    if w.origin or w.arrive >= lo or w.end <= lo:
                        continue
                    if w.last_use() < lo:
                        candidates.append((w.last_use(), k2, w))
            if not candidates:
                return False
            _, k2, w = min(candidates, key=lambda c: (c[0], c[1]))
            # All uses precede lo, so truncating to lo keeps them intact.
            self._occupy(j, -self.inst.content_by_id[k2].size, lo, w.end)
            w.end = lo
        return True

    # -- placement primitives ----------------------------------------------

    def _slice_amount(self, req: int, o: int) -> float:
        return self.inst.request_by_id[req].demand[o]

    def place(
        self, req: int, o: int, j: int, t: int, *,
        end_hint: int | None = None, allow_evict: bool = False,
    ) -> None:
        """Serve slice (req, o) on server j at period t; raises _MoveFailed."""
        inst = self.inst
        if not o <= t <= inst.horizon:
            raise _MoveFailed("period outside [arrival, horizon]")
        amount = self._slice_amount(req, o)
        if self.client_used.get((req, t), 0.0) + amount > inst.client_bandwidth + 1e-9:
            raise _MoveFailed("client bandwidth")
        srv = inst.server_by_id[j]
        if self.bw_used.get((j, t), 0.0) + amount > srv.bandwidth + 1e-9:
            raise _MoveFailed("server bandwidth")
        k = inst.request_by_id[req].content
        self._ensure_window(k, j, t, end_hint=end_hint, allow_evict=allow_evict)
        self.placements[(req, o)] = (j, t)
        self.events.setdefault((k, j, t), set()).add((req, o))
        self.bw_used[(j, t)] = self.bw_used.get((j, t), 0.0) + amount
        self.client_used[(req, t)] = self.client_used.get((req, t), 0.0) + amount
        self.backlog_cost += self._delay_cost(req, o, t, amount)
        xkey = (req, j, t)
        self.x_count[xkey] = self.x_count.get(xkey, 0) + 1
        if self.x_count[xkey] == 1:
            self.attend_cost += inst.request_by_id[req].attend_cost
        if srv.kind == HIRABLE:
            zkey = (j, inst.slot_of(t))
            self.z_count[zkey] = self.z_count.get(zkey, 0) + 1
            if self.z_count[zkey] == 1:
                self.fin_cost += srv.cost / self.m

    def unplace(self, req: int, o: int) -> tuple[int, int, tuple[int, int] | None]:
        """Remove a slice placement; returns (j, t, dropped window span)."""
        inst = self.inst
        j, t = self.placements.pop((req, o))
        amount = self._slice_amount(req, o)
        k = inst.request_by_id[req].content
        ev = self.events[(k, j, t)]
        ev.discard((req, o))
        if not ev:
            del self.events[(k, j, t)]
        self.bw_used[(j, t)] -= amount
        self.client_used[(req, t)] -= amount
        self.backlog_cost -= self._delay_cost(req, o, t, amount)
        xkey = (req, j, t)
        self.x_count[xkey] -= 1
        if self.x_count[xkey] == 0:
            del self.x_count[xkey]
            self.attend_cost -= inst.request_by_id[req].attend_cost
        srv = inst.server_by_id[j]
        if srv.kind == HIRABLE:
            zkey = (j, inst.slot_of(t))
            self.z_count[zkey] -= 1
            if self.z_count[zkey] == 0:
                del self.z_count[zkey]
                self.fin_cost -= srv.cost / self.m
        dropped = self._release_window(k, j, t)
        return j, t, dropped

    # -- cloning and export --------------------------------------------------

    def clone(self) -> "OperationalPlan":
        new = object.__new__(OperationalPlan)
        new.inst = self.inst
        new.m = self.m
        new.placements = dict(self.placements)
        new.events = {k: set(v) for k, v in self.events.items()}
        new.bw_used = dict(self.bw_used)
        new.client_used = dict(self.client_used)
        new.x_count = dict(self.x_count)
        new.z_count = dict(self.z_count)
        new.windows = {k: [w.copy() for w in v] for k, v in self.windows.items()}
        new.occ = {j: list(col) for j, col in self.occ.items()}
        new.attend_cost = self.attend_cost
        new.backlog_cost = self.backlog_cost
        new.repl_cost = self.repl_cost
        new.fin_cost = self.fin_cost
        new._pen = self._pen
        return new

    def cost_snapshot(self) -> tuple[float, float, float, float]:
        return (self.attend_cost, self.backlog_cost, self.repl_cost, self.fin_cost)

    def restore_costs(self, snap: tuple[float, float, float, float]) -> None:
        self.attend_cost, self.backlog_cost, self.repl_cost, self.fin_cost = snap

    def to_solution(self) -> Solution:
        inst = self.inst
        tf = inst.horizon
        served: dict[tuple[int, int, int], dict[int, float]] = {}
        for (k, j, t), slices in self.events.items():
            req_map: dict[int, float] = {}
            for (req, o) in slices:
                req_map[req] = req_map.get(req, 0.0) + self._slice_amount(req, o)
            served[(k, j, t)] = dict(sorted(req_map.items()))
        tuples = [
            AttendanceTuple(k, j, t, req_map)
            for (k, j, t), req_map in sorted(served.items())
        ]
        replications = []
        replicas: set[tuple[int, int, int]] = set()
        for (k, j), wins in self.windows.items():
            for w in wins:
                for t in range(w.arrive, min(w.end, tf + 1)):
                    replicas.add((k, j, t))
                if not w.origin:
                    origin = inst.content_by_id[k].origin
                    replications.append(
                        Replication(k, origin, j, w.arrive - inst.replication_delay)
                    )
        att: dict[tuple[int, int], float] = {}
        for (req, o), (j, t) in self.placements.items():
            att[(req, t)] = att.get((req, t), 0.0) + self._slice_amount(req, o)
        backlog: dict[tuple[int, int], float] = {}
        for r in inst.requests:
            carried = 0.0
            for t in range(inst.content_by_id[r.content].start, tf + 1):
                carried = carried + r.demand_at(t) - att.get((r.id, t), 0.0)
                if carried > 1e-12:
                    backlog[(r.id, t)] = carried
        return Solution(
            tuples=tuples,
            replications=sorted(replications, key=lambda r: (r.content, r.target, r.period)),
            hires=set(self.z_count),
            backlog=backlog,
            replicas=replicas,
        )


# ---------------------------------------------------------------------------
# Moves. A move relocates whole slices between (server, period) events and
# is applied transactionally: all sources are unplaced, all targets placed,
# rolled back completely on the first failure.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Move:
    kind: str
    # Slices to relocate and their destination (server, period).
    relocations: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    # Destination event keys that must not pre-exist (keeps Shift/Swap/Split
    # from silently merging, so each move has a clean inverse).
    fresh_keys: tuple[tuple[int, int, int], ...] = ()


@dataclass
class AppliedMove:
    """Undo record of a successfully applied move."""

    delta: float
    snapshot: tuple[float, float, float, float]
    # Source positions in unplace order, with the span of any replica
    # window the unplace dropped (its end is reused when reverting, so a
    # revert can never fail on storage the original state had).
    sources: list[tuple[tuple[int, int], int, int, tuple[int, int] | None]]
    placed: list[tuple[int, int]]


def apply_move(plan: OperationalPlan, move: Move) -> AppliedMove | None:
    """Apply a move transactionally; returns its undo record, or None."""
    snap = plan.cost_snapshot()
    before = plan.total_cost()
    done: list[tuple[tuple[int, int], int, int, tuple[int, int] | None]] = []
    placed: list[tuple[int, int]] = []
    try:
        for (sl, _target) in move.relocations:
            j, t, dropped = plan.unplace(*sl)
            done.append((sl, j, t, dropped))
        for key in move.fresh_keys:
            if key in plan.events:
                raise _MoveFailed("destination event already exists")
        for (sl, (j, t)) in move.relocations:
            plan.place(sl[0], sl[1], j, t)
            placed.append(sl)
    except _MoveFailed:
        _restore(plan, snap, done, placed)
        return None
    return AppliedMove(plan.total_cost() - before, snap, done, placed)


def revert_move(plan: OperationalPlan, applied: AppliedMove) -> None:
    """Roll back a successfully applied move exactly."""
    _restore(plan, applied.snapshot, applied.sources, applied.placed)


def _restore(plan, snap, done, placed) -> None:
    for sl in reversed(placed):
        plan.unplace(*sl)
    for sl, j, t, dropped in reversed(done):
        end_hint = dropped[1] if dropped else None
        plan.place(sl[0], sl[1], j, t, end_hint=end_hint)
    plan.restore_costs(snap)


# -- candidate generation ----------------------------------------------------


def _event_keys(plan: OperationalPlan) -> list[tuple[int, int, int]]:
    return sorted(plan.events)


def _event_requests(plan: OperationalPlan, key) -> list[int]:
    return sorted({req for (req, _o) in plan.events[key]})


def _move_event(plan, key, dest_j, dest_t) -> list[tuple]:
    return [((req, o), (dest_j, dest_t)) for (req, o) in sorted(plan.events[key])]


def shift_candidates(plan: OperationalPlan) -> list[Move]:
    out = []
    server_ids = sorted(plan.inst.server_by_id)
    for key in _event_keys(plan):
        k, j, t = key
        for j2 in server_ids:
            if j2 == j:
                continue
            out.append(
                Move(
                    "shift",
                    tuple(_move_event(plan, key, j2, t)),
                    fresh_keys=((k, j2, t),),
                )
            )
    return out


def swap_candidates(plan: OperationalPlan, rng: random.Random, fraction: float) -> list[Move]:
    keys = _event_keys(plan)
    pairs = [
        (a, b)
        for i, a in enumerate(keys)
        for b in keys[i + 1 :]
        if a[1] != b[1]  # different servers
    ]
    if not pairs:
        return []
    count = max(1, math.ceil(fraction * len(pairs)))
    sampled = rng.sample(pairs, min(count, len(pairs)))
    out = []
    for a, b in sorted(sampled):
        ka, ja, ta = a
        kb, jb, tb = b
        reloc = tuple(
            _move_event(plan, a, jb, ta) + _move_event(plan, b, ja, tb)
        )
        out.append(Move("swap", reloc, fresh_keys=((ka, jb, ta), (kb, ja, tb))))
    return out


def split_candidates(plan: OperationalPlan) -> list[Move]:
    out = []
    server_ids = sorted(plan.inst.server_by_id)
    for key in _event_keys(plan):
        k, j, t = key
        reqs = _event_requests(plan, key)
        if len(reqs) < 2:
            continue
        for req in reqs:
            slices = sorted(sl for sl in plan.events[key] if sl[0] == req)
            for j2 in server_ids:
                if j2 == j:
                    continue
                out.append(
                    Move(
                        "split",
                        tuple((sl, (j2, t)) for sl in slices),
                        fresh_keys=((k, j2, t),),
                    )
                )
    return out


def merge_candidates(plan: OperationalPlan) -> list[Move]:
    out = []
    keys = _event_keys(plan)
    by_kt: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for key in keys:
        by_kt.setdefault((key[0], key[2]), []).append(key)
    for (_k, _t), group in sorted(by_kt.items()):
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                out.append(Move("merge", tuple(_move_event(plan, b, a[1], a[2]))))
                out.append(Move("merge", tuple(_move_event(plan, a, b[1], b[2]))))
    return out


def delay_candidates(plan: OperationalPlan, d: int) -> list[Move]:
    out = []
    tf = plan.inst.horizon
    for key in _event_keys(plan):
        k, j, t = key
        for dd in (d, -d):
            t2 = t + dd
            if not 1 <= t2 <= tf:
                continue
            out.append(
                Move(
                    "ddelay",
                    tuple(_move_event(plan, key, j, t2)),
                    fresh_keys=((k, j, t2),),
                )
            )
    return out


def inverse_move(plan_before: dict, move: Move) -> Move:
    """Inverse relocations, from the recorded pre-move placements."""
    inv = tuple((sl, plan_before[sl]) for (sl, _t) in move.relocations)
    return Move(kind=move.kind, relocations=inv)


# ---------------------------------------------------------------------------
# Construction, RVND, perturbation, outer loop.
# ---------------------------------------------------------------------------


def constructive_phase(
    inst: PlanningInstance, rng: random.Random
) -> OperationalPlan:
    """Greedy randomized construction.

    Requests are handled in random order; each demand slice goes to the
    first feasible (period, server) scanning periods from its arrival and
    servers cheapest-first with owned servers before hirable ones. A full
    storage conflict triggers LRU eviction; a slice no server can take in
    any period makes the instance infeasible (full service is required).
    """
    plan = OperationalPlan(inst)
    order = [r.id for r in inst.requests]
    rng.shuffle(order)
    servers = sorted(
        inst.servers, key=lambda s: (s.kind != OWNED, s.cost, s.id)
    )
    for rid in order:
        r = inst.request_by_id[rid]
        for o in sorted(r.demand):
            if r.demand[o] <= 0:
                continue
            placed = False
            for t in range(o, inst.horizon + 1):
                for srv in servers:
                    try:
                        plan.place(rid, o, srv.id, t, allow_evict=True)
                        placed = True
                        break
                    except _MoveFailed:
                        continue
                if placed:
                    break
            if not placed:
                raise Infeasible(
                    f"request {rid} slice at {o} fits no server in any period"
                )
    return plan


@dataclass
class SearchStats:
    constructions: int = 0
    rvnd_passes: int = 0
    moves_tried: int = 0
    moves_accepted: int = 0
    perturbations: int = 0
    restarts: int = 0
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def rvnd(
    plan: OperationalPlan,
    rng: random.Random,
    params: IlsParams,
    stats: SearchStats | None = None,
) -> OperationalPlan:
    """First-improvement descent over randomly ordered neighborhoods."""
    stats = stats if stats is not None else SearchStats()
    active = list(NEIGHBORHOODS)
    while active:
        name = active[rng.randrange(len(active))]
        if name == "shift":
            candidates = shift_candidates(plan)
        elif name == "swap":
            candidates = swap_candidates(plan, rng, params.swap_sample_fraction)
        elif name == "split":
            candidates = split_candidates(plan)
        elif name == "merge":
            candidates = merge_candidates(plan)
        else:
            candidates = delay_candidates(plan, params.d)
        stats.rvnd_passes += 1
        improved = False
        for move in candidates:
            stats.moves_tried += 1
            applied = apply_move(plan, move)
            if applied is None:
                continue
            if applied.delta < -EPS:
                stats.moves_accepted += 1
                improved = True
                break
            revert_move(plan, applied)
        if improved:
            active = list(NEIGHBORHOODS)
        else:
            active.remove(name)
    return plan


def perturb(
    plan: OperationalPlan,
    level: int,
    rng: random.Random,
    params: IlsParams,
    stats: SearchStats | None = None,
) -> OperationalPlan:
    """Apply level + 1 random feasible moves from {shift, swap, split, merge}."""
    kinds = ("shift", "swap", "split", "merge")
    applied = 0
    attempts = 0
    while applied < level + 1 and attempts < 40 * (level + 1):
        attempts += 1
        name = kinds[rng.randrange(len(kinds))]
        if name == "shift":
            candidates = shift_candidates(plan)
        elif name == "swap":
            candidates = swap_candidates(plan, rng, params.swap_sample_fraction)
        elif name == "split":
            candidates = split_candidates(plan)
        else:
            candidates = merge_candidates(plan)
        if not candidates:
            continue
        move = candidates[rng.randrange(len(candidates))]
        if apply_move(plan, move) is not None:
            applied += 1
            if stats is not None:
                stats.perturbations += 1
    return plan


def solve(
    inst: PlanningInstance,
    params: IlsParams | None = None,
    incumbent_callback=None,
) -> tuple[Solution, CostBreakdown, dict]:
    """Full multi-start loop; deterministic for a given (instance, params)."""
    params = params or IlsParams()
    stats = SearchStats()
    started = time.perf_counter()
    master = random.Random(params.seed)
    restart_seeds = [master.randrange(2**63) for _ in range(params.iter_max)]
    best_plan: OperationalPlan | None = None
    best_cost = math.inf
    for restart, rs in enumerate(restart_seeds):
        rng = random.Random(rs)
        stats.restarts += 1
        plan = constructive_phase(inst, rng)
        stats.constructions += 1
        plan = rvnd(plan, rng, params, stats)
        if incumbent_callback is not None:
            incumbent_callback(plan)
        level = 0
        while level < params.level_max:
            trial = plan.clone()
            perturb(trial, level, rng, params, stats)
            rvnd(trial, rng, params, stats)
            if trial.total_cost() < plan.total_cost() - EPS:
                plan = trial
                level = 0
                if incumbent_callback is not None:
                    incumbent_callback(plan)
            else:
                level += 1
        if plan.total_cost() < best_cost - EPS:
            best_cost = plan.total_cost()
            best_plan = plan
    assert best_plan is not None
    stats.wall_time = time.perf_counter() - started
    solution = best_plan.to_solution()
    return solution, evaluate(inst, solution), stats.as_dict()
