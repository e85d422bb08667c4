"""Shattering executor: pre-phase sampling, retraction, dependency components, resampling."""
from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import ContractViolation, InvariantBreach, StageAbort

# Test builds enable access tracking (tests/conftest.py or ARTIFACT_STRICT=1).
STRICT_ACCESS = os.environ.get("ARTIFACT_STRICT", "") not in ("", "0")


class AssignmentView(Mapping):
    """Read-only window on an assignment; optionally refuses keys outside `allowed`."""

    __slots__ = ("data", "allowed", "memo", "owner")

    def __init__(self, data, allowed=None, memo=None, owner=None):
        self.data = data
        self.allowed = allowed
        self.memo = {} if memo is None else memo
        self.owner = owner

    def __getitem__(self, key):
        if self.allowed is not None and key not in self.allowed:
            raise ContractViolation(f"event {self.owner!r} read variable {key!r} outside its vbl")
        return self.data[key]

    def __iter__(self):
        return iter(self.allowed if self.allowed is not None else self.data)

    def __len__(self):
        return len(self.allowed if self.allowed is not None else self.data)

    def __contains__(self, key):
        if self.allowed is not None and key not in self.allowed:
            raise ContractViolation(f"event {self.owner!r} probed variable {key!r} outside its vbl")
        return key in self.data


@dataclass(eq=False)
class BadEvent:
    id: Tuple
    kind: str
    vbl: frozenset
    predicate: Callable[[AssignmentView], bool]
    fresh_budget: bool = False

    def __post_init__(self):
        self.vbl = frozenset(self.vbl)

    def __repr__(self):
        return f"BadEvent({self.id!r}, |vbl|={len(self.vbl)})"


@dataclass
class ShatterPlan:
    retraction_radius: int
    component_size_cap: int = 10**9
    resample_budget: int = 10_000
    stage: str = ""

    def __post_init__(self):
        if self.retraction_radius < 0:
            raise ValueError("retraction_radius must be >= 0")
        if self.component_size_cap < 1 or self.resample_budget < 1:
            raise ValueError("caps must be positive")


def evaluate_events(events: Sequence[BadEvent], assignment: Mapping, strict: Optional[bool] = None) -> List[Tuple]:
    """Ids (sorted) of the events whose predicate holds."""
    strict = STRICT_ACCESS if strict is None else strict
    out = []
    if strict:
        for ev in events:
            if ev.predicate(AssignmentView(assignment, ev.vbl, None, ev.id)):
                out.append(ev.id)
    else:
        view = AssignmentView(assignment)
        for ev in events:
            if ev.predicate(view):
                out.append(ev.id)
    out.sort()
    return out


class _DSU:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        p = self.p
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra < rb:
                ra, rb = rb, ra
            self.p[ra] = rb


def dependency_components(post_events: Sequence[BadEvent]) -> List[List[BadEvent]]:
    """Connected components of the graph on events joined when their vbl intersect."""
    evs = sorted(post_events, key=lambda e: e.id)
    dsu = _DSU(len(evs))
    first: Dict[Hashable, int] = {}
    for i, ev in enumerate(evs):
        for x in ev.vbl:
            j = first.setdefault(x, i)
            if j != i:
                dsu.union(i, j)
    groups: Dict[int, List[BadEvent]] = {}
    for i, ev in enumerate(evs):
        groups.setdefault(dsu.find(i), []).append(ev)
    return sorted(groups.values(), key=lambda g: g[0].id)


def select_post_events(all_events: Iterable[BadEvent], retracted: Iterable, radius: int,
                       var_neighbors: Optional[Callable[[Any], Iterable]] = None) -> List[BadEvent]:
    """Events with a variable within `radius` hops of a retracted variable."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    ball = set(retracted)
    if radius > 0 and ball:
        if var_neighbors is None:
            raise ValueError("radius > 0 needs a variable-graph neighbor function")
        frontier = list(ball)
        for _ in range(radius):
            nxt = []
            for x in frontier:
                for y in var_neighbors(x):
                    if y not in ball:
                        ball.add(y)
                        nxt.append(y)
            frontier = nxt
    return [ev for ev in all_events if not ev.vbl.isdisjoint(ball)]


@dataclass
class SolveResult:
    ok: bool
    assignment: Dict
    resamples: int
    surviving: List[Tuple] = field(default_factory=list)


def resample_solve(component: Sequence[BadEvent], plan: ShatterPlan, sampler: Callable[[Any, int], Any],
                   initial: Optional[Mapping] = None, variables: Iterable = (),
                   strict: Optional[bool] = None) -> SolveResult:
    """Moser-Tardos: resample the vbl of the lowest-id violated event until none holds.

    `sampler(var, attempt)` must be deterministic in its arguments; attempt 0 is
    the initial draw.  Returns a failure result with the surviving ids when
    `plan.resample_budget` resamplings do not suffice.
    """
    evs = sorted(component, key=lambda e: e.id)
    vars_: Set = set(variables)
    for ev in evs:
        vars_ |= ev.vbl
    initial = initial or {}
    asg = {x: (initial[x] if x in initial else sampler(x, 0)) for x in vars_}
    attempts = {x: 0 for x in vars_}
    by_var: Dict[Any, List[int]] = {}
    for i, ev in enumerate(evs):
        for x in ev.vbl:
            by_var.setdefault(x, []).append(i)
    strict = STRICT_ACCESS if strict is None else strict

    def holds(i):
        ev = evs[i]
        view = AssignmentView(asg, ev.vbl if strict else None, None, ev.id)
        return ev.predicate(view)

    violated = {i for i in range(len(evs)) if holds(i)}
    n = 0
    while violated:
        if n >= plan.resample_budget:
            return SolveResult(False, asg, n, sorted(evs[i].id for i in violated))
        i = min(violated)
        touched = set()
        for x in sorted(evs[i].vbl, key=_sort_key):
            attempts[x] += 1
            asg[x] = sampler(x, attempts[x])
            touched.update(by_var[x])
        n += 1
        for j in touched:
            if holds(j):
                violated.add(j)
            else:
                violated.discard(j)
    return SolveResult(True, asg, n)


def _sort_key(x):
    return (type(x).__name__, x)


@dataclass
class PostPhase:
    variables: Set
    sampler: Callable[[Any, int], Any]
    events: List[BadEvent]


@dataclass
class ShatterOutcome:
    stage: str
    occurred_pre: List[Tuple] = field(default_factory=list)
    retracted: Set = field(default_factory=set)
    components: List[Tuple[List[Tuple], Set]] = field(default_factory=list)
    rounds_simulated: int = 1
    resample_counts: List[int] = field(default_factory=list)
    post_variables: int = 0

    @property
    def largest_component(self) -> int:
        return max((len(ev) for ev, _ in self.components), default=0)

    def histogram(self) -> Dict[int, int]:
        return dict(sorted(Counter(len(ev) for ev, _ in self.components).items()))

    def occurred_by_kind(self) -> Dict[str, int]:
        return dict(sorted(Counter(str(i[0]) for i in self.occurred_pre).items()))

    def summary(self) -> Dict:
        return {
            "stage": self.stage,
            "occurred": [list(map(_jsonable, i)) for i in self.occurred_pre],
            "occurred_by_kind": self.occurred_by_kind(),
            "retracted": len(self.retracted),
            "component_histogram": {str(k): v for k, v in self.histogram().items()},
            "largest_component": self.largest_component,
            "resample_counts": list(self.resample_counts),
            "rounds": self.rounds_simulated,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary())


def _jsonable(x):
    return x if isinstance(x, (int, float, str)) or x is None else str(x)


def run_shattered_stage(pre_sampler: Callable[[], Dict], events: Sequence[BadEvent], plan: ShatterPlan,
                        post_sampler: Callable[[Dict, List[BadEvent], Set], PostPhase],
                        strict: Optional[bool] = None) -> Tuple[ShatterOutcome, Dict]:
    """Pre-shattering sample, retract vbl of occurred events, solve post components.

    The merged assignment takes post values where defined and pre values
    elsewhere; retracted pre values are dropped.
    """
    pre = pre_sampler()
    out = ShatterOutcome(plan.stage)
    occ_ids = evaluate_events(events, pre, strict)
    out.occurred_pre = occ_ids
    if not occ_ids:
        return out, dict(pre)
    occ_set = set(occ_ids)
    occurred = [ev for ev in events if ev.id in occ_set]
    retracted: Set = set()
    for ev in occurred:
        retracted |= ev.vbl
    out.retracted = retracted
    base = {x: v for x, v in pre.items() if x not in retracted}
    post = post_sampler(base, occurred, retracted)
    missing = [x for x in retracted if x in pre and x not in post.variables]
    if missing:
        raise InvariantBreach(f"[{plan.stage}] post phase leaves retracted variables unsampled: {sorted(missing, key=_sort_key)[:5]}")
    for ev in post.events:
        if not ev.vbl <= post.variables:
            raise InvariantBreach(f"[{plan.stage}] post event {ev.id!r} depends on variables outside the post phase")
    init = {x: post.sampler(x, 0) for x in post.variables}
    comps = dependency_components(post.events)
    worst = 0
    for comp in comps:
        if len(comp) > plan.component_size_cap:
            raise StageAbort(plan.stage, f"post component of {len(comp)} events exceeds cap {plan.component_size_cap}",
                             {"component": [list(map(_jsonable, e.id)) for e in comp[:20]]})
        cvars = set().union(*(e.vbl for e in comp))
        res = resample_solve(comp, plan, post.sampler, init, (), strict)
        out.components.append(([e.id for e in comp], cvars))
        out.resample_counts.append(res.resamples)
        if not res.ok:
            raise StageAbort(plan.stage, f"resampling budget {plan.resample_budget} exhausted",
                             {"surviving": [list(map(_jsonable, i)) for i in res.surviving[:20]],
                              "component_size": len(comp), "outcome": out.summary()})
        for x in cvars:
            init[x] = res.assignment[x]
        worst = max(worst, (1 + res.resamples) * len(comp))
    out.post_variables = len(post.variables)
    out.rounds_simulated = 2 + worst
    merged = dict(base)
    merged.update(init)
    left = evaluate_events(post.events, merged, strict)
    if left:
        raise InvariantBreach(f"[{plan.stage}] post events hold on the merged assignment: {left[:5]}")
    return out, merged
