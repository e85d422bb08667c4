"""Sparse part S: slack generation, a random two-way split, then much-slack coloring of each half."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional

from .core import UNCOLORED, Graph, PartialColoring, palette
from .decomposition import antiedge_count
from .errors import InvariantBreach
from .harness import AuditReport
from .lll import AssignmentView, BadEvent, PostPhase, ShatterOutcome, run_shattered_stage
from .runtime import Runtime, cc_events
from .stage_slack import PiousContext, color_with_much_slack


def count_repeated_colors(v: int, region, coloring: PartialColoring, graph: Graph) -> int:
    """Number of colors used at least twice on N(v) restricted to `region`."""
    cnt = Counter(coloring.colors[u] for u in graph.adj[v] if u in region and coloring.colors[u] is not UNCOLORED)
    return sum(1 for t in cnt.values() if t >= 2)


def _repeats(colors: Iterable) -> int:
    cnt = Counter(x for x in colors if x is not None)
    return sum(1 for t in cnt.values() if t >= 2)


def color_split(delta: int, c: int):
    """First palette half [1, floor(Delta/2)] and the rest up to c."""
    half = delta // 2
    return range(1, half + 1), range(half + 1, c + 1)


# -- slack generation ----------------------------------------------------------

def _sg_kept(view, v, low):
    memo = view.memo
    key = ("sg", v)
    if key in memo:
        return memo[key]
    joined, x = view[v]
    out = None
    if joined:
        out = x
        for u in low[v]:
            j2, y = view[u]
            if j2 and y == x:
                out = None
                break
    memo[key] = out
    return out


def _post_kept(view, v, low):
    memo = view.memo
    key = ("sgp", v)
    if key in memo:
        return memo[key]
    x = view[v]
    if x is not None:
        for u in low[v]:
            if view[u] == x:
                x = None
                break
    memo[key] = x
    return x


@dataclass
class SlackGenResult:
    pre_colors: Dict[int, int]
    post_colors: Dict[int, int]
    joined: FrozenSet[int]
    outcome: ShatterOutcome
    heavy: FrozenSet[int] = field(default_factory=frozenset)


def slack_generation(rt: Runtime, S=None, rep: Optional[AuditReport] = None) -> SlackGenResult:
    """Half of S tries a color from the low palette half; lower-id conflicts drop out.

    Heavy vertices (S-degree at least Delta - 3 sqrt(Delta)) are guarded for
    repeated colors and sparsity; every vertex is guarded against too many
    participating neighbors.  Retracted areas retry with the upper half.
    """
    g, k, rng = rt.graph, rt.consts, rt.rng
    D, adj, cols = g.delta, g.adj, rt.coloring.colors
    S = frozenset(rt.dec.S if S is None else S)
    Sp = frozenset(v for v in S if cols[v] is UNCOLORED)
    C1, C2 = color_split(D, rt.c)
    c1, c2 = set(C1), set(C2)
    tag = "S:slackgen"
    nS = {v: tuple(u for u in adj[v] if u in Sp) for v in S}
    low = {v: tuple(u for u in adj[v] if u < v and u in Sp) for v in Sp}
    heavy = frozenset(v for v in S if len(nS[v]) >= k.heavy_threshold(D))
    pal1 = {v: sorted(c1 & palette(v, rt.coloring, g)) for v in Sp}
    join, post_act = k.slackgen_join, k.slackgen_post_activation
    guard_floor = D / k.guard_floor_divisor
    sqrtD = math.sqrt(D)

    def draw(v, stage, attempt):
        if not rng.bernoulli(join, v, stage, attempt, 0):
            return (False, None)
        if not pal1[v]:
            raise InvariantBreach(f"vertex {v} has no free color in the low half")
        return (True, pal1[v][rng.below(len(pal1[v]), v, stage, attempt, 1)])

    pre_store = {}

    def pre_sampler():
        for v in rt.order(Sp):
            pre_store[v] = draw(v, tag + ":pre", 0)
        return dict(pre_store)

    events = []
    for v in sorted(S):
        nb = nS[v]
        if not nb:
            continue
        bound = max(k.guard_fraction_pre * len(nb), guard_floor)
        events.append(BadEvent(("E1", v), "E1", nb,
                               lambda view, nb=nb, bound=bound: sum(1 for u in nb if view[u][0]) > bound))
        if v in heavy:
            vbl2 = set(nb)
            for u in nb:
                vbl2.update(low[u])
            need = k.repeat_coeff_pre * sqrtD
            events.append(BadEvent(("E2", v), "E2", vbl2,
                                   lambda view, nb=nb, need=need: _repeats(_sg_kept(view, u, low) for u in nb) < need))
            need3 = k.sparsity_bound(D) / 8

            def e3(view, nb=nb, need3=need3):
                return antiedge_count(g, [u for u in nb if not view[u][0]]) < need3

            events.append(BadEvent(("E3", v), "E3", nb, e3))
    events += cc_events(rt, Sp, lambda w: low[w], lambda view, w: _sg_kept(view, w, low))

    info = {}

    def post_sampler(base, occurred, retracted):
        full = AssignmentView(pre_store)
        joined = {v for v in Sp if v not in retracted and pre_store[v][0]}
        c_pre = {}
        for v in joined:
            x = _sg_kept(full, v, low)
            if x is not None:
                c_pre[v] = x
        P = frozenset(u for u in g.ball(retracted, 2) if u in Sp and u not in joined)
        pal2 = {v: sorted(c2 & palette(v, rt.coloring, g) - {c_pre.get(u) for u in adj[v]}) for v in P}
        lowP = {v: tuple(u for u in adj[v] if u < v and u in P) for v in P}
        info.update(c_pre=c_pre, P=P, lowP=lowP, joined=joined)

        def sampler(v, attempt):
            if not rng.bernoulli(post_act, v, tag + ":post", attempt, 0):
                return None
            if not pal2[v]:
                raise InvariantBreach(f"vertex {v} has no free color in the high half")
            return pal2[v][rng.below(len(pal2[v]), v, tag + ":post", attempt, 1)]

        evs = []
        rest = Sp - joined
        for v in sorted(g.ball(retracted, 3) & S):
            nbP = tuple(u for u in adj[v] if u in P)
            if not nbP:
                continue
            vbl = set(nbP)
            for u in nbP:
                vbl.update(lowP[u])
            d_rest = sum(1 for u in adj[v] if u in rest)
            bound = max(k.guard_fraction_post * d_rest, guard_floor)
            evs.append(BadEvent(("E1'", v), "E1'", vbl,
                                lambda view, nbP=nbP, bound=bound:
                                sum(1 for u in nbP if _post_kept(view, u, lowP) is not None) > bound))
        for v in sorted(g.ball(retracted, 1) & heavy):
            nbP = tuple(u for u in adj[v] if u in P)
            if not nbP:
                continue
            vbl = set(nbP)
            for u in nbP:
                vbl.update(lowP[u])
            fixed = [c_pre[u] for u in nS[v] if u in c_pre]
            need = k.repeat_coeff_post * sqrtD
            evs.append(BadEvent(("E2'", v), "E2'", vbl,
                                lambda view, nbP=nbP, fixed=fixed, need=need:
                                _repeats(fixed + [_post_kept(view, u, lowP) for u in nbP]) < need))
        evs += cc_events(rt, P, lambda w: lowP[w], lambda view, w: _post_kept(view, w, lowP), fresh=True)
        return PostPhase(set(P), sampler, evs)

    out, merged = run_shattered_stage(pre_sampler, events, rt.plan(tag, 2), post_sampler, rt.strict)
    rt.record_outcome(out)
    mv = AssignmentView(merged)
    if out.occurred_pre:
        c_pre, P, lowP, joined = info["c_pre"], info["P"], info["lowP"], info["joined"]
        c_post = {v: x for v in P if (x := _post_kept(mv, v, lowP)) is not None}
    else:
        joined = {v for v in Sp if merged[v][0]}
        c_pre = {v: x for v in Sp if (x := _sg_kept(mv, v, low)) is not None}
        c_post = {}
    rt.commit(c_pre, tag + ":pre", audit=rep)
    if c_post:
        rt.commit(c_post, tag + ":post", audit=rep)

    if rep is not None:
        rep.claim("slackgen.palette_halves", set(c_pre.values()) <= c1 and set(c_post.values()) <= c2,
                  note="pre colors in the low half, post colors in the high half")
        worst_guard = max((sum(1 for u in nS[v] if u in c_pre) - max(k.guard_fraction_pre * len(nS[v]), guard_floor)
                           for v in S), default=0)
        rep.claim("slackgen.guard_pre", worst_guard <= 0, worst_guard, 0)
        cap = k.colored_cap_fraction * D
        worst_col = max((sum(1 for u in nS[v] if cols[u] is not UNCOLORED) for v in S), default=0)
        rep.claim("slackgen.colored_cap", worst_col <= cap, worst_col, cap)
        short = [v for v in sorted(heavy)
                 if count_repeated_colors(v, S, rt.coloring, g) < k.repeat_coeff_post * sqrtD]
        rep.claim("slackgen.repeats", not short, len(short), 0,
                  note=f"{len(heavy)} heavy vertices" + ("" if heavy else "; holds vacuously"))
        rep.summaries["slackgen"] = {"joined": len(joined), "pre_colored": len(c_pre), "post_colored": len(c_post),
                                     "heavy": len(heavy), "occurred": out.occurred_by_kind()}
    return SlackGenResult(c_pre, c_post, frozenset(joined), out, heavy)


# -- degree split --------------------------------------------------------------

@dataclass
class SplitResult:
    S1: FrozenSet[int]
    S2: FrozenSet[int]
    p: float
    threshold: float
    outcome: Optional[ShatterOutcome] = None


def degree_split(rt: Runtime, Sp, p: Optional[float] = None, rep: Optional[AuditReport] = None) -> SplitResult:
    """Each vertex of Sp joins S2 with probability p; every vertex with at least
    alpha p^-1 ln(Delta) neighbors in Sp ends with between p/2 and 4p of them in S2."""
    g, k, rng = rt.graph, rt.consts, rt.rng
    D, adj = g.delta, g.adj
    Sp = frozenset(Sp)
    p = k.split_p(D) if p is None else p
    if not 0 < p <= 1:
        raise ValueError(f"split probability must lie in (0, 1], got {p}")
    thr = k.split_alpha / p * math.log(D)
    tag = "S:split"
    dS = {}
    for v in range(g.n):
        d = sum(1 for u in adj[v] if u in Sp)
        if d >= thr:
            dS[v] = d
    Q = frozenset(dS)

    pre_store = {}

    def pre_sampler():
        for v in rt.order(Sp):
            pre_store[v] = rng.bernoulli(p, v, tag + ":pre", 0)
        return dict(pre_store)

    events = []
    for v in sorted(Q):
        nb = tuple(u for u in adj[v] if u in Sp)
        vbl = set(nb) | ({v} if v in Sp else set())
        d = dS[v]
        events.append(BadEvent(("Ed", v), "Ed", vbl,
                               lambda view, nb=nb, d=d: abs(sum(1 for u in nb if view[u]) - p * d) > p / 2 * d))

    info = {}

    def post_sampler(base, occurred, retracted):
        X = {ev.id[1] for ev in occurred}
        S2_kept = frozenset(v for v, b in base.items() if b)
        P = frozenset(u for u in g.ball(X, 4) if u in Sp and u not in S2_kept)
        info.update(P=P, S2_kept=S2_kept, X=X)

        def sampler(v, attempt):
            return rng.bernoulli(p, v, tag + ":post", attempt)

        evs = []
        for v in sorted(g.ball(X, 5) & Q):
            nbP = tuple(u for u in adj[v] if u in P)
            fixed = sum(1 for u in adj[v] if u in S2_kept)
            d = dS[v]
            evs.append(BadEvent(("Ed'", v), "Ed'", nbP,
                                lambda view, nbP=nbP, fixed=fixed, d=d:
                                not (p / 2 * d <= fixed + sum(1 for u in nbP if view[u]) <= 4 * p * d)))
        return PostPhase(set(P), sampler, evs)

    out, merged = run_shattered_stage(pre_sampler, events, rt.plan(tag, 4), post_sampler, rt.strict)
    rt.record_outcome(out)
    S2 = frozenset(v for v in Sp if merged.get(v, False))
    S1 = Sp - S2
    if rep is not None:
        bad = [v for v in sorted(Q) if not (p / 2 * dS[v] <= sum(1 for u in adj[v] if u in S2) <= 4 * p * dS[v])]
        rep.claim("split.degrees", not bad, len(bad), 0, note=f"{len(Q)} qualifying vertices")
        rep.summaries["split"] = {"p": p, "threshold": thr, "S1": len(S1), "S2": len(S2), "qualifying": len(Q),
                                  "occurred": len(out.occurred_pre)}
    return SplitResult(S1, S2, p, thr, out)


def color_sparse(rt: Runtime) -> AuditReport:
    """Color all of S: slack generation, split, then S1 and S2 with much slack."""
    rep = rt.audit("sparse")
    g, k = rt.graph, rt.consts
    D = g.delta
    S = rt.dec.S
    slack_generation(rt, S, rep)
    cols = rt.coloring.colors
    Sp = frozenset(v for v in S if cols[v] is UNCOLORED)
    need = k.listsize_coeff * math.sqrt(D)
    short = [v for v in sorted(Sp)
             if len(palette(v, rt.coloring, g)) < sum(1 for u in g.adj[v] if u in Sp) + need]
    rep.claim("slackgen.listsize", not short, len(short), need)
    split = degree_split(rt, Sp, rep=rep)
    color_with_much_slack(rt, PiousContext(split.S1, k.u1(D), "S1"))
    u2 = k.u2(D)
    rep.claim("split.u2_literal", need >= k.pious_margin(u2, D), need, k.pious_margin(u2, D), kind="analytic",
              note="informational; piousness of S2 is checked numerically")
    color_with_much_slack(rt, PiousContext(split.S2, u2, "S2"))
    left = [v for v in S if cols[v] is UNCOLORED]
    rep.claim("sparse.complete", not left, len(left), 0)
    return rep
