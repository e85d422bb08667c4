"""Coloring a region whose vertices all have much slack: RCT iterations, then multi-trial."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional

from .core import UNCOLORED, AnalysisConstants, Graph, PartialColoring, palette
from .decomposition import Decomposition, ValidationReport
from .errors import InvariantBreach, StageAbort
from .harness import AuditReport
from .lll import AssignmentView, BadEvent, PostPhase, run_shattered_stage
from .runtime import Runtime, cc_events


@dataclass(frozen=True)
class PiousContext:
    """Region H to be colored, its slack parameter U, and a label for logs."""
    H: FrozenSet[int]
    U: float
    label: str = "H"


def check_pious(ctx: PiousContext, graph: Graph, dec: Decomposition, coloring: PartialColoring,
                consts: AnalysisConstants) -> ValidationReport:
    """(a) uncolored clique vertices see at most U vertices of H outside All_i;
    (b) every uncolored u in H has |palette| >= deg_H(u) + U * Delta^0.22."""
    k = consts.effective()
    rep = ValidationReport()
    cols = coloring.colors
    H = ctx.H
    for q in dec.cliques:
        for a in sorted(q.members):
            if cols[a] is not UNCOLORED:
                continue
            cnt = sum(1 for u in graph.adj[a] if u in H and u not in q.all_i)
            if cnt > ctx.U:
                rep.add("pious.a", (a,), cnt, ctx.U)
    need = k.pious_margin(ctx.U, graph.delta)
    for u in sorted(H):
        if cols[u] is not UNCOLORED:
            continue
        dH = sum(1 for w in graph.adj[u] if w in H and cols[w] is UNCOLORED)
        L = len(palette(u, coloring, graph))
        if L < dH + need:
            rep.add("pious.b", (u,), L, dH + need)
    return rep


def _uncolored_clique_vertices(rt: Runtime):
    cols = rt.coloring.colors
    return {v for v in rt.dec.clique_vertices() if cols[v] is UNCOLORED}


def uncolored_h_degrees(rt: Runtime, ctx: PiousContext) -> Dict[int, int]:
    """Uncolored-H degree of every uncolored H vertex and uncolored clique vertex."""
    cols = rt.coloring.colors
    adj = rt.graph.adj
    live = {v for v in ctx.H if cols[v] is UNCOLORED}
    tracked = live | _uncolored_clique_vertices(rt)
    return {v: sum(1 for u in adj[v] if u in live) for v in tracked}


# -- random color trial ----------------------------------------------------------

def rct_round(rt: Runtime, region, stage: str, rnd: int = 0, palettes: Optional[Dict[int, list]] = None):
    """One trial on `region`: returns (proposals, kept).

    Each vertex activates with the configured probability and proposes a
    uniform palette color; it keeps the color unless a lower-id neighbor in the
    region proposed the same one.
    """
    g, rng = rt.graph, rt.rng
    pa = rt.consts.rct_activation
    region = frozenset(region)
    if palettes is None:
        palettes = {v: sorted(palette(v, rt.coloring, g)) for v in region}
    prop = {}
    for v in rt.order(region):
        prop[v] = _propose(rng, v, stage, rnd, pa, palettes[v])
    kept = {}
    for v in region:
        x = prop[v]
        if x is not None and not any(u < v and u in region and prop[u] == x for u in g.adj[v]):
            kept[v] = x
    return prop, kept


def _propose(rng, v, stage, rnd, pa, pal):
    if not rng.bernoulli(pa, v, stage, rnd, 0):
        return None
    if not pal:
        raise InvariantBreach(f"vertex {v} has an empty palette in {stage}")
    return pal[rng.below(len(pal), v, stage, rnd, 1)]


def _kept(view, v, low):
    memo = view.memo
    key = ("k", v)
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


def rct_iteration(rt: Runtime, ctx: PiousContext, it: int, rep: Optional[AuditReport] = None) -> Dict:
    """One shattered RCT iteration on the uncolored part of H.

    Guarantee audited afterwards: each tracked vertex's uncolored-H degree is at
    most max((1 - drop) * before, Delta^{1/10}).
    """
    g, k, rng = rt.graph, rt.consts, rt.rng
    adj, cols = g.adj, rt.coloring.colors
    D = g.delta
    floor = k.degree_floor(D)
    keep_frac = 1 - k.drop_factor
    pa = k.rct_activation
    tag = f"{ctx.label}:rct{it}"
    Hp = frozenset(v for v in ctx.H if cols[v] is UNCOLORED)
    before = uncolored_h_degrees(rt, ctx)
    tracked = set(before)
    pal = {v: sorted(palette(v, rt.coloring, g)) for v in Hp}
    low = {v: tuple(u for u in adj[v] if u < v and u in Hp) for v in Hp}
    pre_store: Dict[int, Optional[int]] = {}

    def pre_sampler():
        for v in rt.order(Hp):
            pre_store[v] = _propose(rng, v, tag + ":pre", 0, pa, pal[v])
        return dict(pre_store)

    def degree_event(v, region, lowr):
        nb = tuple(u for u in adj[v] if u in region)
        d0 = len(nb)
        vbl = set(nb)
        for u in nb:
            vbl.update(lowr[u])
        own = v in region
        if own:
            vbl.add(v)
            vbl.update(lowr[v])

        def pred(view):
            if own and _kept(view, v, lowr) is not None:
                return False
            unc = sum(1 for u in nb if _kept(view, u, lowr) is None)
            return unc > keep_frac * d0

        return BadEvent(("E", v), "E", vbl, pred)

    events = [degree_event(v, Hp, low) for v in sorted(tracked) if before[v] >= floor]
    events += cc_events(rt, Hp, lambda w: low[w], lambda view, w: _kept(view, w, low))

    post_info = {}

    def post_sampler(base, occurred, retracted):
        full = AssignmentView(pre_store)
        c_pre = {}
        for v in Hp:
            if v not in retracted:
                x = _kept(full, v, low)
                if x is not None:
                    c_pre[v] = x
        P = frozenset(u for u in g.ball(retracted, 2) if u in Hp and u not in c_pre)
        pal2 = {v: [x for x in pal[v] if x not in {c_pre.get(u) for u in adj[v]}] for v in P}
        lowP = {v: tuple(u for u in adj[v] if u < v and u in P) for v in P}
        post_info.update(c_pre=c_pre, P=P, lowP=lowP)

        def sampler(v, attempt):
            return _propose(rng, v, tag + ":post", attempt, pa, pal2[v])

        near = g.ball(retracted, 1)
        live_after = P | _uncolored_clique_vertices(rt)
        evs = []
        for v in sorted(near & live_after):
            if sum(1 for u in adj[v] if u in P) >= floor:
                evs.append(degree_event(v, P, lowP))
        evs += cc_events(rt, P, lambda w: lowP[w], lambda view, w: _kept(view, w, lowP), fresh=True)
        return PostPhase(set(P), sampler, evs)

    out, merged = run_shattered_stage(pre_sampler, events, rt.plan(tag, 2), post_sampler, rt.strict)
    rt.record_outcome(out)
    if out.occurred_pre:
        c_pre, P, lowP = post_info["c_pre"], post_info["P"], post_info["lowP"]
        mv = AssignmentView(merged)
        c_post = {v: x for v in P if (x := _kept(mv, v, lowP)) is not None}
    else:
        mv = AssignmentView(merged)
        c_pre = {v: x for v in Hp if (x := _kept(mv, v, low)) is not None}
        c_post = {}
    rt.commit(c_pre, tag + ":pre", audit=rep)
    if c_post:
        rt.commit(c_post, tag + ":post", audit=rep)

    after = uncolored_h_degrees(rt, ctx)
    worst = [v for v in sorted(tracked) if after.get(v, 0) > max(keep_frac * before[v], floor)]
    if rep is not None:
        rep.claim(f"rct.degree_drop[{it}]", not worst, len(worst), 0,
                  note=f"witness {worst[:3]}" if worst else "")
    return {"iteration": it, "colored": len(c_pre) + len(c_post), "uncolored_H": len(Hp) - len(c_pre) - len(c_post),
            "occurred": len(out.occurred_pre), "largest_component": out.largest_component}


# -- multi-trial --------------------------------------------------------------

def mct_round(rt: Runtime, region, stage: str, rnd: int = 0, palettes: Optional[Dict[int, list]] = None):
    """Each vertex samples T colors (with repetition) and takes the smallest one
    no region neighbor sampled.  Returns (samples, chosen)."""
    g = rt.graph
    region = frozenset(region)
    T = rt.consts.mct_trials(g.delta)
    if palettes is None:
        palettes = {v: sorted(palette(v, rt.coloring, g)) for v in region}
    samples = {v: _multi(rt.rng, v, stage, rnd, T, palettes[v]) for v in rt.order(region)}
    chosen = {}
    for v in region:
        bad = set()
        for u in g.adj[v]:
            if u in region:
                bad.update(samples[u])
        free = [x for x in samples[v] if x not in bad]
        if free:
            chosen[v] = min(free)
    return samples, chosen


def _multi(rng, v, stage, rnd, T, pal):
    if not pal:
        raise InvariantBreach(f"vertex {v} has an empty palette in {stage}")
    return tuple(pal[rng.below(len(pal), v, stage, rnd, j)] for j in range(T))


def _chosen(view, v, nb):
    memo = view.memo
    key = ("m", v)
    if key in memo:
        return memo[key]
    bad = set()
    for u in nb[v]:
        bad.update(view[u])
    free = [x for x in view[v] if x not in bad]
    out = min(free) if free else None
    memo[key] = out
    return out


def mct_coloring(rt: Runtime, ctx: PiousContext, rep: Optional[AuditReport] = None) -> Dict:
    """Color every remaining vertex of H; preconditions are checked, not assumed."""
    g, k, rng = rt.graph, rt.consts, rt.rng
    adj, cols = g.adj, rt.coloring.colors
    D = g.delta
    T = k.mct_trials(D)
    tag = f"{ctx.label}:mct"
    Hp = frozenset(v for v in ctx.H if cols[v] is UNCOLORED)
    if not Hp:
        if rep is not None:
            rep.claim("mct.complete", True, 0, 0, note="nothing left")
        return {"colored": 0}
    pal = {v: sorted(palette(v, rt.coloring, g)) for v in Hp}
    need = k.mct_min_slack(D)
    floor = k.degree_floor(D)
    low_slack = [v for v in sorted(Hp) if len(pal[v]) - sum(1 for u in adj[v] if u in Hp) < need]
    degs = uncolored_h_degrees(rt, ctx)
    crowded = [v for v in sorted(_uncolored_clique_vertices(rt)) if degs[v] > floor]
    ok = not low_slack and not crowded
    if rep is not None:
        rep.claim("mct.preconditions", ok, {"low_slack": len(low_slack), "crowded": len(crowded)}, need)
    if not ok:
        raise StageAbort(tag, "multi-trial preconditions fail",
                         {"low_slack": low_slack[:10], "crowded_clique_vertices": crowded[:10]})
    nb = {v: tuple(u for u in adj[v] if u in Hp) for v in Hp}
    pre_store = {}

    def pre_sampler():
        for v in rt.order(Hp):
            pre_store[v] = _multi(rng, v, tag + ":pre", 0, T, pal[v])
        return dict(pre_store)

    def miss_event(v, nbr):
        return BadEvent(("E", v), "E", {v, *nbr[v]}, lambda view: _chosen(view, v, nbr) is None)

    events = [miss_event(v, nb) for v in sorted(Hp)]
    events += cc_events(rt, Hp, lambda w: nb[w], lambda view, w: _chosen(view, w, nb))
    info = {}

    def post_sampler(base, occurred, retracted):
        full = AssignmentView(pre_store)
        c_pre = {v: _chosen(full, v, nb) for v in Hp if v not in retracted}
        if any(x is None for x in c_pre.values()):
            raise InvariantBreach(f"[{tag}] an unretracted vertex failed its trial")
        P = frozenset(retracted)
        pal2 = {v: [x for x in pal[v] if x not in {c_pre.get(u) for u in adj[v]}] for v in P}
        nbP = {v: tuple(u for u in adj[v] if u in P) for v in P}
        info.update(c_pre=c_pre, P=P, nbP=nbP)

        def sampler(v, attempt):
            return _multi(rng, v, tag + ":post", attempt, T, pal2[v])

        evs = [miss_event(v, nbP) for v in sorted(P)]
        evs += cc_events(rt, P, lambda w: nbP[w], lambda view, w: _chosen(view, w, nbP), fresh=True)
        return PostPhase(set(P), sampler, evs)

    out, merged = run_shattered_stage(pre_sampler, events, rt.plan(tag, 1), post_sampler, rt.strict)
    rt.record_outcome(out)
    mv = AssignmentView(merged)
    if out.occurred_pre:
        c_pre = info["c_pre"]
        c_post = {v: _chosen(mv, v, info["nbP"]) for v in info["P"]}
    else:
        c_pre = {v: _chosen(mv, v, nb) for v in Hp}
        c_post = {}
    rt.commit(c_pre, tag + ":pre", audit=rep)
    if c_post:
        rt.commit(c_post, tag + ":post", audit=rep)
    left = [v for v in ctx.H if cols[v] is UNCOLORED]
    if rep is not None:
        rep.claim("mct.complete", not left, len(left), 0)
    if left:
        raise StageAbort(tag, f"{len(left)} vertices of H left uncolored", {"left": sorted(left)[:10]})
    return {"colored": len(c_pre) + len(c_post), "occurred": len(out.occurred_pre),
            "largest_component": out.largest_component}


def color_with_much_slack(rt: Runtime, ctx: PiousContext) -> AuditReport:
    """RCT iterations until uncolored-H degrees are at most Delta^{1/10}, then multi-trial."""
    rep = rt.audit(f"cwms[{ctx.label}]")
    g, k = rt.graph, rt.consts
    pious = check_pious(ctx, g, rt.dec, rt.coloring, k)
    rep.claim("pious", pious.passed, len(pious.violations), 0,
              note=",".join(sorted(pious.rules())))
    if not pious.passed:
        raise StageAbort(f"cwms[{ctx.label}]", "region is not pious",
                         {"violations": [v.as_dict() for v in pious.violations[:10]]})
    floor = k.degree_floor(g.delta)
    cap = k.cwms_cap(g.delta)
    trace = []
    it = 0
    while True:
        degs = uncolored_h_degrees(rt, ctx)
        top = max(degs.values(), default=0)
        if top <= floor:
            break
        if it >= cap:
            rep.claim("cwms.iterations", False, it, cap)
            raise StageAbort(f"cwms[{ctx.label}]", f"iteration cap {cap} reached", {"degree_trace": trace})
        trace.append(top)
        rct_iteration(rt, ctx, it, rep)
        it += 1
    rep.claim("cwms.iterations", True, it, cap)
    rep.summaries["rct_iterations"] = it
    rep.summaries["degree_trace"] = trace
    rep.summaries["mct"] = mct_coloring(rt, ctx, rep)
    rt.rounds[f"cwms[{ctx.label}]"] = it
    return rep
