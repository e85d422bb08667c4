"""Coloring the dense cliques: synchronized trial, candidate subsampling, matching, swaps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .core import UNCOLORED
from .decomposition import CliqueInfo
from .errors import HallViolation, InvariantBreach, StageAbort
from .harness import AuditReport
from .lll import BadEvent, PostPhase, run_shattered_stage
from .runtime import Runtime


class _Layout:
    """Static facts about the cliques being colored in one tier."""

    def __init__(self, rt: Runtime, cliques: Sequence[CliqueInfo]):
        g, cols = rt.graph, rt.coloring.colors
        self.rt = rt
        self.ids = tuple(sorted(q.id for q in cliques))
        self.info = {q.id: q for q in cliques}
        self.mem = {q.id: tuple(sorted(q.members)) for q in cliques}
        self.pos = {v: k for i in self.ids for k, v in enumerate(self.mem[i])}
        self.clique_of = {v: i for i in self.ids for v in self.mem[i]}
        self.ext: Dict[int, Tuple[int, ...]] = {}
        self.extA: Dict[int, Tuple[int, ...]] = {}  # external neighbors inside the tier's cliques
        self.static: Dict[int, Set[int]] = {}  # colors of already-colored external neighbors
        adjC = {i: set() for i in self.ids}
        for i in self.ids:
            q = self.info[i]
            for v in self.mem[i]:
                ext = tuple(u for u in g.adj[v] if u not in q.members and u not in q.all_i)
                self.ext[v] = ext
                self.extA[v] = tuple(u for u in ext if u in self.clique_of)
                self.static[v] = {cols[u] for u in ext if u not in self.clique_of and cols[u] is not UNCOLORED}
                for u in self.extA[v]:
                    adjC[i].add(self.clique_of[u])
        self.adjC = {i: frozenset(s) for i, s in adjC.items()}
        self.unused = {}
        for i in self.ids:
            used = {cols[w] for w in self.info[i].all_i if cols[w] is not UNCOLORED}
            free = [x for x in range(1, rt.c + 1) if x not in used]
            if len(free) != len(self.mem[i]):
                raise InvariantBreach(f"clique {i}: {len(free)} colors unused by All_i for {len(self.mem[i])} members")
            self.unused[i] = free
        # open cliques outside this tier that touch it: j -> members of this tier outside A_j
        self.cc_watch: Dict[int, Tuple[int, ...]] = {}
        for j in rt.open_cliques():
            if j in self.info:
                continue
            ws = tuple(sorted(w for w in rt.ledger.outside[j] if w in self.clique_of))
            if ws:
                self.cc_watch[j] = ws

    def ext_colors(self, v, gamma) -> Set[int]:
        out = set(self.static[v])
        for u in self.extA[v]:
            out.add(gamma[u])
        return out


def _into(i, j, post) -> bool:
    """Is a monochromatic edge between cliques j (tail) and i (head) oriented into i?"""
    if (i in post) != (j in post):
        return i in post
    return j < i


@dataclass
class DefectiveCliqueColoring:
    gamma: Dict[int, int]
    post: FrozenSet[int]
    unhappy: Dict[int, FrozenSet[int]]
    arcs: List[Tuple[int, int]] = field(default_factory=list)

    def all_unhappy(self) -> Set[int]:
        return set().union(*self.unhappy.values()) if self.unhappy else set()


def _orient(lay: _Layout, gamma: Mapping[int, int], post: FrozenSet[int]) -> DefectiveCliqueColoring:
    unhappy, arcs = {}, []
    cols = lay.rt.coloring.colors
    for i in lay.ids:
        bad = set()
        for v in lay.mem[i]:
            x = gamma[v]
            for u in lay.ext[v]:
                j = lay.clique_of.get(u)
                if j is None:
                    if cols[u] == x:
                        arcs.append((u, v))
                        bad.add(v)
                elif gamma[u] == x and _into(i, j, post):
                    arcs.append((u, v))
                    bad.add(v)
        unhappy[i] = frozenset(bad)
    return DefectiveCliqueColoring(dict(gamma), frozenset(post), unhappy, sorted(arcs))


def _perm(lay: _Layout, i, stage, attempt):
    return tuple(lay.rt.rng.permutation(lay.unused[i], lay.mem[i][0], stage, attempt))


def sct(rt: Runtime, cliques: Sequence[CliqueInfo], stage: str = "sct", rnd: int = 0) -> DefectiveCliqueColoring:
    """Each clique permutes the colors its All_i leaves unused over its members."""
    lay = _Layout(rt, cliques)
    gamma = {}
    for i in lay.ids:
        for v, x in zip(lay.mem[i], _perm(lay, i, stage, rnd)):
            gamma[v] = x
    return _orient(lay, gamma, frozenset())


def sct_shattered(rt: Runtime, cliques: Sequence[CliqueInfo], tier: str = "H",
                  rep: Optional[AuditReport] = None, lay: Optional[_Layout] = None) -> DefectiveCliqueColoring:
    """SCT under shattering.  Bad events: too many unhappy members, or a CC
    breach for an open clique outside the tier.  Retracted cliques redraw with
    every edge from the rest oriented into them."""
    lay = lay or _Layout(rt, cliques)
    k = rt.consts
    D = rt.delta
    bound = (k.ext_degree_coeff_H + k.sct_audit_extra) * D ** k.ext_degree_exp_H
    budget = rt.ledger.budget
    tag = f"A_{tier}:sct"
    cols = rt.coloring.colors

    def gam(perms, v):
        return perms[lay.clique_of[v]][lay.pos[v]]

    def unhappy_count(i, perms, fixed, post):
        cnt = 0
        for v in lay.mem[i]:
            x = perms[i][lay.pos[v]]
            if x in lay.static[v]:
                cnt += 1
                continue
            for u in lay.extA[v]:
                j = lay.clique_of[u]
                if _into(i, j, post):
                    src = fixed if (j not in post and post) else perms
                    if src[j][lay.pos[u]] == x:
                        cnt += 1
                        break
        return cnt

    def cc_pred(j, ws, budget_):
        def pred(view):
            cnt = rt.ledger.clique_counts(j, ((w, gam(view, w)) for w in ws))
            return max(cnt.values(), default=0) >= budget_
        return pred

    events = []
    for i in lay.ids:
        vbl = {i} | {j for j in lay.adjC[i] if j < i}
        events.append(BadEvent(("Ea", i), "Ea", vbl,
                               lambda view, i=i: unhappy_count(i, view, None, frozenset()) > bound))
    for j, ws in sorted(lay.cc_watch.items()):
        events.append(BadEvent(("CC", j), "CC", {lay.clique_of[w] for w in ws}, cc_pred(j, ws, budget)))

    pre_store = {}

    def pre_sampler():
        for i in rt.order(lay.ids):
            pre_store[i] = _perm(lay, i, tag + ":pre", 0)
        return dict(pre_store)

    info = {"post": frozenset()}

    def post_sampler(base, occurred, retracted):
        post = frozenset(retracted)
        info["post"] = post

        def sampler(i, attempt):
            return _perm(lay, i, tag + ":post", attempt)

        evs = []
        for i in sorted(post):
            vbl = {i} | {j for j in lay.adjC[i] if j in post and j < i}

            def pred(view, i=i):
                merged = _Overlay(view, base, post)
                return unhappy_count(i, merged, base, post) > bound

            evs.append(BadEvent(("Ea", i), "Ea", vbl, pred))
        for j, ws in sorted(lay.cc_watch.items()):
            mine = tuple(w for w in ws if lay.clique_of[w] in post)
            if mine:
                evs.append(BadEvent(("CC", j), "CC", {lay.clique_of[w] for w in mine},
                                    cc_pred(j, mine, budget), fresh_budget=True))
        return PostPhase(set(post), sampler, evs)

    out, merged = run_shattered_stage(pre_sampler, events, rt.plan(tag, 0), post_sampler, rt.strict)
    rt.record_outcome(out)
    gamma = {v: merged[i][lay.pos[v]] for i in lay.ids for v in lay.mem[i]}
    dcc = _orient(lay, gamma, info["post"])
    if rep is not None:
        worst = max((len(s) for s in dcc.unhappy.values()), default=0)
        rep.claim("sct.unhappy", worst <= bound, worst, bound)
        viol = 0
        for j, ws in lay.cc_watch.items():
            pre_ws = [w for w in ws if lay.clique_of[w] not in dcc.post]
            post_ws = [w for w in ws if lay.clique_of[w] in dcc.post]
            for part in (pre_ws, post_ws):
                cnt = rt.ledger.clique_counts(j, ((w, gamma[w]) for w in part))
                viol += sum(1 for t in cnt.values() if t >= budget)
        rep.claim("sct.cc", viol == 0, viol, 0)
        rep.summaries["sct"] = {"post_cliques": sorted(dcc.post), "unhappy": {str(i): len(s) for i, s in dcc.unhappy.items()}}
    return dcc


class _Overlay(Mapping):
    """Post values for retracted keys, fixed pre values for the rest."""

    def __init__(self, view, base, post):
        self.view, self.base, self.post = view, base, post

    def __getitem__(self, key):
        return self.view[key] if key in self.post else self.base[key]

    def __iter__(self):
        return iter(self.base)

    def __len__(self):
        return len(self.base)


# -- swappability and safety ----------------------------------------------------------

def swappable(v: int, lay: _Layout, dcc: DefectiveCliqueColoring) -> FrozenSet[int]:
    """Happy members u of v's clique with gamma(u) unseen at v's external
    neighbors and gamma(v) unseen at u's."""
    i = lay.clique_of[v]
    g = dcc.gamma
    xv = lay.ext_colors(v, g)
    out = []
    for u in lay.mem[i]:
        if u == v or u in dcc.unhappy[i]:
            continue
        if g[u] in xv or g[v] in lay.ext_colors(u, g):
            continue
        out.append(u)
    return frozenset(out)


class _SafetyIndex:
    """Colors reachable through the candidate system at each vertex of the tier."""

    def __init__(self, lay: _Layout, gamma: Mapping[int, int], sets: Mapping[int, Iterable[int]]):
        self.lay, self.gamma = lay, gamma
        self.reach: Dict[int, Set[int]] = {}   # colors an unhappy w might take
        self.cand: Dict[int, Set[int]] = {}    # colors a candidate x might take
        for w, s in sets.items():
            self.reach[w] = {gamma[x] for x in s}
            gw = gamma[w]
            for x in s:
                self.cand.setdefault(x, set()).add(gw)

    def unsafe(self, u: int, v: int) -> bool:
        gu, gv = self.gamma[u], self.gamma[v]
        for w in self.lay.extA[v]:
            if gu in self.reach.get(w, ()) or gu in self.cand.get(w, ()):
                return True
        for w in self.lay.extA[u]:
            if gv in self.cand.get(w, ()):
                return True
        return False


def unsafe(u: int, v: int, sets: Mapping[int, Iterable[int]], lay: _Layout, dcc: DefectiveCliqueColoring) -> bool:
    """u (a candidate for v) is unsafe if some other swap in the system could give a
    neighbor of v the color gamma(u), or a neighbor of u the color gamma(v)."""
    others = {w: s for w, s in sets.items() if lay.clique_of[w] != lay.clique_of[v]}
    return _SafetyIndex(lay, dcc.gamma, others).unsafe(u, v)


def unsafe_bruteforce(u, v, sets, lay, dcc) -> bool:
    """Pair-by-pair restatement of the three rules, used by the audit as a second route."""
    g = dcc.gamma
    i = lay.clique_of[v]
    for w in lay.ext[v]:
        if w in sets and lay.clique_of.get(w) != i and any(g[x] == g[u] for x in sets[w]):
            return True
        for y, s in sets.items():
            if lay.clique_of[y] != i and w in s and g[y] == g[u]:
                return True
    for w in lay.ext[u]:
        for y, s in sets.items():
            if lay.clique_of[y] != i and w in s and g[y] == g[v]:
                return True
    return False


@dataclass
class CandidateSystem:
    sets: Dict[int, FrozenSet[int]]
    post: FrozenSet[int] = frozenset()

    def loads(self) -> Dict[int, int]:
        out: Dict[int, int] = {}
        for s in self.sets.values():
            for u in s:
                out[u] = out.get(u, 0) + 1
        return out


def subsample_candidates(rt: Runtime, lay: _Layout, dcc: DefectiveCliqueColoring, tier: str = "H",
                         rep: Optional[AuditReport] = None) -> CandidateSystem:
    """Each unhappy v keeps every swappable member independently; sets with too
    few safe members, overloaded members, or CC pressure are redrawn after
    retraction, and the survivors are trimmed to their safe members."""
    k, rng = rt.consts, rt.rng
    D = rt.delta
    p = k.subsample_p(D)
    pre_floor, floor, ceiling = k.candidate_pre_floor(D), k.candidate_floor(D), k.candidate_ceiling(D)
    pollution = D / k.unsafe_pollution_divisor
    nb_cap = D ** k.candidate_neighbor_exponent
    budget2 = 2 * rt.ledger.budget
    tag = f"A_{tier}:subsample"
    gamma = dcc.gamma
    unh = {i: tuple(sorted(dcc.unhappy[i])) for i in lay.ids}
    swap = {v: tuple(sorted(swappable(v, lay, dcc))) for i in lay.ids for v in unh[i]}
    all_unh = sorted(swap)

    def draw(v, stage, attempt):
        return frozenset(u for u in swap[v] if rng.bernoulli(p, v, stage, attempt, u))

    def near_vars(i):
        out = set(unh[i])
        for j in lay.adjC[i]:
            out.update(unh[j])
        return out

    def index_for(i, get):
        sets = {}
        for j in lay.adjC[i]:
            for w in unh[j]:
                sets[w] = get(w)
        return _SafetyIndex(lay, gamma, sets)

    def safe_count(i, get):
        idx = index_for(i, get)
        return {v: sum(1 for u in get(v) if not idx.unsafe(u, v)) for v in unh[i]}, idx

    def b1(i, get, fl):
        counts, _ = safe_count(i, get)
        return any(t < fl for t in counts.values())

    def b4(i, get):
        idx = index_for(i, get)
        return any(sum(1 for u in swap[v] if idx.unsafe(u, v)) >= pollution for v in unh[i])

    def b1p(i, get):
        for v in unh[i]:
            hits: Dict[int, int] = {}
            for u in get(v):
                for w in lay.extA[u]:
                    hits[w] = hits.get(w, 0) + 1
            if any(t >= nb_cap for t in hits.values()):
                return True
        return False

    def b2(i, get):
        load: Dict[int, int] = {}
        for v in unh[i]:
            for u in get(v):
                load[u] = load.get(u, 0) + 1
        return any(t > ceiling for t in load.values())

    def strong_cc(j, ws, get, budget_):
        # colors each watched vertex could end with through a swap
        seen: Dict[int, Set[int]] = {}
        att = rt.ledger.attach
        for w in ws:
            i = lay.clique_of[w]
            xs = set()
            if w in swap:
                xs.update(gamma[x] for x in get(w))
            for y in unh[i]:
                if w in get(y):
                    xs.add(gamma[y])
            for x in xs:
                for jj, mem in att.get(w, ()):
                    if jj == j:
                        seen.setdefault(x, set()).update(mem)
        return max((len(s) for s in seen.values()), default=0) >= budget_

    events = []
    for i in lay.ids:
        if not unh[i]:
            continue
        nv = near_vars(i)
        events.append(BadEvent(("B1", i), "B1", nv, lambda view, i=i: b1(i, view.__getitem__, pre_floor)))
        events.append(BadEvent(("B1'", i), "B1'", unh[i], lambda view, i=i: b1p(i, view.__getitem__)))
        events.append(BadEvent(("B2", i), "B2", unh[i], lambda view, i=i: b2(i, view.__getitem__)))
        events.append(BadEvent(("B4", i), "B4", nv, lambda view, i=i: b4(i, view.__getitem__)))
    for j, ws in sorted(lay.cc_watch.items()):
        vbl = set()
        for w in ws:
            vbl.update(unh[lay.clique_of[w]])
        if vbl:
            events.append(BadEvent(("B3", j), "B3", vbl,
                                   lambda view, j=j, ws=ws: strong_cc(j, ws, view.__getitem__, budget2)))

    pre_store = {}

    def pre_sampler():
        for v in rt.order(all_unh):
            pre_store[v] = draw(v, tag + ":pre", 0)
        return dict(pre_store)

    info = {"post": frozenset(), "tpre": {}}

    def post_sampler(base, occurred, retracted):
        bad = {lay.clique_of[v] for v in retracted}
        for ev in occurred:
            if ev.kind in ("B1", "B1'", "B2", "B4"):
                bad.add(ev.id[1])
        post = set(bad)
        for i in bad:
            post |= lay.adjC[i]
        post = frozenset(post)
        full_idx = _SafetyIndex(lay, gamma, pre_store)
        tpre = {v: frozenset(u for u in pre_store[v] if not full_idx.unsafe(u, v))
                for v in all_unh if lay.clique_of[v] not in post}
        info.update(post=post, tpre=tpre)
        pvars = {v for i in post for v in unh[i]}

        def sampler(v, attempt):
            return draw(v, tag + ":post", attempt)

        def getter(view):
            return lambda w: view[w] if w in pvars else tpre[w]

        watch = set(post)
        for i in post:
            watch |= lay.adjC[i]
        evs = []
        for i in sorted(watch):
            if not unh[i]:
                continue
            vbl = near_vars(i) & pvars
            evs.append(BadEvent(("P1", i), "P1", vbl, lambda view, i=i: b1(i, getter(view), floor)))
            if i in post:
                evs.append(BadEvent(("P2", i), "P2", set(unh[i]), lambda view, i=i: b2(i, getter(view))))
        for j, ws in sorted(lay.cc_watch.items()):
            vbl = set()
            for w in ws:
                vbl.update(v for v in unh[lay.clique_of[w]] if v in pvars)
            if vbl:
                evs.append(BadEvent(("P3", j), "P3", vbl,
                                    lambda view, j=j, ws=ws: strong_cc(j, ws, getter(view), budget2),
                                    fresh_budget=True))
        return PostPhase(pvars, sampler, evs)

    out, merged = run_shattered_stage(pre_sampler, events, rt.plan(tag, 1), post_sampler, rt.strict)
    rt.record_outcome(out)
    post, tpre = info["post"], info["tpre"]
    current = {v: (tpre[v] if v in tpre else merged[v]) for v in all_unh}
    idx = _SafetyIndex(lay, gamma, current)
    final = {v: frozenset(u for u in current[v] if not idx.unsafe(u, v)) for v in all_unh}
    system = CandidateSystem(final, post)
    if rep is not None:
        small = [v for v in all_unh if len(final[v]) < floor]
        rep.claim("candidates.floor", not small, min((len(s) for s in final.values()), default=None), floor)
        top = max(system.loads().values(), default=0)
        rep.claim("candidates.load", top <= ceiling, top, ceiling)
        rep.claim("candidates.hall_margin", floor >= 2 * ceiling, floor, 2 * ceiling, kind="analytic")
        unsafe_pairs = sum(1 for v in all_unh for u in final[v]
                           if unsafe_bruteforce(u, v, final, lay, dcc))
        rep.claim("candidates.safe", unsafe_pairs == 0, unsafe_pairs, 0)
        strong = [j for j, ws in lay.cc_watch.items() if strong_cc(j, ws, final.__getitem__, budget2)]
        rep.claim("candidates.strong_cc", not strong, len(strong), 0)
        rep.summaries["subsample"] = {"p": p, "unhappy": len(all_unh), "post_cliques": sorted(post),
                                      "occurred": out.occurred_by_kind()}
    return system


# -- matching and swaps ------------------------------------------------------------

def hall_matching(unhappy: Iterable[int], sets: Mapping[int, Iterable[int]]) -> Dict[int, int]:
    """Match every unhappy vertex to a distinct candidate (augmenting paths).

    Raises HallViolation carrying a set X of unhappy vertices whose joint
    candidate set is smaller than X.
    """
    left = sorted(unhappy)
    adj = {v: sorted(sets.get(v, ())) for v in left}
    match_r: Dict[int, int] = {}

    def augment(v, seen_l, seen_r):
        seen_l.add(v)
        for u in adj[v]:
            if u in seen_r:
                continue
            seen_r.add(u)
            if u not in match_r or augment(match_r[u], seen_l, seen_r):
                match_r[u] = v
                return True
        return False

    for v in left:
        seen_l, seen_r = set(), set()
        if not augment(v, seen_l, seen_r):
            raise HallViolation(f"{len(seen_l)} unhappy vertices share only {len(seen_r)} candidates",
                                sorted(seen_l), sorted(seen_r))
    return {v: u for u, v in match_r.items()}


def execute_swaps(rt: Runtime, dcc: DefectiveCliqueColoring, matching: Mapping[int, int], label: str,
                  rep: Optional[AuditReport] = None) -> Dict[int, int]:
    """Exchange colors along the matching, check properness, commit as one strong step."""
    final = dict(dcc.gamma)
    for v, u in matching.items():
        final[v], final[u] = dcc.gamma[u], dcc.gamma[v]
    g, cols = rt.graph, rt.coloring.colors
    bad = []
    for v, x in final.items():
        for w in g.adj[v]:
            y = final.get(w, cols[w])
            if y == x:
                bad.append((min(v, w), max(v, w)))
    bad = sorted(set(bad))
    if rep is not None:
        rep.claim("swaps.proper", not bad, len(bad), 0)
    if bad:
        raise StageAbort(label, "swaps left monochromatic edges", {"edges": bad[:10]})
    rt.ledger.close({rt.dec.clique_of[v] for v in final})
    rt.commit(final, label, strong=True, audit=rep)
    return final


def color_cliques(rt: Runtime, tier: str) -> AuditReport:
    rep = rt.audit(f"cliques[{tier}]")
    cliques = rt.dec.A_H if tier == "H" else rt.dec.A_L
    if not cliques:
        rep.claim("cliques.empty", True, 0, 0, note="no cliques in this tier")
        return rep
    lay = _Layout(rt, cliques)
    dcc = sct_shattered(rt, cliques, tier, rep, lay)
    D = rt.delta
    k = rt.consts
    # swappable lower bound, term by term
    viol, small = 0, 0
    for i in lay.ids:
        members = lay.mem[i]
        for v in sorted(dcc.unhappy[i]):
            measured = len(swappable(v, lay, dcc))
            gv = dcc.gamma[v]
            cc_term = sum(1 for u in members if u != v and gv in lay.ext_colors(u, dcc.gamma))
            bound = len(members) - len(dcc.unhappy[i]) - len(lay.ext[v]) - cc_term
            viol += measured < bound
            small += measured < D / k.swappable_divisor
    rep.claim("swappable.lower_bound", viol == 0, viol, 0)
    rep.claim("swappable.size", small == 0, small, D / k.swappable_divisor)
    system = subsample_candidates(rt, lay, dcc, tier, rep)
    matching = {}
    for i in lay.ids:
        try:
            matching.update(hall_matching(dcc.unhappy[i], system.sets))
        except HallViolation as exc:
            rep.claim("hall.saturated", False, len(exc.hall_set), len(exc.neighborhood))
            raise StageAbort(f"cliques[{tier}]", str(exc), {"clique": i, "hall_set": list(exc.hall_set)}) from None
    rep.claim("hall.saturated", True, len(matching), len(dcc.all_unhappy()))
    rt.trace[f"A_{tier}"] = {"layout": lay, "dcc": dcc, "system": system, "matching": matching,
                             "swap_step": len(rt.ledger.steps)}
    execute_swaps(rt, dcc, matching, f"A_{tier}:swap", rep)
    rep.summaries["matching"] = len(matching)
    return rep
