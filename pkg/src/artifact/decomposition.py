"""The five-way structural partition S / B_H / A_H / B_L / A_L: types, files, validator, generator."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .core import AnalysisConstants, Graph, min_colors
from .errors import CapacityError, DomainError, InfeasibleParams, StructuralError

TIERS = ("H", "L")


@dataclass(frozen=True)
class CliqueInfo:
    id: int
    members: frozenset
    all_i: frozenset
    big_plus: frozenset
    tier: str

    def __post_init__(self):
        if self.tier not in TIERS:
            raise StructuralError(f"clique {self.id}: tier must be H or L, got {self.tier!r}")


@dataclass
class Decomposition:
    S: frozenset
    B_H: frozenset
    B_L: frozenset
    cliques: List[CliqueInfo]
    membership: Dict[int, str] = field(default_factory=dict)
    clique_of: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.S, self.B_H, self.B_L = frozenset(self.S), frozenset(self.B_H), frozenset(self.B_L)
        self.cliques = sorted(self.cliques, key=lambda q: q.id)
        self._by_id = {q.id: q for q in self.cliques}
        if len(self._by_id) != len(self.cliques):
            raise StructuralError("duplicate clique ids")
        self.membership, self.clique_of = {}, {}
        for tag, part in (("S", self.S), ("BH", self.B_H), ("BL", self.B_L)):
            for v in part:
                self._tag(v, tag)
        for q in self.cliques:
            for v in q.members:
                self._tag(v, "A" + q.tier)
                self.clique_of[v] = q.id

    def _tag(self, v, tag):
        if v in self.membership:
            raise StructuralError(f"vertex {v} is in both {self.membership[v]} and {tag}")
        self.membership[v] = tag

    def clique(self, i) -> CliqueInfo:
        return self._by_id[i]

    @property
    def A_H(self) -> List[CliqueInfo]:
        return [q for q in self.cliques if q.tier == "H"]

    @property
    def A_L(self) -> List[CliqueInfo]:
        return [q for q in self.cliques if q.tier == "L"]

    def clique_vertices(self, tier: Optional[str] = None) -> Set[int]:
        return {v for q in self.cliques if tier in (None, q.tier) for v in q.members}

    def check_structure(self, n: int) -> None:
        """Parts must partition 0..n-1 and every All_i must sit inside B_H or B_L."""
        if set(self.membership) != set(range(n)):
            missing = sorted(set(range(n)) - set(self.membership))[:5]
            extra = sorted(set(self.membership) - set(range(n)))[:5]
            raise StructuralError(f"parts do not partition V(F): missing {missing}, foreign {extra}")
        for q in self.cliques:
            if not q.members:
                raise StructuralError(f"clique {q.id} is empty")
            stray = [v for v in q.all_i if self.membership.get(v) not in ("BH", "BL")]
            if stray:
                raise StructuralError(f"All_{q.id} contains non-B vertices {sorted(stray)[:5]}")


def external_neighbors(v: int, clique: CliqueInfo, graph: Graph) -> Set[int]:
    if v not in clique.members:
        raise DomainError(f"vertex {v} is not a member of clique {clique.id}")
    return {u for u in graph.adj[v] if u not in clique.members and u not in clique.all_i}


def compute_big_plus(graph: Graph, clique: CliqueInfo, consts: AnalysisConstants) -> Set[int]:
    thr = consts.big_plus_threshold(graph.delta)
    counts: Dict[int, int] = {}
    for a in clique.members:
        for u in graph.adj[a]:
            if u not in clique.members and u not in clique.all_i:
                counts[u] = counts.get(u, 0) + 1
    return {u for u, t in counts.items() if t >= thr}


def antiedge_count(graph: Graph, vertices: Iterable[int]) -> int:
    vs = list(vertices)
    s = set(vs)
    inside = sum(1 for u in vs for w in graph.adj[u] if w in s) // 2
    return len(vs) * (len(vs) - 1) // 2 - inside


# -- validation ---------------------------------------------------------------

@dataclass
class Violation:
    rule: str
    witness: Tuple[int, ...]
    measured: float
    bound: float
    note: str = ""

    def as_dict(self):
        return {"rule": self.rule, "witness": list(self.witness), "measured": self.measured,
                "bound": self.bound, "note": self.note}


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rules(self) -> Set[str]:
        return {v.rule for v in self.violations}

    def add(self, rule, witness, measured, bound, note=""):
        self.violations.append(Violation(rule, tuple(witness), measured, bound, note))

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed, "violations": [v.as_dict() for v in self.violations]}, indent=2)


def validate(graph: Graph, d: Decomposition, c: int, k: AnalysisConstants) -> ValidationReport:
    k = k.effective()
    d.check_structure(graph.n)
    D = graph.delta
    rep = ValidationReport()
    adj = graph.adj
    S = d.S
    all_clique = d.clique_vertices()

    heavy = k.heavy_threshold(D)
    need_anti = k.sparsity_bound(D)
    for v in sorted(S):
        ns = [u for u in adj[v] if u in S]
        if len(ns) < heavy:
            continue
        if len(ns) > D:
            rep.add("1", [v], len(ns), D, "deg_S exceeds delta")
            continue
        anti = antiedge_count(graph, ns)
        if anti < need_anti:
            rep.add("1", [v], anti, need_anti, "dense S-vertex lacks anti-edges")

    bh_bound = c - D ** k.bh_exponent
    for v in sorted(d.B_H):
        outside = sum(1 for u in adj[v] if u not in all_clique)
        if not outside < bh_bound:
            rep.add("2", [v], outside, bh_bound)

    bl_bound = c - math.sqrt(D) + k.bl_margin
    for v in sorted(d.B_L):
        best = None
        for q in d.cliques:
            out = sum(1 for u in adj[v] if u not in q.members)
            if best is None or out < best[0]:
                best = (out, q.id)
        if best is None or best[0] > bl_bound:
            rep.add("4", [v], best[0] if best else graph.degree(v), bl_bound,
                    "no clique absorbs enough of its degree")

    lo_size = c - k.ext_bound_H(D)
    for q in d.cliques:
        mem = sorted(q.members)
        for i, a in enumerate(mem):
            na = graph.nbrs[a]
            for b in mem[i + 1:]:
                if b not in na:
                    rep.add("a", [a, b], 0, 1, f"clique {q.id} misses edge")
        if not lo_size <= len(mem) <= c:
            rep.add("a", [q.id], len(mem), lo_size if len(mem) < lo_size else c, f"clique {q.id} size")
        if len(q.all_i) != c - len(mem):
            rep.add("b", [q.id], len(q.all_i), c - len(mem), f"|All_{q.id}| != c - |A_{q.id}|")
        for w in sorted(q.all_i):
            miss = [a for a in mem if a not in graph.nbrs[w]]
            if miss:
                rep.add("b", [w, miss[0]], len(mem) - len(miss), len(mem), f"All_{q.id} vertex not complete to A_{q.id}")
        bound = k.ext_bound_H(D) if q.tier == "H" else k.ext_bound_L(D)
        rule = "3" if q.tier == "H" else "5"
        for a in mem:
            ext = sum(1 for u in adj[a] if u not in q.members and u not in q.all_i)
            if ext > bound:
                rep.add(rule, [a], ext, bound, f"external degree in clique {q.id}")
        bp = compute_big_plus(graph, q, k)
        if set(q.big_plus) != bp:
            rep.add("c", sorted(set(q.big_plus) ^ bp)[:4], len(q.big_plus), len(bp), f"declared Big+_{q.id} differs from computed")
        bpl = sorted(bp)
        for i, a in enumerate(bpl):
            for b in bpl[i + 1:]:
                if b not in graph.nbrs[a]:
                    rep.add("c", [a, b], 0, 1, f"Big+_{q.id} not a clique")
        cap = k.big_plus_cap(D)
        for w in bpl:
            t = sum(1 for a in graph.adj[w] if a in q.members)
            if t > cap:
                rep.add("c", [w], t, cap, f"Big+_{q.id} vertex too attached")
    return rep


# -- files ----------------------------------------------------------------------

def write_decomposition(path, d: Decomposition) -> None:
    def fmt(vs):
        return " ".join(str(v) for v in sorted(vs))

    lines = [f"S {fmt(d.S)}".rstrip(), f"BH {fmt(d.B_H)}".rstrip(), f"BL {fmt(d.B_L)}".rstrip()]
    for q in d.cliques:
        lines.append(f"A{q.tier} {q.id}: {fmt(q.members)} | {fmt(q.all_i)} | {fmt(q.big_plus)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_decomposition(path) -> Decomposition:
    parts = {"S": None, "BH": None, "BL": None}
    cliques = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            head, _, rest = line.partition(" ")
            try:
                if head in parts:
                    parts[head] = [int(x) for x in rest.split()]
                elif head in ("AH", "AL"):
                    ident, _, body = rest.partition(":")
                    fields = body.split("|")
                    if len(fields) != 3:
                        raise StructuralError(f"clique line needs 3 fields: {line!r}")
                    mem, al, bp = ([int(x) for x in f.split()] for f in fields)
                    cliques.append(CliqueInfo(int(ident), frozenset(mem), frozenset(al), frozenset(bp), head[1]))
                else:
                    raise StructuralError(f"unknown line tag {head!r}")
            except ValueError as exc:
                raise StructuralError(f"bad decomposition line {line!r}: {exc}") from None
    if any(p is None for p in parts.values()):
        raise StructuralError("decomposition needs S, BH and BL lines")
    return Decomposition(frozenset(parts["S"]), frozenset(parts["BH"]), frozenset(parts["BL"]), cliques)


# -- generation -----------------------------------------------------------------

@dataclass
class GenParams:
    n: int
    delta: int
    c: Optional[int] = None
    cliques_H: int = 0
    cliques_L: int = 0
    seed: int = 0
    s_degree_max: Optional[int] = None   # default: largest value keeping S light and Pi-ous
    s_degree_min: Optional[int] = None   # default: half of the max
    ext_H: Optional[int] = None          # max external edges per A_H member
    ext_L: Optional[int] = None          # max external edges per A_L member
    cross_edges: int = 0                 # edges between members of distinct A_H cliques
    fill_BH: int = 0                     # B_H vertices outside every All_i
    fill_BL: int = 0
    all_max: Optional[int] = None        # cap on |All_i|
    heavy_fraction: float = 0.0          # S vertices given degree >= delta - 3 sqrt(delta)
    max_tries: int = 20


def _sparse_cap(delta, c, k: AnalysisConstants) -> int:
    heavy = k.heavy_threshold(delta)
    light = math.ceil(heavy) - 1
    pious = c - math.ceil(k.pious_margin(k.u1(delta), delta))
    return max(0, min(light, pious))


def generate(params: GenParams, k: AnalysisConstants) -> Tuple[Graph, Decomposition]:
    """Planted-structure instance.

    Cliques A_i have sizes in [c - ext_bound_H, c]; All_i is a clique of
    c - |A_i| dedicated B vertices complete to A_i (B_H for tier H, B_L for
    tier L).  S is a configuration-model random graph with degrees capped so
    every S vertex stays light and F[S] is Pi-ous after any partial coloring.
    Clique members receive bounded external edges, at most one per outside
    vertex and clique, so Big+ stays empty unless the threshold is overridden.
    Draws whose computed Big+ is not a clique are rejected and redrawn.
    """
    keff = k.effective()
    p = params
    c = p.c if p.c is not None else min_colors(p.delta)
    if c < min_colors(p.delta):
        raise InfeasibleParams(f"c={c} is below delta - k_delta + 1 = {min_colors(p.delta)}")
    last = None
    for attempt in range(p.max_tries):
        rng = np.random.default_rng([p.seed & 0xFFFFFFFF, attempt])
        g, d = _generate_once(p, keff, c, rng)
        bad = [q.id for q in d.cliques if not _is_clique(g, q.big_plus)]
        if not bad:
            return g, d
        last = bad
    raise InfeasibleParams(f"computed Big+ never formed a clique (cliques {last}) after {p.max_tries} draws")


def _is_clique(g: Graph, vs) -> bool:
    vs = sorted(vs)
    return all(b in g.nbrs[a] for i, a in enumerate(vs) for b in vs[i + 1:])


def _generate_once(p: GenParams, k: AnalysisConstants, c: int, rng) -> Tuple[Graph, Decomposition]:
    D = p.delta
    sqrtD = math.sqrt(D)
    n_cl = p.cliques_H + p.cliques_L
    all_cap = math.floor(k.ext_bound_H(D)) if p.all_max is None else p.all_max
    all_cap = max(0, min(all_cap, c - 1))
    if n_cl and c - all_cap < 1:
        raise InfeasibleParams("cliques would be empty")
    dense = n_cl * c
    n_S = p.n - dense - p.fill_BH - p.fill_BL
    if n_S < 0:
        raise InfeasibleParams(f"n={p.n} too small: cliques need {dense} and fillers {p.fill_BH + p.fill_BL} vertices")
    if p.fill_BL and n_cl == 0:
        raise InfeasibleParams("B_L fillers need at least one clique to satisfy the B_L rule")

    s_max = _sparse_cap(D, c, k) if p.s_degree_max is None else p.s_degree_max
    s_min = s_max // 2 if p.s_degree_min is None else p.s_degree_min
    if s_min > s_max:
        raise InfeasibleParams("s_degree_min exceeds s_degree_max")
    u2 = k.u2(D)
    ext_H = p.ext_H if p.ext_H is not None else max(0, math.floor(sqrtD / 2))
    ext_L = p.ext_L if p.ext_L is not None else math.floor(k.ext_bound_L(D))
    if ext_H > k.ext_bound_H(D) or ext_L > k.ext_bound_L(D):
        raise InfeasibleParams("requested external degree exceeds the rule bound")
    # a clique vertex may see at most this many S vertices (Pi(a) for both sparse batches)
    s_ext_cap = max(0, math.floor(min(k.u1(D), u2)))

    adj: List[Set[int]] = []
    nxt = 0

    def new(cnt):
        nonlocal nxt
        ids = list(range(nxt, nxt + cnt))
        nxt += cnt
        for _ in ids:
            adj.append(set())
        return ids

    def link(a, b):
        adj[a].add(b)
        adj[b].add(a)

    raw_cliques = []
    for t in range(n_cl):
        tier = "H" if t < p.cliques_H else "L"
        size = int(rng.integers(c - all_cap, c + 1))
        mem = new(size)
        al = new(c - size)
        for i, a in enumerate(mem):
            for b in mem[i + 1:]:
                link(a, b)
        for i, a in enumerate(al):
            for b in al[i + 1:]:
                link(a, b)
            for m in mem:
                link(a, m)
        raw_cliques.append((tier, mem, al))
    fill_H = new(p.fill_BH)
    fill_L = new(p.fill_BL)
    S = new(n_S)

    # sparse part: configuration model on capped target degrees
    heavy_thr = math.ceil(k.heavy_threshold(D))
    targets = {}
    for v in S:
        if p.heavy_fraction and rng.random() < p.heavy_fraction:
            targets[v] = int(rng.integers(heavy_thr, D + 1))
        else:
            targets[v] = int(rng.integers(s_min, s_max + 1)) if s_max > 0 else 0
    stubs = np.array([v for v in S for _ in range(min(targets[v], max(0, n_S - 1)))], dtype=np.int64)
    rng.shuffle(stubs)
    for i in range(0, len(stubs) - 1, 2):
        a, b = int(stubs[i]), int(stubs[i + 1])
        if a != b:
            link(a, b)

    # filler B vertices: a few sparse and same-part edges, sized to keep Pi(b)
    margin_H = math.ceil(k.pious_margin(k.ext_bound_H(D), D))
    margin_L = math.ceil(k.pious_margin(k.ext_bound_L(D), D))
    bh_rule = math.ceil(c - D ** k.bh_exponent) - 1
    budget_H = max(0, min(bh_rule, c - margin_H) - 1)
    budget_L = max(0, c - margin_L - 1)
    _random_attach(fill_H, S, fill_H, budget_H, adj, rng, link)
    _random_attach(fill_L, S, fill_L, budget_L, adj, rng, link)

    # external clique edges
    cl_sets = [set(mem) for _, mem, _ in raw_cliques]
    clique_of = {v: i for i, s in enumerate(cl_sets) for v in s}
    ext_count = {v: 0 for s in cl_sets for v in s}
    s_seen = {v: 0 for s in cl_sets for v in s}
    H_idx = [i for i, (t, _, _) in enumerate(raw_cliques) if t == "H"]
    for _ in range(p.cross_edges):
        if len(H_idx) < 2:
            break
        i, j = rng.choice(H_idx, size=2, replace=False)
        a = int(rng.choice(raw_cliques[i][1]))
        b = int(rng.choice(raw_cliques[j][1]))
        if ext_count[a] < ext_H and ext_count[b] < ext_H and not any(clique_of.get(u) == j for u in adj[a]) \
                and not any(clique_of.get(u) == i for u in adj[b]):
            link(a, b)
            ext_count[a] += 1
            ext_count[b] += 1

    # outside capacities: keep each target's degree and Pi margins intact
    cap = {}
    for v in S:
        cap[v] = max(0, D - len(adj[v]))
    for v in fill_H:
        cap[v] = max(0, budget_H - len(adj[v]))
    for v in fill_L:
        cap[v] = max(0, budget_L - len(adj[v]))
    for ci, (tier, mem, _) in enumerate(raw_cliques):
        lim = ext_H if tier == "H" else ext_L
        pools = [S, fill_H, fill_L] if tier == "H" else [S, fill_L, fill_H]
        for a in mem:
            want = int(rng.integers(0, lim + 1)) - ext_count[a]
            tries = 0
            while want > 0 and tries < 20:
                tries += 1
                pool = pools[int(rng.integers(0, len(pools)))]
                if not pool:
                    continue
                w = int(pool[int(rng.integers(0, len(pool)))])
                if cap.get(w, 0) <= 0 or w in adj[a] or any(clique_of.get(u) == ci for u in adj[w]):
                    continue
                if w in cap and pool is S and s_seen[a] >= s_ext_cap:
                    continue
                if tier == "L" and pool is fill_L and _bl_nonall(a, adj, fill_L) >= math.floor(k.ext_bound_L(D)):
                    continue
                link(a, w)
                cap[w] -= 1
                ext_count[a] += 1
                if pool is S:
                    s_seen[a] += 1
                want -= 1

    # relabel uniformly so ids carry no structural information
    n = len(adj)
    if n != p.n:
        raise InfeasibleParams("internal vertex accounting error")
    perm = rng.permutation(n)
    new_adj = [set() for _ in range(n)]
    for v in range(n):
        new_adj[perm[v]] = {int(perm[u]) for u in adj[v]}
    g = Graph(n, new_adj, D)
    relabel = lambda vs: frozenset(int(perm[v]) for v in vs)  # noqa: E731
    infos = []
    for i, (tier, mem, al) in enumerate(raw_cliques):
        infos.append(CliqueInfo(i, relabel(mem), relabel(al), frozenset(), tier))
    infos = [CliqueInfo(q.id, q.members, q.all_i, frozenset(compute_big_plus(g, q, k)), q.tier) for q in infos]
    all_H = [v for t, _, al in raw_cliques if t == "H" for v in al]
    all_L = [v for t, _, al in raw_cliques if t == "L" for v in al]
    d = Decomposition(relabel(S), relabel(list(fill_H) + all_H), relabel(list(fill_L) + all_L), infos)
    return g, d


def _bl_nonall(a, adj, fill_L):
    fl = set(fill_L)
    return sum(1 for u in adj[a] if u in fl)


def _random_attach(vs, S, same, budget, adj, rng, link):
    """Give each filler up to `budget` edges into S or its own part, never exceeding `budget` inside the part."""
    if not vs:
        return
    same_set = set(same)
    for v in vs:
        want = int(rng.integers(0, budget // 2 + 1))
        for _ in range(want):
            use_same = len(same) > 1 and rng.random() >= 0.7
            pool = same if use_same else S
            if not pool:
                continue
            w = int(pool[int(rng.integers(0, len(pool)))])
            if w == v or w in adj[v] or len(adj[v]) >= budget:
                continue
            if w in same_set and len(adj[w]) >= budget:
                continue
            link(v, w)


# -- non-colorability certificate --------------------------------------------------

def _colorable(vertices: Sequence[int], graph: Graph, c: int, node_limit: int) -> bool:
    """DSATUR branch and bound: can G[vertices] be properly colored with c colors?"""
    vs = list(vertices)
    idx = {v: i for i, v in enumerate(vs)}
    nb = [[idx[u] for u in graph.adj[v] if u in idx] for v in vs]
    m = len(vs)
    col = [0] * m
    nodes = 0

    def pick():
        best, key = -1, None
        for i in range(m):
            if col[i]:
                continue
            sat = len({col[j] for j in nb[i] if col[j]})
            kk = (sat, len(nb[i]))
            if key is None or kk > key:
                best, key = i, kk
        return best

    def rec(used):
        nonlocal nodes
        nodes += 1
        if nodes > node_limit:
            raise CapacityError(f"branch-and-bound exceeded {node_limit} nodes")
        i = pick()
        if i < 0:
            return True
        banned = {col[j] for j in nb[i]}
        for x in range(1, min(c, used + 1) + 1):
            if x in banned:
                continue
            col[i] = x
            if rec(max(used, x)):
                return True
            col[i] = 0
        return False

    return rec(0)


def certificate_check(graph: Graph, c: int, cap: int = 128, node_limit: int = 200_000) -> Optional[int]:
    """Some vertex whose closed neighborhood needs more than c colors, else None."""
    for v in range(graph.n):
        closed = [v, *graph.adj[v]]
        if len(closed) <= c:
            continue
        if len(closed) > cap:
            raise CapacityError(f"closed neighborhood of {v} has {len(closed)} > cap {cap} vertices")
        if not _colorable(closed, graph, c, node_limit):
            return v
    return None
