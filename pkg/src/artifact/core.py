"""Graphs, partial colorings, palettes, slack and keyed per-node randomness."""
from __future__ import annotations

import dataclasses
import hashlib
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import DomainError, StructuralError

UNCOLORED = None  # sentinel; colors are 1..c
F_DEGREE_FACTOR = 10**9


def k_delta(delta: int) -> int:
    """Largest k with (k+1)(k+2) <= delta."""
    if not isinstance(delta, int) or delta < 2:
        raise DomainError(f"k_delta needs an integer delta >= 2, got {delta!r}")
    k = max(0, (math.isqrt(4 * delta + 1) - 3) // 2)
    while (k + 2) * (k + 3) <= delta:
        k += 1
    while k > 0 and (k + 1) * (k + 2) > delta:
        k -= 1
    return k


def min_colors(delta: int) -> int:
    return delta - k_delta(delta) + 1


class Graph:
    """Immutable undirected simple graph on 0..n-1 with a declared degree bound."""

    __slots__ = ("n", "delta", "adj", "nbrs", "_m")

    def __init__(self, n: int, adjacency: Sequence[Iterable[int]], delta: int):
        if len(adjacency) != n:
            raise StructuralError("adjacency length differs from n")
        self.n = n
        self.delta = delta
        self.adj: Tuple[Tuple[int, ...], ...] = tuple(tuple(sorted(set(a))) for a in adjacency)
        self.nbrs: Tuple[frozenset, ...] = tuple(frozenset(a) for a in self.adj)
        m2 = 0
        for v, a in enumerate(self.adj):
            for u in a:
                if u == v:
                    raise StructuralError(f"self-loop at {v}")
                if not 0 <= u < n or v not in self.nbrs[u]:
                    raise StructuralError(f"asymmetric or out-of-range edge {v}-{u}")
            if len(a) > F_DEGREE_FACTOR * delta:
                raise StructuralError(f"vertex {v} exceeds the F degree bound")
            m2 += len(a)
        self._m = m2 // 2

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]], delta: int) -> "Graph":
        adj: List[Set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise StructuralError(f"self-loop at {u}")
            adj[u].add(v)
            adj[v].add(u)
        return cls(n, adj, delta)

    @property
    def m(self) -> int:
        return self._m

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    def edges(self):
        for v, a in enumerate(self.adj):
            for u in a:
                if v < u:
                    yield v, u

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.nbrs[u]

    def deg_in(self, v: int, region) -> int:
        return sum(1 for u in self.adj[v] if u in region)

    def ball(self, sources: Iterable[int], radius: int, within=None) -> Set[int]:
        """All vertices at hop distance <= radius from sources (paths restricted to `within` if given)."""
        seen = {s for s in sources if within is None or s in within}
        frontier = list(seen)
        for _ in range(radius):
            nxt = []
            for v in frontier:
                for u in self.adj[v]:
                    if u not in seen and (within is None or u in within):
                        seen.add(u)
                        nxt.append(u)
            if not nxt:
                break
            frontier = nxt
        return seen

    def subgraph_components(self, vertices) -> List[List[int]]:
        vs = set(vertices)
        seen: Set[int] = set()
        out = []
        for s in sorted(vs):
            if s in seen:
                continue
            comp = [s]
            seen.add(s)
            dq = deque([s])
            while dq:
                v = dq.popleft()
                for u in self.adj[v]:
                    if u in vs and u not in seen:
                        seen.add(u)
                        comp.append(u)
                        dq.append(u)
            out.append(sorted(comp))
        return out

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and self.delta == other.delta and self.adj == other.adj

    def __hash__(self):
        return hash((self.n, self.delta, self.adj))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m}, delta={self.delta})"


def write_graph(path, graph: Graph, c: int) -> None:
    lines = [f"{graph.n} {graph.m} {graph.delta} {c}"]
    lines += [f"{u} {v}" for u, v in graph.edges()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path) -> Tuple[Graph, int]:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows or len(rows[0]) != 4:
        raise StructuralError("graph header must be 'n m delta c'")
    try:
        n, m, delta, c = map(int, rows[0])
        edges = [(int(a), int(b)) for a, b in rows[1:]]
    except ValueError as exc:
        raise StructuralError(f"unparseable graph file: {exc}") from None
    if len(edges) != m:
        raise StructuralError(f"header says {m} edges, file has {len(edges)}")
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise StructuralError(f"edge {u}-{v} out of range")
    return Graph.from_edges(n, edges, delta), c


class PartialColoring:
    """vertex -> color in 1..c or UNCOLORED; `step` counts commits."""

    def __init__(self, n: int, c: int, assignment: Optional[Sequence[Optional[int]]] = None):
        if c < 1:
            raise DomainError("need at least one color")
        self.c = c
        self.colors: List[Optional[int]] = list(assignment) if assignment is not None else [UNCOLORED] * n
        if len(self.colors) != n:
            raise DomainError("assignment length differs from n")
        for x in self.colors:
            if x is not UNCOLORED:
                self._check_color(x)
        self.step = 0

    def _check_color(self, x):
        if not isinstance(x, int) or not 1 <= x <= self.c:
            raise DomainError(f"color {x!r} outside 1..{self.c}")

    @property
    def n(self):
        return len(self.colors)

    def __getitem__(self, v):
        return self.colors[v]

    def is_colored(self, v) -> bool:
        return self.colors[v] is not UNCOLORED

    def commit(self, diff: Mapping[int, Optional[int]]) -> int:
        """Apply a batch of assignments as one step. Returns the new step number."""
        for v, x in diff.items():
            if x is not UNCOLORED:
                self._check_color(x)
            self.colors[v] = x
        self.step += 1
        return self.step

    def uncolored(self, vertices: Iterable[int]) -> Set[int]:
        return {v for v in vertices if self.colors[v] is UNCOLORED}

    def colored_count(self) -> int:
        return sum(1 for x in self.colors if x is not UNCOLORED)

    def copy(self) -> "PartialColoring":
        pc = PartialColoring(self.n, self.c, self.colors)
        pc.step = self.step
        return pc

    def conflicts(self, graph: Graph):
        for u, v in graph.edges():
            x = self.colors[u]
            if x is not UNCOLORED and x == self.colors[v]:
                yield u, v


def palette(v: int, coloring: PartialColoring, graph: Graph) -> Set[int]:
    used = {coloring.colors[u] for u in graph.adj[v]}
    return {x for x in range(1, coloring.c + 1) if x not in used}


def slack(v: int, subgraph, coloring: PartialColoring, graph: Graph) -> int:
    cols = coloring.colors
    unc = sum(1 for u in graph.adj[v] if u in subgraph and cols[u] is UNCOLORED)
    return len(palette(v, coloring, graph)) - unc


@lru_cache(maxsize=4096)
def _stage_code(stage) -> int:
    return int.from_bytes(hashlib.blake2b(repr(stage).encode(), digest_size=8).digest(), "little")


_PACK = struct.Struct("<QqQqq")
_MASK = (1 << 64) - 1


class NodeRng:
    """Keyed randomness: every draw is a pure function of (seed, vertex, stage, round, index)."""

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = seed & _MASK

    def bits(self, v: int, stage, rnd: int = 0, idx: int = 0) -> int:
        key = _PACK.pack(self.seed, v, _stage_code(stage), rnd, idx)
        return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")

    def random(self, v: int, stage, rnd: int = 0, idx: int = 0) -> float:
        return (self.bits(v, stage, rnd, idx) >> 11) * (1.0 / (1 << 53))

    def below(self, n: int, v: int, stage, rnd: int = 0, idx: int = 0) -> int:
        # modulo bias is at most n / 2**64, irrelevant for n <= 1e9
        return self.bits(v, stage, rnd, idx) % n

    def bernoulli(self, p: float, v: int, stage, rnd: int = 0, idx: int = 0) -> bool:
        return self.random(v, stage, rnd, idx) < p

    def draw_uniform(self, v: int, stage, rnd: int, items, idx: int = 0):
        return draw_uniform(self, v, stage, rnd, items, idx)

    def permutation(self, items: Sequence, v: int, stage, rnd: int = 0) -> list:
        """Fisher-Yates over `items` (in the given order) keyed by (v, stage, rnd)."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1, v, stage, rnd, i)
            out[i], out[j] = out[j], out[i]
        return out


def draw_uniform(rng: NodeRng, v: int, stage, rnd: int, items, idx: int = 0):
    pool = sorted(items)
    if not pool:
        raise DomainError(f"draw from an empty set (vertex {v}, stage {stage!r})")
    return pool[rng.below(len(pool), v, stage, rnd, idx)]


@dataclass(frozen=True)
class AnalysisConstants:
    """The analysis' fixed constants; `scale_overrides` replaces any of them by name."""

    cc_budget_exponent: float = 37 / 40
    marking_exponent: float = 1 / 5
    degree_floor_exponent: float = 1 / 10
    mct_trials_exponent: float = 1 / 10
    mct_slack_exponent: float = 9 / 20
    slack_exponent: float = 0.22
    subsample_exponent: float = -23 / 40
    candidate_floor_divisor: float = 40
    candidate_pre_floor_divisor: float = 20
    candidate_load_divisor: float = 80
    unsafe_pollution_divisor: float = 20
    candidate_neighbor_exponent: float = 1 / 10
    rct_activation: float = 1 / 4
    drop_factor: float = 1 / 180
    split_p_coeff: float = 2.0
    split_p_exponent: float = -1 / 4
    split_alpha: float = 4.0
    u2_coeff: Optional[float] = None  # None: same as split_alpha
    big_plus_coeff: float = 2.0
    big_plus_exponent: float = 9 / 10
    big_plus_cap_fraction: float = 3 / 4
    ext_degree_coeff_H: float = 1e8
    ext_degree_exp_H: float = 1 / 2
    ext_degree_coeff_L: float = 30.0
    ext_degree_exp_L: float = 1 / 4
    sparsity_coeff: float = 9e5
    heavy_margin: float = 3.0
    bh_exponent: float = 3 / 4
    bl_margin: float = 9.0
    cwms_cap_coeff: float = 1e9
    guard_fraction_pre: float = 11 / 20
    guard_fraction_post: float = 4 / 5
    guard_floor_divisor: float = 20
    repeat_coeff_pre: float = 3.0
    repeat_coeff_post: float = 1.05
    listsize_coeff: float = 0.05
    slackgen_join: float = 1 / 2
    slackgen_post_activation: float = 3 / 4
    colored_cap_fraction: float = 19 / 20
    cumulative_cc_fraction: float = 4 / 5
    swappable_divisor: float = 10
    sct_audit_extra: float = 1.0
    resample_budget: int = 10_000
    component_size_cap: int = 10**9
    delta0: Optional[float] = None
    scale_overrides: Mapping[str, float] = field(default_factory=dict)

    # -- construction helpers -------------------------------------------------
    def __post_init__(self):
        bad = set(self.scale_overrides) - set(self.field_names())
        if bad:
            raise DomainError(f"unknown constant(s) in overrides: {sorted(bad)}")

    @staticmethod
    def field_names():
        return [f.name for f in dataclasses.fields(AnalysisConstants) if f.name != "scale_overrides"]

    def effective(self) -> "AnalysisConstants":
        eff = dataclasses.replace(self, scale_overrides={}, **dict(self.scale_overrides))
        eff.validate()
        return eff

    def with_overrides(self, **kw) -> "AnalysisConstants":
        merged = dict(self.scale_overrides)
        merged.update(kw)
        return dataclasses.replace(self, scale_overrides=merged)

    @classmethod
    def desk(cls, **extra) -> "AnalysisConstants":
        ov = dict(DESK_OVERRIDES)
        ov.update(extra)
        return cls(scale_overrides=ov)

    def validate(self) -> None:
        exps = [
            "cc_budget_exponent", "marking_exponent", "degree_floor_exponent", "mct_trials_exponent",
            "mct_slack_exponent", "slack_exponent", "subsample_exponent", "candidate_neighbor_exponent",
            "split_p_exponent", "big_plus_exponent", "ext_degree_exp_H", "ext_degree_exp_L", "bh_exponent",
        ]
        for name in exps:
            a = abs(getattr(self, name))
            if not 0 < a <= 1:
                raise DomainError(f"|{name}| must lie in (0, 1], got {getattr(self, name)}")
        if self.cc_budget_exponent >= 1:
            raise DomainError("cc_budget_exponent must be < 1")
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if f.name.endswith(("coeff", "divisor", "_H", "_L", "fraction", "activation", "factor", "margin")) \
                    and isinstance(val, (int, float)) and not f.name.startswith("ext_degree_exp"):
                if not val > 0:
                    raise DomainError(f"{f.name} must be positive, got {val}")
        for name in ("rct_activation", "slackgen_join", "slackgen_post_activation"):
            if not 0 < getattr(self, name) <= 1:
                raise DomainError(f"{name} must be a probability")
        if self.resample_budget < 1 or self.component_size_cap < 1:
            raise DomainError("caps must be positive")

    def as_dict(self) -> Dict[str, object]:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "scale_overrides"}
        d["scale_overrides"] = dict(self.scale_overrides)
        return d

    # -- derived quantities at a given delta ----------------------------------
    def cc_budget(self, delta) -> float:
        return delta ** self.cc_budget_exponent

    def degree_floor(self, delta) -> float:
        return delta ** self.degree_floor_exponent

    def mct_trials(self, delta) -> int:
        return max(1, math.ceil(delta ** self.mct_trials_exponent))

    def mct_min_slack(self, delta) -> float:
        return delta ** self.mct_slack_exponent

    def ext_bound_H(self, delta) -> float:
        return self.ext_degree_coeff_H * delta ** self.ext_degree_exp_H

    def ext_bound_L(self, delta) -> float:
        return self.ext_degree_coeff_L * delta ** self.ext_degree_exp_L

    def pious_margin(self, U, delta) -> float:
        return U * delta ** self.slack_exponent

    def u1(self, delta) -> float:
        return self.ext_bound_H(delta)

    def u2(self, delta) -> float:
        a = self.split_alpha if self.u2_coeff is None else self.u2_coeff
        return a * delta ** 0.25 * math.log(delta)

    def split_p(self, delta) -> float:
        return min(1.0, self.split_p_coeff * delta ** self.split_p_exponent)

    def split_threshold(self, delta) -> float:
        return self.split_alpha / self.split_p(delta) * math.log(delta)

    def subsample_p(self, delta) -> float:
        return min(1.0, delta ** self.subsample_exponent)

    def candidate_scale(self, delta) -> float:
        # expected candidate-set size is p * Delta, Delta^{17/40} under the full constants
        return delta ** (1 + self.subsample_exponent)

    def candidate_floor(self, delta) -> float:
        return self.candidate_scale(delta) / self.candidate_floor_divisor

    def candidate_pre_floor(self, delta) -> float:
        return self.candidate_scale(delta) / self.candidate_pre_floor_divisor

    def candidate_ceiling(self, delta) -> float:
        return self.candidate_scale(delta) / self.candidate_load_divisor

    def big_plus_threshold(self, delta) -> float:
        return self.big_plus_coeff * delta ** self.big_plus_exponent

    def big_plus_cap(self, delta) -> float:
        return self.big_plus_cap_fraction * delta + self.ext_bound_H(delta)

    def heavy_threshold(self, delta) -> float:
        return delta - self.heavy_margin * math.sqrt(delta)

    def sparsity_bound(self, delta) -> float:
        return self.sparsity_coeff * delta ** 1.5

    def cwms_cap(self, delta) -> int:
        return math.ceil(math.log(self.cwms_cap_coeff * delta ** (1 - self.degree_floor_exponent)) / self.drop_factor)

    def below_delta0(self, delta) -> Optional[bool]:
        return None if self.delta0 is None else delta < self.delta0


# Desk-scale profile: exponents untouched, coefficients shrunk so the
# analysis' inequalities are satisfiable at Delta <= 100.  Each entry is
# justified in the decisions ledger and echoed in every run report.
DESK_OVERRIDES: Dict[str, float] = {
    "ext_degree_coeff_H": 1.0,
    "ext_degree_coeff_L": 1.0,
    "sparsity_coeff": 1.0,
    "cwms_cap_coeff": 1.0,
    "rct_activation": 1.0,
    "guard_floor_divisor": 2.0,
    "u2_coeff": 0.5,
    "subsample_exponent": -1 / 6,
    "candidate_pre_floor_divisor": 3.0,
    "candidate_floor_divisor": 4.0,
    "candidate_load_divisor": 4.0,
    "unsafe_pollution_divisor": 4.0,
    "repeat_coeff_pre": 0.375,
    "repeat_coeff_post": 0.25,
}
