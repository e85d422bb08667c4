"""Color-coverage ledger, audit reports, properness scan and the marking-lemma statistic."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .core import UNCOLORED, AnalysisConstants, Graph, PartialColoring
from .decomposition import Decomposition
from .errors import DomainError

AUDIT_SCHEMA = "audit/1"


# -- CC ledger --------------------------------------------------------------------

@dataclass
class LedgerStep:
    label: str
    budget: float
    open_cliques: frozenset
    diff: Tuple[Tuple[int, int], ...]
    counts: Dict[Tuple[int, int], int]

    @property
    def peak(self) -> int:
        return max(self.counts.values(), default=0)


class CCLedger:
    """Per (step, clique, color): members of A_i that gained a neighbor of that color
    from outside A_i, All_i and Big+_i.  Steps are append-only."""

    def __init__(self, graph: Graph, dec: Decomposition, consts: AnalysisConstants):
        self.graph = graph
        self.dec = dec
        self.budget = consts.cc_budget(graph.delta)
        self.steps: List[LedgerStep] = []
        self.open: Set[int] = {q.id for q in dec.cliques}
        self.closed_at: Dict[int, int] = {}
        # attach[w] = ((clique, members of that clique adjacent to w), ...) for w outside A_i+All_i+Big+_i
        attach: Dict[int, List[Tuple[int, Tuple[int, ...]]]] = {}
        self.outside: Dict[int, Set[int]] = {}
        for q in dec.cliques:
            excl = q.members | q.all_i | q.big_plus
            per: Dict[int, List[int]] = {}
            for a in q.members:
                for w in graph.adj[a]:
                    if w not in excl:
                        per.setdefault(w, []).append(a)
            for w, mem in per.items():
                attach.setdefault(w, []).append((q.id, tuple(sorted(mem))))
            self.outside[q.id] = set(per)
        self.attach = attach

    # counting primitives shared with the E_CC predicates
    def clique_counts(self, i: int, new_colors: Iterable[Tuple[int, int]]) -> Dict[int, int]:
        seen: Dict[int, Set[int]] = {}
        for w, x in new_colors:
            if x is UNCOLORED:
                continue
            for j, mem in self.attach.get(w, ()):
                if j == i:
                    seen.setdefault(x, set()).update(mem)
        return {x: len(s) for x, s in seen.items()}

    def counts_for(self, diff: Mapping[int, int], cliques: Iterable[int]) -> Dict[Tuple[int, int], int]:
        want = set(cliques)
        seen: Dict[Tuple[int, int], Set[int]] = {}
        for w, x in diff.items():
            if x is UNCOLORED:
                continue
            for j, mem in self.attach.get(w, ()):
                if j in want:
                    seen.setdefault((j, x), set()).update(mem)
        return {k: len(s) for k, s in seen.items()}

    def close(self, cliques: Iterable[int]) -> None:
        for i in cliques:
            if i in self.open:
                self.open.discard(i)
                self.closed_at[i] = len(self.steps)

    def record(self, diff: Mapping[int, int], label: str, strong: bool = False) -> List[Tuple[int, int, int, float]]:
        """Append one step; returns (clique, color, count, budget) entries at or above budget."""
        budget = self.budget * (2 if strong else 1)
        counts = self.counts_for(diff, self.open)
        step = LedgerStep(label, budget, frozenset(self.open),
                          tuple(sorted((v, x) for v, x in diff.items() if x is not UNCOLORED)), counts)
        self.steps.append(step)
        return [(i, x, t, budget) for (i, x), t in sorted(counts.items()) if t >= budget]

    def violations(self) -> List[Tuple[int, int, int, int, float]]:
        return [(s, i, x, t, st.budget) for s, st in enumerate(self.steps)
                for (i, x), t in st.counts.items() if t >= st.budget]

    def utilization(self) -> float:
        return max((st.peak / st.budget for st in self.steps), default=0.0)

    def summary(self) -> Dict:
        return {
            "steps": len(self.steps),
            "budget": self.budget,
            "max_count": max((st.peak for st in self.steps), default=0),
            "max_utilization": self.utilization(),
            "violations": len(self.violations()),
        }


def ledger_record(ledger: CCLedger, diff: Mapping[int, int], dec: Optional[Decomposition] = None,
                  label: str = "step", strong: bool = False):
    if dec is not None and dec is not ledger.dec:
        raise DomainError("ledger was built for a different decomposition")
    viol = ledger.record(diff, label, strong)
    return ledger, viol


@dataclass
class CumulativeCC:
    total: int
    from_steps: int
    big_plus: int
    bound: float

    @property
    def ok(self) -> bool:
        return self.total <= self.bound


def cumulative_cc(ledger: CCLedger, clique: int, color: int, coloring: Optional[PartialColoring] = None,
                  consts: Optional[AnalysisConstants] = None, upto: Optional[int] = None) -> CumulativeCC:
    """Ledger steps (before `upto`) summed for (clique, color) plus the single Big+ vertex of that color."""
    frac = (consts.cumulative_cc_fraction if consts else 4 / 5)
    end = len(ledger.steps) if upto is None else upto
    from_steps = sum(st.counts.get((clique, color), 0) for st in ledger.steps[:end])
    big = 0
    if coloring is not None:
        q = ledger.dec.clique(clique)
        for w in q.big_plus:
            if coloring[w] == color:
                big = max(big, sum(1 for a in ledger.graph.adj[w] if a in q.members))
    return CumulativeCC(from_steps + big, from_steps, big, frac * ledger.graph.delta)


def properness_scan(graph: Graph, coloring) -> Optional[Tuple[int, int]]:
    cols = coloring.colors if isinstance(coloring, PartialColoring) else coloring
    for u, v in graph.edges():
        x = cols[u]
        if x is not UNCOLORED and x == cols[v]:
            return (u, v)
    return None


# -- marking lemma --------------------------------------------------------------------

def marking_tail_statistic(sets: Sequence[Iterable[int]], mark_prob: float, trials: int, rng, delta: float,
                      Q: Optional[float] = None, consts: Optional[AnalysisConstants] = None) -> float:
    """Fraction of trials in which at least delta^{37/40} sets contain a marked vertex.

    Vertices are marked independently with probability `mark_prob`; the
    family must respect |set| <= Q and per-vertex membership <= 2 delta^{9/10},
    and `mark_prob` must not exceed 1 / (Q delta^{1/5}).
    """
    k = (consts or AnalysisConstants()).effective()
    fam = [sorted(set(s)) for s in sets]
    if not fam or mark_prob == 0:
        return 0.0
    Q = max(len(s) for s in fam) if Q is None else Q
    if any(len(s) > Q for s in fam):
        raise DomainError("a set exceeds the size bound Q")
    if len(fam) > delta:
        raise DomainError("more than delta sets")
    verts = sorted({v for s in fam for v in s})
    col = {v: i for i, v in enumerate(verts)}
    memb = np.zeros(len(verts), dtype=np.int64)
    inc = np.zeros((len(fam), len(verts)), dtype=np.int8)
    for r, s in enumerate(fam):
        for v in s:
            inc[r, col[v]] = 1
            memb[col[v]] += 1
    if memb.max(initial=0) > k.big_plus_coeff * delta ** k.big_plus_exponent:
        raise DomainError("a vertex lies in too many sets")
    bound = 1.0 / (Q * delta ** k.marking_exponent)
    if mark_prob > bound * (1 + 1e-12):
        raise DomainError(f"mark probability {mark_prob} exceeds the bound {bound}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    thr = delta ** k.cc_budget_exponent
    hits = 0
    chunk = 2048
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        marks = (gen.random((t, len(verts))) < mark_prob).astype(np.int8)
        hit_sets = (marks.astype(np.int32) @ inc.T.astype(np.int32)) > 0
        hits += int(np.count_nonzero(hit_sets.sum(axis=1) >= thr))
        done += t
    return hits / trials


# -- audit reports ---------------------------------------------------------------------

@dataclass
class Claim:
    claim_id: str
    passed: bool
    measured: object = None
    bound: object = None
    kind: str = "deterministic"  # deterministic | statistical | analytic
    note: str = ""

    def as_dict(self):
        return {"claim": self.claim_id, "passed": bool(self.passed), "measured": _plain(self.measured),
                "bound": _plain(self.bound), "kind": self.kind, "note": self.note}


def _plain(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and (math.isinf(x) or math.isnan(x)):
        return str(x)
    return x


@dataclass
class AuditReport:
    stage: str
    checks: List[Claim] = field(default_factory=list)
    summaries: Dict[str, object] = field(default_factory=dict)

    def claim(self, claim_id, passed, measured=None, bound=None, kind="deterministic", note="") -> bool:
        self.checks.append(Claim(claim_id, bool(passed), measured, bound, kind, note))
        return bool(passed)

    def failures(self, kinds=("deterministic",)) -> List[Claim]:
        return [c for c in self.checks if not c.passed and c.kind in kinds]

    @property
    def rejected(self) -> bool:
        return bool(self.failures())

    def as_dict(self):
        return {"schema": AUDIT_SCHEMA, "stage": self.stage, "rejected": self.rejected,
                "checks": [c.as_dict() for c in self.checks], "summaries": self.summaries}

    def to_json(self):
        return json.dumps(self.as_dict())


def require_claims(reports: Sequence[AuditReport]) -> None:
    """Anti-rot guard: every stage that ran must have registered at least one claim."""
    empty = [r.stage for r in reports if not r.checks]
    if empty:
        raise AssertionError(f"stages registered no audit claims: {empty}")
