"""Mutable state threaded through the stages of one run."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional

from .core import UNCOLORED, AnalysisConstants, Graph, NodeRng, PartialColoring, min_colors
from .decomposition import Decomposition
from .errors import DomainError, StageAbort
from .harness import AuditReport, CCLedger
from .lll import BadEvent, ShatterOutcome, ShatterPlan


@dataclass
class Runtime:
    graph: Graph
    dec: Decomposition
    consts: AnalysisConstants  # effective (overrides already folded in)
    seed: int = 0
    order_seed: Optional[int] = None  # shuffles iteration order; results must not change
    strict: Optional[bool] = None
    num_colors: Optional[int] = None  # defaults to Delta - k_Delta + 1
    coloring: PartialColoring = None
    rng: NodeRng = None
    ledger: CCLedger = None
    audits: List[AuditReport] = field(default_factory=list)
    outcomes: List[ShatterOutcome] = field(default_factory=list)
    rounds: Dict[str, int] = field(default_factory=dict)
    stages_run: List[str] = field(default_factory=list)
    log: List[Dict] = field(default_factory=list)
    trace: Dict[str, object] = field(default_factory=dict)  # stage intermediates kept for offline recounts

    def __post_init__(self):
        if self.coloring is None:
            c = min_colors(self.graph.delta) if self.num_colors is None else self.num_colors
            if c < min_colors(self.graph.delta):
                raise DomainError(f"c={c} is below Delta - k_Delta + 1 = {min_colors(self.graph.delta)}")
            self.coloring = PartialColoring(self.graph.n, c)
        if self.rng is None:
            self.rng = NodeRng(self.seed)
        if self.ledger is None:
            self.ledger = CCLedger(self.graph, self.dec, self.consts)
        self._shuffle = random.Random(self.order_seed) if self.order_seed is not None else None

    @property
    def delta(self) -> int:
        return self.graph.delta

    @property
    def c(self) -> int:
        return self.coloring.c

    def order(self, items: Iterable) -> list:
        """Canonical iteration order, or a shuffled one when order_seed is set."""
        out = sorted(items)
        if self._shuffle is not None:
            self._shuffle.shuffle(out)
        return out

    def plan(self, stage: str, radius: int) -> ShatterPlan:
        return ShatterPlan(radius, self.consts.component_size_cap, self.consts.resample_budget, stage)

    def audit(self, stage: str) -> AuditReport:
        rep = AuditReport(stage)
        self.audits.append(rep)
        return rep

    def open_cliques(self) -> List[int]:
        return sorted(self.ledger.open)

    def commit(self, diff: Mapping[int, int], label: str, strong: bool = False, audit: Optional[AuditReport] = None):
        """Apply one coloring step and record it in the CC ledger."""
        diff = {v: x for v, x in diff.items() if x is not UNCOLORED}
        for v in diff:
            if self.coloring.colors[v] is not UNCOLORED:
                raise StageAbort(label, f"vertex {v} is already colored")
        viol = self.ledger.record(diff, label, strong)
        self.coloring.commit(diff)
        if audit is not None:
            audit.claim(f"cc.step[{label}]", not viol, self.ledger.steps[-1].peak,
                        self.ledger.budget * (2 if strong else 1))
        self.log.append({"step": label, "colored": len(diff), "cc_peak": self.ledger.steps[-1].peak})
        return viol

    def record_outcome(self, out: ShatterOutcome) -> None:
        self.outcomes.append(out)
        self.rounds[out.stage] = self.rounds.get(out.stage, 0) + out.rounds_simulated


def cc_events(rt: Runtime, region, low, color_of, fresh: bool = False, strong: bool = False) -> List[BadEvent]:
    """One E_CC event per open clique with an outside neighbor in `region`.

    `color_of(view, w)` is the color w ends up with (or None); `low(w)` lists
    the extra variables that decision reads besides w itself.
    """
    budget = rt.ledger.budget * (2 if strong else 1)
    ledger = rt.ledger
    evs = []
    for i in rt.open_cliques():
        W = tuple(sorted(ledger.outside[i] & region))
        if not W:
            continue
        vbl = set(W)
        for w in W:
            vbl.update(low(w))

        def pred(view, i=i, W=W):
            counts = ledger.clique_counts(i, ((w, color_of(view, w)) for w in W))
            return max(counts.values(), default=0) >= budget

        evs.append(BadEvent(("CC", i), "CC", vbl, pred, fresh_budget=fresh))
    return evs
