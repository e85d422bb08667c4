"""Run configuration, the five-stage pipeline, batches and reports."""
from __future__ import annotations

import dataclasses
import json
import math
import platform
import statistics
import time
import traceback
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import AnalysisConstants, Graph, PartialColoring, min_colors, read_graph
from .decomposition import Decomposition, GenParams, certificate_check, generate, read_decomposition, validate
from .errors import ArtifactError, CapacityError, DomainError, StageAbort
from .harness import AuditReport, properness_scan, require_claims
from .runtime import Runtime
from .stage_cliques import color_cliques
from .stage_slack import PiousContext, color_with_much_slack
from .stage_sparse import color_sparse

REPORT_SCHEMA = "run-report/1"
STAGE_ORDER = ("S", "B_H", "A_H", "B_L", "A_L")
EXIT_OK, EXIT_ABORT, EXIT_AUDIT, EXIT_INPUT = 0, 2, 3, 4


@dataclass
class RunConfig:
    gen: Optional[GenParams] = None
    graph_path: Optional[str] = None
    decomposition_path: Optional[str] = None
    c: Optional[int] = None
    seed: int = 0
    constants: AnalysisConstants = field(default_factory=AnalysisConstants.desk)
    audit: str = "strict"  # strict: any failed deterministic claim rejects the run
    certificate: bool = False
    order_seed: Optional[int] = None
    strict_access: Optional[bool] = None
    keep_coloring: bool = True
    batch: int = 1
    seed_stride: int = 1
    vary_instance: bool = True  # batches also move the generator seed

    def __post_init__(self):
        if (self.gen is None) == (self.graph_path is None):
            raise DomainError("give exactly one of generator parameters or a graph file")
        if self.graph_path is not None and self.decomposition_path is None:
            raise DomainError("a graph file needs a decomposition file")
        if self.audit not in ("strict", "lenient"):
            raise DomainError("audit mode is strict or lenient")
        if self.batch < 1:
            raise DomainError("batch count must be >= 1")
        if self.gen is not None:
            self._check_c(self.gen.delta)

    def _check_c(self, delta):
        if self.c is not None and self.c < min_colors(delta):
            raise DomainError(f"c={self.c} is below Delta - k_Delta + 1 = {min_colors(delta)}")

    def load(self):
        """(graph, decomposition, c)."""
        k = self.constants.effective()
        if self.gen is not None:
            c = self.c or min_colors(self.gen.delta)
            g, d = generate(dataclasses.replace(self.gen, c=c), k)
            return g, d, c
        g, c_file = read_graph(self.graph_path)
        d = read_decomposition(self.decomposition_path)
        c = self.c or c_file
        self._check_c(g.delta)
        if c < min_colors(g.delta):
            raise DomainError(f"c={c} is below Delta - k_Delta + 1 = {min_colors(g.delta)}")
        return g, d, c

    def for_seed(self, seed: int) -> "RunConfig":
        gen = self.gen
        if gen is not None and self.vary_instance:
            gen = dataclasses.replace(gen, seed=seed)
        return dataclasses.replace(self, seed=seed, gen=gen, batch=1)

    def as_dict(self):
        return {
            "gen": dataclasses.asdict(self.gen) if self.gen else None,
            "graph_path": self.graph_path, "decomposition_path": self.decomposition_path,
            "c": self.c, "seed": self.seed, "audit": self.audit, "certificate": self.certificate,
            "order_seed": self.order_seed, "batch": self.batch, "seed_stride": self.seed_stride,
        }


@dataclass
class RunReport:
    success: bool
    exit_code: int
    status: str
    config: Dict
    constants: Dict
    n: int = 0
    delta: int = 0
    c: int = 0
    stage_order: List[str] = field(default_factory=list)
    rounds: Dict[str, int] = field(default_factory=dict)
    components: List[Dict] = field(default_factory=list)
    largest_component: int = 0
    ledger: Dict = field(default_factory=dict)
    audits: List[Dict] = field(default_factory=list)
    validation: Optional[Dict] = None
    error: Optional[str] = None
    diagnostics: Dict = field(default_factory=dict)
    wall_time: float = 0.0
    coloring: Optional[List[int]] = None
    versions: Dict = field(default_factory=dict)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["schema"] = REPORT_SCHEMA
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), default=_json_default, **kw)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset, tuple)):
        return sorted(x) if isinstance(x, (set, frozenset)) else list(x)
    return str(x)


def _versions():
    from importlib.metadata import PackageNotFoundError, version
    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = "dev"
    return {"artifact": own, "python": platform.python_version(), "numpy": np.__version__}


def cumulative_audit(rt: Runtime, rep: AuditReport) -> Dict:
    """Per clique and color: ledger counts before the clique was colored, plus Big+."""
    ledger = rt.ledger
    bound = rt.consts.cumulative_cc_fraction * rt.delta
    worst, worst_key = 0, None
    for q in rt.dec.cliques:
        s = ledger.closed_at.get(q.id, len(ledger.steps))
        tot: Dict[int, int] = {}
        prior = {}
        for st in ledger.steps[:s]:
            for (i, x), t in st.counts.items():
                if i == q.id:
                    tot[x] = tot.get(x, 0) + t
            prior.update(st.diff)
        for w in q.big_plus:
            if w in prior:
                x = prior[w]
                tot[x] = tot.get(x, 0) + sum(1 for a in rt.graph.adj[w] if a in q.members)
        for x, t in tot.items():
            if t > worst:
                worst, worst_key = t, (q.id, x)
    rep.claim("cc.cumulative", worst <= bound, worst, bound, note=f"at {worst_key}" if worst_key else "")
    steps = len(ledger.steps)
    analytic = steps * ledger.budget + 0.75 * rt.delta
    rep.claim("cc.cumulative_analytic", analytic <= bound, analytic, bound, kind="analytic",
              note="steps * budget + 3/4 Delta; vacuous at small Delta")
    return {"max_cumulative": worst, "bound": bound}


def run_pipeline(config: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    k = config.constants.effective()
    rep = RunReport(False, EXIT_INPUT, "invalid_input", config.as_dict(), k.as_dict(), versions=_versions())
    try:
        g, d, c = config.load()
    except (ArtifactError, OSError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        rep.wall_time = time.perf_counter() - t0
        return rep
    rep.n, rep.delta, rep.c = g.n, g.delta, c
    val = validate(g, d, c, k)
    rep.validation = json.loads(val.to_json())
    if not val.passed:
        rep.error = f"decomposition fails rules {sorted(val.rules())}"
        rep.wall_time = time.perf_counter() - t0
        return rep
    if config.certificate:
        try:
            bad = certificate_check(g, c)
        except CapacityError as exc:
            bad = None
            rep.diagnostics["certificate"] = f"skipped: {exc}"
        else:
            rep.diagnostics["certificate"] = "none found" if bad is None else f"vertex {bad}"
        if bad is not None:
            rep.error = f"vertex {bad} has a closed neighborhood that is not {c}-colorable"
            rep.wall_time = time.perf_counter() - t0
            return rep

    rt = Runtime(g, d, k, seed=config.seed, order_seed=config.order_seed, strict=config.strict_access, num_colors=c)
    stages = [
        ("S", lambda: color_sparse(rt)),
        ("B_H", lambda: color_with_much_slack(rt, PiousContext(d.B_H, k.ext_bound_H(g.delta), "B_H"))),
        ("A_H", lambda: color_cliques(rt, "H")),
        ("B_L", lambda: color_with_much_slack(rt, PiousContext(d.B_L, k.ext_bound_L(g.delta), "B_L"))),
        ("A_L", lambda: color_cliques(rt, "L")),
    ]
    try:
        for name, fn in stages:
            rt.stages_run.append(name)
            fn()
        status, code = "ok", EXIT_OK
    except (StageAbort, ArtifactError) as exc:
        status, code = "abort", EXIT_ABORT
        rep.error = f"{type(exc).__name__}: {exc}"
        rep.diagnostics["trace"] = traceback.format_exc(limit=6)
        if isinstance(exc, StageAbort):
            rep.diagnostics["stage"] = exc.stage
            rep.diagnostics.update({"abort": exc.diagnostics})
    final = rt.audit("final")
    if status == "ok":
        final.claim("stage_order", tuple(rt.stages_run) == STAGE_ORDER, list(rt.stages_run), list(STAGE_ORDER))
        left = sum(1 for x in rt.coloring.colors if x is None)
        final.claim("complete", left == 0, left, 0)
        edge = properness_scan(g, rt.coloring)
        final.claim("proper", edge is None, edge, None)
        viol = rt.ledger.violations()
        final.claim("cc.per_step", not viol, len(viol), 0)
        rep.diagnostics["cumulative"] = cumulative_audit(rt, final)
        try:
            require_claims(rt.audits)
            final.claim("claims_registered", True, len(rt.audits), len(rt.audits))
        except AssertionError as exc:
            final.claim("claims_registered", False, str(exc), None)
        kinds = ("deterministic", "statistical") if config.audit == "strict" else ("deterministic",)
        failed = [f"{a.stage}:{c_.claim_id}" for a in rt.audits for c_ in a.failures(kinds)]
        if failed:
            status, code = "audit_failed", EXIT_AUDIT
            rep.error = f"audit claims failed: {failed[:10]}"
    rep.success = status == "ok"
    rep.status, rep.exit_code = status, code
    rep.stage_order = list(rt.stages_run)
    rep.rounds = dict(rt.rounds)
    rep.components = [o.summary() for o in rt.outcomes if o.occurred_pre]
    rep.largest_component = max((o.largest_component for o in rt.outcomes), default=0)
    rep.ledger = rt.ledger.summary()
    rep.audits = [a.as_dict() for a in rt.audits]
    if config.keep_coloring and (rep.success or properness_scan(g, rt.coloring) is None):
        rep.coloring = list(rt.coloring.colors)
    rep.diagnostics["ledger_steps"] = [
        {"label": st.label, "budget": st.budget, "peak": st.peak} for st in rt.ledger.steps]
    rep.wall_time = time.perf_counter() - t0
    rep._runtime = rt  # not serialized; lets tests inspect ledger and coloring
    return rep


# -- batches ---------------------------------------------------------------------

def wilson_interval(successes: int, n: int, z: float = 1.959963984540054):
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


@dataclass
class BatchReport:
    seeds: List[int]
    reports: List[RunReport]

    def aggregate(self) -> Dict:
        n = len(self.reports)
        ok = sum(r.success for r in self.reports)
        comps = [r.largest_component for r in self.reports]
        util = [r.ledger.get("max_utilization", 0.0) for r in self.reports if r.ledger]
        rounds: Dict[str, List[int]] = {}
        for r in self.reports:
            for s, t in r.rounds.items():
                rounds.setdefault(s, []).append(t)
        codes: Dict[str, int] = {}
        for r in self.reports:
            codes[str(r.exit_code)] = codes.get(str(r.exit_code), 0) + 1
        return {
            "runs": n,
            "successes": ok,
            "success_rate": ok / n if n else 0.0,
            "wilson95": wilson_interval(ok, n),
            "exit_codes": codes,
            "largest_component": {"median": statistics.median(comps) if comps else 0,
                                  "max": max(comps, default=0), "values": comps},
            "largest_component_fraction_median": statistics.median(
                [r.largest_component / r.n for r in self.reports if r.n]) if n else 0.0,
            "max_cc_utilization": max(util, default=0.0),
            "rounds": {s: {"mean": statistics.fmean(v), "max": max(v)} for s, v in sorted(rounds.items())},
            "wall_time": {"mean": statistics.fmean([r.wall_time for r in self.reports]) if n else 0.0,
                          "max": max((r.wall_time for r in self.reports), default=0.0)},
        }

    def to_json(self, **kw) -> str:
        return json.dumps({"aggregate": self.aggregate(), "seeds": self.seeds,
                           "reports": [r.as_dict() for r in self.reports]}, default=_json_default, **kw)


def _run_one(cfg: RunConfig) -> RunReport:
    rep = run_pipeline(cfg)
    rep.__dict__.pop("_runtime", None)
    return rep


def run_batch(config: RunConfig, workers: int = 1, seeds: Optional[Sequence[int]] = None) -> BatchReport:
    seeds = list(seeds) if seeds is not None else [config.seed + i * config.seed_stride for i in range(config.batch)]
    cfgs = [config.for_seed(s) for s in seeds]
    if workers > 1 and len(cfgs) > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(workers) as pool:
            reports = pool.map(_run_one, cfgs, chunksize=1)
    else:
        reports = [_run_one(c) for c in cfgs]
    return BatchReport(seeds, reports)


def replay(report: Dict, graph: Graph, dec: Decomposition, c: int) -> Dict:
    """Offline re-validation of a stored report against its input files."""
    out = {"coloring_present": report.get("coloring") is not None}
    if not out["coloring_present"]:
        out["valid"] = False
        return out
    col = PartialColoring(graph.n, c, report["coloring"])
    out["complete"] = all(x is not None for x in col.colors)
    out["proper"] = properness_scan(graph, col) is None
    out["stage_order"] = tuple(report.get("stage_order", ())) == STAGE_ORDER
    out["valid"] = out["complete"] and out["proper"] and out["stage_order"]
    return out


def flagship_params(delta: int = 64, n: int = 5000, seed: int = 0) -> GenParams:
    """The generated instance family used by the acceptance batch."""
    cq = max(1, n // (4 * delta))
    return GenParams(n=n, delta=delta, cliques_H=cq, cliques_L=cq, seed=seed, cross_edges=2 * cq,
                     fill_BH=n // 50, fill_BL=n // 50)
