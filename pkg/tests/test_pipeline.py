import json
import math

import pytest

from artifact.core import AnalysisConstants, min_colors, write_graph
from artifact.decomposition import GenParams, generate, write_decomposition
from artifact.errors import DomainError
from artifact.pipeline import (EXIT_ABORT, EXIT_INPUT, EXIT_OK, STAGE_ORDER, RunConfig, flagship_params, replay,
                               run_batch, run_pipeline, wilson_interval)
from oracles import monochromatic_edges


def check_success(rep):
    assert rep.success and rep.exit_code == EXIT_OK and rep.status == "ok", rep.error
    assert tuple(rep.stage_order) == STAGE_ORDER
    cols = rep.coloring
    assert cols is not None and None not in cols and set(cols) <= set(range(1, rep.c + 1))
    assert monochromatic_edges(rep._runtime.graph, cols) == []
    for a in rep.audits:
        for c in a["checks"]:
            assert c["passed"] or c["kind"] == "analytic", (a["stage"], c)


def test_pure_sparse_run():
    rep = run_pipeline(RunConfig(gen=GenParams(n=800, delta=32, seed=1), seed=1))
    check_success(rep)
    steps = [s["label"] for s in rep.diagnostics["ledger_steps"]]
    assert not any(s.startswith(("B_", "A_")) for s in steps)


def test_flagship_run():
    rep = run_pipeline(RunConfig(gen=flagship_params(64, 5000, seed=0), seed=0))
    check_success(rep)
    assert rep.n == 5000 and rep.delta == 64 and rep.c == min_colors(64)
    assert rep.wall_time < 60


def test_one_below_legal_c_is_rejected():
    with pytest.raises(DomainError):
        RunConfig(gen=GenParams(n=500, delta=36, seed=1), c=min_colors(36) - 1)


def test_file_input_below_legal_c(tmp_path):
    g, d = generate(GenParams(n=400, delta=32, seed=2, c=min_colors(32)), AnalysisConstants.desk().effective())
    write_graph(tmp_path / "g", g, min_colors(32) - 1)
    write_decomposition(tmp_path / "d", d)
    rep = run_pipeline(RunConfig(graph_path=str(tmp_path / "g"), decomposition_path=str(tmp_path / "d")))
    assert rep.exit_code == EXIT_INPUT and not rep.success and rep.coloring is None


def test_config_shape_checks():
    with pytest.raises(DomainError):
        RunConfig()
    with pytest.raises(DomainError):
        RunConfig(graph_path="g")
    with pytest.raises(DomainError):
        RunConfig(gen=GenParams(n=10, delta=4), audit="loose")
    with pytest.raises(DomainError):
        RunConfig(gen=GenParams(n=10, delta=4), batch=0)


def test_abort_never_emits_an_improper_coloring():
    # heavy S vertices cannot reach the needed slack at this scale; the run must stop cleanly
    gen = GenParams(n=2000, delta=64, seed=0, heavy_fraction=0.02)
    rep = run_pipeline(RunConfig(gen=gen, seed=0))
    assert rep.exit_code == EXIT_ABORT and rep.status == "abort" and "trace" in rep.diagnostics
    if rep.coloring is not None:
        assert monochromatic_edges(rep._runtime.graph, rep.coloring) == []


def test_report_is_self_contained_json(small_params):
    rep = run_pipeline(RunConfig(gen=small_params, seed=3))
    d = json.loads(rep.to_json())
    assert d["schema"] and d["config"]["seed"] == 3 and d["constants"] and d["versions"]["python"]
    assert d["stage_order"] == list(STAGE_ORDER)


# -- batches and replay -------------------------------------------------------------

def test_batch_of_one_equals_run(small_params):
    cfg = RunConfig(gen=small_params, seed=3)
    single = run_pipeline(cfg)
    b = run_batch(cfg)
    (r,) = b.reports
    assert r.coloring == single.coloring and r.status == single.status and r.ledger == single.ledger
    agg = b.aggregate()
    assert agg["runs"] == 1 and agg["successes"] == int(single.success)
    assert agg["largest_component"]["values"] == [single.largest_component]


def test_same_seeds_same_aggregate(small_params):
    cfg = RunConfig(gen=small_params, seed=0, batch=4)

    def strip(a):
        return {k: v for k, v in a.items() if k != "wall_time"}

    assert strip(run_batch(cfg).aggregate()) == strip(run_batch(cfg).aggregate())


def score_bound(k, n, z, upper):
    """Endpoint of the score interval: the p0 where |k/n - p0| = z sqrt(p0 (1 - p0) / n), by bisection."""
    ph = k / n
    lo, hi = (ph, 1.0) if upper else (0.0, ph)
    f = lambda p0: abs(ph - p0) - z * math.sqrt(p0 * (1 - p0) / n)  # noqa: E731
    for _ in range(200):
        mid = (lo + hi) / 2
        inside = f(mid) <= 0
        if inside == upper:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@pytest.mark.parametrize("k,n", [(95, 100), (100, 100), (0, 20), (37, 41)])
def test_wilson_interval(k, n):
    z = 1.959963984540054
    lo, hi = wilson_interval(k, n)
    assert math.isclose(lo, score_bound(k, n, z, False), abs_tol=1e-9)
    assert math.isclose(hi, score_bound(k, n, z, True), abs_tol=1e-9)
    assert lo <= k / n <= hi
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_replay_roundtrip(tmp_path, small_params):
    cfg = RunConfig(gen=small_params, seed=3)
    rep = run_pipeline(cfg)
    g, d, c = cfg.load()
    stored = json.loads(rep.to_json())
    assert replay(stored, g, d, c)["valid"]
    x = stored["coloring"]
    u = next(u for u in range(g.n) if g.adj[u])
    x[u] = x[g.adj[u][0]]
    assert not replay(stored, g, d, c)["proper"]
    stored["coloring"] = None
    assert not replay(stored, g, d, c)["valid"]
