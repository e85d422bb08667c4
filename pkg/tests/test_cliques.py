import random

import pytest
from hypothesis import given, settings, strategies as st

from artifact.core import AnalysisConstants, Graph
from artifact.decomposition import CliqueInfo, Decomposition
from artifact.errors import HallViolation, StageAbort
from artifact.harness import AuditReport
from artifact.pipeline import flagship_params
from artifact.runtime import Runtime
from artifact.stage_cliques import (DefectiveCliqueColoring, _into, _Layout, _orient, color_cliques, execute_swaps,
                                    hall_matching, sct, sct_shattered, subsample_candidates, swappable, unsafe,
                                    unsafe_bruteforce)
from artifact.stage_slack import PiousContext, color_with_much_slack
from artifact.stage_sparse import color_sparse
from conftest import make_runtime
from oracles import max_matching_size, monochromatic_edges, replay_colors, swappable_recount, unsafe_three_rules


def two_k6(bridge=()):
    """Cliques {0..5} and {6..11}, optional edges between them, c = 6."""
    K = [(a, b) for a in range(6) for b in range(a + 1, 6)]
    edges = K + [(a + 6, b + 6) for a, b in K] + list(bridge)
    g = Graph.from_edges(12, edges, 5 + (1 if bridge else 0))
    qs = [CliqueInfo(0, frozenset(range(6)), frozenset(), frozenset(), "H"),
          CliqueInfo(1, frozenset(range(6, 12)), frozenset(), frozenset(), "H")]
    d = Decomposition(frozenset(), frozenset(), frozenset(), qs)
    rt = Runtime(g, d, AnalysisConstants.desk().effective(), seed=0, strict=True, num_colors=6)
    return rt, qs


def cyc(*firsts):
    """gamma giving clique 0 colors starting at firsts[0] cyclically, clique 1 from firsts[1]."""
    return {q * 6 + k: 1 + (firsts[q] - 1 + k) % 6 for q in (0, 1) for k in range(6)}


def dcc_of(gamma, unhappy, post=frozenset()):
    return DefectiveCliqueColoring(dict(gamma), frozenset(post), {i: frozenset(s) for i, s in unhappy.items()})


# -- synchronized trial ------------------------------------------------------------

def test_sct_without_external_edges_is_happy_and_rainbow():
    rt, qs = two_k6()
    for rnd in range(5):
        dcc = sct(rt, qs, rnd=rnd)
        assert dcc.all_unhappy() == set() and dcc.arcs == []
        for q in qs:
            assert sorted(dcc.gamma[v] for v in q.members) == [1, 2, 3, 4, 5, 6]


def test_into_orientation():
    assert _into(2, 1, frozenset()) and not _into(1, 2, frozenset())
    # a retracted clique takes every edge from the rest
    assert _into(1, 2, frozenset({1})) and not _into(2, 1, frozenset({1}))
    assert _into(2, 1, frozenset({1, 2}))


def test_orient_blames_the_higher_clique():
    rt, qs = two_k6(bridge=[(0, 6)])
    lay = _Layout(rt, qs)
    gamma = cyc(1, 1)  # 0 and 6 both get 1
    d = _orient(lay, gamma, frozenset())
    assert d.unhappy == {0: frozenset(), 1: frozenset({6})} and d.arcs == [(0, 6)]
    d = _orient(lay, gamma, frozenset({0}))
    assert d.unhappy == {0: frozenset({0}), 1: frozenset()}


def test_sct_shattered_single_clique():
    rt, qs = two_k6()
    rep = AuditReport("x")
    dcc = sct_shattered(rt, qs[:1], "H", rep)
    assert dcc.all_unhappy() == set() and dcc.post == frozenset() and not rep.rejected


# -- swappability and safety -----------------------------------------------------------

def test_swappable_without_external_edges():
    rt, qs = two_k6()
    lay = _Layout(rt, qs)
    dcc = dcc_of(cyc(1, 1), {0: {0, 2}, 1: set()})
    assert swappable(0, lay, dcc) == {1, 3, 4, 5}


def test_swappable_excludes_clashing_members():
    rt, qs = two_k6(bridge=[(0, 6), (2, 7)])
    lay = _Layout(rt, qs)
    gamma = cyc(1, 2)  # 6 gets 2, 7 gets 3
    gamma[7], gamma[8] = 1, 3  # 7 now carries 0's color
    dcc = dcc_of(gamma, {0: {0}, 1: set()})
    # 1 is out (its color 2 sits at 0's neighbor 6), 2 is out (0's color 1 sits at 2's neighbor 7)
    assert swappable(0, lay, dcc) == {3, 4, 5}
    meas, lb = swappable_recount(rt.graph, qs[0], gamma, {0}, [None] * 12, set(range(12)))[0]
    assert (meas, lb) == (3, 3)


def test_unsafe_needs_cross_edges():
    rt, qs = two_k6()
    lay = _Layout(rt, qs)
    dcc = dcc_of(cyc(1, 1), {0: {0}, 1: {6}})
    sets = {0: frozenset({1, 2}), 6: frozenset({7, 8})}
    assert not any(unsafe(u, v, sets, lay, dcc) for v in (0, 6) for u in sets[v])


def test_unsafe_rule_one_witness():
    rt, qs = two_k6(bridge=[(0, 6)])
    lay = _Layout(rt, qs)
    gamma = cyc(1, 3)  # 6: 3, 7: 4, 8: 5, 9: 6, 10: 1, 11: 2
    dcc = dcc_of(gamma, {0: {0}, 1: {6}})
    # 6 is unhappy and might take gamma(11) = 2 = gamma(1): swapping 1 into 0 is unsafe
    assert unsafe(1, 0, {0: {1}, 6: {11}}, lay, dcc)
    assert not unsafe(1, 0, {0: {1}, 6: {7}}, lay, dcc)
    assert unsafe_bruteforce(1, 0, {0: {1}, 6: {11}}, lay, dcc)
    assert unsafe_three_rules(1, 0, {0: {1}, 6: {11}}, gamma, lay.clique_of, rt.graph)


@pytest.fixture(scope="module")
def traced():
    """Delta = 64 flagship instance with the A_H tier colored and its intermediates kept."""
    rt = make_runtime(flagship_params(64, 3000, seed=1), seed=1)
    color_sparse(rt)
    k = rt.consts
    color_with_much_slack(rt, PiousContext(rt.dec.B_H, k.ext_bound_H(rt.delta), "B_H"))
    rep = color_cliques(rt, "H")
    return rt, rep, rt.trace["A_H"]


@settings(max_examples=60)
@given(st.integers(0, 2**32))
def test_unsafe_agrees_with_rule_oracle(traced, seed):
    rt, _, tr = traced
    lay, dcc = tr["layout"], tr["dcc"]
    rng = random.Random(seed)
    tier = sorted(lay.clique_of)
    keys = rng.sample(tier, 40)
    sets = {v: frozenset(u for u in lay.mem[lay.clique_of[v]] if u != v and rng.random() < 0.3) for v in keys}
    for v in keys[:10]:
        for u in lay.mem[lay.clique_of[v]]:
            if u == v:
                continue
            want = unsafe_three_rules(u, v, sets, dcc.gamma, lay.clique_of, rt.graph)
            assert unsafe(u, v, sets, lay, dcc) == want == unsafe_bruteforce(u, v, sets, lay, dcc)


def test_swappable_recount_on_instance(traced):
    rt, _, tr = traced
    lay, dcc = tr["layout"], tr["dcc"]
    before = replay_colors(rt.graph.n, rt.ledger.steps, tr["swap_step"])
    members = set(lay.clique_of)
    checked = 0
    for i in lay.ids:
        got = swappable_recount(rt.graph, lay.info[i], dcc.gamma, dcc.unhappy[i], before, members)
        for v, (meas, lb) in got.items():
            assert meas == len(swappable(v, lay, dcc)) and meas >= lb
            checked += 1
    assert checked == len(dcc.all_unhappy()) > 0


# -- candidates -------------------------------------------------------------------------

def test_subsample_without_unhappy_vertices():
    rt, qs = two_k6()
    lay = _Layout(rt, qs)
    dcc = sct(rt, qs)
    rep = AuditReport("x")
    sysm = subsample_candidates(rt, lay, dcc, "H", rep)
    assert sysm.sets == {} and not rep.rejected


def test_candidate_floor_and_load(traced):
    rt, rep, tr = traced
    k, D = rt.consts, rt.delta
    sets = tr["system"].sets
    assert set(sets) == tr["dcc"].all_unhappy()
    assert min(len(s) for s in sets.values()) >= k.candidate_floor(D)
    loads = {}
    for s in sets.values():
        for u in s:
            loads[u] = loads.get(u, 0) + 1
    assert max(loads.values()) <= k.candidate_ceiling(D)
    names = {c.claim_id: c.passed for c in rep.checks}
    assert names["candidates.floor"] and names["candidates.load"] and names["candidates.safe"]


# -- matching -----------------------------------------------------------------------------

def test_hall_examples():
    assert hall_matching([1, 2], {1: {"a"}, 2: {"a", "b"}}) == {1: "a", 2: "b"}
    assert hall_matching([], {}) == {}
    with pytest.raises(HallViolation) as info:
        hall_matching([1, 2, 3], {1: {"a"}, 2: {"a"}, 3: {"b"}})
    X, N = info.value.hall_set, info.value.neighborhood
    assert len(N) < len(X) and set(N) == set().union(*({1: {"a"}, 2: {"a"}, 3: {"b"}}[x] for x in X))


def test_hall_random_systems_match_networkx():
    rng = random.Random(9)
    for _ in range(1000):
        ceiling = rng.randint(1, 3)
        floor = 2 * ceiling
        left = list(range(rng.randint(1, 12)))
        right = list(range(100, 100 + len(left) * 3))
        load = dict.fromkeys(right, 0)
        sets = {}
        for v in left:
            pool = [u for u in right if load[u] < ceiling]
            pick = rng.sample(pool, min(floor, len(pool)))
            for u in pick:
                load[u] += 1
            sets[v] = set(pick)
        if min(len(s) for s in sets.values()) < floor:
            continue
        m = hall_matching(left, sets)
        assert len(m) == len(left) == max_matching_size(left, sets)
        assert len(set(m.values())) == len(m) and all(m[v] in sets[v] for v in left)


def test_hall_saturates_on_instance(traced):
    _, _, tr = traced
    lay, dcc, sets, m = tr["layout"], tr["dcc"], tr["system"].sets, tr["matching"]
    for i in lay.ids:
        assert max_matching_size(sorted(dcc.unhappy[i]), sets) == len(dcc.unhappy[i])
    assert set(m) == dcc.all_unhappy()


# -- swaps -----------------------------------------------------------------------------------

def test_swaps_without_unhappy_commit_gamma():
    rt, qs = two_k6()
    dcc = sct(rt, qs)
    out = execute_swaps(rt, dcc, {}, "A_H:swap")
    assert out == dcc.gamma and rt.ledger.steps[-1].label == "A_H:swap" and rt.ledger.closed_at.keys() == {0, 1}
    assert not list(rt.coloring.conflicts(rt.graph))


def test_bad_swap_aborts():
    rt, qs = two_k6(bridge=[(0, 6)])
    dcc = dcc_of(cyc(1, 2), {0: {0}, 1: set()})
    with pytest.raises(StageAbort):
        execute_swaps(rt, dcc, {0: 1}, "A_H:swap")  # 0 would take 2, the color of 6
    assert rt.coloring.colored_count() == 0


def test_swaps_on_adjacent_cliques_are_proper(traced):
    rt, rep, tr = traced
    lay = tr["layout"]
    assert sum(1 for i in lay.ids if lay.adjC[i]) >= 10
    cols = replay_colors(rt.graph.n, rt.ledger.steps, tr["swap_step"] + 1)
    assert monochromatic_edges(rt.graph, cols) == []
    assert all(cols[v] is not None for v in lay.clique_of)
    assert not rep.rejected
