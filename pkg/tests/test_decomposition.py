import dataclasses
import itertools

import pytest

from artifact.core import AnalysisConstants, Graph, min_colors, write_graph
from artifact.decomposition import (CliqueInfo, Decomposition, GenParams, antiedge_count, certificate_check,
                                    compute_big_plus, external_neighbors, generate, read_decomposition, validate,
                                    write_decomposition)
from artifact.errors import CapacityError, InfeasibleParams, StructuralError

DESK = AnalysisConstants.desk()


@pytest.fixture(scope="module")
def inst():
    p = GenParams(n=600, delta=36, cliques_H=2, cliques_L=2, seed=5, cross_edges=4, fill_BH=12, fill_BL=12)
    c = min_colors(36)
    g, d = generate(dataclasses.replace(p, c=c), DESK.effective())
    return g, d, c


def test_generated_instance_validates(inst):
    g, d, c = inst
    rep = validate(g, d, c, DESK)
    assert rep.passed, rep.to_json()
    assert g.max_degree() <= g.delta


def test_two_AL_cliques_example():
    c = min_colors(36)  # k_36 = 4, so c = 33
    g, d = generate(GenParams(n=600, delta=36, c=c, cliques_L=2, seed=1, fill_BL=5), DESK.effective())
    assert len(d.A_L) == 2 and validate(g, d, c, DESK).passed


def test_pure_sparse():
    g, d = generate(GenParams(n=400, delta=32, seed=2), DESK.effective())
    assert not d.B_H and not d.B_L and not d.cliques
    assert validate(g, d, min_colors(32), DESK).passed


def test_generator_is_deterministic(tmp_path):
    p = GenParams(n=500, delta=32, cliques_H=1, cliques_L=1, seed=9, fill_BH=4, fill_BL=4)
    outs = []
    for tag in "ab":
        g, d = generate(p, DESK.effective())
        write_graph(tmp_path / f"{tag}.g", g, min_colors(32))
        write_decomposition(tmp_path / f"{tag}.d", d)
        outs.append(((tmp_path / f"{tag}.g").read_bytes(), (tmp_path / f"{tag}.d").read_bytes()))
    assert outs[0] == outs[1]


def test_generator_rejects_infeasible():
    with pytest.raises(InfeasibleParams):
        generate(GenParams(n=50, delta=32, cliques_H=3), DESK.effective())
    with pytest.raises(InfeasibleParams):
        generate(GenParams(n=500, delta=32, c=10), DESK.effective())


def test_decomposition_roundtrip(tmp_path, inst):
    _, d, _ = inst
    write_decomposition(tmp_path / "d.txt", d)
    d2 = read_decomposition(tmp_path / "d.txt")
    assert (d2.S, d2.B_H, d2.B_L) == (d.S, d.B_H, d.B_L) and d2.cliques == d.cliques


@pytest.mark.parametrize("text", ["S 1\nBH\n", "S 0\nBH\nBL\nAH 0: 1 2 | 3\n", "S 0\nBH\nBL\nXX 1\n", "S a\nBH\nBL\n"])
def test_read_decomposition_malformed(tmp_path, text):
    p = tmp_path / "d.txt"
    p.write_text(text)
    with pytest.raises(StructuralError):
        read_decomposition(p)


# -- mutation suite ---------------------------------------------------------------
# Each mutation injects one fault into a valid instance and names the rules
# that must fire.  "structure" means the partition itself is rejected.

def _edit(g, add=(), remove=()):
    adj = [set(a) for a in g.adj]
    for u, v in remove:
        adj[u].discard(v)
        adj[v].discard(u)
    for u, v in add:
        adj[u].add(v)
        adj[v].add(u)
    return Graph(g.n, adj, g.delta)


def _redeclare(d, **kw):
    parts = dict(S=d.S, B_H=d.B_H, B_L=d.B_L, cliques=list(d.cliques))
    parts.update(kw)
    return Decomposition(parts["S"], parts["B_H"], parts["B_L"], parts["cliques"])


def _quiet_S(g, d, count, avoid=()):
    """S vertices of low degree with no neighbor in `avoid`, pairwise non-adjacent."""
    out = []
    for v in sorted(d.S):
        if g.degree(v) <= 12 and not (g.nbrs[v] & set(avoid)) and all(u not in g.nbrs[v] for u in out):
            out.append(v)
            if len(out) == count:
                return out
    raise AssertionError("instance too small for this mutation")


def _with_clique(d, i, **kw):
    return [dataclasses.replace(q, **kw) if q.id == i else q for q in d.cliques]


def m_clique_edge(g, d, c):
    q = d.A_H[0]
    a, b = sorted(q.members)[:2]
    return _edit(g, remove=[(a, b)]), d, {"a"}, (a, b)


def m_all_edge(g, d, c):
    q = next(q for q in d.cliques if q.all_i)
    w, a = min(q.all_i), min(q.members)
    return _edit(g, remove=[(w, a)]), d, {"b"}, (w, a)


def m_all_count(g, d, c):
    q = next(q for q in d.A_H if q.all_i)
    w = min(q.all_i)
    return g, _redeclare(d, cliques=_with_clique(d, q.id, all_i=q.all_i - {w})), {"b"}, (q.id,)


def m_big_plus_declared(g, d, c):
    q = d.A_H[0]
    w = min(d.S)
    return g, _redeclare(d, cliques=_with_clique(d, q.id, big_plus=q.big_plus | {w})), {"c"}, None


def m_big_plus_not_clique(g, d, c):
    # with a small Big+ threshold, two non-adjacent S vertices each reaching 3 members qualify
    q = d.A_H[0]
    w1, w2 = _quiet_S(g, d, 2, avoid=q.members)
    mem = [a for a in sorted(q.members) if len(external_neighbors(a, q, g)) <= 3][:3]
    g2 = _edit(g, add=[(w, a) for w in (w1, w2) for a in mem])
    k = AnalysisConstants.desk(big_plus_coeff=0.1)  # threshold 0.1 * 36^0.9 ~ 2.5
    cl = _with_clique(d, q.id, big_plus=frozenset(compute_big_plus(g2, q, k.effective())))
    return g2, _redeclare(d, cliques=cl), {"c"}, (w1, w2), k


def m_dense_S(g, d, c):
    # an S vertex whose Delta S-neighbors form a clique: zero anti-edges
    D = g.delta
    v = min(d.S)
    U = [u for u in sorted(d.S) if u != v][:D]
    adj = [set(a) for a in g.adj]
    for u in list(adj[v]):
        adj[u].discard(v)
    adj[v] = set(U)
    for u in U:
        adj[u].add(v)
    for a, b in itertools.combinations(U, 2):
        adj[a].add(b)
        adj[b].add(a)
    return Graph(g.n, adj, D), d, {"1"}, (v,)


def m_BH_outside(g, d, c):
    fill = sorted(d.B_H - d.clique_vertices() - {w for q in d.cliques for w in q.all_i})
    v = fill[0]
    S = _quiet_S(g, d, c, avoid=[v])
    return _edit(g, add=[(v, u) for u in S]), d, {"2"}, (v,)


def m_AH_external(g, d, c):
    q = d.A_H[0]
    a = min(q.members)
    bound = int(DESK.effective().ext_bound_H(g.delta))
    S = _quiet_S(g, d, bound + 1, avoid=q.members)
    return _edit(g, add=[(a, u) for u in S]), d, {"3"}, (a,)


def m_BL_unabsorbed(g, d, c):
    fill = sorted(d.B_L - {w for q in d.cliques for w in q.all_i})
    v = fill[0]
    S = _quiet_S(g, d, c + 5, avoid=[v])
    return _edit(g, add=[(v, u) for u in S]), d, {"4"}, (v,)


def m_AL_external(g, d, c):
    q = d.A_L[0]
    a = min(q.members)
    bound = int(DESK.effective().ext_bound_L(g.delta))
    S = _quiet_S(g, d, bound + 1, avoid=q.members)
    return _edit(g, add=[(a, u) for u in S]), d, {"5"}, (a,)


def m_partition_gap(g, d, c):
    v = min(d.S)
    return g, _redeclare(d, S=d.S - {v}), "structure", None


def m_all_outside_B(g, d, c):
    q = d.A_H[0]
    w = min(d.S)
    return g, _redeclare(d, cliques=_with_clique(d, q.id, all_i=q.all_i | {w})), "structure", None


MUTATIONS = [m_clique_edge, m_all_edge, m_all_count, m_big_plus_declared, m_big_plus_not_clique, m_dense_S,
             m_BH_outside, m_AH_external, m_BL_unabsorbed, m_AL_external, m_partition_gap,
             m_all_outside_B]


def run_mutation(fn, inst):
    g, d, c = inst
    out = fn(g, d, c)
    g2, d2, expect, witness = out[:4]
    k = out[4] if len(out) > 4 else DESK
    if expect == "structure":
        with pytest.raises(StructuralError):
            validate(g2, d2, c, k)
        return True
    rep = validate(g2, d2, c, k)
    assert rep.rules() == expect, (fn.__name__, rep.to_json())
    if witness is not None:
        assert any(tuple(v.witness) == tuple(witness) for v in rep.violations), (fn.__name__, rep.to_json())
    return True


@pytest.mark.parametrize("fn", MUTATIONS, ids=lambda f: f.__name__[2:])
def test_mutation_detected(fn, inst):
    assert run_mutation(fn, inst)


def test_dense_S_reports_zero_antiedges(inst):
    g, d, c = inst
    g2, d2, _, (v,) = m_dense_S(g, d, c)
    hit = [x for x in validate(g2, d2, c, DESK).violations if x.witness == (v,)]
    assert hit and hit[0].measured == 0
    assert antiedge_count(g2, [u for u in g2.adj[v] if u in d.S]) == 0


# -- external neighbors ---------------------------------------------------------------

def test_external_neighbors_examples():
    # clique {0,1,2}; All = {3} complete to it; 4 in B_L hangs off vertex 1
    g = Graph.from_edges(5, [(0, 1), (0, 2), (1, 2), (3, 0), (3, 1), (3, 2), (1, 4)], 4)
    q = CliqueInfo(0, frozenset({0, 1, 2}), frozenset({3}), frozenset(), "L")
    assert external_neighbors(0, q, g) == set()
    assert external_neighbors(1, q, g) == {4}
    assert external_neighbors(2, q, g) == set()


# -- certificate ------------------------------------------------------------------------

def complete(n):
    return [(a, b) for a in range(n) for b in range(a + 1, n)]


def test_certificate_K5():
    assert certificate_check(Graph.from_edges(5, complete(5), 4), 4) is not None


def test_certificate_C5():
    assert certificate_check(Graph.from_edges(5, [(i, (i + 1) % 5) for i in range(5)], 2), 3) is None


def test_certificate_K4_pendant():
    g = Graph.from_edges(5, complete(4) + [(3, 4)], 4)
    assert certificate_check(g, 3) in {0, 1, 2, 3}


def test_certificate_capacity():
    with pytest.raises(CapacityError):
        certificate_check(Graph.from_edges(6, complete(6), 5), 3, cap=4)


def test_certificate_on_generated(inst):
    g, _, c = inst
    assert certificate_check(g, c) is None
