import json

import pytest

from artifact.cli import main
from artifact.core import min_colors, read_graph
from artifact.pipeline import EXIT_ABORT, EXIT_INPUT, EXIT_OK

GEN = ["--n", "600", "--delta", "36", "--cliques-H", "2", "--cliques-L", "2", "--cross-edges", "4",
       "--fill-BH", "12", "--fill-BL", "12"]


@pytest.fixture
def files(tmp_path):
    g, d = tmp_path / "g.txt", tmp_path / "d.txt"
    assert main(["generate", *GEN, "--seed", "3", "--out-graph", str(g), "--out-decomposition", str(d)]) == EXIT_OK
    return g, d


def test_generate_writes_legal_c(tmp_path, capsys):
    g, d = tmp_path / "g.txt", tmp_path / "d.txt"
    assert main(["generate", *GEN, "--out-graph", str(g), "--out-decomposition", str(d)]) == EXIT_OK
    graph, c = read_graph(g)
    assert c == min_colors(36) and graph.max_degree() <= 36
    assert json.loads(capsys.readouterr().out)["c"] == c


def test_validate(files, tmp_path):
    g, d = files
    out = tmp_path / "v.json"
    assert main(["validate", str(g), str(d), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["violations"] == []
    # dropping a vertex from the partition is an input error
    lines = d.read_text().splitlines()
    lines[0] = " ".join(lines[0].split()[:-1])
    d.write_text("\n".join(lines) + "\n")
    assert main(["validate", str(g), str(d)]) == EXIT_INPUT


def test_run_and_replay(files, tmp_path, capsys):
    g, d = files
    rep = tmp_path / "r.json"
    assert main(["run", "--graph", str(g), "--decomposition", str(d), "--seed", "3", "--out", str(rep)]) == EXIT_OK
    report = json.loads(rep.read_text())
    assert report["status"] == "ok" and report["exit_code"] == 0
    assert main(["replay", str(rep), str(g), str(d)]) == EXIT_OK
    report["coloring"][0] = None
    rep.write_text(json.dumps(report))
    assert main(["replay", str(rep), str(g), str(d)]) == 3


def test_run_from_generator_flags(tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", *GEN, "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["success"]


def test_run_rejects_low_c(capsys):
    assert main(["run", *GEN, "--c", str(min_colors(36) - 1)]) == EXIT_INPUT
    assert "below" in capsys.readouterr().err


def test_missing_input_and_bad_override(capsys, tmp_path):
    assert main(["run"]) == EXIT_INPUT
    assert main(["run", *GEN, "--override", "nonsense"]) == EXIT_INPUT
    assert main(["run", *GEN, "--override", "no_such_constant=1"]) == EXIT_INPUT
    assert main(["validate", str(tmp_path / "missing"), str(tmp_path / "missing")]) == EXIT_INPUT


def test_override_file(tmp_path):
    k = tmp_path / "k.json"
    k.write_text(json.dumps({"rct_activation": 0.0}))
    assert main(["run", *GEN, "--constants", str(k)]) == EXIT_INPUT
    k.write_text(json.dumps({"rct_activation": 0.5}))
    out = tmp_path / "r.json"
    assert main(["run", *GEN, "--seed", "3", "--constants", str(k), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["constants"]["rct_activation"] == 0.5


def test_abort_exit_code(tmp_path):
    # near-Delta sparse vertices lack slack at this scale: an explicit abort, no coloring
    out = tmp_path / "r.json"
    code = main(["run", "--n", "2000", "--delta", "64", "--heavy-fraction", "0.02", "--out", str(out)])
    report = json.loads(out.read_text())
    assert code == report["exit_code"] == EXIT_ABORT and report["status"] == "abort"
    assert report["diagnostics"]["stage"]


def test_batch(capsys, tmp_path):
    out = tmp_path / "b.json"
    assert main(["batch", *GEN, "--count", "3", "--seed", "5", "--out", str(out)]) == EXIT_OK
    agg = json.loads(capsys.readouterr().out)
    assert agg["runs"] == 3 and 0 <= agg["wilson95"][0] <= agg["success_rate"] <= agg["wilson95"][1]
    assert json.loads(out.read_text())["seeds"] == [5, 6, 7]
