import json

import numpy as np
import pytest

from helpers import random_graph
from nuhtrack import cli, io
from nuhtrack.config import Config

W_TXT = "1: 1.0\n2: 1.0 1.0 1.0\n3: 1.0\n4: 1.0\n"


@pytest.fixture(scope="module")
def syn(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "syn"
    assert cli.main(["synth", "--scenario", "cross2", "--seed", "3", "--frames", "21", "--out-dir", str(d)]) == 0
    return d


def test_missing_required_flag_is_usage_error():
    with pytest.raises(SystemExit) as e:
        cli.main(["track", "--config", "c.json", "--out", "r.txt"])
    assert e.value.code == cli.EXIT_USAGE == 2


def test_missing_input_file_is_usage_error(tmp_path, syn):
    code = cli.main(["track", "--det", str(tmp_path / "nope.txt"), "--config", str(syn / "config.json"),
                     "--out", str(tmp_path / "r.txt")])
    assert code == 2


def test_bad_file_is_format_error(tmp_path, syn, capsys):
    bad = tmp_path / "det.txt"
    bad.write_text("1,-1,0,0,5\n")
    code = cli.main(["track", "--det", str(bad), "--config", str(syn / "config.json"), "--out", str(tmp_path / "r.txt")])
    assert code == cli.EXIT_FORMAT == 3
    assert "det.txt:1:" in capsys.readouterr().err


def test_synth_is_byte_identical(tmp_path):
    for k in (1, 2):
        assert cli.main(["synth", "--scenario", "cross2", "--seed", "5", "--frames", "12",
                         "--out-dir", str(tmp_path / str(k))]) == 0
    names = sorted(p.name for p in (tmp_path / "1").iterdir())
    assert names == ["config.json", "det.txt", "emb.bin", "gt.txt", "hist.bin", "pts.txt"]
    for n in names:
        assert (tmp_path / "1" / n).read_bytes() == (tmp_path / "2" / n).read_bytes()


def test_synth_rejects_unknown_scenario(tmp_path):
    assert cli.main(["synth", "--scenario", "nope", "--seed", "1", "--out-dir", str(tmp_path)]) == 2


def test_track_then_eval(tmp_path, syn, capsys):
    res = tmp_path / "res.txt"
    code = cli.main(["track", "--det", str(syn / "det.txt"), "--emb", str(syn / "emb.bin"), "--hist",
                     str(syn / "hist.bin"), "--pts", str(syn / "pts.txt"), "--config", str(syn / "config.json"),
                     "--out", str(res)])
    assert code == 0
    h = Config().hash()
    assert res.read_text().splitlines()[0].startswith("# nuhtrack ") and f"config={h}" in res.read_text()
    code = cli.main(["eval", "--results", str(res), "--gt", str(syn / "gt.txt"), "--report", str(tmp_path / "rep")])
    assert code == 0
    data = json.loads((tmp_path / "rep.json").read_text())
    assert data["metrics"]["mota"] > 0.9 and f"config={h}" in data["meta"][0]
    assert (tmp_path / "rep.csv").is_file() and (tmp_path / "rep.png").is_file()
    assert "MOTA" in capsys.readouterr().out


def test_eval_iou_validated(tmp_path, syn):
    code = cli.main(["eval", "--results", str(syn / "gt.txt"), "--gt", str(syn / "gt.txt"), "--iou", "1.5",
                     "--report", str(tmp_path / "rep")])
    assert code == 2


def _graph_file(tmp_path, n):
    G = random_graph(np.random.default_rng(n), n)
    io.write_graph(tmp_path / "g.txt", G)
    (tmp_path / "w.txt").write_text(W_TXT)
    return tmp_path / "g.txt", tmp_path / "w.txt"


def test_search_alpha_validated(tmp_path):
    g, w = _graph_file(tmp_path, 6)
    assert cli.main(["search", "--graph", str(g), "--weights", str(w), "--alpha-hat", "1",
                     "--out", str(tmp_path / "s.txt")]) == 2


def test_search_and_hidden_oracle(tmp_path):
    g, w = _graph_file(tmp_path, 8)
    out = tmp_path / "s.txt"
    assert cli.main(["search", "--graph", str(g), "--weights", str(w), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# nuhtrack") and lines[1] == "rank,theta,start,converged,nodes"
    assert cli.main(["search", "--graph", str(g), "--weights", str(w), "--oracle", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[2].split(",")[2] == "-1"
    assert "--oracle" not in cli.build_parser().format_help()


def test_oracle_refuses_large_graph(tmp_path):
    g, w = _graph_file(tmp_path, 17)
    assert cli.main(["search", "--graph", str(g), "--weights", str(w), "--oracle",
                     "--out", str(tmp_path / "s.txt")]) == 3


def test_search_weight_arity_mismatch_is_format_error(tmp_path):
    g, w = _graph_file(tmp_path, 6)
    w.write_text("1: 1.0\n2: 1.0\n")
    assert cli.main(["search", "--graph", str(g), "--weights", str(w), "--out", str(tmp_path / "s.txt")]) == 3


def test_learn_writes_weights(tmp_path):
    root = tmp_path / "train"
    assert cli.main(["synth", "--scenario", "parallel2", "--seed", "2", "--frames", "14",
                     "--out-dir", str(root / "clip")]) == 0
    out = tmp_path / "w.txt"
    code = cli.main(["learn", "--train-dir", str(root), "--config", str(root / "clip" / "config.json"),
                     "--out-weights", str(out)])
    assert code == 0
    W, meta = io.read_weights(out)
    assert meta["config"] == Config().hash() and len(W.per_degree) == 4


def test_bad_threads():
    assert cli.main(["--threads", "0", "synth", "--scenario", "cross2", "--seed", "1", "--out-dir", "x"]) == 2
