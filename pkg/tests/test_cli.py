import csv
import json

import pytest

from mspoe.cli import main
from mspoe.harness.evaluate import reports_from_csv
from mspoe.harness.fixtures import INDUCTION_PARAMS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_unknown_encoder_is_usage_error(capsys):
    code, _, err = run(capsys, "eval", "--encoder", "alibi", "--n-samples", "1")
    assert code == 2
    for form in ("rope", "pi:R", "self-extend:G,W", "mspoe"):
        assert form in err


def test_bad_strategy_and_empty_ratios(capsys):
    assert run(capsys, "run", "--strategy", "random")[0] == 2
    assert run(capsys, "sweep", "--ratios", ",", "--n-samples", "1")[0] == 2


def test_missing_weights_is_runtime_error(capsys, tmp_path):
    code, _, err = run(capsys, "run", "--model", str(tmp_path / "none.mspe"), "--prompt", "1,2")
    assert code == 1 and "WeightFileNotFoundError" in err


def test_eval_pi_one_equals_rope(capsys, tmp_path):
    paths = {}
    for enc in ("rope", "pi:1.0"):
        paths[enc] = tmp_path / f"{enc}.csv"
        assert run(capsys, "eval", "--encoder", enc, "--n-samples", "5", "--out-csv", str(paths[enc]))[0] == 0
    rows = {enc: list(csv.DictReader(open(p))) for enc, p in paths.items()}
    strip = lambda rs: [{k: v for k, v in r.items() if k != "encoder_label"} for r in rs]
    assert strip(rows["rope"]) == strip(rows["pi:1.0"])
    assert rows["pi:1.0"][0]["encoder_label"] == "pi:1"


def test_eval_json_is_self_describing(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert run(capsys, "eval", "--encoder", "mspoe", "--strategy", "random:4", "--n-samples", "2",
               "--out-json", str(out))[0] == 0
    rep = json.load(open(out))["reports"][0]
    assert rep["encoder_label"] == "mspoe[random:4]"
    assert rep["config"]["cli"]["strategy"] == "random:4"
    assert rep["config"]["pipeline"]["r_max"] == 1.8


def test_sweep_csv_round_trip(capsys, tmp_path):
    csv_path, json_path = tmp_path / "s.csv", tmp_path / "s.json"
    code, out, _ = run(capsys, "sweep", "--n-samples", "3", "--out-csv", str(csv_path), "--out-json", str(json_path))
    assert code == 0 and "pi:2.5" in out
    doc = json.load(open(json_path))
    assert doc["ratios"] == [0.5, 1.0, 1.5, 2.0, 2.5]
    parsed = reports_from_csv(csv_path.read_text())
    for rep in doc["reports"]:
        assert parsed[rep["encoder_label"]]["per_position_accuracy"] == rep["per_position_accuracy"]


def test_sweep_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run(capsys, "sweep", "--ratios", "1.0,1.5", "--n-samples", "3", "--out-csv", str(p))
    assert a.read_bytes() == b.read_bytes()


def profile_rows(capsys, tmp_path, *extra):
    out = tmp_path / "p.json"
    assert run(capsys, "profile", "--relevant-index", "3", "--out-json", str(out), *extra)[0] == 0
    return json.load(open(out))


def test_profile_content_head_max(capsys, tmp_path):
    doc = profile_rows(capsys, tmp_path)
    layer1 = [r for r in doc["scores"] if r["layer"] == 1]
    best = max(layer1, key=lambda r: r["score"])
    assert best["head"] == INDUCTION_PARAMS.content_head and best["ratio"] == 1.2


def test_profile_sequential_and_huge_alpha(capsys, tmp_path):
    seq = profile_rows(capsys, tmp_path, "--strategy", "sequential")
    assert seq["ratios"]["ratios"] == [[1.2, 1.5, 1.8]] * 2
    huge = profile_rows(capsys, tmp_path, "--alpha", "1000000")
    assert all(r["score"] == 0.0 for r in huge["scores"])
    assert huge["ratios"]["ratios"] == [[1.2, 1.5, 1.8]] * 2


def test_run_dumps(capsys, tmp_path):
    out, snap, ratios = tmp_path / "o.json", tmp_path / "snap.json", tmp_path / "r.json"
    code, stdout, _ = run(capsys, "run", "--relevant-index", "7", "--out", str(out),
                          "--dump-snapshot", str(snap), "--dump-ratios", str(ratios))
    assert code == 0
    doc = json.load(open(out))
    assert doc["correct"] and stdout.split() == [str(t) for t in doc["output_tokens"]]
    assert json.load(open(ratios)) == doc["ratios"]
    assert json.load(open(snap))["context_len"] == len(doc["prompt"])


def test_run_self_extend_prompt(capsys):
    code, out, _ = run(capsys, "run", "--encoder", "self-extend:2,4", "--prompt", "3,40,5,41,3", "--max-new", "2")
    assert code == 0 and len(out.split()) == 2


def test_gen_weights_and_inspect(capsys, tmp_path):
    path = tmp_path / "rand.mspe"
    assert run(capsys, "gen-weights", "--kind", "random", "--out", str(path), "--n-heads", "2")[0] == 0
    code, out, _ = run(capsys, "inspect", str(path))
    doc = json.loads(out)
    assert code == 0 and doc["config"]["n_heads"] == 2
    assert doc["tensors"]["token_embedding"]["shape"] == [64, 16]
    code, out, _ = run(capsys, "run", "--model", str(path), "--encoder", "rope", "--prompt", "1,2,3")
    assert code == 0


def test_bad_weights_file(capsys, tmp_path):
    path = tmp_path / "bad.mspe"
    path.write_bytes(b"MSPE\x01")
    code, _, err = run(capsys, "inspect", str(path))
    assert code == 1 and "bad header" in err
