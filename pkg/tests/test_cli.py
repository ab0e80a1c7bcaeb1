import csv
import io
import json

import numpy as np
import pytest

from botsift.cli import run_cli
from botsift.dataset import read_csv, write_csv
from botsift.features import FEATURE_NAMES
from conftest import make_dataset


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, size=90)
    X = rng.normal(size=(90, 11))
    X[:, 1] = [(80, 443, 25)[v] for v in y]           # dPort separates classes
    ds = make_dataset(X, [("Normal", "Neris", "Rbot")[v] for v in y], schema=FEATURE_NAMES)
    path = tmp_path / "data.csv"
    write_csv(ds, path)
    return path


def run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO("".join(l + "\n" for l in text.splitlines()
                                               if not l.startswith("#")))))


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "rank", "--input", "x.csv", "--bogus")
    assert code == 1 and "usage:" in err


def test_missing_subcommand_and_bad_values(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "rank", "--input", "x.csv", "--bins", "1")[0] == 1
    assert run(capsys, "rank", "--input", "x.csv", "--features", "dPort,nope")[0] == 1
    assert run(capsys, "balance", "--input", "x.csv", "--cap", "0")[0] == 1


def test_missing_file_is_data_error(capsys, tmp_path):
    code, _, err = run(capsys, "rank", "--input", tmp_path / "none.csv")
    assert code == 2 and err.startswith("botsift rank:") and len(err.strip().splitlines()) == 1


def test_malformed_csv_is_data_error(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("label,a\nX,1,2\n")
    code, _, err = run(capsys, "rank", "--input", bad)
    assert code == 2 and "row 2" in err


def test_rank_csv_and_json(capsys, data_csv):
    code, out, _ = run(capsys, "rank", "--method", "gi", "--input", data_csv, "--seed", 3)
    assert code == 0
    assert out.startswith("# botsift 0.1.0 seed=3\n")
    table = rows(out)
    assert table[0] == ["feature", "score"] and len(table) == 12
    code, out, _ = run(capsys, "rank", "--method", "ig", "--input", data_csv, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["seed"] == 0 and doc["version"] == "0.1.0"
    assert max(doc["scores"], key=doc["scores"].get) == "dPort"


def test_seed_env_fallback(capsys, data_csv, monkeypatch):
    monkeypatch.setenv("BOTSIFT_SEED", "17")
    _, out, _ = run(capsys, "rank", "--input", data_csv)
    assert "seed=17" in out.splitlines()[0]
    _, out, _ = run(capsys, "rank", "--input", data_csv, "--seed", "2")
    assert "seed=2" in out.splitlines()[0]
    monkeypatch.setenv("BOTSIFT_SEED", "abc")
    assert run(capsys, "rank", "--input", data_csv)[0] == 1


def test_extract_and_balance(capsys, tmp_path, synthetic_pcap):
    rules = tmp_path / "rules.txt"
    rules.write_text("10.0.0.2 Neris\n10.0.0.0/24 Normal\n")
    out_csv = tmp_path / "flows.csv"
    code, _, _ = run(capsys, "extract", "--input", synthetic_pcap, "--labels", rules,
                     "--output", out_csv, "--seed", 5)
    assert code == 0
    ds = read_csv(out_csv)
    assert ds.schema == FEATURE_NAMES
    # IPv4 flows with >= 2 packets: A, B, D1, E1, D2
    assert ds.class_counts() == {"Normal": 4, "Neris": 1}
    assert "# seed=5" in out_csv.read_text()
    code, _, _ = run(capsys, "extract", "--input", synthetic_pcap, "--labels", rules,
                     "--output", out_csv, "--min-packets", 1, "--default-label", "Other")
    assert read_csv(out_csv).class_counts() == {"Normal": 5, "Neris": 2, "Other": 1}

    bal = tmp_path / "bal.csv"
    code, _, _ = run(capsys, "balance", "--input", out_csv, "--cap", 2, "--output", bal)
    assert code == 0 and read_csv(bal).class_counts() == {"Normal": 2, "Neris": 2, "Other": 1}


def test_extract_bad_rules_is_data_error(capsys, tmp_path, synthetic_pcap):
    rules = tmp_path / "rules.txt"
    rules.write_text("10.0.0.300 Neris\n")
    code, _, err = run(capsys, "extract", "--input", synthetic_pcap, "--labels", rules)
    assert code == 2 and "10.0.0.300" in err


def test_curve(capsys, data_csv):
    code, out, _ = run(capsys, "curve", "--input", data_csv, "--method", "ig", "--model", "dt",
                       "--folds", 3)
    assert code == 0
    table = rows(out)
    assert table[0] == ["n", "feature_added", "f1"]
    assert [r[0] for r in table[1:]] == [str(n) for n in range(1, 12)]
    assert table[1][1] == "dPort" and float(table[1][2]) == 1.0


def test_train_and_bench(capsys, tmp_path, data_csv):
    model = tmp_path / "m.json"
    code, _, _ = run(capsys, "train", "--input", data_csv, "--model", "rf", "--m", 3,
                     "--subset", "five", "--output", model)
    assert code == 0
    doc = json.loads(model.read_text())
    assert doc["kind"] == "forest" and len(doc["trees"]) == 3
    assert doc["schema"] == ["dPort", "nPackets", "nBytes", "vLen", "mLen"]
    code, out, _ = run(capsys, "bench", "--input", data_csv, "--model-file", model,
                       "--format", "json", "--warmup", 0, "--passes", 1)
    res = json.loads(out)
    assert code == 0 and res["classifications"] == 90 and res["seconds_per_sample"] > 0
    code, out, _ = run(capsys, "bench", "--input", data_csv, "--model", "knn", "--passes", 2)
    assert code == 0 and rows(out)[0][0] == "model"


def test_truncated_model_file(capsys, tmp_path, data_csv):
    model = tmp_path / "m.json"
    run(capsys, "train", "--input", data_csv, "--output", model)
    model.write_text(model.read_text()[:50])
    assert run(capsys, "bench", "--input", data_csv, "--model-file", model)[0] == 2


def test_evaluate_and_report(capsys, tmp_path, data_csv):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, _, _ = run(capsys, "evaluate", "--model", "dt", "--subset", "five", "--input", data_csv,
                     "--folds", 5, "--seed", 7, "--format", "json", "--output", a,
                     "--warmup", 0, "--passes", 1)
    assert code == 0
    doc = json.loads(a.read_text())
    assert doc["features"] == ["dPort", "nPackets", "nBytes", "vLen", "mLen"]
    assert doc["seed"] == 7 and doc["k_folds"] == 5 and doc["weighted_f1"] == 1.0
    run(capsys, "evaluate", "--model", "knn", "--features", "dPort,mLen", "--input", data_csv,
        "--folds", 5, "--format", "json", "--output", b, "--passes", 1)
    out_dir = tmp_path / "rep"
    code, _, _ = run(capsys, "report", "--input", a, "--input", b, "--output", out_dir)
    assert code == 0
    table = rows((out_dir / "table.csv").read_text())
    assert table[0][:3] == ["class", "f1:dt-five", "f1:knn-k1-custom"]
    assert len(table) == 4
    summary = json.loads((out_dir / "summary.json").read_text())
    assert [r["tag"] for r in summary["rows"]] == ["dt-five", "knn-k1-custom"]


def test_outputs_reproducible(capsys, tmp_path, data_csv):
    outs = []
    for _ in range(2):
        outs.append(run(capsys, "curve", "--input", data_csv, "--model", "rf", "--m", 2,
                        "--folds", 3, "--seed", 4)[1])
    assert outs[0] == outs[1]
    docs = []
    for _ in range(2):
        _, out, _ = run(capsys, "evaluate", "--input", data_csv, "--model", "rf", "--m", 2,
                        "--folds", 3, "--seed", 4, "--format", "json", "--passes", 1)
        doc = json.loads(out)
        for key in ("seconds_per_sample", "performance_weighted", "performance_macro", "latency"):
            doc.pop(key)
        for row in doc["per_class"].values():
            row.pop("performance")
        docs.append(doc)
    assert docs[0] == docs[1]
