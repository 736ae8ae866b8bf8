import json
import subprocess
import sys

import pytest

from wikivandal.cli import main

pytestmark = pytest.mark.filterwarnings("ignore:isotonic calibration on")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthesize, ingest, featurize and split once for the whole module."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--pages", "80", "--rate", "0.43", "--seed", "2", "--out-dir", str(d)]) == 0
    assert main(["ingest", str(d / "corpus.xml"), "-o", str(d / "cases.jsonl")]) == 0
    assert main(["split", str(d / "cases.jsonl"), "--seed", "1", "--out-dir", str(d)]) == 0
    assert main(["featurize", str(d / "cases.train.jsonl"), "--name", "train.txt", "--out-dir", str(d)]) == 0
    for part in ("valid", "test"):
        assert main(["featurize", str(d / f"cases.{part}.jsonl"), "--vocab", str(d / "vocab.tsv"),
                     "--scaling-spec", str(d / "scaling.txt"), "--name", f"{part}.txt",
                     "--out-dir", str(d)]) == 0
    assert main(["train", str(d / "train.txt"), "-o", str(d / "model.txt"), "--vocab", str(d / "vocab.tsv"),
                 "--c-value", "0.5", "--calibrate"]) == 0
    return d


def test_split_sizes(workdir):
    n = {p: len((workdir / f"cases.{p}.jsonl").read_text().splitlines()) for p in ("train", "valid", "test")}
    total = len((workdir / "cases.jsonl").read_text().splitlines())
    assert n["train"] == total // 2 and n["valid"] == total // 4 and sum(n.values()) == total


def test_tokenize(capsys):
    assert main(["tokenize", "--text", "Hello [[World]] hahaha"]) == 0
    assert capsys.readouterr().out.split() == ["hello", "[[", "world", "]]", "ha", "ha", "ha"]


def test_evaluate_report(workdir, capsys):
    assert main(["evaluate", str(workdir / "model.txt"), str(workdir / "valid.txt"), "--threshold", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["auc_roc"] > 0.8
    assert sum(report["confusion"][k] for k in ("tp", "fp", "tn", "fn")) == report["n"]


def test_curves(workdir, capsys):
    for cmd, header in (("roc", "fpr,tpr"), ("pr", "recall,precision"),
                        ("reliability", "bin,lower,upper,count,mean_pred,frac_pos")):
        assert main([cmd, str(workdir / "model.txt"), str(workdir / "valid.txt")]) == 0
        assert capsys.readouterr().out.splitlines()[0] == header


def test_threshold(workdir, capsys):
    assert main(["threshold", "--cost-fp", "4"]) == 0
    assert json.loads(capsys.readouterr().out) == {"theoretical_threshold": 0.8}
    assert main(["threshold", str(workdir / "model.txt"), str(workdir / "valid.txt"), "--cost-fp", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["empirical_cost"] <= out["theoretical_cost"]


def test_sweep_and_calibrate(workdir, capsys, tmp_path):
    assert main(["sweep", str(workdir / "train.txt"), str(workdir / "valid.txt"), "--c-values", "2^-2,1,4",
                 "--deterministic"]) == 0
    captured = capsys.readouterr()
    assert len(captured.out.splitlines()) == 4
    assert "best_C=" in captured.err
    target = tmp_path / "recal.txt"
    assert main(["calibrate", str(workdir / "model.txt"), str(workdir / "train.txt"), "-o", str(target)]) == 0
    assert "--- isotonic" in target.read_text()


def test_learning_curve(workdir, capsys):
    assert main(["learning-curve", str(workdir / "train.txt"), str(workdir / "valid.txt"),
                 "--iterations", "2", "--c-value", "1"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0].startswith("train_size") and rows[-1].endswith(",1,0")


def test_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.xml"
    bad.write_text("<mediawiki><page>")
    assert main(["ingest", str(bad)]) != 0
    assert capsys.readouterr().err.startswith("wikivandal: [ingest]")
    assert main(["evaluate", str(tmp_path / "missing.txt"), str(bad)]) != 0
    assert "[evaluate]" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wikivandal", "tokenize", "--text", "a b"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.split() == ["a", "b"]
    proc = subprocess.run([sys.executable, "-m", "wikivandal", "nosuchcommand"], capture_output=True, text=True)
    assert proc.returncode != 0
