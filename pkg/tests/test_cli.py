import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from deepbrain.checkpoint import Checkpoint
from deepbrain.cli import main
from deepbrain.evaluation import SIMILARITY_COLUMNS
from deepbrain.signal_model import LabelClass

PROB_COLUMNS = [f"p_{c.key}" for c in LabelClass]


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen", "--classes-per", 8, "--seed", 1, "--out", d / "train.jsonl") == 0
    assert run("gen", "--classes-per", 3, "--seed", 2, "--out", d / "valid.jsonl") == 0
    return d


@pytest.fixture(scope="module")
def trained(data_dir):
    ckpt = data_dir / "model.json"
    assert run("train", "--data", data_dir / "train.jsonl", "--valid", data_dir / "valid.jsonl",
               "--model", "deepbrain", "--epochs", 1, "--batch", 16, "--out", ckpt) == 0
    return ckpt


# -- gen ----------------------------------------------------------------------

def test_gen_line_count(tmp_path):
    out = tmp_path / "d.jsonl"
    assert run("gen", "--classes-per", 200, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 800
    manifest = json.loads((tmp_path / "d.jsonl.manifest.json").read_text())
    assert manifest["seeds"] == {"master_seed": 0}
    assert manifest["config"]["gen_spec"]["sessions_per_class"] == 200


def test_gen_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("gen", "--classes-per", 5, "--noisy", "--seed", 4, "--out", tmp_path / name) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_gen_missing_out_is_usage_error():
    proc = subprocess.run([sys.executable, "-m", "deepbrain", "gen", "--classes-per", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "--out" in proc.stderr


def test_no_command_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


# -- train --------------------------------------------------------------------

def test_train_outputs(trained):
    ckpt = Checkpoint.load(trained)
    assert ckpt.model_config.kind.value == "deepbrain"
    history = read_csv(trained.with_suffix(".history.csv"))
    assert [r["epoch"] for r in history] == ["0", "1"]
    assert trained.with_suffix(".history.svg").read_text().startswith("<?xml")
    assert (trained.parent / "model.json.manifest.json").exists()


@pytest.mark.parametrize("model", ["mlp", "lstm", "stacked", "deepbrain"])
def test_train_all_models(data_dir, tmp_path, model):
    out = tmp_path / f"{model}.json"
    assert run("train", "--data", data_dir / "train.jsonl", "--model", model,
               "--epochs", 1, "--batch", 16, "--out", out) == 0
    assert Checkpoint.load(out).model_config.kind.value == model


def test_train_unknown_model(data_dir, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["train", "--data", str(data_dir / "train.jsonl"), "--model", "svm",
              "--out", str(tmp_path / "x.json")])
    assert info.value.code == 1


def test_train_missing_data_is_data_error(tmp_path):
    assert run("train", "--data", tmp_path / "nope.jsonl", "--out", tmp_path / "x.json") == 2


def test_train_divergence_exit_code(data_dir, tmp_path):
    assert run("train", "--data", data_dir / "train.jsonl", "--epochs", 2, "--batch", 4,
               "--lr", "1e306", "--out", tmp_path / "x.json") == 3


# -- eval ---------------------------------------------------------------------

def test_eval_perfect_predictions(tmp_path):
    pred = tmp_path / "pred.csv"
    rows = []
    for k, cls in enumerate(LabelClass):
        for j in range(3):
            p = np.full(4, 0.05)
            p[k] = 0.85 - 0.01 * j
            rows.append([cls.key, *p])
    with open(pred, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", *PROB_COLUMNS])
        w.writerows(rows)
    out = tmp_path / "ev"
    assert run("eval", "--predictions", pred, "--out", out) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["accuracy"] == 1.0 and metrics["micro_auc"] == 1.0
    for name in ["relaxed", "focused", "micro"]:
        assert (out / f"roc_{name}.csv").read_text().splitlines()[0] == "threshold,fpr,tpr"
    assert (out / "roc.svg").exists() and (out / "manifest.json").exists()
    assert list(read_csv(out / "summary.csv")[0]) == \
        ["method", "accuracy", "precision", "recall", "f1", "auc"]


def test_eval_matches_history(data_dir, trained, tmp_path):
    out = tmp_path / "ev"
    assert run("eval", "--checkpoint", trained, "--data", data_dir / "train.jsonl",
               "--out", out) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    final = read_csv(trained.with_suffix(".history.csv"))[-1]
    assert metrics["accuracy"] == float(final["train_accuracy"])


def test_eval_needs_inputs(tmp_path):
    assert run("eval", "--out", tmp_path / "ev") == 1


def test_eval_bad_predictions(tmp_path):
    bad = tmp_path / "p.csv"
    bad.write_text("label,p_relaxed\nrelaxed,1.0\n")
    assert run("eval", "--predictions", bad, "--out", tmp_path / "ev") == 2


# -- compare ------------------------------------------------------------------

def test_compare_outputs(tmp_path):
    out = tmp_path / "cmp"
    assert run("compare", "--models", "mlp,lstm", "--seeds", "1,2", "--conditions", "noisy",
               "--classes-per", 8, "--epochs", 1, "--batch", 16, "--out", out) == 0
    text = (out / "compare_noisy.csv").read_text().splitlines()
    assert text[0] == "method,accuracy,precision,recall,f1,auc"
    assert [line.split(",")[0] for line in text[1:]] == ["MLP", "LSTM"]
    doc = json.loads((out / "compare.json").read_text())
    assert doc["seeds"] == [1, 2] and len(doc["per_seed"]["noisy"]) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["seeds"] == [1, 2]
    assert manifest["config"]["aggregation"] == "mean over seeds"
    assert (out / "compare_noisy.svg").exists()


def test_compare_bad_model(tmp_path):
    assert run("compare", "--models", "svm", "--out", tmp_path / "c") == 1


def test_compare_bad_seeds(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["compare", "--seeds", "a,b", "--out", str(tmp_path / "c")])
    assert info.value.code == 1


# -- similarity ---------------------------------------------------------------

def test_similarity_outputs(data_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("similarity", "--data", data_dir / "train.jsonl", "--pairs", 10,
                   "--seed", 3, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a)
    assert list(rows[0]) == SIMILARITY_COLUMNS and len(rows) == 4
    M = np.array([[float(r[c.key]) for c in LabelClass] for r in rows])
    assert np.array_equal(M, M.T)
    assert a.with_suffix(".svg").exists()


# -- infer --------------------------------------------------------------------

def test_infer_single_window(trained, tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text("".join(f"{v}\n" for v in np.full(180, 60.0)))
    logf = tmp_path / "log.jsonl"
    assert run("infer", "--checkpoint", trained, "--input", src, "--log", logf) == 0
    lines = logf.read_text().splitlines()
    assert len(lines) == 1
    entry = json.loads(lines[0])
    assert entry["i"] == 180 and len(entry["probs"]) == 4
    assert "windows processed: 1" in capsys.readouterr().err


def test_infer_map_override(trained, tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("60\n" * 180)
    logf = tmp_path / "log.jsonl"
    maps = [a for c in LabelClass for a in ("--map", f"{c.key}=go_{c.key}")]
    assert run("infer", "--checkpoint", trained, "--input", src, "--log", logf, *maps) == 0
    entry = json.loads(logf.read_text())
    assert entry["command"] == f"go_{entry['class']}"


def test_infer_stdin(trained):
    proc = subprocess.run([sys.executable, "-m", "deepbrain", "infer", "--checkpoint", str(trained)],
                          input="61\n" * 240, capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 3


def test_infer_bad_checkpoint(tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("60\n" * 180)
    assert run("infer", "--checkpoint", tmp_path / "missing.json", "--input", src) != 0
    junk = tmp_path / "junk.json"
    junk.write_text("{]")
    assert run("infer", "--checkpoint", junk, "--input", src) == 2


def test_infer_bad_map(trained, tmp_path):
    assert run("infer", "--checkpoint", trained, "--map", "sleepy=x") == 1


# -- gradcheck ----------------------------------------------------------------

def test_gradcheck_report(capsys):
    assert run("gradcheck") == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 4 and all("PASS" in line and "worst " in line for line in out)


def test_gradcheck_mlp_fail_at_impossible_tolerance(capsys):
    assert run("gradcheck", "--model", "mlp", "--tol", "0") == 3
    line = capsys.readouterr().out.strip()
    assert "FAIL" in line
    worst = line.split("worst ")[1].split()[0]
    assert worst in {"hidden.W", "hidden.b", "out.W", "out.b"}
