import csv
import json

import numpy as np
import pytest

from ssdhealth import cli, data
from ssdhealth.errors import ConfigError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["generate", "--n", "120", "--seed", "5", "--out", str(d / "data.csv")]) == 0
    assert cli.main(["train", "--data", str(d / "data.csv"), "--out", str(d / "m.ckpt"),
                     "--history", str(d / "h.csv"), "--split-dir", str(d / "split"),
                     "--hidden", "3", "--max-epochs", "3"]) == 0
    return d


def test_generate_is_byte_identical(tmp_path, capsys):
    for name in ("a.csv", "b.csv"):
        code, out, _ = run(capsys, "generate", "--n", 593, "--seed", 42, "--out", tmp_path / name)
        assert code == 0 and "Normal=" in out
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(data.load_csv(tmp_path / "a.csv")) == 593


def test_generate_rejects_zero_rows(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["generate", "--n", "0", "--out", str(tmp_path / "x.csv")])
    assert exc.value.code != 0


def test_generate_invalid_priors(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--n", 5, "--out", tmp_path / "x.csv", "--priors", "0.5,0.5,0.5")
    assert code == 1 and err.startswith("error[config]:")


def test_train_writes_artifacts(trained):
    assert (trained / "m.ckpt").stat().st_size > 0
    assert len((trained / "h.csv").read_text().splitlines()) == 4


def test_eval_on_training_split_matches_train_summary(trained, tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--data", trained / "data.csv", "--out", tmp_path / "m.ckpt",
                       "--hidden", 3, "--max-epochs", 3, "--split-dir", tmp_path / "split")
    train_acc = next(l for l in out.splitlines() if l.startswith("train accuracy")).split()[-1]
    code, out, _ = run(capsys, "eval", "--model", tmp_path / "m.ckpt", "--data",
                       tmp_path / "split" / "train.csv", "--report", tmp_path / "r.json",
                       "--roc", tmp_path / "roc")
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert f"{rep['accuracy']:.4f}" == train_acc
    assert sorted(p.name for p in (tmp_path / "roc").iterdir()) == [
        "roc_failure.csv", "roc_failure_vs_rest.csv", "roc_normal.csv", "roc_warning.csv"]
    rows = (tmp_path / "roc" / "roc_normal.csv").read_text().splitlines()[1:]
    fprs = [float(r.split(",")[0]) for r in rows]
    assert fprs == sorted(fprs)


def test_predict_probabilities_and_consistency(trained, tmp_path, capsys):
    out_path = tmp_path / "p.csv"
    code, _, _ = run(capsys, "predict", "--model", trained / "m.ckpt", "--data",
                     trained / "split" / "train.csv", "--out", out_path)
    assert code == 0
    with open(out_path) as fh:
        rows = list(csv.DictReader(fh))
    P = np.array([[float(r["p_normal"]), float(r["p_warning"]), float(r["p_failure"])] for r in rows])
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    run(capsys, "eval", "--model", trained / "m.ckpt", "--data", trained / "split" / "train.csv",
        "--report", tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    labels = data.load_csv(trained / "split" / "train.csv").labels()
    pred = [data.CLASS_NAMES.index(r["predicted"]) for r in rows]
    cm = np.zeros((3, 3), dtype=int)
    np.add.at(cm, (labels, pred), 1)
    assert cm.tolist() == rep["confusion"]


def test_predict_header_only_input(trained, tmp_path, capsys):
    src = tmp_path / "empty.csv"
    src.write_text(",".join(data.FEATURES) + "\n")
    code, _, _ = run(capsys, "predict", "--model", trained / "m.ckpt", "--data", src,
                     "--out", tmp_path / "p.csv")
    assert code == 0
    assert (tmp_path / "p.csv").read_text() == "predicted,p_normal,p_warning,p_failure\n"


def test_zero_epochs_warns(trained, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", trained / "data.csv", "--out", tmp_path / "m.ckpt",
                       "--max-epochs", 0)
    assert code == 0 and "warning" in err and (tmp_path / "m.ckpt").exists()


def test_missing_data_file(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", tmp_path / "nope.csv", "--out", tmp_path / "m")
    assert code == 1 and err.startswith("error[file-not-found]:")


def test_corrupt_checkpoint(trained, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes((trained / "m.ckpt").read_bytes()[:50])
    code, _, err = run(capsys, "eval", "--model", bad, "--data", trained / "data.csv")
    assert code == 1 and err.startswith("error[corrupt-checkpoint]:")


def test_config_precedence_flag_over_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"hidden": 6, "lr": 0.01, "max_epochs": 7}))
    m, t, frac = cli.resolve_config(cli.load_config_file(path), {"lr": 0.05, "hidden": None})
    assert (m.hidden, t.lr, t.max_epochs, frac) == (6, 0.05, 7, 0.2)
    m, t, _ = cli.resolve_config({}, {})
    assert (m.hidden, t.lr, t.max_epochs) == (24, 0.001, 500)


@pytest.mark.parametrize("doc", [{"hidden": 6, "bogus": 1}, {"hidden": 6, "lr": "fast"},
                                 {"hidden": 5}, [1, 2]])
def test_config_rejected_atomically(tmp_path, doc):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        cli.resolve_config(cli.load_config_file(path), {})


def test_unknown_config_key_exits_nonzero(trained, tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{"epochs": 3}')
    code, _, err = run(capsys, "train", "--data", trained / "data.csv", "--out", tmp_path / "m",
                       "--config", path)
    assert code == 1 and "unknown config keys" in err and not (tmp_path / "m").exists()
