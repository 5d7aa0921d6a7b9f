import json
import subprocess
import sys

import numpy as np
import pytest

from momentda import data, metrics
from momentda.cli import main


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_metrics_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    Xp, Xq = rng.uniform(size=(50, 2)), rng.uniform(size=(40, 2)) ** 2
    data.save_csv(tmp_path / "p.csv", Xp)
    data.save_csv(tmp_path / "q.csv", Xq)
    code, out, _ = run_cli(capsys, "metrics", tmp_path / "p.csv", tmp_path / "q.csv",
                           "--m", 4, "--range", 0, 1)
    assert code == 0
    obj = json.loads(out)
    assert obj["value"] == pytest.approx(metrics.cmd(Xp, Xq, 4))
    assert len(obj["per_term"]) == 4
    for metric in ("mmd", "coral", "l1"):
        code, out, _ = run_cli(capsys, "metrics", tmp_path / "p.csv", tmp_path / "q.csv",
                               "--metric", metric)
        assert code == 0 and json.loads(out)["value"] >= 0


def test_metrics_normalize_reports_the_scaler(tmp_path, capsys):
    data.save_csv(tmp_path / "p.csv", [[0.0], [2.0]])
    data.save_csv(tmp_path / "q.csv", [[4.0], [1.0]])
    code, out, _ = run_cli(capsys, "metrics", tmp_path / "p.csv", tmp_path / "q.csv",
                           "--normalize")
    obj = json.loads(out)
    assert code == 0
    assert obj["scaler"] == {"lo": [0.0], "hi": [4.0]}


def test_maxent_subcommand(tmp_path, capsys):
    sample = np.random.default_rng(1).beta(2, 3, size=500)
    data.save_csv(tmp_path / "x.csv", sample)
    code, out, _ = run_cli(capsys, "maxent", tmp_path / "x.csv", "--m", 3,
                           "--out", tmp_path / "fit.json")
    assert code == 0
    obj = json.loads((tmp_path / "fit.json").read_text())
    assert obj == json.loads(out)
    assert len(obj["lambda"]) == 3


def test_bounds_demo_subcommand(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "bounds-demo", "--m", 2, "--scales", "0,0.001,0.01",
                           "--out", tmp_path / "b")
    assert code == 0
    assert len(json.loads(out)["tables"]["bounds"]["rows"]) == 3
    assert (tmp_path / "b" / "report.json").exists()


def test_mann_train_and_eval(tmp_path, capsys):
    assert run_cli(capsys, "gen", "toy", "--n", 30, "--out", tmp_path)[0] == 0
    code, out, _ = run_cli(capsys, "mann-train", "--source", tmp_path / "source.csv",
                           "--labels", tmp_path / "source_labels.csv",
                           "--target", tmp_path / "target.csv", "--iters", 200,
                           "--hidden", 5, "--out", tmp_path / "net.json")
    assert code == 0
    assert 0 <= json.loads(out)["source_accuracy"] <= 1
    code, out, _ = run_cli(capsys, "mann-eval", "--model", tmp_path / "net.json",
                           "--data", tmp_path / "target.csv",
                           "--labels", tmp_path / "target_labels.csv")
    assert code == 0 and json.loads(out)["n"] == 90


def test_dipals_fit_and_predict(tmp_path, capsys):
    run_cli(capsys, "gen", "dipals", "--out", tmp_path)
    code, out, _ = run_cli(capsys, "dipals", "--train", tmp_path / "train.csv",
                           "--y", tmp_path / "y.csv", "--target", tmp_path / "target.csv",
                           "--target-y", tmp_path / "target_y.csv", "--components", 3,
                           "--out", tmp_path / "pls.json")
    assert code == 0
    obj = json.loads(out)
    assert len(obj["gammas"]) == 3 and "rmse_target" in obj
    code, out, _ = run_cli(capsys, "dipals-predict", "--model", tmp_path / "pls.json",
                           "--data", tmp_path / "target.csv", "--y", tmp_path / "target_y.csv")
    assert code == 0 and len(json.loads(out)["predictions"]) == 100


def test_scitsm_fit_and_apply(tmp_path, capsys):
    run_cli(capsys, "gen", "multidomain", "--n", 10, "--out", tmp_path)
    code, out, _ = run_cli(capsys, "scitsm-fit", tmp_path, "--out", tmp_path / "ts.json")
    assert code == 0 and json.loads(out)["converged"]
    code, out, _ = run_cli(capsys, "scitsm-apply", tmp_path / "domain0_feature0.csv",
                           tmp_path / "domain0_feature1.csv", "--model", tmp_path / "ts.json",
                           "--rho", "0.0", "--out", tmp_path / "fixed.csv")
    assert code == 0
    assert data.load_csv(tmp_path / "fixed.csv").shape == (10, 60)


def test_run_writes_report_and_plots(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", "overpenalization", "--knob", "n=100000",
                           "--out", tmp_path)
    assert code == 0
    assert json.loads(out)["experiment"] == "overpenalization"
    assert (tmp_path / "cmd_terms_qL.csv").exists()


def test_failed_assertions_exit_1_with_failure_list(tmp_path, capsys):
    # a tiny budget cannot reach 95% source accuracy
    code, _, err = run_cli(capsys, "run", "toy-mann", "--knob", "iters=30",
                           "--knob", "n_per_class=10")
    assert code == 1
    assert "baseline_source_acc_ge_0.95" in json.loads(err)["failures"]


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "no-such-experiment"])
    assert info.value.code == 2
    assert run_cli(capsys, "maxent", tmp_path / "missing.csv")[0] == 2
    data.save_csv(tmp_path / "two.csv", [[0.1, 0.2]])
    assert run_cli(capsys, "maxent", tmp_path / "two.csv")[0] == 2
    assert run_cli(capsys, "run", "sweep", "--knob", "badknob")[0] == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    # every value at the upper end: the moments lie on the boundary of the feasible set
    data.save_csv(tmp_path / "edge.csv", np.ones(20))
    code, _, err = run_cli(capsys, "maxent", tmp_path / "edge.csv", "--max-iter", 20)
    assert code == 3 and "numerical failure" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "momentda", "gen", "overpenalization",
                           "--n", "100", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert data.load_csv(tmp_path / "qR.csv").shape == (100, 1)
