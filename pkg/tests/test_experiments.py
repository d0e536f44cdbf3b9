import json

import pytest

from cauchy_kmf.cli import main
from cauchy_kmf.errors import ConfigError, InvalidComparison
from cauchy_kmf.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    RunSummary,
    compare_reconstructions,
    run_experiment,
)


def summary(label, iters, err, arc, exact="u"):
    return RunSummary(label, exact, iters, err, err / 2, arc, True)


def test_config_defaults_and_errors():
    cfg = ExperimentConfig("square-linear")
    assert cfg.resolution == (128, 96) and cfg.tol == 1e-3 and cfg.max_iter == 300
    with pytest.raises(ConfigError):
        ExperimentConfig("square-linear", resolution=(1, 1))
    with pytest.raises(ConfigError):
        ExperimentConfig("square-linear", resolution=(8,))
    with pytest.raises(ConfigError):
        ExperimentConfig("square-linear", tol=0)
    with pytest.raises(ConfigError):
        ExperimentConfig("no-such-experiment")


def test_config_from_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "hadamard-demo", "resolution": [3]}))
    assert ExperimentConfig.from_json(p).resolution == (3,)
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(p)
    p.write_text(json.dumps({"experiment": "hadamard-demo", "bogus": 1}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(p)


def test_compare_identical_runs():
    a = summary("a", 10, 0.1, 2.0)
    cmp = compare_reconstructions(a, a)
    assert all(v == 0 for v in cmp["diff"].values()) and cmp["larger_arc_dominates"] is None


def test_compare_antisymmetric():
    a, b = summary("a", 10, 0.1, 3.0), summary("b", 20, 0.3, 2.0)
    ab, ba = compare_reconstructions(a, b), compare_reconstructions(b, a)
    assert all(ab["diff"][k] == -ba["diff"][k] for k in ab["diff"])
    assert ab["larger_arc_dominates"] is True and ba["larger_arc_dominates"] is True
    worse = summary("c", 30, 0.1, 3.0)
    assert compare_reconstructions(worse, b)["larger_arc_dominates"] is False


def test_compare_mismatch():
    with pytest.raises(InvalidComparison):
        compare_reconstructions(summary("a", 1, 0.1, 1, "u"), summary("b", 1, 0.1, 1, "v"))


def test_cli_converged_run(tmp_path, capsys):
    out = tmp_path / "sq"
    code = main(["run", "square-linear", "--resolution", "16", "12", "--out", str(out), "--dump-mesh"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["converged"] is True and rep["iterations"] > 0
    assert {"square_history.csv", "square_trace.csv", "square_mesh.txt", "report.json"} <= set(rep["files"])
    for f in rep["files"]:
        assert (out / f).exists()
    assert "converged" in capsys.readouterr().out


def test_cli_not_converged(tmp_path):
    out = tmp_path / "nc"
    assert main(["run", "square-linear", "--resolution", "8", "6", "--max-iter", "2", "--out", str(out)]) == 2
    assert json.loads((out / "report.json").read_text())["converged"] is False


def test_cli_bad_resolution(tmp_path, capsys):
    assert main(["run", "square-linear", "--resolution", "1", "1", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_bad_config_file(tmp_path):
    assert main(["run", "hadamard-demo", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1


def test_cli_unknown_experiment():
    with pytest.raises(SystemExit):
        main(["run", "nope"])


def test_outputs_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "regularization-tradeoff", "--resolution", "16", "--seed", "3", "--out", str(tmp_path / d)]) == 0
    for name in ("tradeoff_cutoff.csv", "tradeoff_power.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "experiment,resolution",
    [
        ("annulus-linear", (4, 24)),
        ("square-inconsistent", (8, 4)),
        ("annulus-semilinear", (3, 24)),
        ("spectral-decay", (8, 6)),
        ("hadamard-demo", (4,)),
        ("operator-audit", (8, 6)),
    ],
)
def test_every_experiment_runs_small(tmp_path, experiment, resolution):
    cfg = ExperimentConfig(experiment, resolution=resolution, out=str(tmp_path), max_iter=50 if experiment != "operator-audit" else None)
    rep = run_experiment(cfg)
    assert rep.exit_code in (0, 2)
    assert (tmp_path / "report.json").exists()
    json.loads((tmp_path / "report.json").read_text())


def test_experiment_list():
    assert len(EXPERIMENTS) == 8
