"""CLI thin client against the in-process service."""

import json

import numpy as np
from click.testing import CliRunner

from neurols.cli import main
from neurols.instances import load_instance_set
from neurols.policies import MlpArchitecture, NeuroPolicy, save_policy


def run_cli(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_generate_nk(tmp_path):
    out = tmp_path / "set"
    res = run_cli("generate", "nk", "--n", "12", "--k", "2", "--count", "3",
                  "--seed", "7", "--out", str(out))
    assert res.exit_code == 0, res.output
    assert "manifest:" in res.output
    iset = load_instance_set(out / "manifest.json")
    assert len(iset.instances) == 3


def test_generate_rejects_zero_count(tmp_path):
    res = CliRunner().invoke(main, ["generate", "nk", "--n", "8", "--k", "1",
                                    "--count", "0", "--out", str(tmp_path)])
    assert res.exit_code != 0


def test_generate_qubo(tmp_path):
    res = run_cli("generate", "qubo", "--n", "16", "--m-frac", "0.2",
                  "--family", "uni", "--count", "2", "--out", str(tmp_path / "q"))
    assert res.exit_code == 0, res.output


def test_train_streams_progress_and_writes_artifacts(tmp_path):
    cfg = {"n": 10, "k": 2, "observation_kind": "o1", "q": 2, "r": 2,
           "generations": 2, "runs": 1, "pop_size": 6, "master_seed": 5}
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    res = run_cli("train", "--config", str(cfg_path), "--out", str(out),
                  "--poll-interval", "0.05")
    assert res.exit_code == 0, res.output
    progress = [l for l in res.output.splitlines() if l.startswith("run ")]
    assert len(progress) == 2  # one line per generation
    assert (out / "champion_policy.json").exists()
    assert (out / "train_report.csv").exists()


def test_train_missing_config_field_names_it(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({"n": 10, "observation_kind": "o1"}))
    res = CliRunner().invoke(main, ["train", "--config", str(cfg_path),
                                    "--out", str(tmp_path / "o")])
    assert res.exit_code != 0
    assert "'k'" in res.output


def test_evaluate_baselines_only(tmp_path):
    out = tmp_path / "set"
    run_cli("generate", "nk", "--n", "14", "--k", "2", "--count", "4",
            "--seed", "2", "--out", str(out))
    res = run_cli("evaluate", "--manifest", str(out / "manifest.json"),
                  "--strategy", "bhc", "--strategy", "fhc",
                  "--out", str(tmp_path / "eval"))
    assert res.exit_code == 0, res.output
    assert "bhc" in res.output and "fhc" in res.output
    assert (tmp_path / "eval" / "eval_report.csv").exists()


def test_evaluate_with_policy_and_lambda(tmp_path):
    out = tmp_path / "set"
    run_cli("generate", "nk", "--n", "14", "--k", "2", "--count", "4",
            "--seed", "2", "--out", str(out))
    arch = MlpArchitecture(1, (10, 5))
    pol_path = tmp_path / "champ.json"
    save_policy(NeuroPolicy(arch, np.random.default_rng(0).normal(size=81), "o3"),
                pol_path)
    res = run_cli("evaluate", "--manifest", str(out / "manifest.json"),
                  "--policy", str(pol_path), "--lambda", "4",
                  "--out", str(tmp_path / "eval"))
    assert res.exit_code == 0, res.output
    assert "champ" in res.output


def test_evaluate_es_without_lambda_fails(tmp_path):
    out = tmp_path / "set"
    run_cli("generate", "nk", "--n", "10", "--k", "1", "--count", "2",
            "--seed", "1", "--out", str(out))
    res = CliRunner().invoke(main, ["evaluate", "--manifest",
                                    str(out / "manifest.json"),
                                    "--strategy", "es",
                                    "--out", str(tmp_path / "e")])
    assert res.exit_code != 0


def test_analyze_outputs(tmp_path):
    out = tmp_path / "set"
    run_cli("generate", "nk", "--n", "10", "--k", "1", "--count", "3",
            "--seed", "3", "--out", str(out))
    arch = MlpArchitecture(1, (10, 5))
    pol_path = tmp_path / "p.json"
    save_policy(NeuroPolicy(arch, np.random.default_rng(1).normal(size=81), "o3"),
                pol_path)
    res = run_cli("analyze", "--policy", str(pol_path),
                  "--manifest", str(out / "manifest.json"),
                  "--trajectories", "2", "--out", str(tmp_path / "an"))
    assert res.exit_code == 0, res.output
    assert "response curve" in res.output
    assert (tmp_path / "an" / "trace_00.csv").exists()


def test_calibrate_lambda_output():
    res = run_cli("calibrate-lambda", "--n", "8", "--k", "1",
                  "--grid", "1,8", "--q", "2", "--r", "2")
    assert res.exit_code == 0, res.output
    assert "best lambda:" in res.output
