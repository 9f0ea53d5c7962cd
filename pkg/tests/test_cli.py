import subprocess
import sys

import pytest

from kbpomdp import experiment as ex
from kbpomdp.cli import main

SMALL_CONFIG = "episodes = 30\neval_episodes = 5\nseeds = 1, 2\nmethods = normal, proposed\n"


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text(SMALL_CONFIG)
    return p


@pytest.fixture
def knowledge(tmp_path):
    out = tmp_path / "kn"
    assert main(["gen-knowledge", "--out", str(out)]) == 0
    return out


def test_gen_knowledge(knowledge):
    assert len(list(knowledge.glob("P_*_given_*.txt"))) == 6


def test_train_and_eval(config, knowledge, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["train", "--config", str(config), "--knowledge", str(knowledge),
                 "--method", "proposed", "--seed", "3", "--out", str(out)])
    assert code == 0
    assert len(ex.read_curve_csv(out / "curve_proposed_seed3.csv")) == 30
    policy = out / "policy_proposed_seed3.kbp"
    assert main(["eval", "--policy", str(policy), "--episodes", "4"]) == 0
    assert "proposed" in capsys.readouterr().out


def test_compare(config, knowledge, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(config), "--knowledge", str(knowledge), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "normal" in text and "proposed" in text and "standard error" in text
    assert (out / "summary.csv").read_text().count("\n") == 3


@pytest.mark.parametrize("argv", [
    ["train", "--method", "proposed", "--out", "x"],
    ["train", "--method", "nope", "--out", "x"],
    ["gen-knowledge", "--map", "/nonexistent/map.txt", "--out", "x"],
    ["eval", "--policy", "/nonexistent/p.kbp"],
    [],
])
def test_config_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_unknown_config_key_exit_1(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("learning_rate = 0.1\n")
    assert main(["compare", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_runtime_failure_exit_2(tmp_path, knowledge, config):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = main(["train", "--config", str(config), "--knowledge", str(knowledge),
                 "--method", "normal", "--out", str(blocker / "sub")])
    assert code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "kbpomdp", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-knowledge" in r.stdout
