import csv
from dataclasses import replace

import numpy as np
import pytest

from kbpomdp import experiment as ex
from kbpomdp.learner import EpisodeRecord, Hyperparams, MethodVariant, train

TINY = ex.ExperimentConfig(
    hyper=Hyperparams(episodes=40),
    methods=(MethodVariant.normal, MethodVariant.proposed),
    seeds=(3, 4),
    eval_episodes=20,
)


@pytest.fixture(scope="module")
def tiny_result(grid, kb):
    return ex.run_comparison(TINY, grid, kb)


class TestConfig:
    def test_round_trip(self):
        cfg = replace(TINY, hyper=replace(TINY.hyper, beta=0.3, r=2.0, persist_revision=True))
        assert ex.parse_config(ex.format_config(cfg)) == cfg

    def test_defaults(self):
        cfg = ex.parse_config("")
        assert cfg.seeds == (1, 2, 3, 4, 5) and cfg.eval_episodes == 1000
        assert cfg.methods == tuple(MethodVariant)
        assert cfg.hyper == Hyperparams()

    def test_keys_match_fields(self):
        assert "alpha" in ex.config_keys() and "methods" in ex.config_keys()
        assert ex.config_keys() == [*(f for f in ex._HYPER_KEYS), "methods", "seeds", "eval_episodes", "out_dir"]

    @pytest.mark.parametrize("text", [
        "alpah = 0.1",
        "alpha = 0.1\nalpha = 0.2",
        "alpha 0.1",
        "alpha = fast",
        "alpha = 2",
        "methods = normal, magic",
        "seeds = ",
        "eval_episodes = 0",
        "persist_revision = maybe",
    ])
    def test_rejects(self, text):
        with pytest.raises(ex.ConfigError):
            ex.parse_config(text)

    def test_comments_and_spacing(self):
        cfg = ex.parse_config("# test\n  gamma=0.5 \n\nmethods = jeffrey\n")
        assert cfg.hyper.gamma == 0.5 and cfg.methods == (MethodVariant.jeffrey,)


class TestSummary:
    def test_all_timeouts(self):
        row = ex.summarize("normal", [EpisodeRecord(-200.0, 200, False)] * 10)
        assert (row.mean_reward, row.stderr, row.success_rate) == (-200.0, 0.0, 0.0)

    def test_standard_error(self):
        recs = [EpisodeRecord(v, 10, v > 0) for v in (1.0, 2.0, 3.0, 4.0)]
        row = ex.summarize("normal", recs)
        assert row.mean_reward == 2.5
        assert row.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert row.success_rate == 1.0

    def test_pooling(self, tiny_result):
        assert [r.method for r in tiny_result.summary] == list(TINY.methods)
        assert all(r.n_episodes == 40 for r in tiny_result.summary)

    def test_missing_knowledge_fails_before_training(self, grid):
        with pytest.raises(ex.ConfigError):
            ex.run_comparison(TINY, grid, None)
        ex.run_comparison(replace(TINY, methods=("normal",), seeds=(1,), hyper=replace(TINY.hyper, episodes=2), eval_episodes=1), grid, None)

    def test_mean_curve(self, tiny_result):
        c = tiny_result.curves("proposed")
        assert len(c) == 2
        np.testing.assert_allclose(tiny_result.mean_curve("proposed"), [(a.reward + b.reward) / 2 for a, b in zip(*c)])


class TestRolling:
    def test_prefix_rule(self):
        np.testing.assert_allclose(ex.rolling_mean([1, 2, 3], 100), [1, 1.5, 2])

    def test_window(self):
        np.testing.assert_allclose(ex.rolling_mean([1, 2, 3, 4, 5], 2), [1, 1.5, 2.5, 3.5, 4.5])

    def test_sustained_positive(self):
        r = [-5.0] * 50 + [10.0] * 300
        i = ex.episodes_to_sustained_positive(r, window=10, sustain=20)
        # the rolling mean turns positive once 6 of the last 10 are +10
        assert i == 50 + 3
        assert ex.episodes_to_sustained_positive([-1.0] * 500) is None


class TestFiles:
    def test_curve_rows(self, tmp_path):
        curve = [EpisodeRecord(-3.0, 3, False), EpisodeRecord(-1.5, 2, False), EpisodeRecord(111.0, 40, True)]
        paths = ex.emit_curves({"normal": {7: curve}}, tmp_path)
        lines = paths[0].read_text().splitlines()
        assert lines[0] == "episode,reward,steps,success" and len(lines) == 4
        assert ex.read_curve_csv(paths[0]) == curve
        combined = list(csv.DictReader(open(paths[-1])))
        assert [float(r["normal_rolling100"]) for r in combined] == pytest.approx([-3.0, -2.25, 35.5])

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            ex.emit_curves({"normal": {1: [EpisodeRecord(1.0, 1, False)]}}, blocker / "sub")

    def test_empty_curves(self, tmp_path):
        with pytest.raises(ValueError):
            ex.emit_curves({}, tmp_path)

    def test_comparison_files(self, tiny_result, tmp_path):
        ex.write_comparison(tiny_result, tmp_path)
        for m in TINY.methods:
            for s in TINY.seeds:
                assert len(ex.read_curve_csv(tmp_path / f"curve_{m.value}_seed{s}.csv")) == TINY.hyper.episodes
        assert ex.load_config(tmp_path / "config.txt") == TINY

    def test_summary_recomputable_from_csvs(self, tiny_result, tmp_path):
        ex.write_comparison(tiny_result, tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
        for row in rows:
            recs = [e for s in TINY.seeds for e in ex.read_curve_csv(tmp_path / f"eval_{row['method']}_seed{s}.csv")]
            again = ex.summary_csv([ex.summarize(row["method"], recs)]).splitlines()[1]
            assert again == ",".join(row.values())

    def test_policy_round_trip(self, grid, bias, tmp_path):
        h = Hyperparams(episodes=20, seed=9)
        q, _ = train(h, grid, bias, "proposed")
        p = ex.write_policy(tmp_path / "p.kbp", q, "proposed", h, bias)
        back = ex.read_policy(p)
        assert back.qtable == q and back.hyper == h and back.method is MethodVariant.proposed
        for a in ("x", "y", "l"):
            np.testing.assert_array_equal(back.bias[a], bias[a])
        ex.write_policy(tmp_path / "p2.kbp", back.qtable, back.method, back.hyper, back.bias)
        assert (tmp_path / "p2.kbp").read_bytes() == p.read_bytes()

    def test_policy_without_bias_and_empty(self, tmp_path):
        from kbpomdp.learner import QTable
        p = ex.write_policy(tmp_path / "e.kbp", QTable(32), "normal", Hyperparams(), None)
        back = ex.read_policy(p)
        assert len(back.qtable) == 0 and back.bias is None

    def test_policy_rejects_garbage(self, tmp_path):
        (tmp_path / "bad.kbp").write_bytes(b"hello")
        with pytest.raises(ValueError):
            ex.read_policy(tmp_path / "bad.kbp")

    def test_same_policy_same_eval(self, grid, bias, tmp_path):
        h = Hyperparams(episodes=20, seed=9)
        q, _ = train(h, grid, bias, "bias_combine")
        back = ex.read_policy(ex.write_policy(tmp_path / "p.kbp", q, "bias_combine", h, bias))
        a = ex.evaluate(q, grid, bias, "bias_combine", h, 5, ex.eval_rng(0))
        b = ex.evaluate(back.qtable, grid, back.bias, "bias_combine", back.hyper, 5, ex.eval_rng(0))
        assert a == b
