import json
import math
import os
import subprocess

import numpy as np
import pytest

import safemarl

TINY = """
trainer.iterations = 6
trainer.n_envs = 2
trainer.horizon = 30
trainer.minibatch = 32
trainer.checkpoint_every = 3
policy.hidden = 16
env.episode_cap = 15
"""


def test_config_roundtrip_and_errors():
    text = safemarl.default_config()
    assert safemarl.normalize_config(text) == text
    assert "trainer.gamma = " in text
    assert "env.kind = gate\n" in text
    with pytest.raises(ValueError, match="trainer.epsilon"):
        safemarl.normalize_config("trainer.epsilon = 1.5\n")
    with pytest.raises(safemarl.ConfigError):
        safemarl.normalize_config("trainer.bogus = 1\n")


def test_reward_and_cost_terms():
    assert safemarl.reward_move_forward([0.1, 0.0], [0.0, 0.0], [5.0, 0.0], 1.0) == 1.0
    assert safemarl.reward_move_forward([0.0, 0.0], [0.1, 0.0], [5.0, 0.0], 1.0) == 0.0
    assert safemarl.reward_destination([4.9, 0.0], [5.0, 0.0], 0.3, 10.0) == 10.0
    assert safemarl.reward_destination([4.0, 0.0], [5.0, 0.0], 0.3, 10.0) == 0.0
    assert safemarl.cost_collision([0.0, 1.0, 1.0, 0.0], 5.0) == 10.0


def test_rollout_keeps_the_link_rigid():
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1.0, 1.0, size=(150, 6))
    out = safemarl.rollout("", 3, actions)
    assert max(out["link_error"]) <= 1e-9
    assert out["midpoints"].shape[1] == 2
    again = safemarl.rollout("", 3, actions)
    assert np.array_equal(out["midpoints"], again["midpoints"])
    assert set(out["costs"]) <= {0.0, 1.0, 5.0, 6.0, 10.0, 11.0, 15.0, 16.0, 20.0, 21.0}


def test_oracles():
    assert safemarl.decomposition_residual(4, 3, 2, 0.9, 7) <= 1e-10
    mean, var = safemarl.gp_predict([0.2, 0.5, 0.8], [1.0, 2.0, 0.5], 0.5)
    assert abs(mean - 2.0) < 0.1
    assert 0.0 <= var < 0.05
    assert safemarl.expected_improvement(0.0, 0.0, 1.0) == 0.0
    assert safemarl.expected_improvement(0.0, 1.0, 0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))
    assert all(c["pass"] for c in safemarl.verify())


def test_budget_and_multiplier():
    assert safemarl.lagrange_update(0.5, 0.1, 1.2, 1.0) == 0.52
    assert safemarl.lagrange_update(0.05, 0.1, 0.0, 1.0) == 0.0
    d = safemarl.compute_budget(1.0, 0.3)
    assert d == pytest.approx(0.7)
    c_a, c_b = safemarl.split_budget(d, 0.3)
    assert c_a + c_b == d


def test_metrics():
    line = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    assert safemarl.straightness(line, [0.0, 0.0], [2.0, 0.0]) == 1.0
    assert safemarl.time_consumption(False, 200, 0.1, 35.0) == 35.0


def test_train_evaluate_and_cli(tmp_path):
    reports = safemarl.train(TINY, 2, str(tmp_path / "run"))
    assert len(reports) == 6
    for r in reports:
        assert r["c_a"] + r["c_b"] == r["d"]
        assert min(r["lambda"]) >= 0.0
    assert safemarl.train(TINY, 2) == reports
    ckpt = tmp_path / "run" / "checkpoint.json"
    report = safemarl.evaluate(ckpt, "env.episode_cap = 15\n", n=2, seed=1)
    assert report["n_episodes"] == 2
    assert 0.0 <= report["arrival_rate"] <= 1.0

    cli = os.environ.get("SAFEMARL_CLI")
    if cli:
        out = tmp_path / "eval.json"
        done = subprocess.run([cli, "eval", "--checkpoint", str(ckpt), "--seed", "1", "--n", "2", "--out", str(out)])
        assert done.returncode == 0
        assert json.loads(out.read_text())["n_episodes"] == 2
