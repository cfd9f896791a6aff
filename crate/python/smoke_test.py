"""Smoke test for the spred Python module.

Build and install the extension first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

then run `python python/smoke_test.py`.
"""

import json
import math
import os
import tempfile

import spred


def main():
    env = spred.Env("point-reach-2d", seed=3)
    obs, achieved, desired = env.reset()
    assert len(obs) == env.obs_dim and len(desired) == env.goal_dim
    for _ in range(env.horizon):
        obs, achieved, desired, reward, done = env.step(env.expert_action())
    assert reward == spred.compute_reward(achieved, desired, env.success_eps)
    assert done

    mean, var, iqr = spred.ensemble_stats([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    assert mean == 4.5 and iqr == 3.5
    assert abs(spred.std_normal_cdf(1.0) - 0.8413447) < 1e-6
    assert spred.weight("spred-p", [1.0, 1.0], [1.0, 1.0]) == 0.5
    assert spred.weight("qfilter-ensemble-mean", [2.0, 2.0], [1.0, 1.0]) == 1.0
    for mode in spred.WEIGHT_MODES:
        w = spred.weight(mode, [0.3, 0.9, 1.2], [0.5, 0.6, 0.7])
        assert 0.0 <= w <= 1.0, (mode, w)
    try:
        spred.weight("nope", [1.0, 2.0], [1.0, 2.0])
        raise AssertionError("unknown mode accepted")
    except ValueError:
        pass

    norm = spred.Normalizer(2)
    for x in ([0.0, 1.0], [2.0, 3.0], [4.0, 5.0]):
        norm.update(x)
    assert norm.count == 3 and norm.mean == [2.0, 3.0]
    assert max(abs(v) for v in norm.normalize([1e9, -1e9])) <= 5.0

    var_binary, var_cont = spred.lemma_synthetic(200_000, seed=1)
    assert abs(var_binary - 0.25) < 0.005 and abs(var_cont - 1 / 12) < 0.005

    with tempfile.TemporaryDirectory() as tmp:
        demos = os.path.join(tmp, "demos.jsonl")
        n, rate = spred.generate_demos(demos, quality="expert", episodes=4, seed=2)
        assert n == 4 * env.horizon and 0.0 <= rate <= 1.0

        cfg = {
            "demo_file": demos,
            "total_env_steps": 2000,
            "eval_every": 1000,
            "checkpoint_every": 1000,
            "eval_episodes": 5,
            "agent": {"hidden_width": 16, "replay_batch": 32, "demo_batch": 16,
                      "warmup_steps": 500, "updates_per_episode": 2, "ensemble_size": 3},
        }
        cfg_path = os.path.join(tmp, "cfg.json")
        with open(cfg_path, "w") as f:
            json.dump(cfg, f)
        run = spred.train(cfg_path, out_dir=os.path.join(tmp, "run"), seed=1)
        assert run["steps"] == [0, 1000, 2000], run["steps"]
        assert run["total_env_steps"] == 2000

        final = os.path.join(run["out_dir"], "final.json")
        agent = spred.Agent.load(final)
        assert agent.ensemble_size == 3 and agent.weight_mode == "spred-p"
        obs, _, desired = env.reset()
        action = agent.act(obs, desired)
        assert len(action) == env.action_dim and all(-1.0 <= a <= 1.0 for a in action)
        q = agent.q_values(obs, desired, action)
        assert len(q) == 3 and all(math.isfinite(v) for v in q)
        assert agent.evaluate(5, seed=1) == run["success"][-1]
        assert spred.evaluate(final, episodes=5, seed=1) == run["success"][-1]

    print("smoke test passed")


if __name__ == "__main__":
    main()
