import json

import numpy as np
import pytest

import dqgat


def test_world_step_and_reward():
    cfg = dqgat.ScenarioConfig.make("t_merge", "regular", 3)
    world = dqgat.World(cfg)
    assert world.ego["id"] == 0 or isinstance(world.ego["id"], int)
    r, events = world.step(3)
    assert world.step_count == 1
    assert 0.0 <= r <= 1.0
    assert not events["collision"]
    assert dqgat.reward(True, 20.0) == -50.0
    assert dqgat.reward(False, 20.0) == pytest.approx(0.5)


def test_same_seed_same_trajectory():
    def run(seed):
        world = dqgat.World(dqgat.ScenarioConfig.make("int_cross", "dense", seed))
        for _ in range(40):
            if world.terminal:
                break
            world.step(2)
        return [(v["x"], v["y"]) for v in world.vehicles]

    assert run(11) == run(11)


def test_observation_shapes():
    world = dqgat.World(dqgat.ScenarioConfig.make("roundabout", "regular", 5))
    o = dqgat.observe(world, rows=50, cols=70, max_nodes=8)
    assert o.bev.shape == (3, 50, 70)
    assert o.bev.dtype == np.float32
    assert set(np.unique(o.bev)) <= {0.0, 1.0}
    assert o.nodes.shape[1] == 10
    assert 1 <= o.nodes.shape[0] <= 8
    assert o.node_ids[0] == world.ego["id"]


def test_policies_run_episode():
    cfg = dqgat.ScenarioConfig.make("t_merge", "regular", 1_000_000_001)
    for name in ["fsm_ttc", "random", "constant:20"]:
        events, steps, ret = dqgat.run_episode(dqgat.make_policy(name), cfg)
        assert steps > 0
        assert sum(events.values()) >= 1
    with pytest.raises(Exception):
        dqgat.make_policy("nope")


def test_double_q_targets():
    y = dqgat.double_q_targets([1.0, 2.0], [0, 1], [0.0, 5.0, 9.0, 0.0], [3.0, 7.0, 4.0, 8.0], 2, 0.5)
    assert y == pytest.approx([1.0 + 0.5 * 7.0, 2.0])


def test_replay_buffer_sampling():
    buf = dqgat.ReplayBuffer(8, alpha=1.0)
    ids = [buf.push_reward(0.0) for _ in range(4)]
    buf.update_priorities(ids, [1.0, 1.0, 1.0, 5.0])
    assert buf.total_priority == pytest.approx(8.0)
    sampled, weights = buf.sample_ids(4, beta=1.0, seed=2)
    assert len(sampled) == 4
    assert max(weights) == pytest.approx(1.0)


def test_benchmark_and_train(tmp_path):
    cells, table = dqgat.benchmark("constant:30", ["t_merge"], ["regular"], trials=3, vehicle_count=0)
    assert cells[0]["trials"] == 3
    assert cells[0]["success_rate"] == pytest.approx(100.0)
    assert "t_merge" in table

    cfg = {
        "net": {"bev_rows": 20, "bev_cols": 28, "encoder_channels": [4, 8], "z_dim": 16, "embed_dim": 8,
                "gat_dim": 8, "heads1": 2, "heads2": 2, "stream_hidden": 16, "max_nodes": 6},
        "batch": 8, "collect_interval": 100, "rounds_per_update": 2, "total_steps": 200, "seed": 4,
    }
    log = dqgat.train(json.dumps(cfg), str(tmp_path))
    assert len(log) == 2
    assert json.loads(log[-1])["env_steps"] == 200
    net = dqgat.QNetwork.load(str(tmp_path / "final.ckpt"))
    world = dqgat.World(dqgat.ScenarioConfig.make("t_merge", "regular", 9))
    o = net.observe(world)
    q = net.q_values(o)
    assert len(q) == 5
    sal = net.saliency(o)
    assert sal.shape == o.bev.shape
    ids, alpha = net.attention(o)
    assert ids == o.node_ids
    assert sum(alpha[-1][0]) == pytest.approx(1.0, abs=1e-5)
