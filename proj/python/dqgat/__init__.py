"""Desk-scale DQ-GAT driving stack.

Thin bindings over the C++ simulator, observation builder, agents, trainer and
benchmark harness.
"""

from ._core import (
    ACTION_SPEEDS_KMH,
    EVAL_SEED_FLOOR,
    Observation,
    Policy,
    QNetwork,
    ReplayBuffer,
    ScenarioConfig,
    World,
    benchmark,
    double_q_targets,
    make_policy,
    observe,
    reward,
    scenarios,
    train,
    ttc,
)

__all__ = [
    "ACTION_SPEEDS_KMH",
    "EVAL_SEED_FLOOR",
    "Observation",
    "Policy",
    "QNetwork",
    "ReplayBuffer",
    "ScenarioConfig",
    "World",
    "benchmark",
    "double_q_targets",
    "make_policy",
    "observe",
    "reward",
    "scenarios",
    "train",
    "ttc",
]


def run_episode(policy, config):
    """Runs one episode and returns (events, steps, return)."""
    world = World(config)
    policy.reset(world, config.seed)
    total = 0.0
    events = None
    while not world.terminal:
        r, events = world.step(policy.act(world))
        total += r
    return events, world.step_count, total
