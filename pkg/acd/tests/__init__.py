from acd.hyperconfig import HyperConfig


def tiny_config(**overrides):
    """Desk-test scale: 2 envs x 8 macro-steps, one 8-sample minibatch pass per update."""
    values = dict(n_env=2, horizon=8, minibatch=8, epochs=1, checkpoint_every=2, max_episode_ticks=300)
    values.update(overrides)
    return HyperConfig(**values)
