"""
Algo — GAE, the PPO clipped objective, the relativistic-average
least-squares GAN losses, and the two update schedules built from them.

  ppo_update  — epochs x shuffled minibatches of c1*policy + c_v*value - c2*entropy
  acd_update  — same, plus c_d * L_D on the shared trunk (real minibatch vs
                detached generator fakes), then one generator step on L_G
                with the trunk and heads frozen

Losses are pure functions of tensors. ACDAgent owns parameters, optimizers
and the three RNG streams (actions, minibatch shuffling, latents) that make
runs reproducible.
"""
import logging
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn

from .metrics import MetricsRecord
from .networks import ActorCriticDiscriminator, Generator, OBS_SHAPE, sample_latent

logger = logging.getLogger('acd.algo')

ADV_EPS = 1e-8


class BufferIncompleteError(ValueError):
    pass


# ── Advantage estimation ──

def compute_gae(rewards, values, dones, bootstrap_values, gamma, lam):
    """
    Generalized advantage estimation over a [T, ...] rollout.

      delta_t = r_t + gamma * (1 - done_t) * V_{t+1} - V_t,   V_T = bootstrap
      A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}

    Returns (advantages, returns) in float64, returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    bootstrap_values = np.asarray(bootstrap_values, dtype=np.float64)

    if rewards.ndim < 1 or rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(f"rewards {rewards.shape}, values {values.shape} and dones {dones.shape} must match")
    if bootstrap_values.shape != rewards.shape[1:]:
        raise ValueError(f"bootstrap_values {bootstrap_values.shape} must have shape {rewards.shape[1:]}")
    if not 0 < gamma <= 1 or not 0 <= lam <= 1:
        raise ValueError(f"gamma={gamma}, lambda={lam} out of range")

    advantages = np.zeros_like(rewards)
    running = np.zeros_like(bootstrap_values)
    next_values = bootstrap_values
    for t in reversed(range(rewards.shape[0])):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * mask * next_values - values[t]
        running = delta + gamma * lam * mask * running
        advantages[t] = running
        next_values = values[t]

    return advantages, advantages + values


@dataclass
class RolloutBuffer:
    obs: np.ndarray                 # float32 [T, N, 3, 64, 64]
    actions: np.ndarray             # int64 [T, N]
    logprob_old: np.ndarray         # float32 [T, N]
    values: np.ndarray              # float32 [T, N]
    rewards: np.ndarray             # float64 [T, N]
    dones: np.ndarray               # bool [T, N]
    bootstrap_values: Optional[np.ndarray] = None   # [N]
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    @classmethod
    def allocate(cls, horizon, n_env, obs_shape=OBS_SHAPE):
        return cls(
            obs=np.zeros((horizon, n_env) + tuple(obs_shape), dtype=np.float32),
            actions=np.zeros((horizon, n_env), dtype=np.int64),
            logprob_old=np.zeros((horizon, n_env), dtype=np.float32),
            values=np.zeros((horizon, n_env), dtype=np.float32),
            rewards=np.zeros((horizon, n_env), dtype=np.float64),
            dones=np.zeros((horizon, n_env), dtype=bool),
        )

    @property
    def horizon(self):
        return self.rewards.shape[0]

    @property
    def n_env(self):
        return self.rewards.shape[1]

    @property
    def complete(self):
        return self.advantages is not None and self.returns is not None

    def finish(self, bootstrap_values, gamma, lam):
        self.bootstrap_values = np.asarray(bootstrap_values, dtype=np.float64)
        self.advantages, self.returns = compute_gae(self.rewards, self.values, self.dones,
                                                    self.bootstrap_values, gamma, lam)


# ── Losses ──

class PPOLoss(NamedTuple):
    total: torch.Tensor
    policy: torch.Tensor
    value: torch.Tensor
    entropy: torch.Tensor


def _require_finite(**tensors):
    for name, tensor in tensors.items():
        if not torch.isfinite(tensor).all():
            raise ValueError(f"Non-finite values in {name}")


def ppo_loss(logprob_new, logprob_old, entropy, advantages, values_pred, returns, cfg):
    """Clipped surrogate + value regression - entropy bonus. Advantages carry no gradient."""
    _require_finite(logprob_new=logprob_new, logprob_old=logprob_old, entropy=entropy,
                    advantages=advantages, values_pred=values_pred, returns=returns)
    advantages = advantages.detach()
    ratio = torch.exp(logprob_new - logprob_old.detach())
    surrogate = torch.min(ratio * advantages,
                          torch.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantages)
    policy = -surrogate.mean()
    value = ((values_pred - returns.detach()) ** 2).mean()
    entropy_term = entropy.mean()
    total = cfg.c1 * policy + cfg.c_v * value - cfg.c2 * entropy_term
    return PPOLoss(total, policy, value, entropy_term)


def _check_scores(real_scores, fake_scores):
    if real_scores.numel() == 0 or fake_scores.numel() == 0:
        raise ValueError("RaLSGAN losses need at least one real and one fake score")


def ralsgan_d_loss(real_scores, fake_scores):
    """Discriminator side: real should beat the average fake by 1, fake trail the average real by 1."""
    _check_scores(real_scores, fake_scores)
    return (((real_scores - fake_scores.mean() - 1.0) ** 2).mean()
            + ((fake_scores - real_scores.mean() + 1.0) ** 2).mean())


def ralsgan_g_loss(real_scores, fake_scores):
    """Generator side: the same formulation with the roles of real and fake swapped."""
    _check_scores(real_scores, fake_scores)
    return (((fake_scores - real_scores.mean() - 1.0) ** 2).mean()
            + ((real_scores - fake_scores.mean() + 1.0) ** 2).mean())


# ── Agent ──

@contextmanager
def frozen(module):
    """Temporarily stop gradients into `module`'s parameters."""
    flags = [p.requires_grad for p in module.parameters()]
    for p in module.parameters():
        p.requires_grad_(False)
    try:
        yield module
    finally:
        for p, flag in zip(module.parameters(), flags):
            p.requires_grad_(flag)


def make_rmsprop(params, cfg):
    return torch.optim.RMSprop(params, lr=cfg.learning_rate, alpha=cfg.rmsprop_alpha, eps=cfg.rmsprop_eps)


class ACDAgent:
    """Shared-trunk ACD network, its generator, their optimizers and the run's RNG streams."""

    def __init__(self, action_count, cfg, seed):
        self.cfg = cfg
        self.seed = int(seed)
        stream_seeds = np.random.SeedSequence(self.seed).generate_state(4)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(int(stream_seeds[0]))
            self.net = ActorCriticDiscriminator(action_count)
            self.generator = Generator(cfg.latent_dim)
        self.net_optimizer = make_rmsprop(self.net.parameters(), cfg)
        self.gen_optimizer = make_rmsprop(self.generator.parameters(), cfg)
        self.rngs = {
            'action': torch.Generator().manual_seed(int(stream_seeds[1])),
            'shuffle': torch.Generator().manual_seed(int(stream_seeds[2])),
            'latent': torch.Generator().manual_seed(int(stream_seeds[3])),
        }
        logger.info(f"ACDAgent: {action_count} actions, seed {self.seed}, "
                    f"net {sum(p.numel() for p in self.net.parameters())} params, "
                    f"generator {sum(p.numel() for p in self.generator.parameters())} params")

    @property
    def modules(self):
        return {'net': self.net, 'generator': self.generator}

    @property
    def optimizers(self):
        return {'net': self.net_optimizer, 'generator': self.gen_optimizer}

    @torch.no_grad()
    def act(self, obs):
        """Sample actions for a batch of observations -> (actions, log-probs, values) as numpy."""
        features = self.net.features(torch.as_tensor(obs, dtype=torch.float32))
        dist = self.net.actor_distribution(features)
        actions = torch.multinomial(dist.probs, 1, generator=self.rngs['action']).squeeze(1)
        return (actions.numpy(), dist.log_prob(actions).numpy(),
                self.net.critic_value(features).numpy())

    @torch.no_grad()
    def value(self, obs):
        features = self.net.features(torch.as_tensor(obs, dtype=torch.float32))
        return self.net.critic_value(features).numpy()

    def fake_batch(self, batch):
        """Generator samples with no path back to the generator's parameters."""
        latent = sample_latent(batch, self.cfg.latent_dim, generator=self.rngs['latent'])
        with torch.no_grad():
            return self.generator(latent)


def _clip(module, max_norm):
    if max_norm > 0:
        nn.utils.clip_grad_norm_(module.parameters(), max_norm)


def discriminator_loss(agent, real_features, batch):
    """L_D for real features already computed by the trunk vs a fresh fake batch."""
    fake_features = agent.net.features(agent.fake_batch(batch))
    real_scores = agent.net.discriminator_score(real_features)
    fake_scores = agent.net.discriminator_score(fake_features)
    return ralsgan_d_loss(real_scores, fake_scores), real_scores, fake_scores


def discriminator_step(agent, real_obs):
    """One optimizer step of the ACD network on L_D alone (GAN pretraining, coupling checks)."""
    loss, real_scores, fake_scores = discriminator_loss(agent, agent.net.features(real_obs), real_obs.shape[0])
    agent.net_optimizer.zero_grad()
    loss.backward()
    _clip(agent.net, agent.cfg.max_grad_norm)
    agent.net_optimizer.step()
    return loss.item(), real_scores.mean().item(), fake_scores.mean().item()


def generator_step(agent, real_obs):
    """One generator step on L_G; trunk and heads are frozen so they stay bitwise unchanged."""
    net = agent.net
    with frozen(net):
        with torch.no_grad():
            real_scores = net.discriminator_score(net.features(real_obs))
        latent = sample_latent(real_obs.shape[0], agent.cfg.latent_dim, generator=agent.rngs['latent'])
        fake_scores = net.discriminator_score(net.features(agent.generator(latent)))
        loss = ralsgan_g_loss(real_scores, fake_scores)
        agent.gen_optimizer.zero_grad()
        loss.backward()
        _clip(agent.generator, agent.cfg.max_grad_norm)
        agent.gen_optimizer.step()
    return loss.item()


# ── Updates ──

def ppo_update(agent, buffer, cfg):
    """Plain PPO: no discriminator term, no generator step."""
    return _update(agent, buffer, cfg, adversarial=False, with_generator=False)


def acd_update(agent, buffer, cfg, with_generator=None):
    """PPO plus the discriminator loss on the shared trunk, alternating with generator steps."""
    if with_generator is None:
        with_generator = cfg.generator_step
    return _update(agent, buffer, cfg, adversarial=True, with_generator=with_generator)


def _flat(array, dtype=torch.float32):
    return torch.as_tensor(np.ascontiguousarray(array.reshape((-1,) + array.shape[2:])), dtype=dtype)


def _update(agent, buffer, cfg, adversarial, with_generator):
    if not buffer.complete:
        raise BufferIncompleteError("Rollout buffer has no advantages; call finish() first")

    obs = _flat(buffer.obs)
    actions = _flat(buffer.actions, torch.int64)
    logprob_old = _flat(buffer.logprob_old)
    advantages = _flat(buffer.advantages)
    returns = _flat(buffer.returns)
    if cfg.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + ADV_EPS)

    n_samples = obs.shape[0]
    if n_samples % cfg.minibatch:
        raise ValueError(f"minibatch {cfg.minibatch} does not divide {n_samples} samples")

    net = agent.net
    totals = defaultdict(float)
    steps = 0
    for _ in range(cfg.epochs):
        order = torch.randperm(n_samples, generator=agent.rngs['shuffle'])
        for start in range(0, n_samples, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            real_obs = obs[idx]

            features = net.features(real_obs)
            dist = net.actor_distribution(features)
            losses = ppo_loss(dist.log_prob(actions[idx]), logprob_old[idx], dist.entropy(),
                              advantages[idx], net.critic_value(features), returns[idx], cfg)
            total = losses.total
            if adversarial:
                d_loss, real_scores, fake_scores = discriminator_loss(agent, features, real_obs.shape[0])
                total = total + cfg.c_d * d_loss
                totals['d_loss'] += d_loss.item()
                totals['real_score'] += real_scores.mean().item()
                totals['fake_score'] += fake_scores.mean().item()

            agent.net_optimizer.zero_grad()
            total.backward()
            _clip(net, cfg.max_grad_norm)
            agent.net_optimizer.step()

            if adversarial and with_generator:
                totals['g_loss'] += generator_step(agent, real_obs)

            totals['policy'] += losses.policy.item()
            totals['value'] += losses.value.item()
            totals['entropy'] += losses.entropy.item()
            steps += 1

    mean = {k: v / steps for k, v in totals.items()}
    return MetricsRecord(
        policy_loss=mean['policy'],
        value_loss=mean['value'],
        entropy=mean['entropy'],
        d_loss=mean.get('d_loss', 0.0),
        g_loss=mean.get('g_loss', 0.0),
        mean_real_score=mean.get('real_score', 0.0),
        mean_fake_score=mean.get('fake_score', 0.0),
    )


UPDATES = {'ppo': ppo_update, 'acd': acd_update}
