import math
import tempfile

import numpy as np
import torch
import torch.nn.functional as F
from django.test import SimpleTestCase
from torch.distributions import Categorical

from acd.algo import (
    ACDAgent, BufferIncompleteError, RolloutBuffer, acd_update, compute_gae, discriminator_step,
    generator_step, ppo_loss, ppo_update, ralsgan_d_loss, ralsgan_g_loss,
)
from acd.hyperconfig import HyperConfig
from acd.tests import tiny_config
from acd.trainer import Trainer


def brute_force_gae(rewards, values, dones, bootstrap, gamma, lam):
    """A_t as the explicit done-masked sum of (gamma*lam)^l * delta_{t+l}."""
    next_values = np.concatenate([values[1:], bootstrap[None]], axis=0)
    deltas = rewards + gamma * (1.0 - dones) * next_values - values
    advantages = np.zeros_like(rewards)
    for t in range(len(rewards)):
        weight = np.ones_like(bootstrap)
        for step in range(t, len(rewards)):
            advantages[t] += weight * deltas[step]
            weight = weight * gamma * lam * (1.0 - dones[step])
    return advantages


def make_buffer(agent, horizon=4, n_env=2, seed=0, gamma=0.99, lam=0.95):
    rng = np.random.default_rng(seed)
    buffer = RolloutBuffer.allocate(horizon, n_env)
    buffer.obs[:] = rng.random(buffer.obs.shape, dtype=np.float32)
    for t in range(horizon):
        buffer.actions[t], buffer.logprob_old[t], buffer.values[t] = agent.act(buffer.obs[t])
    buffer.rewards[:] = rng.integers(-1, 2, size=(horizon, n_env))
    buffer.dones[:] = rng.random((horizon, n_env)) < 0.2
    buffer.finish(agent.value(buffer.obs[-1]), gamma, lam)
    return buffer


def double(*shape, gen):
    return torch.randn(*shape, dtype=torch.float64, generator=gen)


class GAETests(SimpleTestCase):

    def test_zero_rewards_and_values(self):
        advantages, returns = compute_gae(np.zeros((5, 3)), np.zeros((5, 3)), np.zeros((5, 3)),
                                          np.zeros(3), 0.99, 0.95)
        np.testing.assert_array_equal(advantages, 0.0)
        np.testing.assert_array_equal(returns, 0.0)

    def test_two_step_example(self):
        advantages, returns = compute_gae([[1.0], [0.0]], [[0.5], [0.25]], [[0], [0]], [0.0], 0.99, 0.95)
        np.testing.assert_allclose(advantages[:, 0], [0.512375, -0.25], atol=1e-12)
        np.testing.assert_allclose(returns[:, 0], [1.012375, 0.0], atol=1e-12)

    def test_matches_brute_force_expansion(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(1000):
            horizon, n_env = rng.integers(1, 17), rng.integers(1, 5)
            rewards = rng.normal(size=(horizon, n_env))
            values = rng.normal(size=(horizon, n_env))
            dones = (rng.random((horizon, n_env)) < 0.3).astype(np.float64)
            bootstrap = rng.normal(size=n_env)
            gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
            advantages, _ = compute_gae(rewards, values, dones, bootstrap, gamma, lam)
            expected = brute_force_gae(rewards, values, dones, bootstrap, gamma, lam)
            worst = max(worst, float(np.abs(advantages - expected).max()))
        self.assertLessEqual(worst, 1e-9)

    def test_lambda_one_is_discounted_return_minus_value(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            horizon, gamma = rng.integers(1, 17), 0.97
            rewards = rng.normal(size=(horizon, 1))
            values = rng.normal(size=(horizon, 1))
            bootstrap = rng.normal(size=1)
            advantages, _ = compute_gae(rewards, values, np.zeros_like(rewards), bootstrap, gamma, 1.0)
            for t in range(horizon):
                discounted = sum(gamma ** (k - t) * rewards[k, 0] for k in range(t, horizon))
                discounted += gamma ** (horizon - t) * bootstrap[0]
                self.assertAlmostEqual(advantages[t, 0], discounted - values[t, 0], delta=1e-9)

    def test_shape_mismatch_rejected(self):
        with self.assertRaises(ValueError):
            compute_gae(np.zeros((4, 2)), np.zeros((4, 3)), np.zeros((4, 2)), np.zeros(2), 0.99, 0.95)
        with self.assertRaises(ValueError):
            compute_gae(np.zeros((4, 2)), np.zeros((4, 2)), np.zeros((4, 2)), np.zeros(3), 0.99, 0.95)


class PPOLossTests(SimpleTestCase):

    def setUp(self):
        self.cfg = HyperConfig()

    def loss(self, logprob_new, logprob_old, advantages, values=None, returns=None, entropy=None):
        t = lambda v: torch.as_tensor(v, dtype=torch.float64)
        n = len(advantages)
        return ppo_loss(t(logprob_new), t(logprob_old), t(entropy if entropy is not None else [0.0] * n),
                        t(advantages), t(values if values is not None else [0.0] * n),
                        t(returns if returns is not None else [0.0] * n), self.cfg)

    def test_identity_ratio(self):
        advantages = [0.3, -1.2, 2.0, 0.5]
        result = self.loss([-0.5] * 4, [-0.5] * 4, advantages)
        self.assertAlmostEqual(result.policy.item(), -np.mean(advantages), places=12)

    def test_clipped_ratio(self):
        result = self.loss([math.log(2.0)], [0.0], [1.0])
        self.assertAlmostEqual(result.policy.item(), -1.1, places=12)

    def test_value_term(self):
        self.assertEqual(self.loss([0.0], [0.0], [1.0], values=[0.7], returns=[0.7]).value.item(), 0.0)
        self.assertAlmostEqual(self.loss([0.0], [0.0], [1.0], values=[1.0], returns=[3.0]).value.item(), 4.0)

    def test_total_combines_terms(self):
        result = self.loss([0.1, -0.2], [0.0, 0.0], [1.0, -1.0], values=[0.5, 0.0], returns=[0.0, 1.0],
                           entropy=[1.0, 0.5])
        expected = self.cfg.c1 * result.policy + self.cfg.c_v * result.value - self.cfg.c2 * result.entropy
        self.assertAlmostEqual(result.total.item(), expected.item(), places=12)

    def test_surrogate_bounded_for_positive_advantage(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            ratio, advantage = rng.uniform(0.01, 5.0), rng.uniform(0.01, 3.0)
            surrogate = -self.loss([math.log(ratio)], [0.0], [advantage]).policy.item()
            self.assertLessEqual(surrogate, (1 + self.cfg.clip_eps) * advantage + 1e-12)
            clipped = min(max(ratio, 0.9), 1.1)
            self.assertLessEqual(surrogate, max(ratio * advantage, clipped * advantage) + 1e-12)

    def test_non_finite_rejected(self):
        with self.assertRaises(ValueError):
            self.loss([float('nan')], [0.0], [1.0])
        with self.assertRaises(ValueError):
            self.loss([0.0], [0.0], [float('inf')])

    def test_no_gradient_through_advantages(self):
        gen = torch.Generator().manual_seed(0)
        x = double(6, 4, gen=gen)
        policy_w = double(4, 3, gen=gen).requires_grad_()
        value_w = double(4, gen=gen).requires_grad_()
        actions = torch.tensor([0, 1, 2, 0, 1, 2])
        returns = double(6, gen=gen)

        def policy_grads(advantages):
            dist = Categorical(logits=x @ policy_w)
            logprob = dist.log_prob(actions)
            result = ppo_loss(logprob, logprob.detach() - 0.05, dist.entropy(), advantages,
                              (x @ value_w).detach(), returns, self.cfg)
            return torch.autograd.grad(result.policy, [policy_w, value_w], allow_unused=True)

        live = returns - x @ value_w
        through_graph = policy_grads(live)
        self.assertIsNone(through_graph[1])
        constant = policy_grads(live.detach().clone())
        torch.testing.assert_close(through_graph[0], constant[0], rtol=0, atol=0)


class RaLSGANLossTests(SimpleTestCase):

    def test_equal_scores(self):
        for c in (-3.0, 0.0, 2.5):
            scores = torch.full((4,), c, dtype=torch.float64)
            self.assertEqual(ralsgan_d_loss(scores, scores.clone()).item(), 2.0)
            self.assertEqual(ralsgan_g_loss(scores, scores.clone()).item(), 2.0)

    def test_separated_scores(self):
        real = torch.tensor([1.0, 1.0], dtype=torch.float64)
        fake = torch.tensor([0.0, 0.0], dtype=torch.float64)
        self.assertEqual(ralsgan_d_loss(real, fake).item(), 0.0)
        self.assertEqual(ralsgan_g_loss(real, fake).item(), 8.0)

    def test_shift_invariance(self):
        gen = torch.Generator().manual_seed(0)
        real, fake = double(7, gen=gen), double(5, gen=gen)
        for k in (-2.0, 0.5, 10.0):
            self.assertAlmostEqual(ralsgan_d_loss(real + k, fake + k).item(), ralsgan_d_loss(real, fake).item(),
                                   places=12)
            self.assertAlmostEqual(ralsgan_g_loss(real + k, fake + k).item(), ralsgan_g_loss(real, fake).item(),
                                   places=12)

    def test_generator_loss_is_discriminator_loss_swapped(self):
        gen = torch.Generator().manual_seed(1)
        real, fake = double(6, gen=gen), double(3, gen=gen)
        self.assertEqual(ralsgan_g_loss(real, fake).item(), ralsgan_d_loss(fake, real).item())

    def test_empty_batch_rejected(self):
        empty, some = torch.zeros(0), torch.zeros(3)
        for loss in (ralsgan_d_loss, ralsgan_g_loss):
            with self.assertRaises(ValueError):
                loss(empty, some)
            with self.assertRaises(ValueError):
                loss(some, empty)


class GradientCheckTests(SimpleTestCase):
    """Losses differentiated through a tiny network vs central finite differences (double precision)."""

    POINTS = 100

    def check(self, fn, params):
        self.assertLessEqual(sum(p.numel() for p in params), 200)
        self.assertTrue(torch.autograd.gradcheck(fn, params, eps=1e-6, atol=1e-8, rtol=1e-4))

    def test_ppo_total_loss(self):
        cfg = HyperConfig()
        for point in range(self.POINTS):
            gen = torch.Generator().manual_seed(point)
            x = double(5, 4, gen=gen)
            actions = torch.randint(3, (5,), generator=gen)
            advantages, returns = double(5, gen=gen), double(5, gen=gen)
            params = [double(6, 4, gen=gen), double(6, gen=gen), double(3, 6, gen=gen), double(3, gen=gen),
                      double(1, 6, gen=gen), double(1, gen=gen)]
            with torch.no_grad():
                logits = F.linear(torch.tanh(F.linear(x, params[0], params[1])), params[2], params[3])
                logprob_old = Categorical(logits=logits).log_prob(actions) + 0.02 * double(5, gen=gen)
            params = [p.requires_grad_() for p in params]

            def total(w1, b1, w2, b2, wv, bv):
                hidden = torch.tanh(F.linear(x, w1, b1))
                dist = Categorical(logits=F.linear(hidden, w2, b2))
                values = F.linear(hidden, wv, bv).squeeze(-1)
                return ppo_loss(dist.log_prob(actions), logprob_old, dist.entropy(), advantages, values,
                                returns, cfg).total

            self.check(total, params)

    def test_ralsgan_losses(self):
        for point in range(self.POINTS):
            gen = torch.Generator().manual_seed(1000 + point)
            real_x, fake_x = double(5, 4, gen=gen), double(4, 4, gen=gen)
            params = [p.requires_grad_() for p in
                      (double(6, 4, gen=gen), double(6, gen=gen), double(1, 6, gen=gen), double(1, gen=gen))]

            def scores(x, w1, b1, w2, b2):
                return F.linear(torch.tanh(F.linear(x, w1, b1)), w2, b2).squeeze(-1)

            for loss in (ralsgan_d_loss, ralsgan_g_loss):
                self.check(lambda *p: loss(scores(real_x, *p), scores(fake_x, *p)), params)


class UpdateTests(SimpleTestCase):

    def setUp(self):
        self.cfg = tiny_config(horizon=4, n_env=2, minibatch=4, epochs=2)

    def test_incomplete_buffer_rejected(self):
        agent = ACDAgent(3, self.cfg, seed=0)
        with self.assertRaises(BufferIncompleteError):
            ppo_update(agent, RolloutBuffer.allocate(4, 2), self.cfg)

    def test_fresh_policy_entropy(self):
        agent = ACDAgent(3, self.cfg, seed=0)
        record = ppo_update(agent, make_buffer(agent), self.cfg)
        self.assertAlmostEqual(record.entropy, math.log(3), delta=0.05)
        self.assertEqual(record.d_loss, 0.0)
        self.assertEqual(record.g_loss, 0.0)

    def test_acd_update_is_deterministic(self):
        def one_update():
            agent = ACDAgent(3, self.cfg, seed=5)
            return acd_update(agent, make_buffer(agent, seed=2), self.cfg)
        first, second = one_update(), one_update()
        self.assertEqual(first, second)
        self.assertGreater(first.d_loss, 0.0)
        self.assertGreater(first.g_loss, 0.0)

    def test_acd_with_zero_coefficient_matches_ppo(self):
        cfg = tiny_config(c_d=0.0, generator_step=False)
        with tempfile.TemporaryDirectory() as tmp:
            ppo = Trainer('ppo', 'toy-pong', 3, cfg, tmp)
            acd = Trainer('acd', 'toy-pong', 3, cfg, tmp)
            for _ in range(5):
                ppo.step()
                acd.step()
        ppo_state, acd_state = ppo.agent.net.state_dict(), acd.agent.net.state_dict()
        for name, tensor in ppo_state.items():
            self.assertTrue(torch.equal(tensor, acd_state[name]), name)


class CouplingTests(SimpleTestCase):

    def setUp(self):
        self.agent = ACDAgent(3, tiny_config(), seed=1)
        self.real = torch.rand(8, 3, 64, 64, generator=torch.Generator().manual_seed(0))

    def trunk_snapshot(self):
        return {k: v.clone() for k, v in self.agent.net.trunk.state_dict().items()}

    def test_discriminator_loss_moves_trunk(self):
        before = self.trunk_snapshot()
        discriminator_step(self.agent, self.real)
        after = self.agent.net.trunk.state_dict()
        delta = sum((after[k] - before[k]).norm().item() ** 2 for k in before) ** 0.5
        self.assertGreater(delta, 0.0)

    def test_generator_step_leaves_network_unchanged(self):
        net_before = {k: v.clone() for k, v in self.agent.net.state_dict().items()}
        gen_before = {k: v.clone() for k, v in self.agent.generator.state_dict().items()}
        latent = torch.randn(4, 100, generator=torch.Generator().manual_seed(9))
        self.agent.generator.eval()
        with torch.no_grad():
            sample_before = self.agent.generator(latent)
        self.agent.generator.train()

        generator_step(self.agent, self.real)

        for name, tensor in self.agent.net.state_dict().items():
            self.assertTrue(torch.equal(tensor, net_before[name]), name)
        self.assertTrue(all(p.requires_grad for p in self.agent.net.parameters()))
        changed = [k for k, v in self.agent.generator.state_dict().items() if not torch.equal(v, gen_before[k])]
        self.assertTrue(changed)
        self.agent.generator.eval()
        with torch.no_grad():
            self.assertFalse(torch.equal(sample_before, self.agent.generator(latent)))
