"""
Networks — the shared-trunk Actor-Critic-Discriminator, the DCGAN-style
generator, and the convolutional autoencoder baseline.

Shapes (batch dimension omitted):
  Trunk           3x64x64 -> 64x32x32 -> 128x16x16 -> 256x8x8 -> 512x4x4 -> 8192
  Heads           8192 -> action logits | value | realness score
  Generator       100 -> 512x4x4 -> 256x8x8 -> 128x16x16 -> 64x32x32 -> 3x64x64
  Autoencoder     3x64x64 -> trunk -> 128 -> generator-shaped decoder -> 3x64x64
"""
import logging

import torch
import torch.nn as nn
from torch.distributions import Categorical

logger = logging.getLogger('acd.networks')

OBS_SHAPE = (3, 64, 64)
TRUNK_CHANNELS = (3, 64, 128, 256, 512)
FEATURE_DIM = 512 * 4 * 4
LATENT_DIM = 100
BOTTLENECK_DIM = 128
LEAKY_SLOPE = 0.2
KERNEL, STRIDE, PADDING = 4, 2, 1


def conv_output_size(size, kernel=KERNEL, stride=STRIDE, padding=PADDING):
    return (size - kernel + 2 * padding) // stride + 1


def dcgan_init(module):
    """N(0, 0.02) for (transposed) convolutions, N(1, 0.02) for batch-norm scales."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


def _check_obs(obs):
    if obs.dim() != 4 or tuple(obs.shape[1:]) != OBS_SHAPE:
        raise ValueError(f"Expected observations of shape [B, 3, 64, 64], got {tuple(obs.shape)}")


def _check_features(features):
    if features.dim() != 2 or features.shape[1] != FEATURE_DIM:
        raise ValueError(f"Expected features of shape [B, {FEATURE_DIM}], got {tuple(features.shape)}")


class Trunk(nn.Module):
    """Four stride-2 convolutions with LeakyReLU; no normalization (see DESIGN.md)."""

    def __init__(self):
        super().__init__()
        layers = []
        for c_in, c_out in zip(TRUNK_CHANNELS[:-1], TRUNK_CHANNELS[1:]):
            layers.append(nn.Conv2d(c_in, c_out, KERNEL, STRIDE, PADDING))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
        self.layers = nn.Sequential(*layers)
        self.apply(dcgan_init)

    def feature_maps(self, obs):
        """Activation after each convolution block, for shape inspection."""
        _check_obs(obs)
        maps = []
        x = obs
        for i in range(0, len(self.layers), 2):
            x = self.layers[i + 1](self.layers[i](x))
            maps.append(x)
        return maps

    def forward(self, obs):
        _check_obs(obs)
        return torch.flatten(self.layers(obs), start_dim=1)


class ActorCriticDiscriminator(nn.Module):
    """One trunk, three parallel linear heads: policy logits, state value, realness score."""

    def __init__(self, action_count):
        super().__init__()
        self.action_count = int(action_count)
        self.trunk = Trunk()
        self.actor = nn.Linear(FEATURE_DIM, self.action_count)
        self.critic = nn.Linear(FEATURE_DIM, 1)
        self.discriminator = nn.Linear(FEATURE_DIM, 1)
        # default uniform init for the heads; the policy head starts near-uniform
        with torch.no_grad():
            self.actor.weight.mul_(0.01)
            self.actor.bias.zero_()

    def features(self, obs):
        return self.trunk(obs)

    def actor_logits(self, features):
        _check_features(features)
        if not torch.isfinite(features).all():
            raise ValueError("Non-finite features passed to the actor head")
        return self.actor(features)

    def actor_distribution(self, features):
        return Categorical(logits=self.actor_logits(features))

    def critic_value(self, features):
        _check_features(features)
        return self.critic(features).squeeze(-1)

    def discriminator_score(self, features):
        """Raw score, no squashing: the least-squares losses consume it as is."""
        _check_features(features)
        return self.discriminator(features).squeeze(-1)

    def forward(self, obs):
        features = self.features(obs)
        return self.actor_distribution(features), self.critic_value(features)


class Generator(nn.Module):
    """Latent -> observation-shaped image in [0, 1]. BatchNorm + ReLU on hidden layers, sigmoid out."""

    def __init__(self, latent_dim=LATENT_DIM):
        super().__init__()
        self.latent_dim = int(latent_dim)
        self.project = nn.Linear(self.latent_dim, FEATURE_DIM)
        self.project_norm = nn.BatchNorm2d(512)
        self.decode = _deconv_stack()
        self.apply(dcgan_init)
        nn.init.normal_(self.project.weight, 0.0, 0.02)
        nn.init.zeros_(self.project.bias)

    def forward(self, latent):
        if latent.dim() != 2 or latent.shape[1] != self.latent_dim:
            raise ValueError(f"Expected latent of shape [B, {self.latent_dim}], got {tuple(latent.shape)}")
        x = self.project(latent).view(-1, 512, 4, 4)
        x = torch.relu(self.project_norm(x))
        return self.decode(x)


def _deconv_stack():
    """512x4x4 -> 3x64x64, mirror of the trunk."""
    channels = TRUNK_CHANNELS[::-1]
    layers = []
    for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
        layers.append(nn.ConvTranspose2d(c_in, c_out, KERNEL, STRIDE, PADDING))
        if i < len(channels) - 2:
            layers.append(nn.BatchNorm2d(c_out))
            layers.append(nn.ReLU())
    layers.append(nn.Sigmoid())
    return nn.Sequential(*layers)


def sample_latent(batch, latent_dim=LATENT_DIM, generator=None):
    """i.i.d. standard normal latent batch; pass a torch.Generator for reproducible draws."""
    if batch < 1:
        raise ValueError(f"Latent batch size must be >= 1, got {batch}")
    return torch.randn(batch, latent_dim, generator=generator)


class ConvAutoencoder(nn.Module):
    """Trunk-shaped encoder, 128-d bottleneck, generator-shaped decoder, trained on MSE."""

    def __init__(self, bottleneck=BOTTLENECK_DIM):
        super().__init__()
        self.bottleneck = int(bottleneck)
        self.encoder = Trunk()
        self.encode_fc = nn.Linear(FEATURE_DIM, self.bottleneck)
        self.decode_fc = nn.Linear(self.bottleneck, FEATURE_DIM)
        self.decode_norm = nn.BatchNorm2d(512)
        self.decode = _deconv_stack()
        self.decode.apply(dcgan_init)
        dcgan_init(self.decode_norm)

    def encode(self, obs):
        return self.encode_fc(self.encoder(obs))

    def forward(self, obs):
        code = self.encode(obs)
        x = self.decode_fc(code).view(-1, 512, 4, 4)
        return self.decode(torch.relu(self.decode_norm(x)))


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())
