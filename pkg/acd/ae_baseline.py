"""
Autoencoder baseline — measures how an MSE autoencoder and a RaLSGAN
generator render the small moving sprites of a toy game.

Experiment (run_ae_experiment):
  1. collect_dataset       random policy through the macro-step pipeline,
                           every observation stored with its MOVING mask
  2. train_autoencoder     bottleneck-128 ConvAutoencoder on pixel MSE
  3. region_error_report   held-out MSE under MOVING vs STATIC pixels
  4. gan_pretrain          discriminator/generator steps only, no RL
  5. grids + report.json   sample grid, reconstruction grid, numbers

A ratio mse_moving / mse_static well above 1 is the blur: the autoencoder
gets the background right and smears the ball and paddles.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F
from scipy import stats
from torchvision.utils import save_image

from .algo import ACDAgent, discriminator_step, generator_step, make_rmsprop
from .checkpoint import save_checkpoint
from .env_core import GameKind, ToyEnv, MAX_EPISODE_TICKS
from .hyperconfig import HyperConfig
from .networks import BOTTLENECK_DIM, OBS_SHAPE, ConvAutoencoder
from .preprocess import macro_step

logger = logging.getLogger('acd.ae_baseline')

DATASET_FILE = 'dataset.npz'
REPORT_FILE = 'report.json'
SAMPLE_GRID_FILE = 'gan_samples.png'
RECONSTRUCTION_GRID_FILE = 'ae_reconstructions.png'
AE_CHECKPOINT_FILE = 'autoencoder.npz'
GAN_CHECKPOINT_FILE = 'gan.npz'

GRID_SIDE = 8
HOLDOUT_FRACTION = 0.1
MIN_STATIC_MSE = 1e-12
EVAL_BATCH = 256


class DatasetError(ValueError):
    pass


@dataclass
class FrameDataset:
    observations: np.ndarray            # float32 (n, 3, 64, 64)
    masks: Optional[np.ndarray]         # bool (n, 64, 64), True on MOVING pixels
    kind: GameKind
    seed: int

    def __post_init__(self):
        self.kind = GameKind.from_name(self.kind)
        self.observations = np.asarray(self.observations, dtype=np.float32)
        if self.observations.ndim != 4 or self.observations.shape[1:] != OBS_SHAPE:
            raise DatasetError(f"Observations must be [n, 3, 64, 64], got {self.observations.shape}")
        if self.masks is not None:
            self.masks = np.asarray(self.masks, dtype=bool)
            if self.masks.shape != (len(self.observations),) + OBS_SHAPE[1:]:
                raise DatasetError(f"Masks {self.masks.shape} do not align with "
                                   f"{len(self.observations)} observations")

    def __len__(self):
        return len(self.observations)

    def subset(self, indices):
        masks = None if self.masks is None else self.masks[indices]
        return FrameDataset(self.observations[indices], masks, self.kind, self.seed)

    def split(self, holdout_fraction=HOLDOUT_FRACTION):
        """Seeded shuffle into (train, held_out); each side keeps at least one frame."""
        if len(self) < 2:
            raise DatasetError("Need at least 2 frames to hold any out")
        order = np.random.default_rng(self.seed).permutation(len(self))
        n_held = min(len(self) - 1, max(1, int(round(len(self) * holdout_fraction))))
        return self.subset(np.sort(order[n_held:])), self.subset(np.sort(order[:n_held]))

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {
            'observations': self.observations,
            'kind': np.array(self.kind.value),
            'seed': np.array(self.seed, dtype=np.int64),
            'count': np.array(len(self), dtype=np.int64),
        }
        if self.masks is not None:
            arrays['masks'] = self.masks
        np.savez_compressed(path, **arrays)
        return path

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            masks = data['masks'] if 'masks' in data.files else None
            dataset = cls(data['observations'], masks, str(data['kind']), int(data['seed']))
            if int(data['count']) != len(dataset):
                raise DatasetError(f"{path}: header says {int(data['count'])} frames, found {len(dataset)}")
        return dataset


def collect_dataset(kind, n_frames, seed, max_episode_ticks=MAX_EPISODE_TICKS):
    """Uniform-random actions through the same macro-step pipeline the agent sees."""
    if n_frames < 1:
        raise DatasetError(f"n_frames must be >= 1, got {n_frames}")
    kind = GameKind.from_name(kind)
    env_seed, policy_seed = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)
    env = ToyEnv(kind, max_episode_ticks)
    policy = np.random.default_rng(int(policy_seed))

    observations = np.empty((n_frames,) + OBS_SHAPE, dtype=np.float32)
    masks = np.empty((n_frames,) + OBS_SHAPE[1:], dtype=bool)
    env.reset(seed=int(env_seed))
    episodes = 0
    for i in range(n_frames):
        step = macro_step(env, int(policy.integers(env.action_space.n)))
        observations[i] = step.observation
        masks[i] = step.moving_mask
        if step.done:
            episodes += 1
            env.reset()
    env.close()

    logger.info(f"Collected {n_frames} {kind.value} frames (seed {seed}, {episodes} episodes finished); "
                f"moving pixels {masks.mean():.4f} of the frame")
    return FrameDataset(observations, masks, kind, int(seed))


# ── Autoencoder ──

@dataclass
class AutoencoderRun:
    model: ConvAutoencoder
    optimizer: torch.optim.Optimizer
    loss_history: List[float] = field(default_factory=list)     # mean training MSE per epoch


def train_autoencoder(dataset, epochs, cfg=None, seed=0, bottleneck=BOTTLENECK_DIM):
    """Minimize pixel MSE with the run's RMSProp settings and minibatch size."""
    if len(dataset) == 0:
        raise DatasetError("Cannot train an autoencoder on an empty dataset")
    cfg = cfg or HyperConfig()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        model = ConvAutoencoder(bottleneck)
    optimizer = make_rmsprop(model.parameters(), cfg)
    shuffle = torch.Generator().manual_seed(int(seed))
    data = torch.from_numpy(dataset.observations)
    n = len(data)

    run = AutoencoderRun(model, optimizer)
    model.train()
    for epoch in range(epochs):
        order = torch.randperm(n, generator=shuffle)
        total = 0.0
        for start in range(0, n, cfg.minibatch):
            batch = data[order[start:start + cfg.minibatch]]
            loss = F.mse_loss(model(batch), batch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        run.loss_history.append(total / n)
        logger.debug(f"AE epoch {epoch + 1}/{epochs}: mse={run.loss_history[-1]:.6f}")

    if run.loss_history:
        logger.info(f"Autoencoder trained: {epochs} epochs on {n} frames, final mse {run.loss_history[-1]:.6f}")
    return run


def region_error_report(model, dataset, batch_size=EVAL_BATCH):
    """
    Reconstruction MSE split by the MOVING mask (applied to all 3 channels).

    mse_total is the pixel-count-weighted mean of the two regions. Evaluates
    in eval mode and restores the model's mode afterwards.
    """
    if dataset.masks is None:
        raise DatasetError("region_error_report needs a dataset with MOVING masks")
    channels = OBS_SHAPE[0]
    sums = {'moving': 0.0, 'static': 0.0}
    counts = {'moving': 0, 'static': 0}

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for start in range(0, len(dataset), batch_size):
                obs = dataset.observations[start:start + batch_size]
                recon = model(torch.from_numpy(obs)).numpy().astype(np.float64)
                per_pixel = ((recon - obs.astype(np.float64)) ** 2).sum(axis=1)
                moving = dataset.masks[start:start + batch_size]
                sums['moving'] += float(per_pixel[moving].sum())
                sums['static'] += float(per_pixel[~moving].sum())
                counts['moving'] += int(moving.sum())
                counts['static'] += int((~moving).sum())
    finally:
        model.train(was_training)

    mse_moving = sums['moving'] / (counts['moving'] * channels) if counts['moving'] else 0.0
    mse_static = sums['static'] / (counts['static'] * channels) if counts['static'] else 0.0
    total_pixels = counts['moving'] + counts['static']
    return {
        'mse_moving': mse_moving,
        'mse_static': mse_static,
        'ratio': mse_moving / max(mse_static, MIN_STATIC_MSE),
        'mse_total': (sums['moving'] + sums['static']) / (total_pixels * channels),
        'moving_pixels': counts['moving'],
        'static_pixels': counts['static'],
    }


def blur_significance(ratios):
    """One-sided one-sample t-test of region-error ratios against 1 (no blur)."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.size < 2:
        raise ValueError(f"Need ratios from at least 2 seeds, got {ratios.size}")
    result = stats.ttest_1samp(ratios, 1.0, alternative='greater')
    return {
        'n': int(ratios.size),
        'mean_ratio': float(ratios.mean()),
        't_statistic': _finite_or_none(result.statistic),
        'p_value': _finite_or_none(result.pvalue),
    }


def _finite_or_none(value):
    value = float(value)
    return value if math.isfinite(value) else None


# ── GAN ──

@dataclass
class GanRun:
    agent: ACDAgent
    d_history: List[float] = field(default_factory=list)
    g_history: List[float] = field(default_factory=list)


def gan_pretrain(dataset, cfg=None, steps=1000, seed=0):
    """RaLSGAN on dataset frames alone: one discriminator step then one generator step per minibatch."""
    if len(dataset) == 0:
        raise DatasetError("Cannot pretrain a GAN on an empty dataset")
    cfg = cfg or HyperConfig()
    agent = ACDAgent(dataset.kind.action_count, cfg, seed)
    data = torch.from_numpy(dataset.observations)
    batch = min(cfg.minibatch, len(data))

    run = GanRun(agent)
    for step in range(steps):
        idx = torch.randint(len(data), (batch,), generator=agent.rngs['shuffle'])
        real_obs = data[idx]
        d_loss, real_score, fake_score = discriminator_step(agent, real_obs)
        run.d_history.append(d_loss)
        run.g_history.append(generator_step(agent, real_obs))
        if (step + 1) % 100 == 0:
            logger.debug(f"GAN step {step + 1}/{steps}: D={d_loss:.4f} G={run.g_history[-1]:.4f} "
                         f"real={real_score:.3f} fake={fake_score:.3f}")

    logger.info(f"GAN pretrained: {steps} steps on {len(data)} frames")
    return run


def discriminator_scores(agent, observations, batch_size=EVAL_BATCH):
    """Mean discriminator score on real frames vs an equal number of fresh fakes."""
    net = agent.net
    real, fake = [], []
    with torch.no_grad():
        for start in range(0, len(observations), batch_size):
            chunk = torch.as_tensor(observations[start:start + batch_size])
            real.append(net.discriminator_score(net.features(chunk)))
            fake.append(net.discriminator_score(net.features(agent.fake_batch(len(chunk)))))
    mean_real = torch.cat(real).mean().item()
    mean_fake = torch.cat(fake).mean().item()
    return {'mean_real_score': mean_real, 'mean_fake_score': mean_fake, 'score_gap': mean_real - mean_fake}


# ── Image grids ──
# Channels are the 3 stacked ticks, written as RGB: motion shows up as colour fringes.

def save_sample_grid(agent, path, side=GRID_SIDE):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(agent.fake_batch(side * side), str(path), nrow=side, padding=2)
    return path


def save_reconstruction_grid(model, observations, path, side=GRID_SIDE):
    """Alternating rows: inputs, then their reconstructions."""
    pairs = side // 2
    inputs = torch.as_tensor(observations[:pairs * side])
    if len(inputs) < pairs * side:
        raise DatasetError(f"Need {pairs * side} frames for a {side}x{side} reconstruction grid, "
                           f"got {len(inputs)}")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            recon = model(inputs)
    finally:
        model.train(was_training)
    rows = torch.stack([inputs.view(pairs, side, *OBS_SHAPE), recon.view(pairs, side, *OBS_SHAPE)], dim=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(rows.reshape(-1, *OBS_SHAPE), str(path), nrow=side, padding=2)
    return path


# ── Experiment ──

def run_ae_experiment(kind, n_frames, epochs, out_dir, seed=0, gan_steps=None, cfg=None):
    """Full baseline for one seed; writes the dataset, checkpoints, grids and report.json into out_dir."""
    cfg = cfg or HyperConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info("=" * 50)
    logger.info(f"AE EXPERIMENT {GameKind.from_name(kind).value}: {n_frames} frames, {epochs} epochs, seed {seed}")
    logger.info("=" * 50)

    dataset = collect_dataset(kind, n_frames, seed, cfg.max_episode_ticks)
    dataset.save(out_dir / DATASET_FILE)
    train_set, held_out = dataset.split()

    ae = train_autoencoder(train_set, epochs, cfg, seed)
    region = region_error_report(ae.model, held_out)
    logger.info(f"Held-out region errors: moving={region['mse_moving']:.6f} "
                f"static={region['mse_static']:.6f} ratio={region['ratio']:.2f}")

    if gan_steps is None:
        gan_steps = epochs * math.ceil(len(train_set) / cfg.minibatch)
    gan = gan_pretrain(train_set, cfg, gan_steps, seed)
    scores = discriminator_scores(gan.agent, held_out.observations)
    logger.info(f"Held-out discriminator scores: real={scores['mean_real_score']:.4f} "
                f"fake={scores['mean_fake_score']:.4f}")

    save_checkpoint(out_dir / AE_CHECKPOINT_FILE, {'autoencoder': ae.model}, {'autoencoder': ae.optimizer},
                    {}, cfg, {'kind': dataset.kind.value, 'seed': int(seed), 'epochs': int(epochs)})
    save_checkpoint(out_dir / GAN_CHECKPOINT_FILE, gan.agent.modules, gan.agent.optimizers, gan.agent.rngs,
                    cfg, {'kind': dataset.kind.value, 'seed': int(seed), 'steps': int(gan_steps)})
    save_sample_grid(gan.agent, out_dir / SAMPLE_GRID_FILE)
    grid_frames = GRID_SIDE * (GRID_SIDE // 2)
    source = held_out if len(held_out) >= grid_frames else dataset
    if len(source) >= grid_frames:
        save_reconstruction_grid(ae.model, source.observations, out_dir / RECONSTRUCTION_GRID_FILE)
    else:
        logger.warning(f"Only {len(dataset)} frames; skipping the reconstruction grid")

    report = {
        'kind': dataset.kind.value,
        'seed': int(seed),
        'frames': {'total': len(dataset), 'train': len(train_set), 'held_out': len(held_out)},
        'epochs': int(epochs),
        'gan_steps': int(gan_steps),
        'region_errors': region,
        'discriminator_scores': scores,
        'ae_loss_history': ae.loss_history,
        'gan_d_loss_history': gan.d_history,
        'gan_g_loss_history': gan.g_history,
    }
    (out_dir / REPORT_FILE).write_text(json.dumps(report, indent=2) + '\n')
    logger.info(f"AE EXPERIMENT DONE: report at {out_dir / REPORT_FILE}")
    return report


def run_ae_study(kind, n_frames, epochs, out_dir, seeds, gan_steps=None, cfg=None):
    """run_ae_experiment per seed (in seed_<s>/ subdirectories) plus the blur t-test across seeds."""
    out_dir = Path(out_dir)
    reports = [run_ae_experiment(kind, n_frames, epochs, out_dir / f"seed_{s}", s, gan_steps, cfg)
               for s in seeds]
    ratios = [r['region_errors']['ratio'] for r in reports]
    summary = {
        'kind': GameKind.from_name(kind).value,
        'seeds': [int(s) for s in seeds],
        'ratios': ratios,
        'seeds_with_ratio_at_least_2': sum(ratio >= 2.0 for ratio in ratios),
        'seeds_with_real_above_fake': sum(r['discriminator_scores']['score_gap'] > 0 for r in reports),
        'blur_significance': blur_significance(ratios) if len(ratios) >= 2 else None,
    }
    (out_dir / REPORT_FILE).write_text(json.dumps(summary, indent=2) + '\n')
    return summary
