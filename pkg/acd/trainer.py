"""
Trainer — runs one (algorithm, game, seed) experiment end to end.

Loop per update:
  1. collect T macro-steps from N envs via VecEnv
  2. bootstrap the last state's value, compute GAE
  3. ppo_update or acd_update
  4. append a MetricsRecord row, checkpoint every `checkpoint_every` updates

A KeyboardInterrupt checkpoints the last finished update, never the live
state, so resuming replays exactly the updates an uninterrupted run would.

Frame accounting: each update consumes T * N * ACTION_REPEAT raw frames;
the run performs ceil(total_frames / that) updates.

Run directory layout:
  manifest.json   RunManifest
  config.txt      HyperConfig snapshot (key=value)
  metrics.csv     one row per update
  checkpoint.npz  latest checkpoint (resumable)
"""
import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .algo import ACDAgent, RolloutBuffer, UPDATES
from .checkpoint import capture_checkpoint, load_checkpoint, write_checkpoint
from .env_core import GameKind
from .metrics import MetricsWriter
from .preprocess import ACTION_REPEAT, VecEnv

logger = logging.getLogger('acd.trainer')

ALGORITHMS = tuple(UPDATES)
RETURN_WINDOW = 100             # completed episodes

MANIFEST_FILE = 'manifest.json'
CONFIG_FILE = 'config.txt'
METRICS_FILE = 'metrics.csv'
CHECKPOINT_FILE = 'checkpoint.npz'


@dataclass
class RunManifest:
    algorithm: str
    kind: str
    seed: int
    total_frames: int
    config: dict
    started_at: str
    finished_at: Optional[str] = None
    updates: int = 0
    global_frame: int = 0
    episodes_done: int = 0
    checkpoints: List[str] = field(default_factory=list)

    def save(self, run_dir):
        path = Path(run_dir) / MANIFEST_FILE
        path.write_text(json.dumps(asdict(self), indent=2) + '\n')
        return path

    @classmethod
    def load(cls, run_dir):
        path = Path(run_dir) / MANIFEST_FILE
        return cls(**json.loads(path.read_text()))


class Boundary(NamedTuple):
    """Trainer state between two updates, captured in memory."""
    updates: int
    global_frame: int
    episodes_done: int
    arrays: Dict[str, np.ndarray]


def frames_per_update(cfg):
    return cfg.horizon * cfg.n_env * ACTION_REPEAT


def env_seeds(seed, n_env):
    """Distinct, reproducible per-env seeds derived from the run seed."""
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(n_env, dtype=np.uint64)]


def _now():
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


class Trainer:
    """One training run. Deterministic given (algorithm, kind, seed, cfg)."""

    def __init__(self, algorithm, kind, seed, cfg, out_dir):
        if algorithm not in UPDATES:
            raise ValueError(f"Unknown algorithm {algorithm!r} (expected one of {ALGORITHMS})")
        self.algorithm = algorithm
        self.kind = GameKind.from_name(kind)
        self.seed = int(seed)
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.update_fn = UPDATES[algorithm]

        self.vec = VecEnv(self.kind, env_seeds(self.seed, cfg.n_env), cfg.max_episode_ticks,
                          gamma=cfg.gamma, workers=cfg.vec_workers, clip_rewards=cfg.clip_rewards)
        self.agent = ACDAgent(self.vec.action_count, cfg, self.seed)
        self.next_obs = self.vec.reset()

        self.updates = 0
        self.global_frame = 0
        self.episodes_done = 0
        self.recent_returns = deque(maxlen=RETURN_WINDOW)
        self.recent_discounted = deque(maxlen=RETURN_WINDOW)
        self.manifest = None
        self.boundary = None

    @property
    def checkpoint_path(self):
        return self.out_dir / CHECKPOINT_FILE

    # ── Rollout ──

    def collect_rollout(self):
        cfg = self.cfg
        buffer = RolloutBuffer.allocate(cfg.horizon, cfg.n_env)
        obs = self.next_obs
        for t in range(cfg.horizon):
            actions, logprobs, values = self.agent.act(obs)
            step = self.vec.step(actions)
            buffer.obs[t] = obs
            buffer.actions[t] = actions
            buffer.logprob_old[t] = logprobs
            buffer.values[t] = values
            buffer.rewards[t] = step.rewards
            buffer.dones[t] = step.dones
            for episode in step.episodes:
                self.episodes_done += 1
                self.recent_returns.append(episode.episode_return)
                self.recent_discounted.append(episode.discounted_return)
            obs = step.observations
        self.next_obs = obs
        buffer.finish(self.agent.value(obs), cfg.gamma, cfg.gae_lambda)
        return buffer

    # ── Main loop ──

    def run(self, total_frames=None, resume=False):
        cfg = self.cfg
        total_frames = int(total_frames or cfg.total_frames)
        per_update = frames_per_update(cfg)
        target_updates = max(1, math.ceil(total_frames / per_update))

        self.out_dir.mkdir(parents=True, exist_ok=True)
        if resume and self.checkpoint_path.exists():
            self.restore()
            self.manifest = RunManifest.load(self.out_dir)
            self.manifest.finished_at = None
        else:
            for stale in (METRICS_FILE, CHECKPOINT_FILE):
                (self.out_dir / stale).unlink(missing_ok=True)
            self.manifest = RunManifest(algorithm=self.algorithm, kind=self.kind.value, seed=self.seed,
                                        total_frames=total_frames, config=cfg.to_dict(),
                                        started_at=_now())
            (self.out_dir / CONFIG_FILE).write_text(cfg.to_text())
        self.manifest.total_frames = total_frames
        self.manifest.save(self.out_dir)

        writer = MetricsWriter(self.out_dir / METRICS_FILE)
        if resume:
            writer.truncate_after(self.global_frame)

        logger.info("=" * 50)
        logger.info(f"TRAIN {self.algorithm} on {self.kind.value}, seed {self.seed}: "
                    f"{target_updates} updates x {per_update} frames")
        logger.info("=" * 50)

        self.boundary = self.capture()
        try:
            while self.updates < target_updates:
                record = self.step()
                writer.append(record)
                self.boundary = self.capture()
                if self.updates % cfg.checkpoint_every == 0:
                    self.save(self.boundary)
        except KeyboardInterrupt:
            # live state may be mid-rollout; only a completed update is resumable
            logger.warning(f"Interrupted during update {self.boundary.updates + 1}; "
                           f"checkpointing update {self.boundary.updates}")
            self.save(self.boundary)
            raise
        finally:
            self.vec.close()

        if self.updates % cfg.checkpoint_every != 0 or not self.checkpoint_path.exists():
            self.save(self.boundary)
        self.manifest.finished_at = _now()
        self.manifest.save(self.out_dir)

        logger.info(f"TRAIN DONE: {self.updates} updates, {self.global_frame} frames, "
                    f"{self.episodes_done} episodes")
        return self.manifest

    def step(self):
        """One rollout + one update -> the update's MetricsRecord."""
        buffer = self.collect_rollout()
        stats = self.update_fn(self.agent, buffer, self.cfg)
        self.updates += 1
        self.global_frame += frames_per_update(self.cfg)

        mean_return = float(np.mean(self.recent_returns)) if self.recent_returns else None
        mean_discounted = float(np.mean(self.recent_discounted)) if self.recent_discounted else None
        curve = mean_discounted if self.cfg.curve_metric == 'discounted' else mean_return
        record = replace(stats, global_frame=self.global_frame, episodes_done=self.episodes_done,
                         mean_return_100=curve, mean_discounted_return_100=mean_discounted)

        logger.info(f"update {self.updates} | frame {self.global_frame} | episodes {self.episodes_done} | "
                    f"return100={_fmt(mean_return)} disc100={_fmt(mean_discounted)} | "
                    f"pi={record.policy_loss:.4f} v={record.value_loss:.4f} H={record.entropy:.4f} | "
                    f"D={record.d_loss:.4f} G={record.g_loss:.4f}")
        return record

    # ── Checkpointing ──

    def progress(self):
        return {
            'algorithm': self.algorithm,
            'kind': self.kind.value,
            'seed': self.seed,
            'updates': self.updates,
            'global_frame': self.global_frame,
            'episodes_done': self.episodes_done,
            'recent_returns': list(self.recent_returns),
            'recent_discounted': list(self.recent_discounted),
            'vec': self.vec.get_state(),
        }

    def capture(self):
        arrays = capture_checkpoint(self.agent.modules, self.agent.optimizers, self.agent.rngs,
                                    self.cfg, self.progress(), extras={'next_obs': self.next_obs})
        return Boundary(self.updates, self.global_frame, self.episodes_done, arrays)

    def save(self, boundary=None):
        """Write `boundary` (default: the current state, which must sit between updates)."""
        boundary = boundary or self.capture()
        path = write_checkpoint(self.checkpoint_path, boundary.arrays)
        if self.manifest is not None:
            if str(path) not in self.manifest.checkpoints:
                self.manifest.checkpoints.append(str(path))
            self.manifest.updates = boundary.updates
            self.manifest.global_frame = boundary.global_frame
            self.manifest.episodes_done = boundary.episodes_done
            self.manifest.save(self.out_dir)
        return path

    def restore(self):
        cfg, progress, extras = load_checkpoint(self.checkpoint_path, self.agent.modules,
                                                self.agent.optimizers, self.agent.rngs)
        # the frame budget may grow between sessions; everything else must match
        if cfg.replace(total_frames=self.cfg.total_frames) != self.cfg:
            raise ValueError(f"{self.checkpoint_path} was written with a different config")
        if (progress['algorithm'], progress['kind'], progress['seed']) != \
                (self.algorithm, self.kind.value, self.seed):
            raise ValueError(f"{self.checkpoint_path} belongs to another run: "
                             f"{progress['algorithm']}/{progress['kind']}/seed {progress['seed']}")
        self.updates = progress['updates']
        self.global_frame = progress['global_frame']
        self.episodes_done = progress['episodes_done']
        self.recent_returns = deque(progress['recent_returns'], maxlen=RETURN_WINDOW)
        self.recent_discounted = deque(progress['recent_discounted'], maxlen=RETURN_WINDOW)
        self.vec.set_state(progress['vec'])
        self.next_obs = extras['next_obs'].astype(np.float32)
        logger.info(f"Resumed at update {self.updates}, frame {self.global_frame}")


def _fmt(value):
    return 'n/a' if value is None else f"{value:.3f}"


def train(algorithm, kind, total_frames, seed, cfg, out_dir, resume=False):
    """Run (or resume) one training run and return its manifest."""
    trainer = Trainer(algorithm, kind, seed, cfg, out_dir)
    return trainer.run(total_frames, resume=resume)
