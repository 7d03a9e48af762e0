"""
Preprocess — turns raw game ticks into agent observations.

Pipeline per decision (macro-step):
  1. repeat the chosen action for ACTION_REPEAT ticks
  2. box-downsample each grayscale frame to OBS_SIZE x OBS_SIZE
  3. stack the frames as channels (time-ordered), scale to [0, 1]
  4. sum the per-tick rewards

VecEnv runs N environments of one GameKind side by side, auto-resets
finished episodes and reports each completed episode's returns.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from .env_core import GameKind, ToyEnv, MAX_EPISODE_TICKS, SPRITE_MASK_KEY

logger = logging.getLogger('acd.preprocess')

ACTION_REPEAT = 3
OBS_SIZE = 64


class FrameShapeError(ValueError):
    pass


class MacroStep(NamedTuple):
    observation: np.ndarray         # float32 (ACTION_REPEAT, OBS_SIZE, OBS_SIZE)
    reward: float
    done: bool
    info: Dict[str, Any]
    moving_mask: Optional[np.ndarray]   # bool (OBS_SIZE, OBS_SIZE), None if the env has no sprite masks


@lru_cache(maxsize=None)
def _box_weights(src, dst):
    """(dst, src) matrix: output cell i averages input cells over [i*s, (i+1)*s), s = src/dst."""
    scale = src / dst
    out_lo = np.arange(dst)[:, None] * scale
    out_hi = out_lo + scale
    in_lo = np.arange(src)[None, :]
    overlap = np.clip(np.minimum(out_hi, in_lo + 1) - np.maximum(out_lo, in_lo), 0.0, None)
    weights = overlap / scale
    weights.setflags(write=False)
    return weights


def resize_frame(frame, size=OBS_SIZE):
    """Area-average (box) downsample of a 2D frame. Values stay in the input's range."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise FrameShapeError(f"Expected a 2D grayscale frame, got shape {frame.shape}")
    height, width = frame.shape
    if height < size or width < size:
        raise FrameShapeError(f"Frame {height}x{width} is smaller than the {size}x{size} target")
    return _box_weights(height, size) @ frame @ _box_weights(width, size).T


def _to_observation(frames):
    stacked = np.stack(frames) / 255.0
    return np.clip(stacked, 0.0, 1.0).astype(np.float32)


def initial_observation(frame, repeat=ACTION_REPEAT):
    """Observation right after reset: the reset frame in every channel."""
    resized = resize_frame(frame)
    return _to_observation([resized] * repeat)


def macro_step(env, action, repeat=ACTION_REPEAT, clip_rewards=False):
    """
    Apply one action for `repeat` ticks and build the stacked observation.

    If the episode ends early the remaining ticks are not executed and the
    terminal frame fills the missing channels.
    """
    frames = []
    masks = []
    reward = 0.0
    done = False
    info = {}

    for _ in range(repeat):
        frame, tick_reward, terminated, truncated, tick_info = env.step(action)
        frames.append(resize_frame(frame))
        reward += float(tick_reward)
        mask = tick_info.get(SPRITE_MASK_KEY)
        if mask is not None:
            masks.append(mask)
        if terminated or truncated:
            done = True
            info = {k: v for k, v in tick_info.items() if k != SPRITE_MASK_KEY}
            info['truncated'] = bool(truncated)
            break

    while len(frames) < repeat:
        frames.append(frames[-1])

    if clip_rewards:
        reward = float(np.sign(reward))

    moving = None
    if masks:
        union = np.logical_or.reduce(masks)
        moving = resize_frame(union.astype(np.float64)) > 0.0

    return MacroStep(_to_observation(frames), reward, done, info, moving)


@dataclass
class EpisodeRecord:
    env_index: int
    episode_return: float           # undiscounted, summed over macro-steps
    discounted_return: float
    length: int                     # macro-steps


class VecStep(NamedTuple):
    observations: np.ndarray        # float32 (N, ACTION_REPEAT, OBS_SIZE, OBS_SIZE)
    rewards: np.ndarray             # float64 (N,)
    dones: np.ndarray               # bool (N,)
    moving_masks: List[Optional[np.ndarray]]
    episodes: List[EpisodeRecord]   # episodes completed during this step


@dataclass
class VecEnvState:
    """Per-env accumulators; everything needed to resume besides the games themselves."""
    episode_returns: np.ndarray
    discounted_returns: np.ndarray
    episode_lengths: np.ndarray


class VecEnv:
    """
    N environments of one GameKind stepped in lock-step.

    Results are merged in env-index order whatever the worker count, so a
    run is reproducible under any scheduling.

    Not a gymnasium.vector env: checkpoints need each env's get_state /
    set_state, and a finished env's slot must hold its reset observation in
    the same step (gymnasium 1.x autoreset delivers it one step late).
    """

    def __init__(self, kind, seeds, max_episode_ticks=MAX_EPISODE_TICKS, gamma=0.99,
                 workers=1, clip_rewards=False, env_factory=None):
        seeds = [int(s) for s in seeds]
        if not seeds:
            raise ValueError("VecEnv needs at least one environment")
        self.kind = GameKind.from_name(kind)
        self.seeds = seeds
        self.gamma = float(gamma)
        self.clip_rewards = bool(clip_rewards)
        factory = env_factory or (lambda: ToyEnv(self.kind, max_episode_ticks))
        self.envs = [factory() for _ in seeds]
        n = len(self.envs)
        self.state = VecEnvState(
            episode_returns=np.zeros(n),
            discounted_returns=np.zeros(n),
            episode_lengths=np.zeros(n, dtype=np.int64),
        )
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    @property
    def n_env(self):
        return len(self.envs)

    @property
    def action_count(self):
        return int(self.envs[0].action_space.n)

    def reset(self):
        """Reset every env with its configured seed; returns the stacked initial observations."""
        observations = []
        for env, seed in zip(self.envs, self.seeds):
            observations.append(initial_observation(env.reset(seed=seed)[0]))
        self.state.episode_returns[:] = 0.0
        self.state.discounted_returns[:] = 0.0
        self.state.episode_lengths[:] = 0
        return np.stack(observations)

    def step(self, actions):
        actions = np.asarray(actions).reshape(-1)
        if actions.shape[0] != self.n_env:
            raise ValueError(f"Got {actions.shape[0]} actions for {self.n_env} environments")

        indices = range(self.n_env)
        if self._pool is not None:
            results = list(self._pool.map(lambda i: self._advance(i, actions[i]), indices))
        else:
            results = [self._advance(i, actions[i]) for i in indices]

        observations = np.stack([r.observation for r in results])
        rewards = np.array([r.reward for r in results], dtype=np.float64)
        dones = np.array([r.done for r in results], dtype=bool)
        masks = [r.moving_mask for r in results]

        finished = []
        for i, result in enumerate(results):
            st = self.state
            st.discounted_returns[i] += (self.gamma ** st.episode_lengths[i]) * result.reward
            st.episode_returns[i] += result.reward
            st.episode_lengths[i] += 1
            if result.done:
                record = EpisodeRecord(i, float(st.episode_returns[i]), float(st.discounted_returns[i]),
                                       int(st.episode_lengths[i]))
                finished.append(record)
                logger.debug(f"env {i}: episode done, return={record.episode_return}, "
                             f"length={record.length}")
                # next observation comes from a fresh episode
                observations[i] = initial_observation(self.envs[i].reset()[0])
                st.episode_returns[i] = 0.0
                st.discounted_returns[i] = 0.0
                st.episode_lengths[i] = 0

        return VecStep(observations, rewards, dones, masks, finished)

    def _advance(self, index, action):
        return macro_step(self.envs[index], int(action), clip_rewards=self.clip_rewards)

    def get_state(self):
        st = self.state
        return {
            'envs': [env.get_state() for env in self.envs],
            'episode_returns': st.episode_returns.tolist(),
            'discounted_returns': st.discounted_returns.tolist(),
            'episode_lengths': st.episode_lengths.tolist(),
        }

    def set_state(self, data):
        for env, env_state in zip(self.envs, data['envs']):
            env.set_state(env_state)
        self.state.episode_returns = np.array(data['episode_returns'], dtype=np.float64)
        self.state.discounted_returns = np.array(data['discounted_returns'], dtype=np.float64)
        self.state.episode_lengths = np.array(data['episode_lengths'], dtype=np.int64)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
        for env in self.envs:
            env.close()
