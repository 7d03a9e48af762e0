"""
Env Core — deterministic toy Pong / toy Breakout rendered to pixels.

Stands in for the Arcade Learning Environment at desk scale. Two layers:
  env_reset / env_step / render  — pure-ish functions over a GameState
  ToyEnv                         — gymnasium.Env wrapper implementing GameEnv,
                                   the interface an ALE adapter would fill

Playfield units are pixels of the 96x96 raw canvas. Positions are
continuous; rendering rounds them to the pixel grid.

Game rules:
  TOY_PONG      — agent paddle on the right, scripted opponent on the left.
                  +1 when the opponent misses, -1 when the agent misses.
                  Match ends when either side reaches POINTS_TO_WIN.
  TOY_BREAKOUT  — 4x8 bricks, paddle at the bottom, one life.
                  +1 per brick, episode ends on a miss or a cleared wall.
"""
import enum
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Protocol

import gymnasium as gym
import numpy as np
from gymnasium import spaces

logger = logging.getLogger('acd.env_core')

# Canvas
FRAME_SIZE = 96                 # pixels, square
BACKGROUND = 32                 # intensities (0-255)
PADDLE_INTENSITY = 200
BALL_INTENSITY = 255
BRICK_INTENSITY = 144

# Ball
BALL_SIZE = 2.0                 # pixels
BALL_SPEED = 2.0                # pixels per tick, constant
MAX_SERVE_ANGLE = math.pi / 4   # launch spread around the serve axis
MAX_BOUNCE_ANGLE = math.pi / 3  # deflection at the paddle edge

MAX_EPISODE_TICKS = 3000

# Pong
PONG_PADDLE_HEIGHT = 12.0
PONG_PADDLE_WIDTH = 2.0
PONG_AGENT_X = 88.0             # left face of the agent paddle
PONG_OPPONENT_X = 6.0           # left edge of the opponent paddle
PONG_PADDLE_SPEED = 3.0
OPPONENT_SPEED_FACTOR = 0.8     # of the ball's vertical speed
POINTS_TO_WIN = 5

# Breakout
BRICK_ROWS = 4
BRICK_COLS = 8
BRICK_WIDTH = FRAME_SIZE / BRICK_COLS
BRICK_HEIGHT = 4.0
BRICK_TOP = 12.0
BREAKOUT_PADDLE_WIDTH = 16.0
BREAKOUT_PADDLE_HEIGHT = 2.0
BREAKOUT_PADDLE_Y = 88.0
BREAKOUT_PADDLE_SPEED = 3.0
BREAKOUT_LIVES = 1


class GameKind(enum.Enum):
    TOY_PONG = 'toy-pong'
    TOY_BREAKOUT = 'toy-breakout'

    @property
    def action_count(self):
        return ACTION_COUNTS[self]

    @classmethod
    def from_name(cls, name):
        """Accept 'toy-pong', 'TOY_PONG' or a GameKind."""
        if isinstance(name, cls):
            return name
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise ValueError(f"Unknown game kind: {name!r} (expected one of {[k.value for k in cls]})")


# stay / up / down for Pong, stay / left / right for Breakout
ACTION_COUNTS = {GameKind.TOY_PONG: 3, GameKind.TOY_BREAKOUT: 3}


class InvalidActionError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    pass


@dataclass
class GameState:
    kind: GameKind
    ball: np.ndarray                # (x, y) of the ball's top-left corner
    velocity: np.ndarray            # (vx, vy) pixels per tick
    paddle: float                   # agent paddle: top y (Pong) / left x (Breakout)
    opponent: float                 # Pong opponent paddle top y, 0.0 for Breakout
    bricks: Optional[np.ndarray]    # alive-mask, Breakout only
    score: int
    opponent_score: int
    lives: int                      # Breakout lives / Pong points the agent may still concede
    tick: int
    episode_return: float
    done: bool
    max_ticks: int
    rng: np.random.Generator = field(repr=False)

    def to_dict(self):
        return {
            'kind': self.kind.value,
            'ball': [float(v) for v in self.ball],
            'velocity': [float(v) for v in self.velocity],
            'paddle': float(self.paddle),
            'opponent': float(self.opponent),
            'bricks': None if self.bricks is None else self.bricks.astype(int).tolist(),
            'score': int(self.score),
            'opponent_score': int(self.opponent_score),
            'lives': int(self.lives),
            'tick': int(self.tick),
            'episode_return': float(self.episode_return),
            'done': bool(self.done),
            'max_ticks': int(self.max_ticks),
            'rng': self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, data):
        rng = np.random.default_rng()
        rng.bit_generator.state = data['rng']
        bricks = data['bricks']
        return cls(
            kind=GameKind(data['kind']),
            ball=np.array(data['ball'], dtype=np.float64),
            velocity=np.array(data['velocity'], dtype=np.float64),
            paddle=float(data['paddle']),
            opponent=float(data['opponent']),
            bricks=None if bricks is None else np.array(bricks, dtype=bool),
            score=int(data['score']),
            opponent_score=int(data['opponent_score']),
            lives=int(data['lives']),
            tick=int(data['tick']),
            episode_return=float(data['episode_return']),
            done=bool(data['done']),
            max_ticks=int(data['max_ticks']),
            rng=rng,
        )


@dataclass
class StepResult:
    frame: np.ndarray               # uint8 FRAME_SIZE x FRAME_SIZE
    reward: float
    done: bool
    info: Dict[str, Any] = field(default_factory=dict)
    sprite_mask: Optional[np.ndarray] = None   # bool, ball + paddles


def state_fingerprint(state):
    """sha256 over the full state, rng included."""
    payload = json.dumps(state.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


# ── Reset ──

def env_reset(kind, seed, max_episode_ticks=MAX_EPISODE_TICKS):
    """Canonical initial layout; only the ball's launch direction depends on the seed."""
    kind = GameKind.from_name(kind)
    rng = np.random.default_rng(int(seed) % (2 ** 64))
    center = (FRAME_SIZE - BALL_SIZE) / 2

    if kind is GameKind.TOY_PONG:
        state = GameState(
            kind=kind,
            ball=np.array([center, center]),
            velocity=np.zeros(2),
            paddle=(FRAME_SIZE - PONG_PADDLE_HEIGHT) / 2,
            opponent=(FRAME_SIZE - PONG_PADDLE_HEIGHT) / 2,
            bricks=None,
            score=0,
            opponent_score=0,
            lives=POINTS_TO_WIN,
            tick=0,
            episode_return=0.0,
            done=False,
            max_ticks=int(max_episode_ticks),
            rng=rng,
        )
        _serve_pong(state)
    else:
        state = GameState(
            kind=kind,
            ball=np.array([center, center]),
            velocity=np.zeros(2),
            paddle=(FRAME_SIZE - BREAKOUT_PADDLE_WIDTH) / 2,
            opponent=0.0,
            bricks=np.ones((BRICK_ROWS, BRICK_COLS), dtype=bool),
            score=0,
            opponent_score=0,
            lives=BREAKOUT_LIVES,
            tick=0,
            episode_return=0.0,
            done=False,
            max_ticks=int(max_episode_ticks),
            rng=rng,
        )
        _serve_breakout(state)

    return state, render(state)


def _serve_pong(state):
    """Ball to the center, launched left or right within +-MAX_SERVE_ANGLE."""
    center = (FRAME_SIZE - BALL_SIZE) / 2
    angle = state.rng.uniform(-MAX_SERVE_ANGLE, MAX_SERVE_ANGLE)
    direction = 1.0 if state.rng.random() < 0.5 else -1.0
    state.ball = np.array([center, center])
    state.velocity = np.array([direction * BALL_SPEED * math.cos(angle),
                               BALL_SPEED * math.sin(angle)])


def _serve_breakout(state):
    """Ball from the center, launched downward within +-MAX_SERVE_ANGLE of vertical."""
    angle = state.rng.uniform(-MAX_SERVE_ANGLE, MAX_SERVE_ANGLE)
    state.velocity = np.array([BALL_SPEED * math.sin(angle),
                               BALL_SPEED * math.cos(angle)])


# ── Step ──

def env_step(state, action):
    """Advance one physics tick in place and return what the agent sees."""
    if state.done:
        raise EpisodeFinishedError("Episode already finished; reset before stepping")

    action_count = ACTION_COUNTS[state.kind]
    try:
        valid = float(action) == int(action) and 0 <= int(action) < action_count
    except (TypeError, ValueError):
        valid = False
    if not valid:
        raise InvalidActionError(f"Action {action!r} outside [0, {action_count}) for {state.kind.value}")
    action = int(action)

    if state.kind is GameKind.TOY_PONG:
        reward = _step_pong(state, action)
    else:
        reward = _step_breakout(state, action)

    state.tick += 1
    state.episode_return += reward

    info = {}
    if not state.done and state.tick >= state.max_ticks:
        state.done = True
        info['truncated'] = True
        logger.debug(f"{state.kind.value}: truncated at tick {state.tick}")
    if state.done:
        info.setdefault('truncated', False)
        info['episode_return'] = state.episode_return
        info['episode_length'] = state.tick

    return StepResult(frame=render(state), reward=reward, done=state.done,
                      info=info, sprite_mask=sprite_mask(state))


def _bounce_deflection(ball_center, paddle_center, half_span):
    offset = (ball_center - paddle_center) / half_span
    return float(np.clip(offset, -1.0, 1.0)) * MAX_BOUNCE_ANGLE


def _overlaps(lo_a, len_a, lo_b, len_b):
    return lo_a < lo_b + len_b and lo_b < lo_a + len_a


def _step_pong(state, action):
    if action == 1:
        state.paddle -= PONG_PADDLE_SPEED
    elif action == 2:
        state.paddle += PONG_PADDLE_SPEED
    state.paddle = float(np.clip(state.paddle, 0.0, FRAME_SIZE - PONG_PADDLE_HEIGHT))

    # Opponent tracks the ball, capped below the ball's vertical speed
    target = state.ball[1] + BALL_SIZE / 2 - PONG_PADDLE_HEIGHT / 2
    cap = OPPONENT_SPEED_FACTOR * abs(state.velocity[1])
    state.opponent += float(np.clip(target - state.opponent, -cap, cap))
    state.opponent = float(np.clip(state.opponent, 0.0, FRAME_SIZE - PONG_PADDLE_HEIGHT))

    prev_x = state.ball[0]
    state.ball = state.ball + state.velocity
    _reflect_vertical_walls(state)

    x, y = state.ball
    vx = state.velocity[0]
    half_span = (PONG_PADDLE_HEIGHT + BALL_SIZE) / 2

    if vx > 0 and prev_x + BALL_SIZE <= PONG_AGENT_X < x + BALL_SIZE \
            and _overlaps(y, BALL_SIZE, state.paddle, PONG_PADDLE_HEIGHT):
        angle = _bounce_deflection(y + BALL_SIZE / 2, state.paddle + PONG_PADDLE_HEIGHT / 2, half_span)
        state.ball[0] = PONG_AGENT_X - BALL_SIZE
        state.velocity = np.array([-BALL_SPEED * math.cos(angle), BALL_SPEED * math.sin(angle)])
    elif vx < 0 and x < PONG_OPPONENT_X + PONG_PADDLE_WIDTH <= prev_x \
            and _overlaps(y, BALL_SIZE, state.opponent, PONG_PADDLE_HEIGHT):
        angle = _bounce_deflection(y + BALL_SIZE / 2, state.opponent + PONG_PADDLE_HEIGHT / 2, half_span)
        state.ball[0] = PONG_OPPONENT_X + PONG_PADDLE_WIDTH
        state.velocity = np.array([BALL_SPEED * math.cos(angle), BALL_SPEED * math.sin(angle)])

    reward = 0.0
    if state.ball[0] > FRAME_SIZE - BALL_SIZE:
        state.opponent_score += 1
        state.lives -= 1
        reward = -1.0
    elif state.ball[0] < 0:
        state.score += 1
        reward = 1.0

    if reward != 0.0:
        logger.debug(f"toy-pong point: agent {state.score} - opponent {state.opponent_score}")
        if state.score >= POINTS_TO_WIN or state.opponent_score >= POINTS_TO_WIN:
            state.done = True
            _park_ball(state)
        else:
            _serve_pong(state)

    return reward


def _step_breakout(state, action):
    if action == 1:
        state.paddle -= BREAKOUT_PADDLE_SPEED
    elif action == 2:
        state.paddle += BREAKOUT_PADDLE_SPEED
    state.paddle = float(np.clip(state.paddle, 0.0, FRAME_SIZE - BREAKOUT_PADDLE_WIDTH))

    prev_y = state.ball[1]
    state.ball = state.ball + state.velocity
    _reflect_side_walls(state)
    if state.ball[1] < 0:
        state.ball[1] = -state.ball[1]
        state.velocity[1] = -state.velocity[1]

    reward = 0.0
    hit = _overlapped_brick(state)
    if hit is not None:
        state.bricks[hit] = False
        state.score += 1
        state.velocity[1] = -state.velocity[1]
        reward = 1.0

    x, y = state.ball
    if state.velocity[1] > 0 and prev_y + BALL_SIZE <= BREAKOUT_PADDLE_Y < y + BALL_SIZE \
            and _overlaps(x, BALL_SIZE, state.paddle, BREAKOUT_PADDLE_WIDTH):
        half_span = (BREAKOUT_PADDLE_WIDTH + BALL_SIZE) / 2
        angle = _bounce_deflection(x + BALL_SIZE / 2, state.paddle + BREAKOUT_PADDLE_WIDTH / 2, half_span)
        state.ball[1] = BREAKOUT_PADDLE_Y - BALL_SIZE
        state.velocity = np.array([BALL_SPEED * math.sin(angle), -BALL_SPEED * math.cos(angle)])

    if state.ball[1] > FRAME_SIZE - BALL_SIZE:
        state.lives -= 1
        state.done = True
        _park_ball(state)
    elif not state.bricks.any():
        state.done = True

    return reward


def _reflect_vertical_walls(state):
    """Top and bottom walls."""
    limit = FRAME_SIZE - BALL_SIZE
    if state.ball[1] < 0:
        state.ball[1] = -state.ball[1]
        state.velocity[1] = -state.velocity[1]
    elif state.ball[1] > limit:
        state.ball[1] = 2 * limit - state.ball[1]
        state.velocity[1] = -state.velocity[1]


def _reflect_side_walls(state):
    limit = FRAME_SIZE - BALL_SIZE
    if state.ball[0] < 0:
        state.ball[0] = -state.ball[0]
        state.velocity[0] = -state.velocity[0]
    elif state.ball[0] > limit:
        state.ball[0] = 2 * limit - state.ball[0]
        state.velocity[0] = -state.velocity[0]


def _overlapped_brick(state):
    """First alive brick (row-major, bottom row first) under the ball box, or None."""
    x, y = state.ball
    rows = range(BRICK_ROWS - 1, -1, -1)
    for row in rows:
        top = BRICK_TOP + row * BRICK_HEIGHT
        if not _overlaps(y, BALL_SIZE, top, BRICK_HEIGHT):
            continue
        for col in range(BRICK_COLS):
            if state.bricks[row, col] and _overlaps(x, BALL_SIZE, col * BRICK_WIDTH, BRICK_WIDTH):
                return row, col
    return None


def _park_ball(state):
    center = (FRAME_SIZE - BALL_SIZE) / 2
    state.ball = np.array([center, center])
    state.velocity = np.zeros(2)


# ── Rendering ──

def _pixel_span(start, length):
    lo = int(math.floor(start + 0.5))
    hi = lo + int(round(length))
    return max(lo, 0), min(hi, FRAME_SIZE)


def _fill(canvas, x, y, width, height, value):
    x0, x1 = _pixel_span(x, width)
    y0, y1 = _pixel_span(y, height)
    canvas[y0:y1, x0:x1] = value


def _draw_sprites(canvas, state, paddle_value, ball_value):
    if state.kind is GameKind.TOY_PONG:
        _fill(canvas, PONG_OPPONENT_X, state.opponent, PONG_PADDLE_WIDTH, PONG_PADDLE_HEIGHT, paddle_value)
        _fill(canvas, PONG_AGENT_X, state.paddle, PONG_PADDLE_WIDTH, PONG_PADDLE_HEIGHT, paddle_value)
    else:
        _fill(canvas, state.paddle, BREAKOUT_PADDLE_Y, BREAKOUT_PADDLE_WIDTH, BREAKOUT_PADDLE_HEIGHT, paddle_value)
    if not state.done:
        _fill(canvas, state.ball[0], state.ball[1], BALL_SIZE, BALL_SIZE, ball_value)


def render(state):
    """Pure function of state -> uint8 grayscale frame."""
    frame = np.full((FRAME_SIZE, FRAME_SIZE), BACKGROUND, dtype=np.uint8)
    if state.bricks is not None:
        for row, col in zip(*np.nonzero(state.bricks)):
            # one-pixel gap keeps neighbouring bricks apart
            _fill(frame, col * BRICK_WIDTH, BRICK_TOP + row * BRICK_HEIGHT,
                  BRICK_WIDTH - 1, BRICK_HEIGHT - 1, BRICK_INTENSITY)
    _draw_sprites(frame, state, PADDLE_INTENSITY, BALL_INTENSITY)
    return frame


def sprite_mask(state):
    """Boolean mask of the moving objects (ball + paddles) at render resolution."""
    mask = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=bool)
    _draw_sprites(mask, state, True, True)
    return mask


# ── Object interface ──

# info key under which every GameEnv step/reset reports the moving-object mask
SPRITE_MASK_KEY = 'sprite_mask'


class GameEnv(Protocol):
    """
    What the preprocess layer needs from a game: the gymnasium Env API plus
    an optional bool mask of moving objects in info[SPRITE_MASK_KEY].
    ToyEnv implements it; an ale-py env wrapped to add the mask would too.
    """

    action_space: spaces.Discrete
    observation_space: spaces.Box

    def reset(self, *, seed=None, options=None): ...   # -> (frame, info)

    def step(self, action): ...   # -> (frame, reward, terminated, truncated, info)

    def render(self): ...

    def sprite_mask(self): ...   # bool frame-sized mask, or None when unknown


class ToyEnv(gym.Env):
    """Stateful wrapper: owns one GameState and reseeds itself between episodes."""

    def __init__(self, kind, max_episode_ticks=MAX_EPISODE_TICKS):
        super().__init__()
        self.kind = GameKind.from_name(kind)
        self.max_episode_ticks = int(max_episode_ticks)
        self.action_space = spaces.Discrete(ACTION_COUNTS[self.kind])
        self.observation_space = spaces.Box(0, 255, (FRAME_SIZE, FRAME_SIZE), np.uint8)
        self.state = None

    def reset(self, *, seed=None, options=None):
        """Start an episode. Without a seed, draw the next one from the current episode's rng."""
        if seed is None:
            if self.state is None:
                raise ValueError("First reset of a ToyEnv needs an explicit seed")
            seed = int(self.state.rng.integers(0, 2 ** 63))
        super().reset(seed=int(seed) % (2 ** 64))
        self.state, frame = env_reset(self.kind, seed, self.max_episode_ticks)
        return frame, {SPRITE_MASK_KEY: sprite_mask(self.state)}

    def step(self, action):
        if self.state is None:
            raise EpisodeFinishedError("ToyEnv stepped before reset")
        result = env_step(self.state, action)
        truncated = bool(result.info.get('truncated', False))
        terminated = result.done and not truncated
        info = dict(result.info, **{SPRITE_MASK_KEY: result.sprite_mask})
        return result.frame, float(result.reward), terminated, truncated, info

    def render(self):
        return render(self.state)

    def sprite_mask(self):
        return None if self.state is None else sprite_mask(self.state)

    def get_state(self):
        return None if self.state is None else self.state.to_dict()

    def set_state(self, data):
        self.state = None if data is None else GameState.from_dict(data)
