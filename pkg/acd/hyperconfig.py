"""
HyperConfig — every training quantity in one frozen dataclass.

Defaults are the published PPO/ACD hyperparameters plus our own decisions
(value/discriminator coefficients, RMSProp constants, desk-scale budget).

Config files are plain text, one `key=value` per line, `#` comments:

    gamma=0.99
    lambda=0.95        # alias for gae_lambda
    c_d=0.5
"""
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

from decouple import RepositoryEnv, strtobool

logger = logging.getLogger('acd.hyperconfig')

ALIASES = {
    'lambda': 'gae_lambda',
    'lr': 'learning_rate',
}

CURVE_METRICS = ('episode', 'discounted')


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ''
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class HyperConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.1
    minibatch: int = 32
    optimizer: str = 'rmsprop'
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-5
    learning_rate: float = 0.0003
    n_env: int = 8
    horizon: int = 128
    epochs: int = 3
    latent_dim: int = 100
    c1: float = 1.0             # policy-loss coefficient
    c2: float = 0.01            # entropy coefficient
    c_v: float = 0.5            # value coefficient
    c_d: float = 1.0            # discriminator-loss coefficient
    total_frames: int = 300_000
    normalize_advantages: bool = True
    max_grad_norm: float = 0.0  # 0 disables clipping
    generator_step: bool = True
    checkpoint_every: int = 50  # updates
    curve_metric: str = 'episode'
    max_episode_ticks: int = 3000
    clip_rewards: bool = False
    vec_workers: int = 1

    def __post_init__(self):
        for name in ('c1', 'c2', 'c_v', 'c_d', 'max_grad_norm'):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if not 0 < self.clip_eps < 1:
            raise ConfigError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if not 0 <= self.rmsprop_alpha < 1 or self.rmsprop_eps <= 0:
            raise ConfigError("rmsprop_alpha must be in [0, 1) and rmsprop_eps > 0")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ('minibatch', 'n_env', 'horizon', 'epochs', 'latent_dim', 'total_frames',
                     'checkpoint_every', 'max_episode_ticks', 'vec_workers'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if (self.horizon * self.n_env) % self.minibatch:
            raise ConfigError(f"minibatch ({self.minibatch}) must divide horizon*n_env "
                              f"({self.horizon * self.n_env})")
        if self.optimizer != 'rmsprop':
            raise ConfigError(f"optimizer must be 'rmsprop', got {self.optimizer!r}")
        if self.curve_metric not in CURVE_METRICS:
            raise ConfigError(f"curve_metric must be one of {CURVE_METRICS}, got {self.curve_metric!r}")

    @property
    def samples_per_update(self):
        return self.horizon * self.n_env

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_text(self):
        """Serialize in the same key=value format config_load reads."""
        lines = [f"{f.name}={_format(getattr(self, f.name))}" for f in dataclasses.fields(self)]
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_mapping(cls, values):
        """Build from raw string (or typed) values keyed by field name or alias."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        typed = {}
        for key, raw in values.items():
            name = ALIASES.get(key, key)
            if name not in fields:
                raise ConfigError(f"Unknown config key {key!r}")
            typed[name] = _cast(fields[name], raw)
        return cls(**typed)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _cast(f, raw):
    kind = f.type
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    try:
        if kind is bool:
            return bool(strtobool(text))
        if kind is int:
            number = float(text.replace('_', ''))
            if not number.is_integer():
                raise ValueError(text)
            return int(number)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"Cannot read {f.name}={text!r} as {kind.__name__}") from None


def config_load(path):
    """
    Read a key=value config file on top of the defaults.

    An empty file gives the defaults. Malformed lines, unknown or duplicate
    keys and out-of-range values raise ConfigError with the line number.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    fields = {f.name: f for f in dataclasses.fields(HyperConfig)}
    line_of = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"Expected key=value, got {raw.strip()!r}", line=lineno, path=path)
        key = line.split('=', 1)[0].strip()
        if not key:
            raise ConfigError("Missing key before '='", line=lineno, path=path)
        name = ALIASES.get(key, key)
        if name not in fields:
            raise ConfigError(f"Unknown config key {key!r}", line=lineno, path=path)
        if name in line_of:
            raise ConfigError(f"Duplicate key {key!r} (first set on line {line_of[name][1]})",
                              line=lineno, path=path)
        line_of[name] = (key, lineno)

    # python-decouple parses the values (quoting rules included); comments were validated above
    repository = RepositoryEnv(str(path))
    typed = {}
    for name, (key, lineno) in line_of.items():
        value = repository[key].split('#', 1)[0].strip()
        try:
            typed[name] = _cast(fields[name], value)
        except ConfigError as exc:
            raise ConfigError(str(exc), line=lineno, path=path) from None

    try:
        cfg = HyperConfig(**typed)
    except ConfigError as exc:
        bad = next((n for n in typed if n in str(exc)), None)
        line = line_of[bad][1] if bad else None
        raise ConfigError(str(exc), line=line, path=path) from None

    logger.info(f"Loaded config {path} ({len(typed)} overrides)")
    return cfg
