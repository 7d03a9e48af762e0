"""
Metrics — one MetricsRecord per update, persisted as comma-separated text.

File layout (fixed header, one row per update, '.' decimal separator):
  frame,episodes,mean_return_100,policy_loss,value_loss,entropy,d_loss,g_loss,real_score,fake_score

mean_return_100 is empty until the first episode completes.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

logger = logging.getLogger('acd.metrics')

METRICS_HEADER = ('frame', 'episodes', 'mean_return_100', 'policy_loss', 'value_loss', 'entropy',
                  'd_loss', 'g_loss', 'real_score', 'fake_score')


@dataclass
class MetricsRecord:
    global_frame: int = 0
    episodes_done: int = 0
    mean_return_100: Optional[float] = None
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    d_loss: float = 0.0
    g_loss: float = 0.0
    mean_real_score: float = 0.0
    mean_fake_score: float = 0.0
    # logged, not written: the literal "discounted" reading of the curve metric
    mean_discounted_return_100: Optional[float] = None

    def to_row(self):
        values = [self.global_frame, self.episodes_done, self.mean_return_100, self.policy_loss,
                  self.value_loss, self.entropy, self.d_loss, self.g_loss, self.mean_real_score,
                  self.mean_fake_score]
        return ','.join(_format(v) for v in values)

    @classmethod
    def from_row(cls, line):
        parts = line.strip().split(',')
        if len(parts) != len(METRICS_HEADER):
            raise ValueError(f"Expected {len(METRICS_HEADER)} columns, got {len(parts)}: {line!r}")
        floats = [float(p) for p in parts[3:]]
        return cls(
            global_frame=int(parts[0]),
            episodes_done=int(parts[1]),
            mean_return_100=float(parts[2]) if parts[2] else None,
            policy_loss=floats[0],
            value_loss=floats[1],
            entropy=floats[2],
            d_loss=floats[3],
            g_loss=floats[4],
            mean_real_score=floats[5],
            mean_fake_score=floats[6],
        )


def _format(value):
    if value is None:
        return ''
    if isinstance(value, int):
        return str(value)
    return f"{float(value):.8g}"


class MetricsWriter:
    """Appends rows; enforces strictly increasing frames within a file."""

    def __init__(self, path):
        self.path = Path(path)
        self.last_frame = None
        if self.path.exists():
            records = read_metrics(self.path)
            self.last_frame = records[-1].global_frame if records else None
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(','.join(METRICS_HEADER) + '\n')

    def append(self, record):
        if self.last_frame is not None and record.global_frame <= self.last_frame:
            raise ValueError(f"Metrics frame {record.global_frame} does not follow {self.last_frame}")
        with open(self.path, 'a') as fh:
            fh.write(record.to_row() + '\n')
        self.last_frame = record.global_frame

    def truncate_after(self, frame):
        """Drop rows beyond `frame` (rows written after the last checkpoint)."""
        records = read_metrics(self.path)
        kept = [r for r in records if r.global_frame <= frame]
        if len(kept) != len(records):
            logger.warning(f"Dropping {len(records) - len(kept)} metrics rows past frame {frame} in {self.path}")
        with open(self.path, 'w') as fh:
            fh.write(','.join(METRICS_HEADER) + '\n')
            for record in kept:
                fh.write(record.to_row() + '\n')
        self.last_frame = kept[-1].global_frame if kept else None


def read_metrics(path):
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].strip().split(',')) != METRICS_HEADER:
        raise ValueError(f"{path}: missing or unexpected metrics header")
    return [MetricsRecord.from_row(line) for line in lines[1:] if line.strip()]
