"""
Checkpoint — one .npz container per run.

Contents:
  param/<module>/<name>              module state (parameters + buffers), little-endian float32
  optim/<optimizer>/<index>/<key>    optimizer state tensors, little-endian float32
  rng/<stream>                       torch.Generator states (uint8)
  extra/<name>                       caller arrays stored as given (e.g. the pending observation)
  __meta__                           JSON: format version, HyperConfig, trainer progress

Loading checks that every parameter the live modules expect is present with
the same shape before anything is copied.
"""
import json
import logging
import os
from pathlib import Path

import numpy as np
import torch

from .hyperconfig import HyperConfig

logger = logging.getLogger('acd.checkpoint')

FORMAT_VERSION = 1
META_KEY = '__meta__'
FLOAT = np.dtype('<f4')


class CheckpointError(ValueError):
    pass


def _to_array(tensor):
    return tensor.detach().cpu().numpy().astype(FLOAT)


def capture_checkpoint(modules, optimizers, rngs, cfg, progress=None, extras=None):
    """In-memory copy of everything a checkpoint holds; later training does not alter it."""
    arrays = {}
    for module_name, module in modules.items():
        for name, tensor in module.state_dict().items():
            arrays[f"param/{module_name}/{name}"] = _to_array(tensor)
    for opt_name, optimizer in optimizers.items():
        for index, state in optimizer.state_dict()['state'].items():
            for key, value in state.items():
                arrays[f"optim/{opt_name}/{index}/{key}"] = _to_array(torch.as_tensor(value))
    for stream, generator in rngs.items():
        arrays[f"rng/{stream}"] = generator.get_state().numpy()
    for name, array in (extras or {}).items():
        arrays[f"extra/{name}"] = np.array(array)

    meta = {
        'format_version': FORMAT_VERSION,
        'config': cfg.to_dict(),
        'progress': progress or {},
    }
    arrays[META_KEY] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    return arrays


def write_checkpoint(path, arrays):
    """Write atomically: an interrupted save never clobbers the previous checkpoint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)
    logger.info(f"Checkpoint written: {path} ({len(arrays) - 1} arrays)")
    return path


def save_checkpoint(path, modules, optimizers, rngs, cfg, progress=None, extras=None):
    return write_checkpoint(path, capture_checkpoint(modules, optimizers, rngs, cfg, progress, extras))


def read_meta(path):
    with np.load(path, allow_pickle=False) as data:
        if META_KEY not in data.files:
            raise CheckpointError(f"{path}: not a checkpoint (no {META_KEY})")
        meta = json.loads(data[META_KEY].tobytes().decode())
    if meta.get('format_version') != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {meta.get('format_version')} "
                              f"(expected {FORMAT_VERSION})")
    return meta


def load_checkpoint(path, modules, optimizers=None, rngs=None):
    """Restore into live objects in place. Returns (HyperConfig, progress dict, extras dict)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    meta = read_meta(path)

    with np.load(path, allow_pickle=False) as data:
        stored = {name: data[name] for name in data.files if name != META_KEY}

    missing, mismatched = [], []
    for module_name, module in modules.items():
        for name, tensor in module.state_dict().items():
            key = f"param/{module_name}/{name}"
            if key not in stored:
                missing.append(key)
            elif stored[key].shape != tuple(tensor.shape):
                mismatched.append(f"{key}: {stored[key].shape} vs {tuple(tensor.shape)}")
    if missing or mismatched:
        raise CheckpointError(f"{path}: missing {missing}, shape mismatch {mismatched}")

    for module_name, module in modules.items():
        state = {name: torch.from_numpy(stored[f"param/{module_name}/{name}"].astype(FLOAT)).to(tensor.dtype)
                 for name, tensor in module.state_dict().items()}
        module.load_state_dict(state)

    for opt_name, optimizer in (optimizers or {}).items():
        prefix = f"optim/{opt_name}/"
        restored = {}
        for key, array in stored.items():
            if not key.startswith(prefix):
                continue
            index, field = key[len(prefix):].split('/', 1)
            restored.setdefault(int(index), {})[field] = torch.from_numpy(array.astype(FLOAT))
        state_dict = optimizer.state_dict()
        state_dict['state'] = restored
        optimizer.load_state_dict(state_dict)

    for stream, generator in (rngs or {}).items():
        key = f"rng/{stream}"
        if key not in stored:
            raise CheckpointError(f"{path}: missing RNG stream {key}")
        generator.set_state(torch.from_numpy(stored[key].copy()))

    logger.info(f"Checkpoint loaded: {path}")
    extras = {key[len("extra/"):]: array for key, array in stored.items() if key.startswith("extra/")}
    return HyperConfig.from_mapping(meta["config"]), meta["progress"], extras
