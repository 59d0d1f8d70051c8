"""Checkpoint container: versioned header, JSON config, named tensors.

Layout: magic "IIRC", version u32, config-JSON length u32 + UTF-8 bytes,
tensor count u32, then per tensor a name (length u32 + UTF-8) followed by
one tensor blob in the "IIRT" format from tensorio.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from . import tensorio
from .model import ModelConfig, ModelState, init_state

MAGIC = b"IIRC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _named_parameters(state: ModelState, optimizer: torch.optim.Optimizer | None):
    for name, p in state.model.named_parameters():
        yield "param." + name, p.detach().cpu().numpy()
    for name, b in state.model.named_buffers():
        yield "buffer." + name, b.detach().cpu().numpy()
    if optimizer is not None:
        params = list(state.model.parameters())
        for i, p in enumerate(params):
            st = optimizer.state.get(p)
            if not st:
                continue
            yield f"opt.{i}.exp_avg", st["exp_avg"].detach().cpu().numpy()
            yield f"opt.{i}.exp_avg_sq", st["exp_avg_sq"].detach().cpu().numpy()


def save_checkpoint(path, state: ModelState,
                    optimizer: torch.optim.Optimizer | None = None) -> None:
    """Atomic write (temp file then rename)."""
    path = Path(path)
    meta = {"step": state.step, "config": state.config}
    if optimizer is not None:
        meta["optimizer_steps"] = {
            str(i): int(optimizer.state[p]["step"])
            for i, p in enumerate(state.model.parameters()) if p in optimizer.state
        }
    tensors = list(_named_parameters(state, optimizer))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            tensorio.write_tensor_stream(f, arr)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def read_checkpoint_raw(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (jlen,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(jlen).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            tensors[name] = tensorio.read_tensor_stream(f)
    return meta, tensors


def load_checkpoint(path, optimizer_factory=None
                    ) -> tuple[ModelState, torch.optim.Optimizer | None]:
    """Rebuild a ModelState (and optionally its optimizer) from disk."""
    meta, tensors = read_checkpoint_raw(path)
    model_cfg = ModelConfig.from_dict(meta["config"]["model"])
    state = init_state(model_cfg, train_config=meta["config"], seed=0)
    state.config = meta["config"]
    state.step = meta["step"]

    sd = {}
    for name, arr in tensors.items():
        if name.startswith("param."):
            sd[name[len("param."):]] = torch.from_numpy(arr)
        elif name.startswith("buffer."):
            sd[name[len("buffer."):]] = torch.from_numpy(arr)
    state.model.load_state_dict(sd, strict=True)

    optimizer = None
    if optimizer_factory is not None:
        optimizer = optimizer_factory(state.model.parameters())
        params = list(state.model.parameters())
        steps = meta.get("optimizer_steps", {})
        for i, p in enumerate(params):
            avg = tensors.get(f"opt.{i}.exp_avg")
            sq = tensors.get(f"opt.{i}.exp_avg_sq")
            if avg is None or sq is None:
                continue
            optimizer.state[p] = {
                "step": torch.tensor(float(steps.get(str(i), 0))),
                "exp_avg": torch.from_numpy(avg).reshape(p.shape),
                "exp_avg_sq": torch.from_numpy(sq).reshape(p.shape),
            }
    return state, optimizer
