"""
Checkpoint container.

Layout (little-endian):
    b"NECACKPT"  u32 version  u64 iteration
    u64 length, config as canonical JSON (the --print-config text)
    u64 length, template JSON {adam_step, mesh, train_poses}
    repeated blocks: u32 name length, UTF-8 name, u32 rank, rank x u64 dims, payload

Block names are "param/<name>", "adam_m/<name>" and "adam_v/<name>". Payloads are
IEEE-754 float32 ('<f4'). A run with config dtype "float64" stores '<f8' so resume stays
exact; the config block records which one applies. Writes go to a temporary file renamed
into place, so a crash never leaves a truncated checkpoint behind.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from avatar_fields.config import config_from_dict, dump_run_config
from avatar_fields.core import CheckpointError, StructuralError
from avatar_fields.fields.model import AvatarModel
from avatar_fields.models import RunConfig
from avatar_fields.rig.mesh import SkinnedMesh
from avatar_fields.train.optim import AdamState

log = logging.getLogger(__name__)

MAGIC = b"NECACKPT"
VERSION = 1
PAYLOAD = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    iteration: int
    config: RunConfig
    mesh: SkinnedMesh
    model: AvatarModel
    adam: AdamState


def _text_block(text: str) -> bytes:
    data = text.encode("utf-8")
    return struct.pack("<Q", len(data)) + data


def _template(mesh: SkinnedMesh, model: AvatarModel, adam: AdamState) -> str:
    doc = {
        "adam_step": adam.step,
        "mesh": mesh.to_dict(),
        "train_poses": model.poses.poses.tolist(),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _block(name: str, tensor: torch.Tensor, fmt: str) -> bytes:
    arr = tensor.detach().cpu().numpy().astype(fmt)
    encoded = name.encode("utf-8")
    parts = [struct.pack("<I", len(encoded)), encoded, struct.pack("<I", arr.ndim)]
    parts.extend(struct.pack("<Q", d) for d in arr.shape)
    parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def checkpoint_bytes(iteration: int, model: AvatarModel, mesh: SkinnedMesh, adam: AdamState) -> bytes:
    config = model.config
    fmt = PAYLOAD[config.dtype]
    out = [
        MAGIC,
        struct.pack("<IQ", VERSION, iteration),
        _text_block(dump_run_config(config)),
        _text_block(_template(mesh, model, adam)),
    ]
    for name, p in model.named_parameters():
        out.append(_block(f"param/{name}", p, fmt))
        out.append(_block(f"adam_m/{name}", adam.m.get(name, torch.zeros_like(p)), fmt))
        out.append(_block(f"adam_v/{name}", adam.v.get(name, torch.zeros_like(p)), fmt))
    return b"".join(out)


def save_checkpoint(
    path: str | Path, iteration: int, model: AvatarModel, mesh: SkinnedMesh, adam: AdamState
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(iteration, model, mesh, adam))
    os.replace(tmp, path)
    log.debug("Wrote checkpoint %s (iteration %d)", path, iteration)
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"Checkpoint {self.path} is truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (length,) = self.unpack("<Q")
        return self.take(length).decode("utf-8")

    @property
    def done(self) -> bool:
        return self.pos >= len(self.data)


def _read_blocks(reader: _Reader, fmt: str) -> dict[str, np.ndarray]:
    itemsize = np.dtype(fmt).itemsize
    blocks: dict[str, np.ndarray] = {}
    while not reader.done:
        (name_len,) = reader.unpack("<I")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"Checkpoint {reader.path} has a corrupt block name") from e
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}Q") if rank else ()
        count = int(np.prod(dims)) if rank else 1
        payload = reader.take(count * itemsize)
        blocks[name] = np.frombuffer(payload, dtype=fmt).reshape(dims).copy()
    return blocks


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Rebuild model, mesh, config and optimizer state. Raises CheckpointError on any corruption."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version, iteration = reader.unpack("<IQ")
    if version != VERSION:
        raise CheckpointError(f"Checkpoint {path} has version {version}, expected {VERSION}")
    try:
        config = config_from_dict(json.loads(reader.text()), str(path))
        doc = json.loads(reader.text())
        mesh = SkinnedMesh.from_dict(doc["mesh"])
        train_poses = np.array(doc["train_poses"], dtype=np.float64)
        adam_step = int(doc["adam_step"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, StructuralError) as e:
        raise CheckpointError(f"Checkpoint {path} has a corrupt header: {e}") from e
    fmt = PAYLOAD[config.dtype]

    blocks = _read_blocks(reader, fmt)
    model = AvatarModel(config, mesh, train_poses)
    adam = AdamState(step=adam_step)
    with torch.no_grad():
        for name, p in model.named_parameters():
            for prefix in ("param", "adam_m", "adam_v"):
                key = f"{prefix}/{name}"
                if key not in blocks:
                    raise CheckpointError(f"Checkpoint {path} lacks block {key}")
                arr = blocks.pop(key)
                if tuple(arr.shape) != tuple(p.shape):
                    raise CheckpointError(
                        f"Block {key} has shape {tuple(arr.shape)}, model expects {tuple(p.shape)}"
                    )
                t = torch.as_tensor(arr, dtype=p.dtype)
                if prefix == "param":
                    p.copy_(t)
                elif prefix == "adam_m":
                    adam.m[name] = t.clone()
                else:
                    adam.v[name] = t.clone()
    if blocks:
        raise CheckpointError(f"Checkpoint {path} has unknown blocks: {sorted(blocks)[:3]}")
    return Checkpoint(iteration, config, mesh, model, adam)
