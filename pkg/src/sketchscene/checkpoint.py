"""Checkpoint files: JSON header plus raw little-endian float32 payload.

Layout: 4-byte little-endian header length, the UTF-8 JSON header
(names, shapes, payload byte offsets, config hash, stage, step), then
every parameter array back to back. Round trips are bit-exact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import config_hash, from_dict


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model, stage, step):
    params = model.named_params()
    names = list(params)
    offsets = {}
    chunks = []
    cursor = 0
    for name in names:
        arr = np.ascontiguousarray(params[name].values, dtype="<f4")
        offsets[name] = cursor
        chunks.append(arr.tobytes())
        cursor += len(chunks[-1])
    header = {
        "names": names,
        "shapes": {n: list(params[n].shape) for n in names},
        "offsets": offsets,
        "config": dataclasses.asdict(model.config),
        "config_hash": config_hash(model.config),
        "stage": stage,
        "step": int(step),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for chunk in chunks:
            f.write(chunk)
    tmp.replace(path)


def read_header(path):
    with open(path, "rb") as f:
        raw = f.read(4)
        if len(raw) < 4:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", raw)
        blob = f.read(hlen)
    if len(blob) < hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        return json.loads(blob.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None


def load_checkpoint(path, model):
    """Load arrays into `model` in place; returns the header."""
    header = read_header(path)
    if header["config_hash"] != config_hash(model.config):
        raise CheckpointError(
            f"{path}: checkpoint was written under a different config "
            f"(hash {header['config_hash'][:12]}… vs {config_hash(model.config)[:12]}…)")
    params = model.named_params()
    saved = set(header["names"])
    current = set(params)
    if saved != current:
        missing = sorted(current - saved)
        extra = sorted(saved - current)
        raise CheckpointError(
            f"{path}: parameter set mismatch (missing {missing[:3]}, extra {extra[:3]})")
    blob = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", blob, 0)
    base = 4 + hlen
    for name in header["names"]:
        shape = tuple(header["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        start = base + header["offsets"][name]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(shape)
        if params[name].shape != shape:
            raise CheckpointError(
                f"{path}: {name} has shape {shape}, model expects {params[name].shape}")
        params[name].values = arr.astype(np.float32).copy()
    return header


def load_model(path):
    """Rebuild a model from a checkpoint's embedded config and weights."""
    from .model import SceneModel

    header = read_header(path)
    if "config" not in header:
        raise CheckpointError(f"{path}: header carries no config")
    config = from_dict(header["config"])
    model = SceneModel(config)
    load_checkpoint(path, model)
    return model, header


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
