"""Binary checkpoint format for neural sequence models.

Layout: magic bytes, format version, a length-prefixed canonical-JSON header
(config, shape bindings, training metadata), and a length-prefixed blob of
all parameters as little-endian float32 in state-dict order. Loading and
re-saving a checkpoint is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigMismatch, ParseError
from .neural import ActionSequenceModel, ModelBindings, SeqModelConfig

MAGIC = b"ANTK"
VERSION = 1


def _canonical_json(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class Checkpoint:
    config: SeqModelConfig
    bindings: ModelBindings
    metadata: dict
    params: bytes

    @property
    def taxonomy_fingerprint(self) -> str:
        return self.bindings.taxonomy_fingerprint

    def to_bytes(self) -> bytes:
        header = _canonical_json(
            {
                "kind": "action-seq-model",
                "config": self.config.to_dict(),
                "bindings": self.bindings.to_dict(),
                "metadata": self.metadata,
            }
        )
        return b"".join(
            [
                MAGIC,
                struct.pack("<I", VERSION),
                struct.pack("<Q", len(header)),
                header,
                struct.pack("<Q", len(self.params)),
                self.params,
            ]
        )

    @staticmethod
    def from_bytes(raw: bytes) -> "Checkpoint":
        if raw[:4] != MAGIC:
            raise ParseError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != VERSION:
            raise ParseError(f"unsupported checkpoint version {version}")
        (header_len,) = struct.unpack_from("<Q", raw, 8)
        header_end = 16 + header_len
        header = json.loads(raw[16:header_end].decode("utf-8"))
        (blob_len,) = struct.unpack_from("<Q", raw, header_end)
        blob_start = header_end + 8
        params = raw[blob_start : blob_start + blob_len]
        if len(params) != blob_len:
            raise ParseError("truncated checkpoint parameter blob")
        return Checkpoint(
            config=SeqModelConfig.from_dict(header["config"]),
            bindings=ModelBindings.from_dict(header["bindings"]),
            metadata=header["metadata"],
            params=params,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    checkpoint.save(path)


def _pack_parameters(model: ActionSequenceModel) -> bytes:
    chunks = []
    for _, tensor in model.state_dict().items():
        chunks.append(tensor.detach().cpu().numpy().astype("<f4").tobytes())
    return b"".join(chunks)


def parameter_hash(model: ActionSequenceModel) -> str:
    return hashlib.sha256(_pack_parameters(model)).hexdigest()


def checkpoint_from_model(model: ActionSequenceModel, metadata: dict) -> Checkpoint:
    return Checkpoint(
        config=model.config,
        bindings=model.bindings,
        metadata=metadata,
        params=_pack_parameters(model),
    )


def load_model(checkpoint: Checkpoint) -> ActionSequenceModel:
    """Instantiate the model and fill its parameters from the blob."""
    model = ActionSequenceModel(checkpoint.config, checkpoint.bindings)
    state = model.state_dict()
    flat = np.frombuffer(checkpoint.params, dtype="<f4")
    expected = sum(t.numel() for t in state.values())
    if flat.size != expected:
        raise ConfigMismatch(
            f"parameter blob holds {flat.size} values, model needs {expected}"
        )
    offset = 0
    with torch.no_grad():
        for name, tensor in state.items():
            count = tensor.numel()
            values = torch.from_numpy(
                flat[offset : offset + count].copy().reshape(tuple(tensor.shape))
            )
            tensor.copy_(values.to(tensor.dtype))
            offset += count
    model.load_state_dict(state)
    model.eval()
    return model
