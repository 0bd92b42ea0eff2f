"""Binary model checkpoints.

Layout, all little-endian:

    bytes 0..3   magic "HLM1"
    byte  4      format version (currently 1)
    bytes 5..8   uint32 header length N
    bytes 9..    UTF-8 JSON header of N bytes:
                 {"architecture", "dims", "vocab", "config",
                  "params": [{"name", "shape"}, ...]}
    then         each parameter array as IEEE-754 float32 in header order
    last 4       uint32 CRC-32 (zlib) of the parameter payload

The header is rebuilt canonically on every save, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .models import ModelDims, init_params

MAGIC = b"HLM1"
VERSION = 1


class CorruptCheckpoint(ValueError):
    pass


class BadMagic(CorruptCheckpoint):
    pass


class VersionMismatch(CorruptCheckpoint):
    pass


class TruncatedFile(CorruptCheckpoint):
    pass


class ChecksumMismatch(CorruptCheckpoint):
    pass


@dataclass
class Checkpoint:
    architecture: str
    dims: ModelDims
    vocab_tokens: list
    config: dict
    params: dict  # name -> float32 ndarray, in the model's canonical order

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.from_tokens(self.vocab_tokens)

    def to_params(self):
        """Materialize a parameter struct for the models module."""
        params = init_params(self.architecture, self.dims, seed=0)
        for name, p in params.items():
            src = self.params[name]
            if p.value.shape != src.shape:
                raise CorruptCheckpoint(
                    f"parameter {name}: stored shape {src.shape}, "
                    f"model expects {p.value.shape}")
            p.value[...] = src
        return params

    @classmethod
    def from_params(cls, params, vocab: Vocabulary, config: dict) -> "Checkpoint":
        return cls(
            architecture=params.arch,
            dims=params.dims,
            vocab_tokens=list(vocab.id_to_token),
            config=dict(config),
            params={name: np.asarray(p.value, dtype="<f4").copy()
                    for name, p in params.items()},
        )


def _header_bytes(ckpt: Checkpoint) -> bytes:
    header = {
        "architecture": ckpt.architecture,
        "dims": {
            "vocab_size": ckpt.dims.vocab_size,
            "embed_size": ckpt.dims.embed_size,
            "hidden_size": ckpt.dims.hidden_size,
            "context_order": ckpt.dims.context_order,
        },
        "vocab": list(ckpt.vocab_tokens),
        "config": ckpt.config,
        "params": [{"name": name, "shape": list(arr.shape)}
                   for name, arr in ckpt.params.items()],
    }
    return json.dumps(header, ensure_ascii=False, allow_nan=False,
                      separators=(",", ":")).encode("utf-8")


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    header = _header_bytes(ckpt)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes()
        for arr in ckpt.params.values())
    blob = (MAGIC + bytes([VERSION]) + struct.pack("<I", len(header))
            + header + payload + struct.pack("<I", zlib.crc32(payload)))
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < 9:
        raise TruncatedFile(f"{path}: {len(blob)} bytes is too short for a header")
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {blob[:4]!r}, expected {MAGIC!r}")
    if blob[4] != VERSION:
        raise VersionMismatch(f"{path}: format version {blob[4]}, expected {VERSION}")
    (header_len,) = struct.unpack("<I", blob[5:9])
    if len(blob) < 9 + header_len:
        raise TruncatedFile(f"{path}: header declares {header_len} bytes, file ends early")
    try:
        header = json.loads(blob[9:9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header: {exc}") from exc

    shapes = [(entry["name"], tuple(entry["shape"])) for entry in header["params"]]
    payload_len = sum(4 * int(np.prod(shape, dtype=np.int64)) for _, shape in shapes)
    end = 9 + header_len + payload_len
    if len(blob) < end + 4:
        raise TruncatedFile(
            f"{path}: header declares {payload_len} payload bytes plus CRC, file ends early")
    if len(blob) > end + 4:
        raise CorruptCheckpoint(f"{path}: {len(blob) - end - 4} trailing bytes")
    payload = blob[9 + header_len:end]
    (stored_crc,) = struct.unpack("<I", blob[end:end + 4])
    actual_crc = zlib.crc32(payload)
    if stored_crc != actual_crc:
        raise ChecksumMismatch(
            f"{path}: payload CRC {actual_crc:#010x} != stored {stored_crc:#010x}")

    params = {}
    offset = 0
    for name, shape in shapes:
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        params[name] = arr.reshape(shape).copy()
        offset += 4 * n
    d = header["dims"]
    return Checkpoint(
        architecture=header["architecture"],
        dims=ModelDims(d["vocab_size"], d["embed_size"], d["hidden_size"],
                       d.get("context_order", 2)),
        vocab_tokens=header["vocab"],
        config=header["config"],
        params=params,
    )
