"""Binary checkpoints taken at epoch boundaries.

Layout (little-endian)::

    b"MCRN" | u32 version | 32-byte config sha256 | u32 header length | header JSON
    | float32 payload | u32 crc32 of everything before it

The header holds the epoch, optimizer scalars, array shapes, the bank
geometry, the config text, the rng state and the metric records so far.
The payload is the encoder parameters, the Adam moments and the bank rows
in that order. Parameters and moments live in float32 during training, so
they round-trip exactly. Bank rows are rebuilt at the start of every epoch
and are stored for inspection only.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_config
from .encoder import Encoder, EncoderParams, OptimizerState
from .memory import CentroidBank

MAGIC = b"MCRN"
VERSION = 1
_PREFIX = struct.Struct("<4sI32sI")


class CheckpointError(ValueError):
    """Raised for files that are not valid checkpoints."""


def _records_json(records) -> list[dict]:
    return [asdict(r) for r in records]


def save_checkpoint(path, state) -> None:
    """Write a :class:`~mcrn.harness.TrainingState` to ``path``."""
    cfg: ExperimentConfig = state.config
    params = state.encoder.params.arrays()
    opt: OptimizerState = state.optimizer
    arrays = params + list(opt.m) + list(opt.v)
    bank = state.bank
    if bank is not None:
        arrays.append(bank.rows)
    header = {
        "epoch": state.epoch,
        "encoder_version": state.encoder.version,
        "dims": state.encoder.dims,
        "optimizer": {
            "lr": opt.lr,
            "weight_decay": opt.weight_decay,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "step": opt.step,
        },
        "shapes": [list(a.shape) for a in arrays],
        "bank": None if bank is None else {"k": bank.k, "n_source": bank.n_source, "n_target": bank.n_target, "dim": bank.dim},
        "config": cfg.to_text(),
        "rng": state.rng.bit_generator.state,
        "records": _records_json(state.records),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)
    body = _PREFIX.pack(MAGIC, VERSION, cfg.digest(), len(head)) + head + payload
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def _split(blob: bytes) -> tuple[int, bytes, dict, bytes]:
    if len(blob) < _PREFIX.size + 4:
        raise CheckpointError("file too short to be a checkpoint")
    magic, version, digest, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    body = blob[:-4]
    start = _PREFIX.size
    if start + head_len > len(body):
        raise CheckpointError("truncated header")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch (truncated or corrupt file)")
    header = json.loads(body[start : start + head_len].decode("utf-8"))
    return version, digest, header, body[start + head_len :]


def read_header(path) -> dict:
    """Header fields plus the hex config hash, without rebuilding any state."""
    _, digest, header, _ = _split(Path(path).read_bytes())
    return {**header, "config_hash": digest.hex()}


def load_checkpoint(path):
    """Rebuild the :class:`~mcrn.harness.TrainingState` saved at ``path``."""
    from .harness import MetricsRecord, TrainingState

    _, digest, header, payload = _split(Path(path).read_bytes())
    cfg = parse_config(header["config"])
    if cfg.digest() != digest:
        raise CheckpointError("config text does not match the stored config hash")
    shapes = [tuple(s) for s in header["shapes"]]
    expected = sum(int(np.prod(s)) for s in shapes) * 4
    if len(payload) != expected:
        raise CheckpointError(f"payload is {len(payload)} bytes, expected {expected}")
    arrays, pos = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, dtype="<f4", count=n, offset=pos).astype(np.float32).reshape(shape))
        pos += 4 * n

    n_layers = len(header["dims"]) - 1
    n_par = 2 * n_layers
    params = EncoderParams(arrays[0:n_par:2], arrays[1:n_par:2])
    encoder = Encoder(params)
    encoder.version = header["encoder_version"]
    o = header["optimizer"]
    opt = OptimizerState(lr=o["lr"], weight_decay=o["weight_decay"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], step=o["step"])
    opt.m = arrays[n_par : 2 * n_par]
    opt.v = arrays[2 * n_par : 3 * n_par]
    bank = None
    if header["bank"] is not None:
        b = header["bank"]
        bank = CentroidBank(b["k"], b["n_source"], b["n_target"], b["dim"], rows=arrays[3 * n_par].astype(np.float64))

    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    records = [MetricsRecord(**r) for r in header["records"]]
    return TrainingState(cfg, encoder, opt, rng, epoch=header["epoch"], bank=bank, records=records)
