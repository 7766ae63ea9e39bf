"""Binary checkpoint container for model weights and resumable training state.

Layout (all integers and floats little-endian)::

    b"WSVM" | version u32 | feature_dim u32 | widths u32 x 4
    w_fc b_fc w_g1 b_g1 w_g2 b_g2 w_g3 b_g3   float64, row-major
    sections until EOF: tag (8 bytes, NUL padded) | length u64 | payload

Sections: ``CBMEM`` cross-batch center memory, ``ADAM`` optimizer moments,
``TRAIN`` JSON with epoch, rng state and training config.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wsvad.crossbatch import CLASSES, STRATEGIES, CenterMemory
from wsvad.errors import DataError
from wsvad.model import ModelParams
from wsvad.training import AdamState, TrainConfig, TrainState

MAGIC = b"WSVM"
VERSION = 1
_HEAD = struct.Struct("<4sIIIIII")
_SECTION = struct.Struct("<8sQ")
_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    params: ModelParams
    memory: CenterMemory | None = None
    adam: AdamState | None = None
    train: dict | None = None


def _shapes(feature_dim: int, widths) -> list[tuple[int, ...]]:
    dims = (feature_dim, *widths)
    out = []
    for a, b in zip(dims[:-1], dims[1:]):
        out += [(a, b), (b,)]
    return out


def _write_params(buf: io.BytesIO, params: ModelParams) -> None:
    for _, block in params.blocks():
        buf.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def _read_params(buf: io.BytesIO, shapes, path: Path) -> ModelParams:
    blocks = []
    for shape in shapes:
        n = int(np.prod(shape))
        raw = buf.read(8 * n)
        if len(raw) != 8 * n:
            raise DataError(f"{path}: checkpoint truncated inside a parameter block")
        blocks.append(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
    return ModelParams(*blocks)


def _encode_memory(mem: CenterMemory) -> bytes:
    buf = io.BytesIO()
    dim = mem.dim or 0
    buf.write(_U32.pack(STRATEGIES.index(mem.strategy)))
    buf.write(_U32.pack(dim))
    for store in (mem.current, mem.previous, mem.history):
        for cls in CLASSES:
            pairs = store[cls]
            buf.write(_U32.pack(len(pairs)))
            for c1, c2 in pairs:
                buf.write(np.ascontiguousarray(np.vstack([c1, c2]), dtype="<f8").tobytes())
    return buf.getvalue()


def _decode_memory(payload: bytes) -> CenterMemory:
    buf = io.BytesIO(payload)
    (code,) = _U32.unpack(buf.read(4))
    (dim,) = _U32.unpack(buf.read(4))
    mem = CenterMemory(STRATEGIES[code])
    for store in (mem.current, mem.previous, mem.history):
        for cls in CLASSES:
            (count,) = _U32.unpack(buf.read(4))
            for _ in range(count):
                pair = np.frombuffer(buf.read(16 * dim), dtype="<f8").reshape(2, dim).astype(np.float64)
                store[cls].append((pair[0].copy(), pair[1].copy()))
    return mem


def save_checkpoint(
    path: Path,
    params: ModelParams,
    memory: CenterMemory | None = None,
    adam: AdamState | None = None,
    train: dict | None = None,
) -> None:
    buf = io.BytesIO()
    buf.write(_HEAD.pack(MAGIC, VERSION, params.feature_dim, *params.widths))
    _write_params(buf, params)
    sections = []
    if memory is not None:
        sections.append((b"CBMEM", _encode_memory(memory)))
    if adam is not None:
        ab = io.BytesIO()
        ab.write(struct.pack("<Q", adam.step))
        _write_params(ab, adam.m)
        _write_params(ab, adam.v)
        sections.append((b"ADAM", ab.getvalue()))
    if train is not None:
        sections.append((b"TRAIN", json.dumps(train, sort_keys=True).encode()))
    for tag, payload in sections:
        buf.write(_SECTION.pack(tag, len(payload)))
        buf.write(payload)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    if len(raw) < _HEAD.size:
        raise DataError(f"{path}: truncated checkpoint header")
    magic, version, feature_dim, *widths = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    shapes = _shapes(feature_dim, widths)
    buf = io.BytesIO(raw)
    buf.seek(_HEAD.size)
    ckpt = Checkpoint(_read_params(buf, shapes, path))
    while True:
        head = buf.read(_SECTION.size)
        if not head:
            break
        if len(head) != _SECTION.size:
            raise DataError(f"{path}: truncated section header")
        tag, length = _SECTION.unpack(head)
        payload = buf.read(length)
        if len(payload) != length:
            raise DataError(f"{path}: truncated section {tag.rstrip(bytes(1))!r}")
        tag = tag.rstrip(b"\0")
        if tag == b"CBMEM":
            ckpt.memory = _decode_memory(payload)
        elif tag == b"ADAM":
            ab = io.BytesIO(payload)
            (step,) = struct.unpack("<Q", ab.read(8))
            ckpt.adam = AdamState(_read_params(ab, shapes, path), _read_params(ab, shapes, path), step)
        elif tag == b"TRAIN":
            ckpt.train = json.loads(payload.decode())
        else:
            raise DataError(f"{path}: unknown section {tag!r}")
    return ckpt


def save_train_state(path: Path, state: TrainState, config: TrainConfig) -> None:
    train = {
        "epoch": state.epoch,
        "rng_state": state.rng.bit_generator.state,
        "config": config.to_dict(),
    }
    save_checkpoint(path, state.params, state.memory, state.adam, train)


def load_train_state(path: Path) -> tuple[TrainState, TrainConfig]:
    ckpt = load_checkpoint(path)
    if ckpt.train is None or ckpt.adam is None or ckpt.memory is None:
        raise DataError(f"{path}: checkpoint holds weights only, cannot resume training")
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = ckpt.train["rng_state"]
    state = TrainState(ckpt.params, ckpt.adam, ckpt.memory, rng, ckpt.train["epoch"])
    return state, TrainConfig.from_dict(ckpt.train["config"])
