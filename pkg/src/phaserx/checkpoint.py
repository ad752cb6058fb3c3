"""Binary checkpoint format ("PRX1").

Layout, all integers little-endian::

    magic        4 bytes  b"PRX1"
    version      u32
    config       u32 length + UTF-8 INI text
    step         u64
    n_params     u32
    n_params x   u16 name length, name bytes, u8 dtype tag (1 = f32, 2 = f64),
                 u8 ndim, ndim x u32 dims, raw values
    moments      for each parameter in the same order: raw m values, raw v values
    state        u32 length + UTF-8 JSON (rng state, loss trace, detector state)
    crc32        u32 over every preceding byte

Parameters are written in canonical model order, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .autodiff import Parameter, Tensor
from .receiver import param_table
from .training import Trainer

MAGIC = b"PRX1"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class CheckpointError(Exception):
    """Unreadable checkpoint; ``reason`` is a short machine-friendly code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass
class Checkpoint:
    config_text: str
    step: int
    params: "OrderedDict[str, Parameter]"
    state: dict = field(default_factory=dict)
    version: int = VERSION

    @property
    def config(self) -> cfgmod.RunConfig:
        return cfgmod.loads(self.config_text)


def _pack_array(out: list, arr: np.ndarray, dtype: np.dtype) -> None:
    out.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def encode(ckpt: Checkpoint) -> bytes:
    parts: list[bytes] = [MAGIC, struct.pack("<I", ckpt.version)]
    cfg = ckpt.config_text.encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<Q", ckpt.step),
              struct.pack("<I", len(ckpt.params))]
    for name, p in ckpt.params.items():
        data = p.tensor.data
        tag = _TAGS.get(data.dtype)
        if tag is None:
            raise CheckpointError("dtype", f"{name} has unsupported dtype {data.dtype}")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<BB", tag, data.ndim),
                  struct.pack(f"<{data.ndim}I", *data.shape)]
        _pack_array(parts, data, _DTYPES[tag])
    for name, p in ckpt.params.items():
        dt = _DTYPES[_TAGS[p.tensor.data.dtype]]
        _pack_array(parts, p.m, dt)
        _pack_array(parts, p.v, dt)
    state = json.dumps(ckpt.state, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts += [struct.pack("<I", len(state)), state]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CheckpointError("truncated", f"needed {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> Checkpoint:
    if len(buf) < 8:
        raise CheckpointError("truncated", f"only {len(buf)} bytes")
    if buf[:4] != MAGIC:
        raise CheckpointError("bad_magic", f"expected {MAGIC!r}, found {buf[:4]!r}")
    (version,) = struct.unpack("<I", buf[4:8])
    if version != VERSION:
        raise CheckpointError("version", f"unsupported format version {version} (reader supports {VERSION})")
    if len(buf) < 12:
        raise CheckpointError("truncated", "missing checksum")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    r = _Reader(body)
    r.take(8)
    (cfg_len,) = r.unpack("<I")
    try:
        config_text = r.take(cfg_len).decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError("corrupt", "config text is not UTF-8") from None
    (step,) = r.unpack("<Q")
    (count,) = r.unpack("<I")
    params: OrderedDict[str, Parameter] = OrderedDict()
    layouts = []
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8", errors="replace")
        tag, ndim = r.unpack("<BB")
        if tag not in _DTYPES:
            raise CheckpointError("corrupt", f"unknown dtype tag {tag} for {name}")
        shape = r.unpack(f"<{ndim}I")
        dt = _DTYPES[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        data = np.frombuffer(r.take(size), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
        if name in params:
            raise CheckpointError("corrupt", f"duplicate parameter {name}")
        params[name] = Parameter(name, Tensor(data))
        layouts.append((name, shape, dt, size))
    for name, shape, dt, size in layouts:
        p = params[name]
        p.m = np.frombuffer(r.take(size), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
        p.v = np.frombuffer(r.take(size), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    (slen,) = r.unpack("<I")
    try:
        state = json.loads(r.take(slen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt", f"state block: {exc}") from None
    if r.pos != len(body):
        raise CheckpointError("corrupt", f"{len(body) - r.pos} trailing bytes")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum", "CRC mismatch")
    return Checkpoint(config_text, step, params, state, version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    data = encode(ckpt)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())


# ------------------------------------------------------------ trainer glue


def from_trainer(trainer: Trainer, run_config: cfgmod.RunConfig | None = None) -> Checkpoint:
    if run_config is None:
        run_config = cfgmod.RunConfig(trainer.receiver_config, trainer.config)
    state = {
        "rng": trainer.rng.bit_generator.state,
        "losses": [float(v) for v in trainer.losses],
        "initial_loss": trainer.initial_loss,
        "bad_steps": trainer.bad_steps,
    }
    return Checkpoint(cfgmod.dumps(run_config), trainer.step, trainer.params, state)


def to_trainer(ckpt: Checkpoint) -> Trainer:
    """Rebuild a trainer positioned exactly where the checkpoint was taken."""
    run = ckpt.config
    expected = [(name, shape) for name, shape, _ in param_table(run.receiver)]
    found = [(name, p.shape) for name, p in ckpt.params.items()]
    if expected != found:
        raise CheckpointError("mismatch", "parameter directory does not match the stored config")
    trainer = Trainer(run.receiver, run.train, params=ckpt.params)
    if "rng" in ckpt.state:
        trainer.rng.bit_generator.state = ckpt.state["rng"]
    trainer.step = ckpt.step
    trainer.losses = list(ckpt.state.get("losses", []))
    trainer.initial_loss = ckpt.state.get("initial_loss")
    trainer.bad_steps = int(ckpt.state.get("bad_steps", 0))
    return trainer
