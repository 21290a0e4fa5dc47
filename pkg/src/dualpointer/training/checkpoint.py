"""Binary checkpoint format.

Layout: the 8-byte magic ``DPNRELX1``, an unsigned 64-bit little-endian
header length, a UTF-8 JSON header, then every array as little-endian
float32 in manifest order.  Optimizer moments follow the parameters under
``adam.m/<name>`` and ``adam.v/<name>``.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..data import Vocab
from ..data.example import atomic_write_bytes
from ..model import DualPointerNet, Hyperparams, ParameterSet
from .config import TrainConfig

MAGIC = b"DPNRELX1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, truncated or from another format version."""


@dataclass
class Checkpoint:
    hyper: Hyperparams
    vocab: Vocab
    params: ParameterSet
    attn: str = "multi"
    dual: bool = True
    epoch: int = 0
    config: TrainConfig | None = None
    adam_step: int = 0
    adam_state: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    rng_state: dict | None = None
    trainer_state: dict = field(default_factory=dict)

    @property
    def vocab_hash(self) -> str:
        return self.vocab.hash()

    def network(self) -> DualPointerNet:
        return DualPointerNet(self.hyper, self.vocab, self.params, self.attn)

    def header(self, manifest: list[dict], payload_bytes: int) -> dict:
        return {
            "version": FORMAT_VERSION,
            "hyperparams": self.hyper.to_json(),
            "attn": self.attn,
            "dual": self.dual,
            "epoch": self.epoch,
            "config": self.config.to_json() if self.config else None,
            "adam_step": self.adam_step,
            "rng_state": self.rng_state,
            "trainer_state": self.trainer_state,
            "vocab_hash": self.vocab_hash,
            "vocab": self.vocab.to_json(),
            "manifest": manifest,
            "payload_bytes": payload_bytes,
        }


def _named_arrays(ckpt: Checkpoint):
    yield from ckpt.params.arrays().items()
    yield from ckpt.adam_state.items()


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    manifest, chunks, offset = [], [], 0
    for name, arr in _named_arrays(ckpt):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(ckpt.header(manifest, offset), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, _LEN.pack(len(header)), header] + chunks)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    atomic_write_bytes(path, checkpoint_bytes(ckpt))


def parse_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + _LEN.size or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = _LEN.unpack_from(blob, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if start + hlen > len(blob):
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {header.get('version')!r} is not "
                              f"supported (expected {FORMAT_VERSION})")
    payload = memoryview(blob)[start + hlen:]
    expected = header["payload_bytes"]
    if len(payload) != expected:
        kind = "truncated" if len(payload) < expected else "oversized"
        raise CheckpointError(f"{kind} payload: manifest declares {expected} bytes, "
                              f"file holds {len(payload)}")

    arrays: OrderedDict[str, np.ndarray] = OrderedDict()
    offset = 0
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if entry["offset"] != offset:
            raise CheckpointError(f"manifest offsets do not tile the payload at {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(payload[offset:offset + nbytes], dtype="<f4") \
            .astype(np.float32).reshape(shape)
        offset += nbytes
    if offset != expected:
        raise CheckpointError(f"manifest covers {offset} bytes but payload has {expected}")

    vocab = Vocab.from_json(header["vocab"])
    if vocab.hash() != header["vocab_hash"]:
        raise CheckpointError("embedded vocabulary does not match its recorded hash")
    params = ParameterSet(OrderedDict((k, v) for k, v in arrays.items() if not k.startswith("adam.")))
    adam = OrderedDict((k, v) for k, v in arrays.items() if k.startswith("adam."))
    config = header.get("config")
    return Checkpoint(
        hyper=Hyperparams.from_json(header["hyperparams"]),
        vocab=vocab,
        params=params,
        attn=header["attn"],
        dual=header["dual"],
        epoch=header["epoch"],
        config=TrainConfig.from_json(config) if config else None,
        adam_step=header["adam_step"],
        adam_state=adam,
        rng_state=header["rng_state"],
        trainer_state=header["trainer_state"],
    )


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
