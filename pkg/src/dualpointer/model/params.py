"""Hyperparameters and named parameter tensors."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from typing import Iterator

import numpy as np

from ..autodiff import Tensor

ATTENTION_KINDS = ("single", "multi")


@dataclass(frozen=True)
class Hyperparams:
    word_dim: int = 300
    char_dim: int = 50
    entity_type_dim: int = 50
    cnn_filter_sizes: tuple[int, ...] = (3, 4, 5)
    cnn_total_filters: int = 100
    encoder_hidden: int = 256
    decoder_hidden: int = 512
    heads: int = 8
    head_dim: int = 32
    dropout: float = 0.1
    alpha: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "cnn_filter_sizes", tuple(int(s) for s in self.cnn_filter_sizes))
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("dropout", "alpha", "cnn_filter_sizes"):
                continue
            if value <= 0:
                raise ValueError(f"{f.name} must be > 0, got {value}")
        if not self.cnn_filter_sizes or min(self.cnn_filter_sizes) <= 0:
            raise ValueError("cnn_filter_sizes must be positive")
        if self.cnn_total_filters < len(self.cnn_filter_sizes):
            raise ValueError("need at least one filter per filter size")
        if self.heads * self.head_dim != self.encoder_hidden:
            raise ValueError(
                f"heads x head_dim ({self.heads} x {self.head_dim}) must equal encoder_hidden "
                f"({self.encoder_hidden})"
            )
        if self.decoder_hidden % self.heads:
            raise ValueError("decoder_hidden must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")

    @property
    def filter_counts(self) -> tuple[int, ...]:
        """Filters per window size: the total split as evenly as possible, extras first."""
        k = len(self.cnn_filter_sizes)
        base, extra = divmod(self.cnn_total_filters, k)
        return tuple(base + (1 if i < extra else 0) for i in range(k))

    @property
    def word_repr_dim(self) -> int:
        return self.word_dim + self.cnn_total_filters

    @property
    def entity_repr_dim(self) -> int:
        return 2 * self.cnn_total_filters + self.entity_type_dim

    @property
    def context_dim(self) -> int:
        return 2 * self.encoder_hidden

    @property
    def output_dim(self) -> int:
        return self.heads * self.head_dim

    def to_json(self) -> dict:
        d = asdict(self)
        d["cnn_filter_sizes"] = list(self.cnn_filter_sizes)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Hyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def tiny(cls, **overrides) -> "Hyperparams":
        """Small dimensions with the same architecture, for checks and quick runs."""
        base = dict(word_dim=6, char_dim=4, entity_type_dim=3, cnn_filter_sizes=(1, 2),
                    cnn_total_filters=5, encoder_hidden=4, decoder_hidden=6, heads=2,
                    head_dim=2, dropout=0.0)
        base.update(overrides)
        return cls(**base)


class ParameterSet:
    """Ordered mapping of parameter name to trainable :class:`Tensor`."""

    def __init__(self, tensors: "OrderedDict[str, Tensor] | None" = None):
        self._tensors: OrderedDict[str, Tensor] = OrderedDict()
        for name, t in (tensors or {}).items():
            self.add(name, t.data if isinstance(t, Tensor) else t)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.ascontiguousarray(data), requires_grad=True, name=name)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def names(self) -> list[str]:
        return list(self._tensors)

    @property
    def n_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet(OrderedDict((n, t.data.astype(dtype)) for n, t in self._tensors.items()))

    def copy(self) -> "ParameterSet":
        return ParameterSet(OrderedDict((n, t.data.copy()) for n, t in self._tensors.items()))

    def load_arrays(self, arrays) -> None:
        """Overwrite values in place from a name -> array mapping with identical shapes."""
        for name, t in self._tensors.items():
            src = np.asarray(arrays[name])
            if src.shape != t.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {t.shape}")
            t.data[...] = src

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, t.data) for n, t in self._tensors.items())


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _lstm(ps: ParameterSet, prefix: str, d_in: int, hidden: int, rng, dtype) -> None:
    ps.add(f"{prefix}.wx", glorot(rng, (d_in, 4 * hidden), d_in, 4 * hidden, dtype))
    ps.add(f"{prefix}.wh", glorot(rng, (hidden, 4 * hidden), hidden, 4 * hidden, dtype))
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0  # forget gate
    ps.add(f"{prefix}.b", b)


def _cnn(ps: ParameterSet, prefix: str, d_in: int, hyper: Hyperparams, rng, dtype) -> None:
    for w, f in zip(hyper.cnn_filter_sizes, hyper.filter_counts):
        ps.add(f"{prefix}.w{w}", glorot(rng, (w, d_in, f), w * d_in, f, dtype))
        ps.add(f"{prefix}.b{w}", np.zeros(f, dtype=dtype))


def _embedding(rng, rows: int, dim: int, dtype, pad_row: bool) -> np.ndarray:
    table = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(rows, dim)).astype(dtype)
    if pad_row:
        table[0] = 0.0
    return table


def init_params(hyper: Hyperparams, n_words: int, n_chars: int, n_types: int, n_relations: int,
                attn: str = "multi", seed: int = 0, dtype=np.float32) -> ParameterSet:
    """Initialise every weight of the encoder and both decoders for one attention kind."""
    if attn not in ATTENTION_KINDS:
        raise ValueError(f"attn must be one of {ATTENTION_KINDS}, got {attn!r}")
    rng = np.random.default_rng(seed)
    h = hyper
    ps = ParameterSet()
    ps.add("word_emb", _embedding(rng, n_words, h.word_dim, dtype, pad_row=True))
    ps.add("char_emb", _embedding(rng, n_chars, h.char_dim, dtype, pad_row=True))
    ps.add("type_emb", _embedding(rng, max(n_types, 1), h.entity_type_dim, dtype, pad_row=False))
    _cnn(ps, "word_char_cnn", h.char_dim, h, rng, dtype)
    _cnn(ps, "ent_word_cnn", h.word_dim, h, rng, dtype)
    _cnn(ps, "ent_char_cnn", h.char_dim, h, rng, dtype)
    _lstm(ps, "ctx_fwd", h.word_repr_dim, h.encoder_hidden, rng, dtype)
    _lstm(ps, "ctx_bwd", h.word_repr_dim, h.encoder_hidden, rng, dtype)
    _lstm(ps, "ent_lstm", h.entity_repr_dim, h.encoder_hidden, rng, dtype)
    key_dim = h.context_dim // h.heads
    qd = h.encoder_hidden // h.heads
    ps.add("c2e.wa", glorot(rng, (qd, h.head_dim), qd, h.head_dim, dtype))
    ps.add("c2e.wk", glorot(rng, (h.heads, key_dim, h.head_dim), key_dim, h.head_dim, dtype))
    ps.add("c2e.wv", glorot(rng, (h.heads, key_dim, h.head_dim), key_dim, h.head_dim, dtype))
    ps.add("c2e.wo", glorot(rng, (h.output_dim, h.output_dim), h.output_dim, h.output_dim, dtype))
    ps.add("c2e.bo", np.zeros(h.output_dim, dtype=dtype))
    ps.add("null_slot", rng.normal(0.0, 0.1, size=(1, h.output_dim)).astype(dtype))
    dec_in = h.entity_repr_dim + h.encoder_hidden
    width = h.output_dim
    for side in ("obj", "sub"):
        _lstm(ps, f"{side}.lstm", dec_in, h.decoder_hidden, rng, dtype)
        if attn == "single":
            ps.add(f"{side}.w_mem", glorot(rng, (h.output_dim, width), h.output_dim + h.decoder_hidden, width, dtype))
            ps.add(f"{side}.w_query", glorot(rng, (h.decoder_hidden, width), h.output_dim + h.decoder_hidden, width, dtype))
            ps.add(f"{side}.v", glorot(rng, (width,), width, 1, dtype))
            ps.add(f"{side}.z", glorot(rng, (h.output_dim + h.decoder_hidden, width),
                                       h.output_dim + h.decoder_hidden, width, dtype))
            ps.add(f"{side}.u", glorot(rng, (width, n_relations), width, n_relations, dtype))
        else:
            gq = h.decoder_hidden // h.heads
            ps.add(f"{side}.wl", glorot(rng, (gq, h.head_dim), gq, h.head_dim, dtype))
            ps.add(f"{side}.wr", glorot(rng, (h.output_dim, n_relations), h.output_dim, n_relations, dtype))
            ps.add(f"{side}.br", np.zeros(n_relations, dtype=dtype))
    return ps
