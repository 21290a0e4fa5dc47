"""Training configuration and the ``key = value`` config file format."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..model import ATTENTION_KINDS, Hyperparams


class ConfigError(ValueError):
    """A config file or value could not be accepted."""


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.6
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1
    max_epochs: int = 200
    clip_norm: float = 5.0
    patience: int = 20
    seed: int = 0
    attn: str = "multi"
    dual: bool = True
    stop_at_dev_f1: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        for name in ("lr", "eps", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.attn not in ATTENTION_KINDS:
            raise ConfigError(f"attn must be one of {ATTENTION_KINDS}, got {self.attn!r}")
        if self.stop_at_dev_f1 is not None and not 0.0 < self.stop_at_dev_f1 <= 1.0:
            raise ConfigError(f"stop_at_dev_f1 must be in (0, 1], got {self.stop_at_dev_f1}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# alpha lives in both dataclasses; one config key sets both
_HYPER_KEYS = {f.name: f for f in fields(Hyperparams)}
_TRAIN_KEYS = {f.name: f for f in fields(TrainConfig)}


def _parse_value(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if default is None:
            return None if raw.lower() == "none" else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text: str, base: tuple[Hyperparams, TrainConfig] | None = None
                 ) -> tuple[Hyperparams, TrainConfig]:
    """Parse ``key = value`` lines over defaults; ``#`` starts a comment."""
    hyper, train = base or (Hyperparams(), TrainConfig())
    hyper_kw, train_kw, seen = {}, {}, set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key not in _HYPER_KEYS and key not in _TRAIN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in _HYPER_KEYS:
            hyper_kw[key] = _parse_value(key, raw, getattr(hyper, key))
        if key in _TRAIN_KEYS:
            train_kw[key] = _parse_value(key, raw, getattr(train, key))
    try:
        return replace(hyper, **hyper_kw), replace(train, **train_kw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> tuple[Hyperparams, TrainConfig]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def format_config(hyper: Hyperparams, train: TrainConfig) -> str:
    if hyper.alpha != train.alpha:
        raise ConfigError(f"alpha differs between hyperparameters ({hyper.alpha}) and "
                          f"training config ({train.alpha})")
    lines = ["# model"]
    lines += [f"{k} = {_format_value(getattr(hyper, k))}" for k in _HYPER_KEYS if k != "alpha"]
    lines.append("# training")
    lines += [f"{k} = {_format_value(getattr(train, k))}" for k in _TRAIN_KEYS]
    return "\n".join(lines) + "\n"


def default_config_text() -> str:
    return (Path(__file__).with_name("default.cfg")).read_text(encoding="utf-8")
