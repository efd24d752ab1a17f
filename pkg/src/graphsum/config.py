"""Run configuration: dimensions, training knobs, and component switches."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace

from .errors import DataError

AGG_MODES = ("sum", "mean")


@dataclass(frozen=True)
class Config:
    hidden_dim: int = 64
    word_dim: int = 64
    type_dim: int = 16
    edge_dim: int = 16
    hops: int = 1
    vocab_cap: int = 4000
    dropout: float = 0.3
    batch_size: int = 8
    epochs: int = 50
    lr: float = 1e-3
    patience: int = 10
    sched_floor: float = 0.7
    max_summary_len: int = 30
    beam_width: int = 5
    seed: int = 0x5EED
    retrieval: str = "cosine"
    static_agg: str = "sum"
    use_augment: bool = True
    use_static: bool = True
    use_dynamic: bool = True

    def validate(self) -> Config:
        if self.hidden_dim <= 0 or self.hidden_dim % 2:
            raise DataError(f"hidden_dim must be positive and even, got {self.hidden_dim}")
        for name in ("word_dim", "type_dim", "edge_dim", "hops", "vocab_cap", "batch_size",
                     "epochs", "max_summary_len", "beam_width"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0.0:
            raise DataError(f"lr must be positive, got {self.lr}")
        if self.patience < 0:
            raise DataError(f"patience must be non-negative, got {self.patience}")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.sched_floor <= 1.0:
            raise DataError(f"sched_floor must be in [0, 1], got {self.sched_floor}")
        if self.retrieval not in ("cosine", "edit"):
            raise DataError(f"retrieval must be cosine or edit, got {self.retrieval!r}")
        if self.static_agg not in AGG_MODES:
            raise DataError(f"static_agg must be one of {AGG_MODES}, got {self.static_agg!r}")
        if self.vocab_cap <= 4:
            raise DataError("vocab_cap must leave room beyond the reserved tokens")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def sha256(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict) -> Config:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw).validate()


def _coerce(name: str, text: str, target_type: type) -> object:
    text = text.strip()
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if target_type is int:
            return int(text, 0)
        if target_type is float:
            return float(text)
        return text
    except ValueError:
        raise DataError(f"config key {name!r}: cannot parse {text!r} as {target_type.__name__}") from None


def load_config_file(path: str, base: Config | None = None) -> Config:
    """Apply key=value lines (# starts a comment) on top of base."""
    cfg = base or Config()
    types = {f.name: f.type for f in fields(Config)}
    py_types = {"int": int, "float": float, "str": str, "bool": bool}
    overrides: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise DataError(f"{path}:{lineno}: expected key=value, got {body!r}")
            key, _, value = body.partition("=")
            key = key.strip()
            if key not in types:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            overrides[key] = _coerce(key, value, py_types[str(types[key])])
    return replace(cfg, **overrides).validate()
