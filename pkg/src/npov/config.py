"""One flat record of every run knob, embedded into checkpoints."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .systems import JOIN_MODES, MERGE_RULES, MODES


@dataclass(frozen=True)
class RunConfig:
    # model dimensions
    hidden: int = 64
    ctx_dim: int = 64
    emb_dim: int = 64
    feat_hidden: int = 64
    n_layers: int = 2
    max_len: int = 128
    vocab_cap: int = 5000
    # optimization
    lr_pretrain: float = 1e-3
    lr_finetune: float = 5e-5
    batch_size: int = 16
    clip_norm: float = 3.0
    dropout: float = 0.2
    detector_epochs: int = 4
    pretrain_steps: int = 500
    finetune_steps: int = 2000
    # loss
    alpha: float = 1.3
    coverage_weight: float = 1.0
    # corruption
    shuffle_k: int = 3
    word_drop: float = 0.25
    # assembly and decoding
    mode: str = "modular"
    join_mode: str = "gate"
    merge: str = "replace"
    beam_width: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.join_mode not in JOIN_MODES:
            raise ValueError(
                f"join_mode must be one of {JOIN_MODES}, got {self.join_mode!r}")
        if self.merge not in MERGE_RULES:
            raise ValueError(
                f"merge must be one of {MERGE_RULES}, got {self.merge!r}")
        if self.join_mode == "concat" and self.mode != "modular":
            raise ValueError("concat join is only valid in modular mode")
        if self.alpha < 1.0:
            raise ValueError("alpha must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 <= self.word_drop < 1.0:
            raise ValueError("word_drop must lie in [0, 1)")
        if self.shuffle_k < 0:
            raise ValueError("shuffle_k must be non-negative")
        if self.beam_width < 1:
            raise ValueError("beam_width must be at least 1")
        for name in ("hidden", "ctx_dim", "emb_dim", "feat_hidden", "n_layers",
                     "max_len", "vocab_cap", "batch_size", "detector_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**data)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)
