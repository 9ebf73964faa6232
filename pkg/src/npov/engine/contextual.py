"""Self-attentive contextual encoder with a masked-token pretraining loop."""

from __future__ import annotations

import numpy as np

from .layers import Dense, Embedding, LayerNorm, collect_params, uniform_param
from .optim import Adam, clip_gradients
from .tensor import (
    Tensor,
    add,
    gather_rows,
    log,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    swap_last2,
    tape,
    backward,
)

NEG_INF = -1e9


class AttentionBlock:
    def __init__(self, rng, dim: int, ff_dim: int, dtype=np.float32):
        self.dim = dim
        self.q = Dense(rng, dim, dim, dtype)
        self.k = Dense(rng, dim, dim, dtype)
        self.v = Dense(rng, dim, dim, dtype)
        self.out = Dense(rng, dim, dim, dtype)
        self.norm1 = LayerNorm(dim, dtype)
        self.norm2 = LayerNorm(dim, dtype)
        self.ff1 = Dense(rng, dim, ff_dim, dtype)
        self.ff2 = Dense(rng, ff_dim, dim, dtype)

    def __call__(self, x: Tensor, key_bias: np.ndarray | None) -> Tensor:
        q, k, v = self.q(x), self.k(x), self.v(x)
        scores = mul(matmul(q, swap_last2(k)), Tensor(np.asarray(1.0 / np.sqrt(self.dim), dtype=x.dtype)))
        if key_bias is not None:
            scores = add(scores, Tensor(key_bias))
        attn = softmax(scores)
        ctx = self.out(matmul(attn, v))
        x = self.norm1(add(x, ctx))
        ff = self.ff2(relu(self.ff1(x)))
        return self.norm2(add(x, ff))

    def params(self, prefix: str):
        out = []
        for name, sub in (("q", self.q), ("k", self.k), ("v", self.v), ("out", self.out),
                          ("norm1", self.norm1), ("norm2", self.norm2),
                          ("ff1", self.ff1), ("ff2", self.ff2)):
            out.extend(sub.params(f"{prefix}.{name}"))
        return out


class ContextualEncoder:
    """Token + learned-position embeddings through stacked self-attention."""

    def __init__(self, rng, vocab_size: int, dim: int, n_layers: int = 2,
                 max_len: int = 256, use_positions: bool = True, dtype=np.float32):
        self.vocab_size = vocab_size
        self.dim = dim
        self.max_len = max_len
        self.use_positions = use_positions
        self.tok = Embedding(rng, vocab_size, dim, dtype)
        self.pos = uniform_param(rng, (max_len, dim), dtype)
        self.blocks = [AttentionBlock(rng, dim, 2 * dim, dtype) for _ in range(n_layers)]
        self.lm = Dense(rng, dim, vocab_size, dtype)

    def encode(self, ids: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
        """ids (B, T) -> contextual states (B, T, dim); mask 1=real, 0=pad."""
        B, T = ids.shape
        if T > self.max_len:
            raise ValueError(f"sequence length {T} exceeds max_len {self.max_len}")
        x = self.tok(ids)
        if self.use_positions:
            pos_ids = np.broadcast_to(np.arange(T), (B, T))
            from .tensor import embedding_lookup
            x = add(x, embedding_lookup(self.pos, pos_ids))
        key_bias = None
        if mask is not None:
            key_bias = ((1.0 - mask[:, None, :]) * NEG_INF).astype(x.dtype)
        for block in self.blocks:
            x = block(x, key_bias)
        return x

    def lm_logits(self, states: Tensor) -> Tensor:
        return self.lm(states)

    def params(self, prefix: str = "ctx"):
        out = [(f"{prefix}.tok.table", self.tok.table)]
        if self.use_positions:
            out.append((f"{prefix}.pos", self.pos))
        for i, block in enumerate(self.blocks):
            out.extend(block.params(f"{prefix}.block{i}"))
        out.extend(self.lm.params(f"{prefix}.lm"))
        return out

    def param_dict(self, prefix: str = "ctx"):
        return collect_params(self.params(prefix))


def masked_lm_pretrain(encoder: ContextualEncoder, sequences: list[list[int]],
                       mask_id: int, pad_id: int, *, mask_prob: float = 0.15,
                       steps: int = 200, batch_size: int = 16, lr: float = 1e-3,
                       seed: int = 0, maskable=None) -> list[float]:
    """Train the encoder to restore tokens hidden behind mask_id.

    Loss is averaged over hidden positions only. A sampled batch where no
    position was hidden is resampled rather than skipped.
    """
    if mask_prob <= 0.0:
        raise ValueError("mask_prob must be positive")
    if not sequences:
        raise ValueError("no sequences to pretrain on")
    rng = np.random.default_rng(seed)
    params = [t for _, t in encoder.params()]
    opt = Adam(params, lr=lr)
    losses: list[float] = []
    for _ in range(steps):
        for _attempt in range(100):
            idx = rng.integers(0, len(sequences), size=batch_size)
            batch = [sequences[i] for i in idx]
            T = max(len(s) for s in batch)
            ids = np.full((batch_size, T), pad_id, dtype=np.int64)
            pad_mask = np.zeros((batch_size, T), dtype=np.float32)
            for r, s in enumerate(batch):
                ids[r, : len(s)] = s
                pad_mask[r, : len(s)] = 1.0
            can_mask = pad_mask.astype(bool)
            if maskable is not None:
                for r, s in enumerate(batch):
                    for c, tok_id in enumerate(s):
                        if not maskable(tok_id):
                            can_mask[r, c] = False
            hide = (rng.random((batch_size, T)) < mask_prob) & can_mask
            if hide.any():
                break
        else:
            raise RuntimeError("could not sample a batch with any masked position")
        targets = ids.copy()
        corrupted = ids.copy()
        corrupted[hide] = mask_id
        with tape():
            states = encoder.encode(corrupted, pad_mask)
            logits = encoder.lm_logits(states)
            flat = reshape(logits, (batch_size * T, encoder.vocab_size))
            probs = softmax(flat)
            nll_all = mul(log(gather_rows(probs, targets.reshape(-1)), floor=1e-9),
                          Tensor(np.asarray(-1.0, dtype=np.float32)))
            w = hide.reshape(-1).astype(np.float32)
            loss = mul(matmul(reshape(nll_all, (1, batch_size * T)),
                              Tensor(w.reshape(-1, 1))),
                       Tensor(np.asarray(1.0 / w.sum(), dtype=np.float32)))
            loss = reshape(loss, ())
            backward(loss)
        clip_gradients(params, 3.0)
        opt.step()
        opt.zero_grad()
        losses.append(loss.item())
    return losses
