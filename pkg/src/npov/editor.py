"""Sequence editor: bi-LSTM encoder, attentional decoder with copy + coverage.

Pretrained as a denoising autoencoder (shuffle within a bounded window, drop
words) and fine-tuned with a loss that up-weights target tokens absent from
the source. Decoding is beam search over the extended vocabulary, so source
tokens outside the base vocabulary stay reachable through the copy path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine.layers import (
    Dense,
    Embedding,
    LSTMCell,
    collect_params,
    lstm_sequence,
    uniform_param,
)
from .engine.optim import Adam, clip_gradients
from .engine.tensor import (
    Tensor,
    add,
    backward,
    concat,
    dropout,
    gather_rows,
    log,
    matmul,
    minimum,
    mul,
    narrow,
    reshape,
    scatter_add_rows,
    sigmoid,
    softmax,
    tanh,
    tape,
    tsum,
)
from .vocab import EOS, PAD, SOS, UNK, Vocabulary, extend_with_oov

NEG = -1e9
LOG_FLOOR = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    k: int = 3
    p_drop: float = 0.25

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must be in [0, 1)")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.3
    coverage_weight: float = 1.0

    def __post_init__(self):
        if self.alpha < 1.0:
            raise ValueError("alpha must be at least 1")
        if self.coverage_weight < 0.0:
            raise ValueError("coverage_weight must be non-negative")


# -- noise model ------------------------------------------------------------


def shuffle_permutation(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Stable sort of positions by i + Uniform[0, k]; displacement <= k."""
    if k == 0:
        return np.arange(n)
    keys = np.arange(n) + rng.uniform(0.0, float(k), size=n)
    return np.argsort(keys, kind="stable")


def corrupt_tokens(tokens: list[str], cfg: NoiseConfig, rng: np.random.Generator):
    """Returns (corrupted tokens, permutation, keep mask over shuffled order).

    The permutation maps output position to original index. Drops are
    resampled until at least one token survives.
    """
    n = len(tokens)
    perm = shuffle_permutation(n, cfg.k, rng)
    shuffled = [tokens[j] for j in perm]
    while True:
        keep = rng.random(n) >= cfg.p_drop
        if keep.any():
            break
    out = [tok for tok, kept in zip(shuffled, keep) if kept]
    return out, perm, keep


def corrupt(tokens: list[str], cfg: NoiseConfig, rng: np.random.Generator) -> list[str]:
    return corrupt_tokens(tokens, cfg, rng)[0]


# -- loss weights -----------------------------------------------------------


def lambda_weights(src_norms: list[str], tgt_norms: list[str],
                   alpha: float) -> list[float]:
    """alpha for target tokens that never occur in the source, else 1."""
    src = set(src_norms)
    return [alpha if w not in src else 1.0 for w in tgt_norms]


def weighted_loss(src_norms: list[str], tgt_norms: list[str],
                  step_log_probs, coverage_penalties,
                  cfg: LossConfig) -> float:
    """Loss over precomputed per-step values: -sum(lambda * log p) + coverage."""
    if len(tgt_norms) != len(step_log_probs):
        raise ValueError("one log-probability per target token required")
    lam = lambda_weights(src_norms, tgt_norms, cfg.alpha)
    nll = -sum(w * lp for w, lp in zip(lam, step_log_probs))
    return nll + cfg.coverage_weight * sum(coverage_penalties)


# -- beam search ------------------------------------------------------------


@dataclass
class Hypothesis:
    ids: tuple[int, ...]
    logp: float
    state: object
    finished: bool = False
    finish_step: int | None = None


def beam_search(step_fn, init_state, *, start_id: int = SOS, eos_id: int = EOS,
                width: int = 4, max_len: int = 20):
    """Length-capped beam search over an opaque stepping function.

    step_fn(prev_id, state) -> (log-probability vector, new state). Finished
    hypotheses are frozen and compete on raw log-probability (no length
    normalization); final ties go to the earlier completion.
    """
    if width < 1:
        raise ValueError("beam width must be at least 1")
    beams = [Hypothesis(ids=(start_id,), logp=0.0, state=init_state)]
    for step in range(max_len):
        if all(b.finished for b in beams):
            break
        candidates = [b for b in beams if b.finished]
        for b in beams:
            if b.finished:
                continue
            logp_vec, new_state = step_fn(b.ids[-1], b.state)
            order = np.argsort(-logp_vec, kind="stable")[:width]
            for idx in order:
                idx = int(idx)
                done = idx == eos_id
                candidates.append(Hypothesis(
                    ids=b.ids + (idx,),
                    logp=b.logp + float(logp_vec[idx]),
                    state=new_state,
                    finished=done,
                    finish_step=step if done else None,
                ))
        candidates.sort(key=lambda h: (-h.logp, h.ids))
        beams = candidates[:width]
    finished = [b for b in beams if b.finished]
    pool = finished if finished else beams
    best = min(pool, key=lambda h: (
        -h.logp,
        h.finish_step if h.finish_step is not None else max_len,
        h.ids,
    ))
    ids = list(best.ids[1:])
    if ids and ids[-1] == eos_id:
        ids = ids[:-1]
    return ids, best.logp


# -- model ------------------------------------------------------------------


class Encoder:
    """Bi-directional LSTM; concatenated states projected back to h."""

    def __init__(self, rng, emb_dim: int, hidden: int):
        self.hidden = hidden
        self.fwd = LSTMCell(rng, emb_dim, hidden)
        self.bwd = LSTMCell(rng, emb_dim, hidden)
        self.proj = Dense(rng, 2 * hidden, hidden)
        self.init_h = Dense(rng, 2 * hidden, hidden)
        self.init_c = Dense(rng, 2 * hidden, hidden)

    def __call__(self, xs: list[Tensor], mask: np.ndarray | None):
        B = xs[0].shape[0]
        h0 = Tensor(np.zeros((B, self.hidden), np.float32))
        c0 = Tensor(np.zeros((B, self.hidden), np.float32))
        fwd_states = lstm_sequence(self.fwd, xs, mask, h0, c0)
        rev_mask = mask[:, ::-1].copy() if mask is not None else None
        bwd_states = lstm_sequence(self.bwd, list(reversed(xs)), rev_mask, h0, c0)
        bwd_states = list(reversed(bwd_states))
        states = [self.proj(concat([f, b], axis=-1))
                  for f, b in zip(fwd_states, bwd_states)]
        summary = concat([fwd_states[-1], bwd_states[0]], axis=-1)
        dec_h = tanh(self.init_h(summary))
        dec_c = tanh(self.init_c(summary))
        return states, dec_h, dec_c

    def params(self, prefix: str):
        out = []
        for name, sub in (("fwd", self.fwd), ("bwd", self.bwd),
                          ("proj", self.proj), ("init_h", self.init_h),
                          ("init_c", self.init_c)):
            out.extend(sub.params(f"{prefix}.{name}"))
        return out


class Decoder:
    """Attentional LSTM with a generate/copy gate and coverage tracking."""

    def __init__(self, rng, vocab_size: int, emb_dim: int, hidden: int):
        self.vocab_size = vocab_size
        self.hidden = hidden
        self.cell = LSTMCell(rng, emb_dim, hidden)
        self.w_att = uniform_param(rng, (hidden, hidden))
        self.combine = Dense(rng, 2 * hidden, hidden)
        self.out = Dense(rng, hidden, vocab_size)
        self.gate = Dense(rng, 2 * hidden + emb_dim, 1)

    def step(self, emb_t: Tensor, h: Tensor, c: Tensor, H: Tensor,
             enc_mask: np.ndarray, coverage: Tensor, src_ext: np.ndarray,
             ext_size: int):
        """One decode step over a (B, T, h) stack of encoder states.

        Returns (distribution over the extended vocabulary, new h, new c,
        attention, new coverage, per-example coverage penalty).
        """
        B, T = src_ext.shape
        h_new, c_new = self.cell.step(emb_t, h, c)
        q = matmul(h_new, self.w_att)
        scores = reshape(matmul(H, reshape(q, (B, self.hidden, 1))), (B, T))
        bias = ((1.0 - enc_mask) * NEG).astype(np.float32)
        attn = softmax(add(scores, Tensor(bias)))
        ctx = reshape(matmul(reshape(attn, (B, 1, T)), H), (B, self.hidden))
        combined = tanh(self.combine(concat([ctx, h_new], axis=-1)))
        p_vocab = softmax(self.out(combined))
        p_gen = sigmoid(self.gate(concat([ctx, h_new, emb_t], axis=-1)))
        gen_part = mul(p_vocab, p_gen)
        if ext_size > self.vocab_size:
            pad = Tensor(np.zeros((B, ext_size - self.vocab_size), np.float32))
            gen_part = concat([gen_part, pad], axis=-1)
        copy_mass = mul(attn, add(mul(p_gen, Tensor(np.float32(-1.0))),
                                  Tensor(np.float32(1.0))))
        base = Tensor(np.zeros((B, ext_size), np.float32))
        final = add(gen_part, scatter_add_rows(base, src_ext, copy_mass))
        penalty = tsum(minimum(attn, coverage), axis=-1)
        new_cov = add(coverage, attn)
        return final, h_new, c_new, attn, new_cov, penalty

    def params(self, prefix: str):
        out = self.cell.params(f"{prefix}.cell")
        out.append((f"{prefix}.w_att", self.w_att))
        out += self.combine.params(f"{prefix}.combine")
        out += self.out.params(f"{prefix}.out")
        out += self.gate.params(f"{prefix}.gate")
        return out


class Editor:
    def __init__(self, rng, vocab: Vocabulary, emb_dim: int = 64,
                 hidden: int = 64):
        self.vocab = vocab
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.embedding = Embedding(rng, len(vocab), emb_dim)
        self.encoder = Encoder(rng, emb_dim, hidden)
        self.decoder = Decoder(rng, len(vocab), emb_dim, hidden)

    def params(self, prefix: str = "ed"):
        out = self.embedding.params(f"{prefix}.emb")
        out += self.encoder.params(f"{prefix}.enc")
        out += self.decoder.params(f"{prefix}.dec")
        return out

    def param_dict(self, prefix: str = "ed"):
        return collect_params(self.params(prefix))

    # -- batch preparation --------------------------------------------------

    def prepare_batch(self, src_lists: list[list[str]]):
        """Pad a batch of source token lists; track copy ids per example."""
        B = len(src_lists)
        T = max(len(s) for s in src_lists)
        ids = np.full((B, T), PAD, dtype=np.int64)
        ext = np.full((B, T), PAD, dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float32)
        oovs: list[list[str]] = []
        for r, toks in enumerate(src_lists):
            row_ids = self.vocab.encode(toks)
            row_ext, oov = extend_with_oov(self.vocab, toks)
            ids[r, : len(toks)] = row_ids
            ext[r, : len(toks)] = row_ext
            mask[r, : len(toks)] = 1.0
            oovs.append(oov)
        ext_size = len(self.vocab) + max((len(o) for o in oovs), default=0)
        return ids, ext, mask, oovs, ext_size

    def embed_steps(self, ids: np.ndarray, train_rng=None,
                    drop: float = 0.0) -> list[Tensor]:
        B, T = ids.shape
        table = self.embedding(ids)
        xs = []
        for t in range(T):
            x = reshape(narrow(table, 1, t, 1), (B, self.emb_dim))
            if train_rng is not None and drop > 0.0:
                x = dropout(x, drop, train_rng)
            xs.append(x)
        return xs

    def encode_states(self, ids: np.ndarray, mask: np.ndarray,
                      train_rng=None, drop: float = 0.0):
        """(B, T, h) encoder stack plus decoder initial states."""
        xs = self.embed_steps(ids, train_rng, drop)
        states, dec_h, dec_c = self.encoder(xs, mask)
        B = ids.shape[0]
        stacked = concat([reshape(s, (B, 1, self.hidden)) for s in states], axis=1)
        return stacked, dec_h, dec_c

    # -- training -----------------------------------------------------------

    def target_ids(self, tgt_lists: list[list[str]], oovs: list[list[str]]):
        """Teacher inputs (base vocab) and targets (extended ids, EOS-capped)."""
        B = len(tgt_lists)
        T = max(len(t) for t in tgt_lists) + 1
        inputs = np.full((B, T), PAD, dtype=np.int64)
        targets = np.full((B, T), PAD, dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float32)
        for r, toks in enumerate(tgt_lists):
            inputs[r, 0] = SOS
            inputs[r, 1 : len(toks) + 1] = self.vocab.encode(toks)
            for col, tok in enumerate(toks):
                idx = self.vocab.id_of(tok)
                if idx == UNK and tok in oovs[r]:
                    idx = len(self.vocab) + oovs[r].index(tok)
                targets[r, col] = idx
            targets[r, len(toks)] = EOS
            mask[r, : len(toks) + 1] = 1.0
        return inputs, targets, mask

    def decode_loss(self, stacked: Tensor, enc_mask: np.ndarray, dec_h: Tensor,
                    dec_c: Tensor, ext: np.ndarray, ext_size: int,
                    tgt_lists: list[list[str]], src_lists: list[list[str]],
                    cfg: LossConfig, oovs: list[list[str]],
                    train_rng=None, drop: float = 0.0) -> Tensor:
        """Mean over the batch of per-example weighted NLL + coverage."""
        B, T = ext.shape
        inputs, targets, tgt_mask = self.target_ids(tgt_lists, oovs)
        steps = inputs.shape[1]
        lam = np.ones((B, steps), dtype=np.float32)
        for r in range(B):
            w = lambda_weights(src_lists[r], tgt_lists[r], cfg.alpha)
            lam[r, : len(w)] = w  # trailing EOS keeps weight 1
        xs = self.embed_steps(inputs, train_rng, drop)
        coverage = Tensor(np.zeros((B, T), np.float32))
        h, c = dec_h, dec_c
        total = Tensor(np.float32(0.0))
        for t in range(steps):
            dist, h, c, _, coverage, penalty = self.decoder.step(
                xs[t], h, c, stacked, enc_mask, coverage, ext, ext_size)
            picked = gather_rows(dist, targets[:, t])
            step_w = Tensor(lam[:, t] * tgt_mask[:, t])
            nll = mul(log(picked, floor=LOG_FLOOR), mul(step_w, Tensor(np.float32(-1.0))))
            cov_term = mul(penalty, Tensor(tgt_mask[:, t] * np.float32(cfg.coverage_weight)))
            total = add(total, tsum(add(nll, cov_term)))
        return mul(total, Tensor(np.float32(1.0 / B)))

    def batch_loss(self, src_lists, tgt_lists, cfg: LossConfig,
                   train_rng=None, drop: float = 0.0) -> Tensor:
        ids, ext, mask, oovs, ext_size = self.prepare_batch(src_lists)
        stacked, dec_h, dec_c = self.encode_states(ids, mask, train_rng, drop)
        return self.decode_loss(stacked, mask, dec_h, dec_c, ext, ext_size,
                                tgt_lists, src_lists, cfg, oovs,
                                train_rng, drop)

    # -- inference ----------------------------------------------------------

    def step_fn(self, stacked: Tensor, enc_mask: np.ndarray, ext: np.ndarray,
                ext_size: int):
        """Wraps the decoder as a beam-search stepping function (batch of 1)."""
        T = ext.shape[1]

        def fn(prev_id: int, state):
            h, c, coverage = state
            emb_id = prev_id if prev_id < len(self.vocab) else UNK
            xs = self.embed_steps(np.array([[emb_id]], dtype=np.int64))
            dist, h2, c2, _, cov2, _ = self.decoder.step(
                xs[0], h, c, stacked, enc_mask, coverage, ext, ext_size)
            logp = np.log(np.maximum(dist.data[0], LOG_FLOOR))
            return logp, (h2, c2, cov2)

        return fn

    def init_decode_state(self, dec_h: Tensor, dec_c: Tensor, T: int):
        return (dec_h, dec_c, Tensor(np.zeros((1, T), np.float32)))

    def neutralize_tokens(self, src_norms: list[str], *, width: int = 4,
                          max_len: int | None = None):
        """Decode one source token list to output tokens (copy ids resolved)."""
        ids, ext, mask, oovs, ext_size = self.prepare_batch([src_norms])
        stacked, dec_h, dec_c = self.encode_states(ids, mask)
        if max_len is None:
            max_len = len(src_norms) + 10
        fn = self.step_fn(stacked, mask, ext, ext_size)
        out_ids, logp = beam_search(fn, self.init_decode_state(dec_h, dec_c, ext.shape[1]),
                                    width=width, max_len=max_len)
        tokens = []
        for idx in out_ids:
            if idx < len(self.vocab):
                tokens.append(self.vocab.token_of(idx))
            else:
                tokens.append(oovs[0][idx - len(self.vocab)])
        return tokens, logp


def pretrain_autoencoder(editor: Editor, token_lists: list[list[str]], *,
                         steps: int = 500, batch_size: int = 16,
                         noise: NoiseConfig = NoiseConfig(),
                         cfg: LossConfig = LossConfig(alpha=1.0),
                         lr: float = 1e-3, seed: int = 0,
                         drop: float = 0.0) -> list[float]:
    """Reconstruct originals from corrupted inputs; returns per-step losses."""
    if not token_lists:
        raise ValueError("no sentences to pretrain on")
    rng = np.random.default_rng(seed)
    params = [t for _, t in editor.params()]
    opt = Adam(params, lr=lr)
    losses: list[float] = []
    for _ in range(steps):
        idx = rng.integers(0, len(token_lists), size=batch_size)
        tgt = [token_lists[i] for i in idx]
        src = [corrupt(t, noise, rng) for t in tgt]
        with tape():
            loss = editor.batch_loss(src, tgt, cfg,
                                     train_rng=rng if drop > 0 else None,
                                     drop=drop)
            backward(loss)
        clip_gradients(params, 3.0)
        opt.step()
        opt.zero_grad()
        losses.append(loss.item())
    return losses
