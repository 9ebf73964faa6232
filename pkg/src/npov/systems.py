"""End-to-end neutralizers.

Two assemblies share the editor's decoder: a two-stage system whose detector
probabilities gate the encoder states through a learned join vector, and a
single-stage system whose contextual encoder is bridged straight into the
decoder. Joint fine-tuning, the frozen-detector concatenation ablation, and
user control vectors live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .editor import (
    Editor,
    LossConfig,
    NoiseConfig,
    beam_search,
    corrupt,
)
from .engine import (
    Tensor,
    add,
    backward,
    concat,
    matmul,
    mul,
    no_tape,
    reshape,
    sigmoid,
    swap_last2,
    tape,
    tsum,
)
from .engine.contextual import ContextualEncoder
from .engine.layers import Dense, collect_params, uniform_param
from .engine.optim import Adam, clip_gradients
from .evaluation import corpus_bleu_tokens, exact_match_accuracy, sentence_of
from .vocab import EOS, PAD, SOS, UNK, Vocabulary

MERGE_RULES = ("replace", "max")
MODES = ("modular", "concurrent")
JOIN_MODES = ("gate", "concat")


@dataclass(frozen=True)
class ControlVector:
    """User-supplied per-token probabilities overriding the detector."""

    values: tuple[float, ...]
    merge: str = "replace"

    def __post_init__(self):
        if self.merge not in MERGE_RULES:
            raise ValueError(f"merge must be one of {MERGE_RULES}, got {self.merge!r}")
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"control entries must lie in [0, 1], got {v}")

    def apply(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float32)
        if len(self.values) != p.shape[-1]:
            raise ValueError(
                f"control length {len(self.values)} does not match "
                f"token count {p.shape[-1]}")
        v = np.asarray(self.values, dtype=np.float32)
        if self.merge == "replace":
            return v
        return np.maximum(p, v)


@dataclass(frozen=True)
class SystemConfig:
    mode: str = "modular"
    join_mode: str = "gate"
    alpha: float = 1.3
    beam_width: int = 4
    merge: str = "replace"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.join_mode not in JOIN_MODES:
            raise ValueError(
                f"join_mode must be one of {JOIN_MODES}, got {self.join_mode!r}")
        if self.merge not in MERGE_RULES:
            raise ValueError(f"merge must be one of {MERGE_RULES}, got {self.merge!r}")
        if self.join_mode == "concat" and self.mode != "modular":
            raise ValueError("concat join is only valid in modular mode")
        if self.beam_width < 1:
            raise ValueError("beam width must be at least 1")


@dataclass
class NeutralizeResult:
    output_tokens: list[str]
    logp: float
    p_used: np.ndarray | None = None
    attention: list[np.ndarray] | None = None


def join_states(stacked: Tensor, p, v: Tensor) -> Tensor:
    """h'_i = h_i + p_i * v, the same v at every timestep."""
    B, T, H = stacked.shape
    pt = p if isinstance(p, Tensor) else Tensor(np.asarray(p, dtype=np.float32))
    if pt.shape != (B, T):
        raise ValueError(f"probabilities shaped {pt.shape}, states need ({B}, {T})")
    bump = mul(reshape(pt, (B, T, 1)), reshape(v, (1, 1, H)))
    return add(stacked, bump)


def _resolve_tokens(vocab: Vocabulary, out_ids: list[int], oov: list[str]):
    tokens = []
    for idx in out_ids:
        if idx < len(vocab):
            tokens.append(vocab.token_of(idx))
        else:
            tokens.append(oov[idx - len(vocab)])
    return tokens


def _attention_trace(editor: Editor, stacked, enc_mask, ext, ext_size,
                     dec_h, dec_c, out_ids):
    """Replay the winning sequence teacher-forced, collecting attention maps."""
    T = ext.shape[1]
    coverage = Tensor(np.zeros((1, T), np.float32))
    h, c = dec_h, dec_c
    prev = SOS
    trace = []
    for target in list(out_ids) + [EOS]:
        emb_id = prev if prev < len(editor.vocab) else UNK
        xs = editor.embed_steps(np.array([[emb_id]], dtype=np.int64))
        _, h, c, attn, coverage, _ = editor.decoder.step(
            xs[0], h, c, stacked, enc_mask, coverage, ext, ext_size)
        trace.append(attn.data[0].copy())
        prev = target
    return trace


class ModularSystem:
    """Detector output gates the editor's encoder states before decoding."""

    mode = "modular"

    def __init__(self, detector, editor: Editor, join_mode: str = "gate",
                 rng: np.random.Generator | None = None):
        if join_mode not in JOIN_MODES:
            raise ValueError(
                f"join_mode must be one of {JOIN_MODES}, got {join_mode!r}")
        if len(detector.vocab) != len(editor.vocab):
            raise ValueError("detector and editor must share one vocabulary")
        self.detector = detector
        self.editor = editor
        self.join_mode = join_mode
        # zero start: joint training begins exactly at the pretrained editor
        self.v = Tensor(np.zeros(editor.hidden, np.float32), requires_grad=True)
        self.bridge = None
        if join_mode == "concat":
            if rng is None:
                raise ValueError("concat join needs an rng for its projection")
            self.bridge = Dense(rng, editor.hidden + detector.ctx_dim,
                                editor.hidden)

    @property
    def vocab(self) -> Vocabulary:
        return self.editor.vocab

    def params(self, prefix: str = "sys"):
        """Everything the checkpoint must carry, trainable or not."""
        out = self.detector.params(f"{prefix}.det")
        out += self.editor.params(f"{prefix}.ed")
        out += [(f"{prefix}.join.v", self.v)]
        if self.bridge is not None:
            out += self.bridge.params(f"{prefix}.bridge")
        return out

    def trainable_params(self, prefix: str = "sys"):
        out = self.editor.params(f"{prefix}.ed")
        if self.join_mode == "gate":
            out += self.detector.params(f"{prefix}.det")
            out += [(f"{prefix}.join.v", self.v)]
        else:
            out += self.bridge.params(f"{prefix}.bridge")
        return out

    def param_dict(self, prefix: str = "sys"):
        return collect_params(self.params(prefix))

    def _joined_states(self, srcs, cats, ids, mask, stacked, forced_p=None):
        sents = [sentence_of(s) for s in srcs]
        if self.join_mode == "gate":
            if forced_p is not None:
                # constant gate values, broadcast against the source mask;
                # no gradient reaches the detector on these batches
                return join_states(stacked, Tensor(forced_p * mask), self.v)
            z, _ = self.detector.logits(sents, cats)
            p = mul(sigmoid(z), Tensor(mask))
            return join_states(stacked, p, self.v)
        if forced_p is not None:
            raise ValueError("forced gate values require gate join")
        with no_tape():  # frozen detector: its states enter as constants
            body, _ = self.detector.context_states(sents, cats)
        return self.bridge(concat([stacked, Tensor(body.data)], axis=-1))

    def training_loss(self, srcs, tgts, cats, cfg: LossConfig,
                      train_rng=None, drop: float = 0.0,
                      forced_p=None) -> Tensor:
        ids, ext, mask, oovs, ext_size = self.editor.prepare_batch(srcs)
        stacked, dec_h, dec_c = self.editor.encode_states(ids, mask,
                                                          train_rng, drop)
        joined = self._joined_states(srcs, cats, ids, mask, stacked, forced_p)
        return self.editor.decode_loss(joined, mask, dec_h, dec_c, ext,
                                       ext_size, tgts, srcs, cfg, oovs,
                                       train_rng, drop)

    def neutralize(self, tokens: list[str], category: str = "unknown", *,
                   control: ControlVector | None = None, width: int = 4,
                   max_len: int | None = None,
                   with_attention: bool = False) -> NeutralizeResult:
        with no_tape():
            ids, ext, mask, oovs, ext_size = self.editor.prepare_batch([tokens])
            stacked, dec_h, dec_c = self.editor.encode_states(ids, mask)
            sent = sentence_of(tokens)
            p_det = self.detector.detect(sent, category)
            p_used = control.apply(p_det) if control is not None else p_det
            if self.join_mode == "gate":
                joined = join_states(stacked, p_used[None, :], self.v)
            else:
                body, _ = self.detector.context_states([sent], [category])
                joined = self.bridge(concat([stacked, body], axis=-1))
            if max_len is None:
                max_len = len(tokens) + 10
            fn = self.editor.step_fn(joined, mask, ext, ext_size)
            state0 = self.editor.init_decode_state(dec_h, dec_c, ext.shape[1])
            out_ids, logp = beam_search(fn, state0, width=width, max_len=max_len)
            trace = None
            if with_attention:
                trace = _attention_trace(self.editor, joined, mask, ext,
                                         ext_size, dec_h, dec_c, out_ids)
        return NeutralizeResult(
            output_tokens=_resolve_tokens(self.vocab, out_ids, oovs[0]),
            logp=logp, p_used=p_used, attention=trace)


class ConcurrentSystem:
    """Contextual encoder bridged into the decoder; category token attendable."""

    mode = "concurrent"

    def __init__(self, rng, vocab: Vocabulary, *, ctx_dim: int = 64,
                 emb_dim: int = 64, hidden: int = 64, n_layers: int = 2,
                 max_len: int = 128, use_positions: bool = True):
        self.vocab = vocab
        self.ctx_dim = ctx_dim
        self.hidden = hidden
        self.encoder = ContextualEncoder(rng, len(vocab), ctx_dim,
                                         n_layers=n_layers, max_len=max_len,
                                         use_positions=use_positions)
        # only the embedding and decoder halves of the editor are used
        self.editor = Editor(rng, vocab, emb_dim=emb_dim, hidden=hidden)
        self.w_h = uniform_param(rng, (ctx_dim, hidden))
        self.w_c0 = uniform_param(rng, (ctx_dim, hidden))
        self.w_h0 = uniform_param(rng, (ctx_dim, hidden))

    def params(self, prefix: str = "sys"):
        out = self.encoder.params(f"{prefix}.ctx")
        out += self.editor.embedding.params(f"{prefix}.ed.emb")
        out += self.editor.decoder.params(f"{prefix}.ed.dec")
        out += [(f"{prefix}.bridge.w_h", self.w_h),
                (f"{prefix}.bridge.w_c0", self.w_c0),
                (f"{prefix}.bridge.w_h0", self.w_h0)]
        return out

    trainable_params = params

    def param_dict(self, prefix: str = "sys"):
        return collect_params(self.params(prefix))

    def bridge_states(self, srcs, cats):
        """Contextual encodings mapped into decoder space.

        Returns (stacked, mask, dec_h, dec_c, ext, ext_size, oovs) where the
        time axis is n+1: the category token stays attendable at position 0.
        """
        B = len(srcs)
        n = max(len(s) for s in srcs)
        T = n + 1
        ids = np.full((B, T), PAD, dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float32)
        for r, (toks, cat) in enumerate(zip(srcs, cats)):
            ids[r, 0] = self.vocab.category_id(cat)
            ids[r, 1 : len(toks) + 1] = self.vocab.encode(toks)
            mask[r, : len(toks) + 1] = 1.0
        bstates = self.encoder.encode(ids, mask)
        flat = reshape(bstates, (B * T, self.ctx_dim))
        stacked = reshape(matmul(flat, self.w_h), (B, T, self.hidden))
        # initial states from the mean over real token encodings
        pool = mask.copy()
        pool[:, 0] = 0.0
        pool /= pool.sum(axis=1, keepdims=True)
        weighted = mul(bstates, Tensor(pool[:, :, None].astype(np.float32)))
        pooled = tsum(swap_last2(weighted), axis=-1)
        dec_h = matmul(pooled, self.w_h0)
        dec_c = matmul(pooled, self.w_c0)
        _, ext_src, _, oovs, ext_size = self.editor.prepare_batch(srcs)
        ext = np.full((B, T), PAD, dtype=np.int64)
        ext[:, 0] = ids[:, 0]
        ext[:, 1 : ext_src.shape[1] + 1] = ext_src
        return stacked, mask, dec_h, dec_c, ext, ext_size, oovs

    def training_loss(self, srcs, tgts, cats, cfg: LossConfig,
                      train_rng=None, drop: float = 0.0) -> Tensor:
        stacked, mask, dec_h, dec_c, ext, ext_size, oovs = \
            self.bridge_states(srcs, cats)
        return self.editor.decode_loss(stacked, mask, dec_h, dec_c, ext,
                                       ext_size, tgts, srcs, cfg, oovs,
                                       train_rng, drop)

    def neutralize(self, tokens: list[str], category: str = "unknown", *,
                   width: int = 4, max_len: int | None = None,
                   with_attention: bool = False,
                   control=None) -> NeutralizeResult:
        if control is not None:
            raise ValueError("control vectors only apply to the modular system")
        with no_tape():
            stacked, mask, dec_h, dec_c, ext, ext_size, oovs = \
                self.bridge_states([tokens], [category])
            if max_len is None:
                max_len = len(tokens) + 10
            fn = self.editor.step_fn(stacked, mask, ext, ext_size)
            state0 = self.editor.init_decode_state(dec_h, dec_c, ext.shape[1])
            out_ids, logp = beam_search(fn, state0, width=width, max_len=max_len)
            trace = None
            if with_attention:
                trace = _attention_trace(self.editor, stacked, mask, ext,
                                         ext_size, dec_h, dec_c, out_ids)
        return NeutralizeResult(
            output_tokens=_resolve_tokens(self.vocab, out_ids, oovs[0]),
            logp=logp, attention=trace)


def pretrain_concurrent(system: ConcurrentSystem, token_lists, *,
                        steps: int = 500, batch_size: int = 16,
                        noise: NoiseConfig = NoiseConfig(),
                        cfg: LossConfig = LossConfig(alpha=1.0),
                        lr: float = 1e-3, seed: int = 0) -> list[float]:
    """Denoising reconstruction through the bridged contextual encoder."""
    if not token_lists:
        raise ValueError("no sentences to pretrain on")
    rng = np.random.default_rng(seed)
    params = [t for _, t in system.trainable_params()]
    opt = Adam(params, lr=lr)
    losses: list[float] = []
    for _ in range(steps):
        idx = rng.integers(0, len(token_lists), size=batch_size)
        tgt = [token_lists[i] for i in idx]
        src = [corrupt(t, noise, rng) for t in tgt]
        cats = ["unknown"] * len(tgt)
        with tape():
            loss = system.training_loss(src, tgt, cats, cfg)
            backward(loss)
        clip_gradients(params, 3.0)
        opt.step()
        opt.zero_grad()
        losses.append(loss.item())
    return losses


def fine_tune(system, pairs, *, steps: int = 2000, batch_size: int = 16,
              lr: float = 5e-5, clip_norm: float = 3.0, drop: float = 0.2,
              cfg: LossConfig = LossConfig(), seed: int = 0,
              copy_mix: float = 0.0, grad_probe=None) -> list[float]:
    """Joint training over (src tokens, tgt tokens, category) triples.

    copy_mix, when positive, trains that fraction of steps on copy targets
    with the gate forced to zero. Without it the editor can learn to rewrite
    from source tokens alone and ignore the gate; the mixed steps make the
    gate bump the signal that triggers editing. Gate-joined systems only.

    grad_probe, if given, is called as grad_probe(step, named_params) right
    after backward, before clipping.
    """
    if not pairs:
        raise ValueError("no training pairs")
    if copy_mix and getattr(system, "join_mode", None) != "gate":
        raise ValueError("copy_mix requires a gate-joined system")
    rng = np.random.default_rng(seed)
    named = system.trainable_params()
    params = [t for _, t in named]
    opt = Adam(params, lr=lr)
    losses: list[float] = []
    for step in range(steps):
        idx = rng.integers(0, len(pairs), size=batch_size)
        srcs = [list(pairs[i][0]) for i in idx]
        tgts = [list(pairs[i][1]) for i in idx]
        cats = [pairs[i][2] for i in idx]
        step_kwargs = {}
        if copy_mix and rng.random() < copy_mix:
            tgts = [list(s) for s in srcs]
            step_kwargs["forced_p"] = 0.0
        with tape():
            loss = system.training_loss(srcs, tgts, cats, cfg,
                                        train_rng=rng, drop=drop,
                                        **step_kwargs)
            backward(loss)
        if grad_probe is not None:
            grad_probe(step, system.params())
        clip_gradients(params, clip_norm)
        opt.step()
        opt.zero_grad()
        losses.append(loss.item())
    return losses


def ablation_concat(detector_factory, editor_factory, pairs, eval_pairs, *,
                    steps: int = 500, seed: int = 0,
                    cfg: LossConfig = LossConfig(), lr: float = 5e-5,
                    batch_size: int = 16, drop: float = 0.2,
                    width: int = 4):
    """Train gate and frozen-detector concat variants on identical data.

    Factories must produce independent, identically initialized components so
    the gate run cannot leak parameter updates into the concat run. Returns
    (concat system, report) where the report holds both modes' scores.
    """
    report: dict[str, dict] = {}
    trained: dict[str, ModularSystem] = {}
    for join_mode in ("gate", "concat"):
        system = ModularSystem(detector_factory(), editor_factory(),
                               join_mode=join_mode,
                               rng=np.random.default_rng(seed + 17))
        losses = fine_tune(system, pairs, steps=steps, batch_size=batch_size,
                           lr=lr, drop=drop, cfg=cfg, seed=seed)
        outputs, references = [], []
        for src, tgt, category in eval_pairs:
            result = system.neutralize(list(src), category, width=width)
            outputs.append(result.output_tokens)
            references.append(list(tgt))
        report[join_mode] = {
            "bleu": corpus_bleu_tokens(outputs, references),
            "accuracy": exact_match_accuracy(outputs, references),
            "final_loss": losses[-1],
        }
        trained[join_mode] = system
    return trained["concat"], report
