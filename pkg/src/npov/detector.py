"""Per-token subjectivity scoring from contextual states plus lexicon features.

The score for token i is sigmoid(b_i W_b + e_i W_e + bias) where b_i is the
contextual state and e_i = relu(f_i W_in) embeds binary lexicon/position
features. A category token is prepended before encoding and excluded from the
returned probabilities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .engine.contextual import ContextualEncoder
from .engine.layers import Dense, collect_params
from .engine.optim import Adam, clip_gradients
from .engine.tensor import (
    Tensor,
    add,
    backward,
    log,
    mul,
    narrow,
    relu,
    reshape,
    sigmoid,
    sub,
    tape,
    tsum,
)
from .text import Sentence
from .vocab import PAD, Vocabulary

PROB_CLIP = 1e-7


@dataclass(frozen=True)
class Lexicon:
    name: str
    terms: frozenset[str]


def load_lexicons(path) -> list[Lexicon]:
    """One lexicon per file, named by stem, ordered by name."""
    path = Path(path)
    files = sorted((p for p in path.iterdir() if p.is_file()),
                   key=lambda p: p.name)
    out: list[Lexicon] = []
    seen: set[str] = set()
    for p in files:
        stem = p.stem
        if stem in seen:
            raise ValueError(f"duplicate lexicon name {stem!r}")
        seen.add(stem)
        terms = frozenset(
            w.strip() for w in p.read_text("utf-8").splitlines() if w.strip()
        )
        if not terms:
            raise ValueError(f"lexicon file {p.name} is empty")
        out.append(Lexicon(name=stem, terms=terms))
    if not out:
        warnings.warn(f"no lexicon files found in {path}")
    return out


def bundled_lexicon_dir() -> Path:
    return Path(str(resources.files("npov").joinpath("data/lexicons")))


def feature_dim(lexicons: list[Lexicon]) -> int:
    return 3 * len(lexicons) + 2


def extract_features(s: Sentence, lexicons: list[Lexicon]) -> np.ndarray:
    """(n, f) binary matrix: [self, prev, next] lexicon hits + position bits."""
    n, L = len(s), len(lexicons)
    feats = np.zeros((n, 3 * L + 2), dtype=np.float32)
    norms = s.norms
    for i in range(n):
        for k, lex in enumerate(lexicons):
            if norms[i] in lex.terms:
                feats[i, k] = 1.0
            if i > 0 and norms[i - 1] in lex.terms:
                feats[i, L + k] = 1.0
            if i + 1 < n and norms[i + 1] in lex.terms:
                feats[i, 2 * L + k] = 1.0
        feats[i, 3 * L] = 1.0 if i == 0 else 0.0
        feats[i, 3 * L + 1] = 1.0 if i == n - 1 else 0.0
    return feats


class Detector:
    def __init__(self, rng, vocab: Vocabulary, lexicons: list[Lexicon],
                 ctx_dim: int = 64, feat_hidden: int = 64, n_layers: int = 2,
                 max_len: int = 128):
        self.vocab = vocab
        self.lexicons = lexicons
        self.ctx_dim = ctx_dim
        self.encoder = ContextualEncoder(rng, len(vocab), ctx_dim,
                                         n_layers=n_layers, max_len=max_len)
        self.feat_in = Dense(rng, feature_dim(lexicons), feat_hidden)
        self.w_b = Dense(rng, ctx_dim, 1)
        self.w_e = Dense(rng, feat_hidden, 1)
        # w_b and w_e both carry a bias; zero-initialized, they act as one
        # shared scalar offset

    def params(self, prefix: str = "det"):
        out = list(self.encoder.params(f"{prefix}.ctx"))
        out += self.feat_in.params(f"{prefix}.feat_in")
        out += self.w_b.params(f"{prefix}.w_b")
        out += self.w_e.params(f"{prefix}.w_e")
        return out

    def param_dict(self, prefix: str = "det"):
        return collect_params(self.params(prefix))

    def _encode_batch(self, sents: list[Sentence], categories: list[str]):
        B = len(sents)
        T = max(len(s) for s in sents) + 1
        ids = np.full((B, T), PAD, dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float32)
        for r, (s, cat) in enumerate(zip(sents, categories)):
            ids[r, 0] = self.vocab.category_id(cat)
            ids[r, 1 : len(s) + 1] = self.vocab.encode(s.norms)
            mask[r, : len(s) + 1] = 1.0
        return ids, mask

    def context_states(self, sents: list[Sentence], categories: list[str]):
        """(B, T-1, ctx) encoder states at real token positions + pad mask."""
        ids, mask = self._encode_batch(sents, categories)
        states = self.encoder.encode(ids, mask)
        body = narrow(states, 1, 1, ids.shape[1] - 1)  # category excluded
        return body, mask[:, 1:]

    def logits(self, sents: list[Sentence], categories: list[str]):
        """(B, T-1) logit matrix over real token positions; also the pad mask."""
        body, mask = self.context_states(sents, categories)
        B, T = mask.shape
        feats = np.zeros((B, T, feature_dim(self.lexicons)), dtype=np.float32)
        for r, s in enumerate(sents):
            feats[r, : len(s)] = extract_features(s, self.lexicons)
        e = relu(self.feat_in(Tensor(feats)))
        z = add(self.w_b(body), self.w_e(e))
        return reshape(z, (B, T)), mask

    def detect(self, s: Sentence, category: str = "unknown") -> np.ndarray:
        z, _ = self.logits([s], [category])
        return sigmoid(z).data[0, : len(s)].copy()

    def loss(self, sents, categories, labels_list):
        """Mean over sentences of average per-token label NLL."""
        z, mask = self.logits(sents, categories)
        p = sigmoid(z)
        B, T = p.shape
        y = np.zeros((B, T), dtype=np.float32)
        for r, labels in enumerate(labels_list):
            y[r, : len(labels)] = labels
        clipped_p = log(p, floor=PROB_CLIP)
        one_minus = log(sub(Tensor(np.ones((B, T), np.float32)), p), floor=PROB_CLIP)
        yt = Tensor(y)
        per_tok = add(mul(yt, clipped_p),
                      mul(sub(Tensor(np.ones((B, T), np.float32)), yt), one_minus))
        m = Tensor(mask)
        counts = mask.sum(axis=1, keepdims=True)
        weights = Tensor((mask / counts / B).astype(np.float32))
        return mul(tsum(tsum(mul(per_tok, weights), axis=-1)), Tensor(np.float32(-1.0)))


def detection_loss(p: np.ndarray, labels) -> float:
    """Average negative log likelihood of the labels under p."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLIP, 1.0 - PROB_CLIP)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def select_top_word(p) -> int:
    p = np.asarray(p)
    if p.size == 0:
        raise ValueError("empty probability vector")
    return int(np.argmax(p))


def train_detector(detector: Detector, pairs, *, epochs: int = 4,
                   batch_size: int = 16, lr: float = 1e-3, seed: int = 0,
                   checkpoint_dir=None, save_fn=None) -> list[float]:
    """pairs: (Sentence, category, labels) triples. Returns per-epoch losses."""
    rng = np.random.default_rng(seed)
    params = [t for _, t in detector.params()]
    opt = Adam(params, lr=lr)
    epoch_losses: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        batches = 0
        for start in range(0, len(order), batch_size):
            chunk = [pairs[i] for i in order[start : start + batch_size]]
            sents = [c[0] for c in chunk]
            cats = [c[1] for c in chunk]
            labels = [c[2] for c in chunk]
            with tape():
                loss = detector.loss(sents, cats, labels)
                backward(loss)
            clip_gradients(params, 3.0)
            opt.step()
            opt.zero_grad()
            total += loss.item()
            batches += 1
        epoch_losses.append(total / max(batches, 1))
        if save_fn is not None:
            save_fn(detector, epoch)
    return epoch_losses
