"""Self-contained model files: weights + run config + vocabulary + lexicons.

Every artifact kind (detector, editor, modular, concurrent) serializes into
the same container; loading rebuilds the object graph from the embedded
config and then overwrites each named tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .detector import Detector, Lexicon
from .editor import Editor
from .engine.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .systems import ConcurrentSystem, ModularSystem
from .vocab import Vocabulary

KINDS = ("detector", "editor", "modular", "concurrent")


def lexicons_to_config(lexicons: list[Lexicon]) -> dict:
    return {lex.name: sorted(lex.terms) for lex in lexicons}


def lexicons_from_config(data: dict) -> list[Lexicon]:
    return [Lexicon(name, frozenset(terms))
            for name, terms in sorted(data.items())]


def build_detector(run: RunConfig, vocab: Vocabulary,
                   lexicons: list[Lexicon], seed: int | None = None) -> Detector:
    rng = np.random.default_rng(run.seed if seed is None else seed)
    return Detector(rng, vocab, lexicons, ctx_dim=run.ctx_dim,
                    feat_hidden=run.feat_hidden, n_layers=run.n_layers,
                    max_len=run.max_len)


def build_editor(run: RunConfig, vocab: Vocabulary,
                 seed: int | None = None) -> Editor:
    rng = np.random.default_rng(run.seed if seed is None else seed)
    return Editor(rng, vocab, emb_dim=run.emb_dim, hidden=run.hidden)


def build_concurrent(run: RunConfig, vocab: Vocabulary,
                     seed: int | None = None) -> ConcurrentSystem:
    rng = np.random.default_rng(run.seed if seed is None else seed)
    return ConcurrentSystem(rng, vocab, ctx_dim=run.ctx_dim,
                            emb_dim=run.emb_dim, hidden=run.hidden,
                            n_layers=run.n_layers, max_len=run.max_len)


@dataclass
class Artifact:
    kind: str
    model: object
    run: RunConfig
    vocab: Vocabulary
    lexicons: list[Lexicon] | None = None


def _named_params(kind: str, model) -> list:
    prefix = {"detector": "det", "editor": "ed"}.get(kind, "sys")
    return model.params(prefix)


def save_artifact(path, kind: str, model, run: RunConfig, vocab: Vocabulary,
                  lexicons: list[Lexicon] | None = None) -> None:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if kind in ("detector", "modular") and lexicons is None:
        raise ValueError(f"{kind} artifacts must embed their lexicons")
    config = {
        "kind": kind,
        "run": run.to_dict(),
        "vocab": vocab.to_config(),
    }
    if lexicons is not None:
        config["lexicons"] = lexicons_to_config(lexicons)
    tensors = {name: t.data for name, t in _named_params(kind, model)}
    save_checkpoint(str(path), config, tensors)


def load_artifact(path) -> Artifact:
    config, tensors = load_checkpoint(str(path))
    kind = config.get("kind")
    if kind not in KINDS:
        raise CheckpointError(f"unknown artifact kind {kind!r}")
    run = RunConfig.from_dict(config["run"])
    vocab = Vocabulary.from_config(config["vocab"])
    lexicons = None
    if "lexicons" in config:
        lexicons = lexicons_from_config(config["lexicons"])
    if kind == "detector":
        model: object = build_detector(run, vocab, lexicons)
    elif kind == "editor":
        model = build_editor(run, vocab)
    elif kind == "concurrent":
        model = build_concurrent(run, vocab)
    else:
        det = build_detector(run, vocab, lexicons)
        ed = build_editor(run, vocab)
        rng = np.random.default_rng(run.seed)
        model = ModularSystem(det, ed, join_mode=run.join_mode, rng=rng)
    named = _named_params(kind, model)
    want = {name for name, _ in named}
    have = set(tensors)
    if want != have:
        missing = sorted(want - have)
        unexpected = sorted(have - want)
        raise CheckpointError(
            f"parameter names do not match: missing {missing}, "
            f"unexpected {unexpected}")
    for name, t in named:
        arr = tensors[name]
        if arr.shape != t.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file has {arr.shape}, "
                f"model needs {t.data.shape}")
        t.data = arr
    return Artifact(kind=kind, model=model, run=run, vocab=vocab,
                    lexicons=lexicons)
