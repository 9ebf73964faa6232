"""Decode-quality metrics: corpus BLEU, exact match, detection accuracy, and
seeded bootstrap confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector import select_top_word
from .text import Sentence, Token, corpus_bleu


def sentence_of(tokens: list[str]) -> Sentence:
    return Sentence(tuple(Token.of(t) for t in tokens), " ".join(tokens))


def _norms(tokens) -> list[str]:
    if isinstance(tokens, Sentence):
        return tokens.norms
    return [t.lower() for t in tokens]


def exact_match_accuracy(outputs, references) -> float:
    """Fraction of pairs whose normalized token sequences are identical."""
    if len(outputs) != len(references):
        raise ValueError(
            f"length mismatch: {len(outputs)} outputs vs {len(references)} references")
    if not outputs:
        raise ValueError("no pairs to score")
    hits = sum(_norms(o) == _norms(r) for o, r in zip(outputs, references))
    return hits / len(outputs)


def detection_accuracy(detector, labeled_pairs) -> float:
    """How often the highest-probability token is the one that was edited.

    labeled_pairs: (Sentence, category, labels) with exactly one positive
    label per sentence.
    """
    if not labeled_pairs:
        raise ValueError("no pairs to score")
    hits = 0
    for sent, category, labels in labeled_pairs:
        if sum(labels) != 1:
            raise ValueError("each pair must have exactly one labeled word")
        p = detector.detect(sent, category)
        hits += labels[select_top_word(p)] == 1
    return hits / len(labeled_pairs)


def bootstrap_ci(metric_fn, outputs, references, *, resamples: int = 1000,
                 level: float = 0.95, seed: int = 0):
    """Seeded percentile interval of metric_fn over resampled pairs."""
    n = len(outputs)
    if n != len(references):
        raise ValueError("outputs and references must align")
    if n < 2:
        raise ValueError("bootstrap needs at least 2 pairs")
    rng = np.random.default_rng(seed)
    vals = np.empty(resamples)
    for b in range(resamples):
        idx = rng.integers(0, n, size=n)
        vals[b] = metric_fn([outputs[i] for i in idx],
                            [references[i] for i in idx])
    lo = (1.0 - level) / 2.0 * 100.0
    return float(np.percentile(vals, lo)), float(np.percentile(vals, 100.0 - lo))


def corpus_bleu_tokens(outputs, references) -> float:
    return corpus_bleu(
        (sentence_of(_norms(o)), sentence_of(_norms(r)))
        for o, r in zip(outputs, references))


@dataclass
class EvalReport:
    bleu: float
    accuracy: float
    n_examples: int
    bleu_ci: tuple[float, float]
    accuracy_ci: tuple[float, float]
    detection: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "bleu": self.bleu,
            "accuracy": self.accuracy,
            "n_examples": self.n_examples,
            "bleu_ci": list(self.bleu_ci),
            "accuracy_ci": list(self.accuracy_ci),
            "config": self.config,
        }
        if self.detection is not None:
            out["detection_accuracy"] = self.detection
        return out

    def table(self) -> str:
        rows = [
            ("bleu", f"{self.bleu * 100:.2f}",
             f"[{self.bleu_ci[0] * 100:.2f}, {self.bleu_ci[1] * 100:.2f}]"),
            ("accuracy", f"{self.accuracy * 100:.2f}",
             f"[{self.accuracy_ci[0] * 100:.2f}, {self.accuracy_ci[1] * 100:.2f}]"),
        ]
        if self.detection is not None:
            rows.append(("detection", f"{self.detection * 100:.2f}", ""))
        rows.append(("n", str(self.n_examples), ""))
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {value:>8}  {ci}".rstrip()
                 for name, value, ci in rows]
        return "\n".join(lines)


def evaluate_system(system, pairs, *, width: int = 4, resamples: int = 1000,
                    seed: int = 0, labeled_pairs=None, config=None) -> EvalReport:
    """Decode every (src, tgt, category) pair and score the outputs."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    outputs, references = [], []
    for src, tgt, category in pairs:
        result = system.neutralize(list(src), category, width=width)
        outputs.append(result.output_tokens)
        references.append(list(tgt))
    bleu = corpus_bleu_tokens(outputs, references)
    acc = exact_match_accuracy(outputs, references)
    bleu_ci = bootstrap_ci(corpus_bleu_tokens, outputs, references,
                           resamples=resamples, seed=seed)
    acc_ci = bootstrap_ci(exact_match_accuracy, outputs, references,
                          resamples=resamples, seed=seed)
    detection = None
    if labeled_pairs is not None:
        detector = getattr(system, "detector", None)
        if detector is None:
            raise ValueError("system has no detector to score")
        detection = detection_accuracy(detector, labeled_pairs)
    return EvalReport(bleu=bleu, accuracy=acc, n_examples=len(outputs),
                      bleu_ci=bleu_ci, accuracy_ci=acc_ci, detection=detection,
                      config=dict(config or {}))
