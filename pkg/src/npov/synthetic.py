"""Planted-marker corpus generator for end-to-end benchmarks.

Each source sentence carries exactly one marker token drawn from a fixed
table; the target either swaps it for its neutral replacement or deletes it.
The mapping is deterministic per marker, so a correct system can score
perfectly on held-out sentences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .text import Sentence, Token
from .vocab import Vocabulary

VERB_MARKERS = {
    "blasted": "condemned",
    "exposed": "described",
    "murdered": "killed",
    "pilfered": "took",
    "slammed": "criticized",
    "stormed": "entered",
}
ADJ_MARKERS = {
    "luxurious": "expensive",
    "unprincipled": "controversial",
}
ADV_MARKERS = ("bravely", "clearly", "shockingly", "unfortunately")

MARKERS = tuple(sorted(VERB_MARKERS)) + tuple(sorted(ADJ_MARKERS)) + ADV_MARKERS

DETS = ("the", "a", "this", "that", "its", "their")
NOUNS = (
    "council", "report", "plan", "city", "team", "law", "river", "school",
    "market", "church", "bridge", "museum", "election", "budget", "committee",
    "road", "station", "library", "garden", "factory", "harbor", "theater",
    "newspaper", "union", "farm", "tower", "castle", "village", "festival",
    "award", "contract", "project", "survey", "treaty", "archive", "mayor",
    "senator", "editor", "critic", "player",
)
VERBS = (
    "approved", "reviewed", "announced", "opened", "closed", "visited",
    "funded", "reported", "discussed", "published", "planned", "moved",
    "joined", "signed", "rejected", "delayed", "completed", "toured",
)
ADJS = (
    "new", "old", "large", "small", "local", "annual", "public", "private",
    "regional", "national",
)
PREPS = ("in", "near", "after", "before", "during", "under", "outside", "beside")

CATEGORIES = ("history", "science", "sports")


@dataclass(frozen=True)
class SyntheticPair:
    src: tuple[str, ...]
    tgt: tuple[str, ...]
    category: str
    marker: str
    marker_pos: int
    kind: str  # "replace" | "delete"

    @property
    def labels(self) -> list[float]:
        out = [0.0] * len(self.src)
        out[self.marker_pos] = 1.0
        return out


def _neutral_clause(rng) -> list[str]:
    toks = [rng.choice(DETS), rng.choice(NOUNS), rng.choice(VERBS),
            rng.choice(DETS)]
    if rng.random() < 0.3:
        toks.append(rng.choice(ADJS))
    toks.append(rng.choice(NOUNS))
    if rng.random() < 0.5:
        toks += [rng.choice(PREPS), rng.choice(DETS), rng.choice(NOUNS)]
    return toks


def _make_pair(rng) -> SyntheticPair:
    kind = rng.choice(("verb", "adj", "adv"))
    det1, noun1 = rng.choice(DETS), rng.choice(NOUNS)
    det2, noun2 = rng.choice(DETS), rng.choice(NOUNS)
    tail: list[str] = []
    if rng.random() < 0.5:
        tail = [rng.choice(PREPS), rng.choice(DETS), rng.choice(NOUNS)]
    if kind == "verb":
        marker = rng.choice(sorted(VERB_MARKERS))
        src = [det1, noun1, marker, det2, noun2] + tail
        tgt = list(src)
        pos = 2
        tgt[pos] = VERB_MARKERS[marker]
        edit = "replace"
    elif kind == "adj":
        marker = rng.choice(sorted(ADJ_MARKERS))
        verb = rng.choice(VERBS)
        src = [det1, noun1, verb, det2, marker, noun2] + tail
        tgt = list(src)
        pos = 4
        tgt[pos] = ADJ_MARKERS[marker]
        edit = "replace"
    else:
        marker = rng.choice(ADV_MARKERS)
        verb = rng.choice(VERBS)
        src = [det1, noun1, marker, verb, det2, noun2] + tail
        pos = 2
        tgt = src[:pos] + src[pos + 1 :]
        edit = "delete"
    return SyntheticPair(src=tuple(src), tgt=tuple(tgt),
                         category=str(rng.choice(CATEGORIES)), marker=marker,
                         marker_pos=pos, kind=edit)


def generate_pairs(n: int, seed: int = 0) -> list[SyntheticPair]:
    """n pairs with unique source sentences, deterministic per seed."""
    rng = np.random.default_rng(seed)
    seen: set[tuple[str, ...]] = set()
    out: list[SyntheticPair] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 100 * n:
            raise RuntimeError("source-sentence space exhausted")
        pair = _make_pair(rng)
        if pair.src in seen:
            continue
        seen.add(pair.src)
        out.append(pair)
    return out


def fixture_sentences(n: int = 64, seed: int = 17) -> list[list[str]]:
    """Marker-free unique sentences for reconstruction benchmarks."""
    rng = np.random.default_rng(seed)
    seen: set[tuple[str, ...]] = set()
    out: list[list[str]] = []
    while len(out) < n:
        toks = _neutral_clause(rng)
        key = tuple(toks)
        if key in seen:
            continue
        seen.add(key)
        out.append(toks)
    return out


def build_vocabulary(pairs, cap: int = 300) -> Vocabulary:
    streams = [list(p.src) for p in pairs] + [list(p.tgt) for p in pairs]
    return Vocabulary.build(streams, categories=CATEGORIES, cap=cap)


def as_training(pairs) -> list[tuple[list[str], list[str], str]]:
    return [(list(p.src), list(p.tgt), p.category) for p in pairs]


def as_labeled(pairs) -> list[tuple[Sentence, str, list[float]]]:
    out = []
    for p in pairs:
        sent = Sentence(tuple(Token.of(t) for t in p.src), " ".join(p.src))
        out.append((sent, p.category, p.labels))
    return out


def write_biased_jsonl(pairs, path) -> None:
    """Same line schema the corpus pipeline emits for its biased splits."""
    with open(path, "w", encoding="utf-8") as f:
        for i, p in enumerate(pairs):
            f.write(json.dumps({
                "rev_id": f"syn-{i:05d}",
                "category": p.category,
                "src_tokens": list(p.src),
                "tgt_tokens": list(p.tgt),
                "labels": [int(x) for x in p.labels],
                "src_raw": " ".join(p.src),
                "tgt_raw": " ".join(p.tgt),
            }, sort_keys=True, ensure_ascii=False) + "\n")
