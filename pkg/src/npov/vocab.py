"""Shared token vocabulary with specials, category tags, and copy extension."""

from __future__ import annotations

from collections import Counter

PAD, UNK, SOS, EOS, MASK = 0, 1, 2, 3, 4
SPECIALS = ["<pad>", "<unk>", "<s>", "</s>", "<mask>"]
DEFAULT_CAP = 5000


def category_token(tag: str) -> str:
    return f"<cat:{tag}>"


class Vocabulary:
    def __init__(self, tokens: list[str], categories: list[str]):
        self._categories = sorted(set(categories) | {"unknown"})
        self._id_of: dict[str, int] = {}
        for tok in SPECIALS:
            self._id_of[tok] = len(self._id_of)
        for tag in self._categories:
            self._id_of[category_token(tag)] = len(self._id_of)
        for tok in tokens:
            if tok not in self._id_of:
                self._id_of[tok] = len(self._id_of)
        self._token_of = {i: t for t, i in self._id_of.items()}

    @classmethod
    def build(cls, sentences, categories=(), cap: int = DEFAULT_CAP) -> "Vocabulary":
        """Most frequent tokens win; ties go alphabetically."""
        counts: Counter = Counter()
        for toks in sentences:
            counts.update(toks)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        n_reserved = len(SPECIALS) + len(set(categories) | {"unknown"})
        keep = [tok for tok, _ in ranked[: max(cap - n_reserved, 0)]]
        return cls(keep, list(categories))

    def __len__(self) -> int:
        return len(self._id_of)

    @property
    def categories(self) -> list[str]:
        return list(self._categories)

    def id_of(self, token: str) -> int:
        return self._id_of.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self._token_of.get(idx, "<unk>")

    def category_id(self, tag: str) -> int:
        key = category_token(tag if tag in self._categories else "unknown")
        return self._id_of[key]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.token_of(int(i)) for i in ids]

    def to_config(self) -> dict:
        ordered = [self._token_of[i] for i in range(len(self._token_of))]
        return {"tokens": ordered, "categories": self._categories}

    @classmethod
    def from_config(cls, cfg: dict) -> "Vocabulary":
        v = cls.__new__(cls)
        v._categories = list(cfg["categories"])
        v._id_of = {t: i for i, t in enumerate(cfg["tokens"])}
        v._token_of = {i: t for i, t in enumerate(cfg["tokens"])}
        return v


def extend_with_oov(vocab: Vocabulary, source_tokens: list[str]):
    """Per-example copy ids for source tokens outside the vocabulary.

    Returns (source ids over the extended vocabulary, oov list in first-seen
    order). Extended id of the i-th novel OOV is len(vocab) + i.
    """
    oov: list[str] = []
    ids: list[int] = []
    for tok in source_tokens:
        idx = vocab.id_of(tok)
        if idx == UNK:
            if tok not in oov:
                oov.append(tok)
            idx = len(vocab) + oov.index(tok)
        ids.append(idx)
    return ids, oov


def extended_token(vocab: Vocabulary, idx: int, oov: list[str]) -> str:
    if idx < len(vocab):
        return vocab.token_of(idx)
    return oov[idx - len(vocab)]
