"""Tokenization, edit distances, token diffs, and BLEU.

Shared vocabulary of the corpus pipeline and the evaluator. Everything here
is a pure function over immutable inputs.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class Token:
    surface: str
    norm: str

    @classmethod
    def of(cls, surface: str) -> "Token":
        return cls(surface=surface, norm=surface.lower())


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    raw: str

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


# op kinds: "equal", "delete", "insert", "replace"
# spans are half-open [start, end) over source and target token indices
@dataclass(frozen=True)
class EditScript:
    ops: tuple[tuple[str, tuple[int, int], tuple[int, int]], ...]


def tokenize(raw: str) -> Sentence:
    """Split on word/punctuation boundaries; surfaces keep their case."""
    if not raw.strip():
        raise ValueError("cannot tokenize empty input")
    surfaces = _TOKEN_RE.findall(raw)
    return Sentence(tokens=tuple(Token.of(s) for s in surfaces), raw=raw)


def levenshtein_chars(a: str, b: str) -> int:
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def token_diff(s: Sentence, t: Sentence) -> EditScript:
    """Longest-common-subsequence diff over norm fields.

    Adjacent delete+insert gaps collapse into a single replace op.
    """
    a, b = s.norms, t.norms
    n, m = len(a), len(b)
    lcs = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = lcs[i], lcs[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = nxt[j] if nxt[j] >= row[j + 1] else row[j + 1]
    matches = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            matches.append((i, j))
            i += 1
            j += 1
        elif lcs[i + 1][j] >= lcs[i][j + 1]:
            i += 1
        else:
            j += 1
    ops: list[tuple[str, tuple[int, int], tuple[int, int]]] = []
    si = ti = 0

    def emit_gap(s_end: int, t_end: int) -> None:
        nonlocal si, ti
        if si < s_end and ti < t_end:
            ops.append(("replace", (si, s_end), (ti, t_end)))
        elif si < s_end:
            ops.append(("delete", (si, s_end), (ti, ti)))
        elif ti < t_end:
            ops.append(("insert", (si, si), (ti, t_end)))
        si, ti = s_end, t_end

    k = 0
    while k < len(matches):
        mi, mj = matches[k]
        emit_gap(mi, mj)
        run = 1
        while (k + run < len(matches)
               and matches[k + run] == (mi + run, mj + run)):
            run += 1
        ops.append(("equal", (mi, mi + run), (mj, mj + run)))
        si, ti = mi + run, mj + run
        k += run
    emit_gap(n, m)
    return EditScript(ops=tuple(ops))


def apply_edit_script(script: EditScript, s: Sentence, t: Sentence) -> list[str]:
    """Replay the script: equal spans come from s, the rest from t."""
    out: list[str] = []
    for kind, (s0, s1), (t0, t1) in script.ops:
        if kind == "equal":
            out.extend(s.norms[s0:s1])
        elif kind in ("insert", "replace"):
            out.extend(t.norms[t0:t1])
    return out


def labels_from_diff(script: EditScript, n: int) -> list[int]:
    """1 for source positions inside delete/replace spans, else 0."""
    covered = sum(s1 - s0 for _, (s0, s1), _ in script.ops)
    if covered != n:
        raise ValueError(f"script covers {covered} source tokens, expected {n}")
    labels = [0] * n
    for kind, (s0, s1), _ in script.ops:
        if kind in ("delete", "replace"):
            for i in range(s0, s1):
                labels[i] = 1
    return labels


def _ngram_counts(norms: list[str], n: int) -> Counter:
    return Counter(tuple(norms[i : i + n]) for i in range(len(norms) - n + 1))


def _match_stats(cand: list[str], ref: list[str], max_n: int):
    """Per order n: (clipped matches, candidate n-gram total)."""
    stats = []
    for n in range(1, max_n + 1):
        cc = _ngram_counts(cand, n)
        rc = _ngram_counts(ref, n)
        matched = sum(min(count, rc[g]) for g, count in cc.items())
        stats.append((matched, max(len(cand) - n + 1, 0)))
    return stats


def sentence_bleu(candidate: Sentence, reference: Sentence, max_n: int = 4) -> float:
    """BLEU with add-one smoothing on orders >= 2; order 1 unsmoothed.

    Zero unigram overlap therefore scores exactly 0.
    """
    cand, ref = candidate.norms, reference.norms
    stats = _match_stats(cand, ref, max_n)
    if stats[0][0] == 0:
        return 0.0
    log_sum = math.log(stats[0][0] / stats[0][1])
    for matched, total in stats[1:]:
        log_sum += math.log((matched + 1) / (total + 1))
    c, r = len(cand), len(ref)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / max_n)


def corpus_bleu(pairs, max_n: int = 4) -> float:
    """Corpus BLEU over pooled n-gram counts, unsmoothed."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("corpus_bleu needs at least one pair")
    matched = [0] * max_n
    totals = [0] * max_n
    c = r = 0
    for candidate, reference in pairs:
        cand, ref = candidate.norms, reference.norms
        for n_idx, (mt, tot) in enumerate(_match_stats(cand, ref, max_n)):
            matched[n_idx] += mt
            totals[n_idx] += tot
        c += len(cand)
        r += len(ref)
    log_sum = 0.0
    for mt, tot in zip(matched, totals):
        if mt == 0 or tot == 0:
            return 0.0
        log_sum += math.log(mt / tot)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / max_n)


def is_proper_noun_like(tok: Token, position: int) -> bool:
    """Capitalized, mid-sentence, and longer than one character."""
    return position > 0 and len(tok.surface) > 1 and tok.surface[0].isupper()
