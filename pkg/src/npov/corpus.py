"""Revision-pair stream to corpus splits: align, filter, label, write.

A revision record carries a document before and after one edit. Sentences are
aligned across the two versions, unchanged sentences feed the neutral split,
and changed pairs survive a fixed cascade of exclusion rules before landing in
biased_full (and biased_word when exactly one source token changed).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from math import ceil
from pathlib import Path

from .text import (
    EditScript,
    Sentence,
    is_proper_noun_like,
    labels_from_diff,
    levenshtein_chars,
    sentence_bleu,
    token_diff,
    tokenize,
)

REJECT_RULES = (
    "multi-sentence",
    "min-edit",
    "max-edit",
    "proper-noun",
    "spelling-grammar",
    "reference-hyperlink",
    "non-literary",
    "length-ratio",
    "no-alignment",
)

REFERENCE_PATTERNS = ("http://", "https://", "www.", "<ref", "{{cite", "[http")
STRUCTURAL_MARKUP = ("{|", "||", "|}")
INFLECTION_SUFFIXES = ("s", "es", "ed", "ing")

ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "etc", "vs",
    "inc", "ltd", "co", "gen", "col", "lt", "sgt", "capt", "rev", "hon",
}

_TERMINATOR_RE = re.compile(r"[.!?]+(?:['\")\]]*)(?=\s|$)")


@dataclass(frozen=True)
class RevisionPair:
    rev_id: str
    category: str
    comment: str
    pre_text: str
    post_text: str


@dataclass(frozen=True)
class AlignedPair:
    source: Sentence
    target: Sentence
    align_score: float
    rev_id: str
    category: str
    context_prev: Sentence | None = None
    context_next: Sentence | None = None

    @property
    def changed(self) -> bool:
        return self.source.norms != self.target.norms


@dataclass(frozen=True)
class LabeledPair:
    pair: AlignedPair
    labels: tuple[int, ...]
    script: EditScript
    edit_class: str  # "single-word" | "multi-word"


@dataclass
class CorpusSplits:
    biased_full: list[LabeledPair] = field(default_factory=list)
    biased_word: list[LabeledPair] = field(default_factory=list)
    neutral: list[AlignedPair] = field(default_factory=list)
    rejects: dict[str, int] = field(default_factory=lambda: {r: 0 for r in REJECT_RULES})
    records: int = 0
    malformed: int = 0
    length_filter_applied: bool = False


def load_wordlist() -> frozenset[str]:
    text = resources.files("npov").joinpath("data/wordlist.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def split_sentences(doc: str, guard_initials: bool = True) -> list[Sentence]:
    """Cut at terminal punctuation followed by whitespace + capital (or EOT)."""
    sentences: list[Sentence] = []
    start = 0
    for m in _TERMINATOR_RE.finditer(doc):
        end = m.end()
        rest = doc[end:]
        stripped = rest.lstrip()
        if stripped and not (stripped[0].isupper() or stripped[0] in "\"'(["):
            continue
        before = doc[start : m.start()].rstrip()
        last = before.split()[-1] if before.split() else ""
        word = last.rstrip(".").lower()
        if word in ABBREVIATIONS:
            continue
        if guard_initials and len(word) == 1 and word.isalpha():
            continue
        chunk = doc[start:end].strip()
        if chunk:
            sentences.append(tokenize(chunk))
        start = end
    tail = doc[start:].strip()
    if tail:
        sentences.append(tokenize(tail))
    return sentences


def align_sentences(pre: list[Sentence], post: list[Sentence], window: int = 5,
                    rev_id: str = "", category: str = "") -> list[AlignedPair]:
    """Greedy one-to-one pairing by descending pairwise score.

    Ties prefer the closest index distance, then the lowest target index.
    Zero-score candidates never pair, so unmatched sentences drop out.
    """
    candidates = []
    for i, s in enumerate(pre):
        lo, hi = max(0, i - window), min(len(post), i + window + 1)
        for j in range(lo, hi):
            score = sentence_bleu(s, post[j])
            if score > 0.0:
                candidates.append((-score, abs(i - j), j, i))
    candidates.sort()
    taken_pre: set[int] = set()
    taken_post: set[int] = set()
    chosen: dict[int, tuple[int, float]] = {}
    for neg_score, _, j, i in candidates:
        if i in taken_pre or j in taken_post:
            continue
        taken_pre.add(i)
        taken_post.add(j)
        chosen[i] = (j, -neg_score)
    pairs = []
    for i in sorted(chosen):
        j, score = chosen[i]
        pairs.append(AlignedPair(
            source=pre[i],
            target=post[j],
            align_score=score,
            rev_id=rev_id,
            category=category,
            context_prev=pre[i - 1] if i > 0 else None,
            context_next=pre[i + 1] if i + 1 < len(pre) else None,
        ))
    return pairs


def _changed_token_sets(script: EditScript, s: Sentence, t: Sentence):
    src = [s.norms[i] for kind, (s0, s1), _ in script.ops
           if kind in ("delete", "replace") for i in range(s0, s1)]
    tgt = [t.norms[j] for kind, _, (t0, t1) in script.ops
           if kind in ("insert", "replace") for j in range(t0, t1)]
    return src, tgt


def _is_punct(norm: str) -> bool:
    return not any(c.isalnum() for c in norm)


def _is_spelling_fix(orig: str, repl: str, wordlist: frozenset[str]) -> bool:
    if _is_punct(orig) or _is_punct(repl):
        return False
    if repl in wordlist and orig not in wordlist and levenshtein_chars(orig, repl) <= 2:
        return True
    if orig != repl and sorted(orig) == sorted(repl):
        return True
    for sfx in INFLECTION_SUFFIXES:
        if (repl == orig + sfx or orig == repl + sfx) and min(len(orig), len(repl)) >= 3:
            return True
    return False


def _only_spelling_fixes(script: EditScript, s: Sentence, t: Sentence,
                         wordlist: frozenset[str]) -> bool:
    """True when every changed op is a same-length replace of spelling fixes.

    Adjacent fixed tokens fuse into one replace op, so pair positionally.
    """
    saw_change = False
    for kind, (s0, s1), (t0, t1) in script.ops:
        if kind == "equal":
            continue
        saw_change = True
        if kind != "replace" or s1 - s0 != t1 - t0:
            return False
        for orig, repl in zip(s.norms[s0:s1], t.norms[t0:t1]):
            if not _is_spelling_fix(orig, repl, wordlist):
                return False
    return saw_change


def _adds_reference(src_raw: str, tgt_raw: str) -> bool:
    s, t = src_raw.lower(), tgt_raw.lower()
    return any(p in t and p not in s for p in REFERENCE_PATTERNS)


def _non_literary(pair: AlignedPair, script: EditScript) -> bool:
    for raw in (pair.source.raw, pair.target.raw):
        if any(m in raw for m in STRUCTURAL_MARKUP):
            return True
    src, tgt = _changed_token_sets(script, pair.source, pair.target)
    changed = src + tgt
    return bool(changed) and all(_is_punct(tok) for tok in changed)


def apply_filters(rp: RevisionPair, aligned: list[AlignedPair], *,
                  min_edit: int = 4, wordlist: frozenset[str] | None = None):
    """Run the exclusion cascade; each reject carries its first failing rule."""
    if wordlist is None:
        wordlist = load_wordlist()
    changed = [p for p in aligned if p.changed]
    if len(changed) > 1:
        return [], [(p, "multi-sentence") for p in changed]
    kept: list[AlignedPair] = []
    rejects: list[tuple[AlignedPair, str]] = []
    for pair in aligned:
        if levenshtein_chars(pair.source.raw, pair.target.raw) < min_edit:
            rejects.append((pair, "min-edit"))
            continue
        script = token_diff(pair.source, pair.target)
        labels = labels_from_diff(script, len(pair.source))
        n = len(pair.source)
        if sum(labels) * 2 > n:
            rejects.append((pair, "max-edit"))
            continue
        proper = sum(1 for i, tok in enumerate(pair.source.tokens)
                     if is_proper_noun_like(tok, i))
        if proper * 2 > n:
            rejects.append((pair, "proper-noun"))
            continue
        if _only_spelling_fixes(script, pair.source, pair.target, wordlist):
            rejects.append((pair, "spelling-grammar"))
            continue
        if _adds_reference(pair.source.raw, pair.target.raw):
            rejects.append((pair, "reference-hyperlink"))
            continue
        if _non_literary(pair, script):
            rejects.append((pair, "non-literary"))
            continue
        kept.append(pair)
    return kept, rejects


def length_ratio_filter(pairs: list[AlignedPair], percentile: int = 95,
                        force: bool = False):
    """Drop pairs whose length ratio exceeds the batch percentile.

    Below 20 pairs the percentile is not meaningful: error, or with force a
    no-op. Returns (survivors, dropped, applied).
    """
    if len(pairs) < 20:
        if not force:
            raise ValueError(
                f"length-ratio filter needs at least 20 pairs, got {len(pairs)}"
            )
        return list(pairs), [], False

    def ratio(p: AlignedPair) -> float:
        n, m = len(p.source), len(p.target)
        return max(n, m) / min(n, m)

    ratios = sorted(ratio(p) for p in pairs)
    k = ceil(percentile / 100.0 * len(ratios))
    cutoff = ratios[k - 1]
    survivors = [p for p in pairs if ratio(p) <= cutoff]
    dropped = [p for p in pairs if ratio(p) > cutoff]
    return survivors, dropped, True


def label_pair(pair: AlignedPair) -> LabeledPair:
    script = token_diff(pair.source, pair.target)
    labels = labels_from_diff(script, len(pair.source))
    has_insert = any(kind == "insert" for kind, _, _ in script.ops)
    edit_class = "single-word" if sum(labels) == 1 and not has_insert else "multi-word"
    return LabeledPair(pair=pair, labels=tuple(labels), script=script,
                       edit_class=edit_class)


def parse_records(lines, on_malformed=None):
    """Yield RevisionPair per JSON line; malformed lines invoke the callback."""
    required = ("rev_id", "category", "comment", "pre_text", "post_text")
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not all(isinstance(obj.get(k), str) for k in required):
                raise ValueError("missing or non-string field")
        except (json.JSONDecodeError, ValueError, AttributeError) as err:
            if on_malformed is not None:
                on_malformed(lineno, err)
            continue
        yield RevisionPair(**{k: obj[k] for k in required})


def build_corpus(records, *, window: int = 5, min_edit: int = 4,
                 length_percentile: int = 95,
                 wordlist: frozenset[str] | None = None) -> CorpusSplits:
    if wordlist is None:
        wordlist = load_wordlist()
    splits = CorpusSplits()
    kept_all: list[AlignedPair] = []
    for rp in records:
        splits.records += 1
        pre = split_sentences(rp.pre_text)
        post = split_sentences(rp.post_text)
        if not pre or not post:
            continue
        aligned = align_sentences(pre, post, window, rp.rev_id, rp.category)
        splits.rejects["no-alignment"] += len(pre) - len(aligned)
        changed = [p for p in aligned if p.changed]
        unchanged = [p for p in aligned if not p.changed]
        if len(changed) > 1:
            # a multi-sentence edit invalidates the whole revision
            splits.rejects["multi-sentence"] += len(changed)
            continue
        splits.neutral.extend(unchanged)
        kept, rejects = apply_filters(rp, changed, min_edit=min_edit,
                                      wordlist=wordlist)
        for _, reason in rejects:
            splits.rejects[reason] += 1
        kept_all.extend(kept)
    survivors, dropped, applied = length_ratio_filter(
        kept_all, length_percentile, force=True
    )
    splits.rejects["length-ratio"] += len(dropped)
    splits.length_filter_applied = applied
    for pair in survivors:
        lp = label_pair(pair)
        splits.biased_full.append(lp)
        if lp.edit_class == "single-word":
            splits.biased_word.append(lp)
    return splits


def _split_stats(labeled: list[LabeledPair]):
    if not labeled:
        return {"pairs": 0, "words": 0, "mean_length": 0.0, "mean_revised": 0.0}
    lengths = [len(lp.pair.source) for lp in labeled]
    revised = [sum(lp.labels) for lp in labeled]
    return {
        "pairs": len(labeled),
        "words": sum(lengths),
        "mean_length": round(sum(lengths) / len(lengths), 2),
        "mean_revised": round(sum(revised) / len(revised), 2),
    }


def corpus_stats(splits: CorpusSplits) -> dict:
    neutral_lengths = [len(p.source) for p in splits.neutral]
    return {
        "records": splits.records,
        "malformed": splits.malformed,
        "splits": {
            "biased_full": _split_stats(splits.biased_full),
            "biased_word": _split_stats(splits.biased_word),
            "neutral": {
                "pairs": len(splits.neutral),
                "words": sum(neutral_lengths),
                "mean_length": round(
                    sum(neutral_lengths) / len(neutral_lengths), 2
                ) if neutral_lengths else 0.0,
            },
        },
        "rejects": dict(splits.rejects),
        "length_filter_applied": splits.length_filter_applied,
    }


def _biased_line(lp: LabeledPair) -> str:
    return json.dumps({
        "rev_id": lp.pair.rev_id,
        "category": lp.pair.category,
        "src_tokens": lp.pair.source.norms,
        "tgt_tokens": lp.pair.target.norms,
        "labels": list(lp.labels),
        "src_raw": lp.pair.source.raw,
        "tgt_raw": lp.pair.target.raw,
    }, sort_keys=True, ensure_ascii=False)


def _neutral_line(p: AlignedPair) -> str:
    return json.dumps({
        "rev_id": p.rev_id,
        "category": p.category,
        "tokens": p.source.norms,
        "raw": p.source.raw,
    }, sort_keys=True, ensure_ascii=False)


def build_corpus_from_file(path, **kwargs) -> CorpusSplits:
    malformed = 0

    def count(_lineno, _err):
        nonlocal malformed
        malformed += 1

    with open(path, encoding="utf-8") as f:
        splits = build_corpus(parse_records(f, on_malformed=count), **kwargs)
    splits.malformed = malformed
    return splits


def write_corpus(splits: CorpusSplits, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "biased_full.jsonl", "w", encoding="utf-8") as f:
        for lp in splits.biased_full:
            f.write(_biased_line(lp) + "\n")
    with open(out / "biased_word.jsonl", "w", encoding="utf-8") as f:
        for lp in splits.biased_word:
            f.write(_biased_line(lp) + "\n")
    with open(out / "neutral.jsonl", "w", encoding="utf-8") as f:
        for p in splits.neutral:
            f.write(_neutral_line(p) + "\n")
    with open(out / "stats.json", "w", encoding="utf-8") as f:
        json.dump(corpus_stats(splits), f, indent=2, sort_keys=True)
        f.write("\n")


def read_biased_file(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(json.loads(line))
    return out
