import json
import math
from pathlib import Path

import pytest

from npov.corpus import (
    AlignedPair,
    RevisionPair,
    align_sentences,
    apply_filters,
    build_corpus_from_file,
    corpus_stats,
    label_pair,
    length_ratio_filter,
    load_wordlist,
    parse_records,
    split_sentences,
    write_corpus,
)
from npov.text import Sentence, Token, sentence_bleu, tokenize

FIXTURE = Path(__file__).parent / "data" / "revisions_fixture.jsonl"


def sent(*norms):
    return Sentence(tokens=tuple(Token.of(w) for w in norms), raw=" ".join(norms))


def pair(src, tgt, i="x"):
    return AlignedPair(source=src, target=tgt, align_score=0.5, rev_id=i,
                       category="unknown")


# -- sentence splitting -----------------------------------------------------


def test_split_one_per_terminator_without_initial_guard():
    got = split_sentences("A. B? C!", guard_initials=False)
    assert [s.raw for s in got] == ["A.", "B?", "C!"]


def test_split_empty_doc():
    assert split_sentences("") == []


def test_split_four_sentence_paragraph():
    doc = ("The vote passed narrowly. Several members walked out in protest. "
           "Reporters asked why. Nobody answered them.")
    got = split_sentences(doc)
    assert [s.raw for s in got] == [
        "The vote passed narrowly.",
        "Several members walked out in protest.",
        "Reporters asked why.",
        "Nobody answered them.",
    ]


def test_split_guards_abbreviations():
    got = split_sentences("Dr. Smith arrived. He sat down.")
    assert [s.raw for s in got] == ["Dr. Smith arrived.", "He sat down."]


def test_split_requires_capital_after_terminator():
    got = split_sentences("pi is 3.14 roughly. Everyone knows.")
    assert [s.raw for s in got] == ["pi is 3.14 roughly.", "Everyone knows."]


# -- alignment --------------------------------------------------------------


def test_align_identity_docs():
    doc = [sent("a", "b", "c"), sent("d", "e", "f"), sent("g", "h", "i")]
    pairs = align_sentences(doc, doc)
    assert len(pairs) == 3
    for i, p in enumerate(pairs):
        assert p.source is doc[i] and p.target is doc[i]
        assert p.align_score == pytest.approx(1.0)


def test_align_single_changed_sentence():
    pre = [sent("the", "vote", "passed", "."),
           sent("critics", "slammed", "it", "."),
           sent("debate", "continues", "today", ".")]
    post = [sent("the", "vote", "passed", "."),
            sent("critics", "questioned", "it", "."),
            sent("debate", "continues", "today", ".")]
    pairs = align_sentences(pre, post)
    assert len(pairs) == 3
    assert pairs[1].target.norms == ["critics", "questioned", "it", "."]
    # exhaustive check: each chosen j is the argmax over the window
    for i, p in enumerate(pairs):
        best = max(sentence_bleu(pre[i], post[j]) for j in range(len(post)))
        assert p.align_score == pytest.approx(best)


def test_align_drops_zero_overlap():
    pre = [sent("alpha", "beta"), sent("gamma", "delta")]
    post = [sent("gamma", "delta")]
    pairs = align_sentences(pre, post)
    assert len(pairs) == 1
    assert pairs[0].source.norms == ["gamma", "delta"]


def test_align_claims_each_target_once():
    # both pre sentences prefer post[0]; higher scorer wins, other takes post[1]
    pre = [sent("a", "b", "c", "d"), sent("a", "b", "c", "e")]
    post = [sent("a", "b", "c", "d"), sent("a", "b", "x", "e")]
    pairs = align_sentences(pre, post)
    assert len(pairs) == 2
    targets = [p.target.norms for p in pairs]
    assert targets[0] == ["a", "b", "c", "d"]
    assert targets[1] == ["a", "b", "x", "e"]


def test_align_populates_context():
    pre = [sent("one", "."), sent("two", "."), sent("three", ".")]
    pairs = align_sentences(pre, pre)
    assert pairs[0].context_prev is None
    assert pairs[1].context_prev.norms == ["one", "."]
    assert pairs[1].context_next.norms == ["three", "."]
    assert pairs[2].context_next is None


# -- filters ----------------------------------------------------------------


def rp(pre, post, i="x"):
    return RevisionPair(rev_id=i, category="unknown", comment="", pre_text=pre,
                        post_text=post)


def run_filters(pre_raw, post_raw):
    s, t = tokenize(pre_raw), tokenize(post_raw)
    p = pair(s, t)
    return apply_filters(rp(pre_raw, post_raw), [p])


def test_filter_identity_pair_is_min_edit():
    kept, rejects = run_filters("The game is deep.", "The game is deep.")
    assert kept == []
    assert rejects[0][1] == "min-edit"


def test_filter_keeps_single_word_bias_edit():
    kept, rejects = run_filters("Jewish forces overcome Arab militants.",
                                "Jewish forces overcome Arab forces.")
    assert len(kept) == 1 and rejects == []


def test_filter_multi_sentence_rejects_both():
    a = pair(sent("x", "y"), sent("x", "z"))
    b = pair(sent("p", "q"), sent("p", "r"))
    kept, rejects = apply_filters(rp("", ""), [a, b])
    assert kept == []
    assert [r for _, r in rejects] == ["multi-sentence", "multi-sentence"]


def test_filter_max_edit():
    kept, rejects = run_filters("The film was a huge flop and failure.",
                                "The movie seemed a total big disaster.")
    assert rejects[0][1] == "max-edit"


def test_filter_proper_noun():
    kept, rejects = run_filters("John McCain Defeated Sarah Palin In Phoenix.",
                                "John McCain Met Sarah Palin In Phoenix.")
    assert rejects[0][1] == "proper-noun"


def test_filter_spelling_wordlist_and_anagram():
    kept, rejects = run_filters("He recieved and beleived teh story.",
                                "He received and believed the story.")
    assert rejects[0][1] == "spelling-grammar"


def test_filter_spelling_inflection():
    kept, rejects = run_filters("Two dog, three bird, four boat and five cow.",
                                "Two dogs, three birds, four boats and five cows.")
    assert rejects[0][1] == "spelling-grammar"


def test_filter_mixed_edit_is_not_spelling():
    # one spelling fix plus one real change: keep
    kept, rejects = run_filters("He recieved the dreadful story.",
                                "He received the unusual story.")
    assert len(kept) == 1


def test_filter_reference():
    kept, rejects = run_filters(
        "The comet was discovered in 1858.",
        "The comet was discovered in 1858 <ref>Smith 1990</ref>.")
    assert rejects[0][1] == "reference-hyperlink"


def test_filter_non_literary_markup():
    kept, rejects = run_filters("He said {| stats |} here.",
                                "He said {| statistics |} here.")
    assert rejects[0][1] == "non-literary"


def test_filter_non_literary_punctuation_only():
    kept, rejects = run_filters("The game was great ...",
                                "The game was great !!!!")
    assert rejects[0][1] == "non-literary"


# -- length ratio -----------------------------------------------------------


def mk_ratio_pair(n, m):
    return pair(sent(*(["a"] * n)), sent(*(["a"] * m)))


def test_length_ratio_uniform_drops_nothing():
    pairs = [mk_ratio_pair(4, 4) for _ in range(100)]
    survivors, dropped, applied = length_ratio_filter(pairs)
    assert applied and len(survivors) == 100 and dropped == []


def test_length_ratio_drops_outlier():
    pairs = [mk_ratio_pair(4, 4) for _ in range(99)] + [mk_ratio_pair(20, 4)]
    survivors, dropped, applied = length_ratio_filter(pairs)
    assert len(survivors) == 99
    assert len(dropped) == 1 and len(dropped[0].source) == 20


def test_length_ratio_nearest_rank_oracle():
    # 40 pairs, ratios 1..40 scaled: nearest-rank p95 index = ceil(0.95*40) = 38
    pairs = [mk_ratio_pair(k, 1) for k in range(1, 41)]
    ratios = sorted(max(len(p.source), 1) for p in pairs)
    cutoff = ratios[math.ceil(0.95 * 40) - 1]
    survivors, dropped, _ = length_ratio_filter(pairs)
    assert cutoff == 38
    assert len(survivors) == 38 and len(dropped) == 2


def test_length_ratio_too_few_errors():
    pairs = [mk_ratio_pair(3, 3) for _ in range(19)]
    with pytest.raises(ValueError):
        length_ratio_filter(pairs)
    survivors, dropped, applied = length_ratio_filter(pairs, force=True)
    assert not applied and len(survivors) == 19


# -- record parsing ---------------------------------------------------------


def test_parse_records_skips_malformed():
    seen = []
    lines = [
        '{"rev_id": "a", "category": "c", "comment": "", "pre_text": "x", "post_text": "y"}',
        "not json at all",
        '{"rev_id": "b", "category": "c", "comment": ""}',
        "",
    ]
    out = list(parse_records(lines, on_malformed=lambda n, e: seen.append(n)))
    assert [r.rev_id for r in out] == ["a"]
    assert seen == [2, 3]


# -- full fixture: hand-derived golden membership ---------------------------
#
# Outcome of applying each rule by hand, record by record:
#   r01 kept single-word (militants->forces)        r11 non-literary (punct-only)
#   r02 kept single-word + 2 neutral sentences      r12 no-alignment (zero overlap)
#   r03 multi-sentence (2 changed pairs)            r13 kept multi-word (2 tokens)
#   r04 min-edit (lev 2)                            r14 kept single-word delete
#   r05 max-edit (6 of 9 changed)                   r15 kept single-word
#   r06 proper-noun (6 of 8)                        r16 kept single-word
#   r07 spelling (wordlist/anagram x3)              r17 kept single-word delete
#   r08 spelling (inflection x4)                    r18 kept single-word
#   r09 reference-hyperlink (<ref added)            r19 kept single-word delete
#   r10 non-literary ({| markup)                    r20 case-only -> neutral

EXPECT_FULL = ["r01", "r02", "r13", "r14", "r15", "r16", "r17", "r18", "r19"]
EXPECT_WORD = ["r01", "r02", "r14", "r15", "r16", "r17", "r18", "r19"]
EXPECT_NEUTRAL_RAW = [
    "The plan has critics.",
    "It will be reviewed.",
    "the internet changed everything.",
]
EXPECT_REJECTS = {
    "multi-sentence": 2,
    "min-edit": 1,
    "max-edit": 1,
    "proper-noun": 1,
    "spelling-grammar": 2,
    "reference-hyperlink": 1,
    "non-literary": 2,
    "length-ratio": 0,
    "no-alignment": 1,
}


def test_fixture_membership_matches_hand_derivation():
    splits = build_corpus_from_file(FIXTURE)
    assert [lp.pair.rev_id for lp in splits.biased_full] == EXPECT_FULL
    assert [lp.pair.rev_id for lp in splits.biased_word] == EXPECT_WORD
    assert [p.source.raw for p in splits.neutral] == EXPECT_NEUTRAL_RAW
    assert splits.rejects == EXPECT_REJECTS
    assert splits.records == 20 and splits.malformed == 0
    assert not splits.length_filter_applied


def test_fixture_single_word_labels():
    splits = build_corpus_from_file(FIXTURE)
    for lp in splits.biased_word:
        assert sum(lp.labels) == 1
    r01 = splits.biased_word[0]
    assert list(r01.labels) == [0, 0, 0, 0, 1, 0]
    stats = corpus_stats(splits)
    assert stats["splits"]["biased_word"]["mean_revised"] == 1.0


def test_fixture_kept_pairs_pass_every_filter_individually():
    splits = build_corpus_from_file(FIXTURE)
    wl = load_wordlist()
    for lp in splits.biased_full:
        p = lp.pair
        again = apply_filters(
            rp(p.source.raw, p.target.raw, p.rev_id), [p], wordlist=wl)
        assert again[0] == [p]


def test_fixture_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_corpus(build_corpus_from_file(FIXTURE), a)
    write_corpus(build_corpus_from_file(FIXTURE), b)
    for name in ("biased_full.jsonl", "biased_word.jsonl", "neutral.jsonl",
                 "stats.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fixture_word_split_subset_of_full():
    splits = build_corpus_from_file(FIXTURE)
    full = {(lp.pair.rev_id, lp.pair.source.raw) for lp in splits.biased_full}
    word = {(lp.pair.rev_id, lp.pair.source.raw) for lp in splits.biased_word}
    assert word <= full
