"""Metric fixtures.

Every numeric expectation in here was worked out by hand (token tables and
n-gram counts on paper) before the metrics module was written; keep them
frozen.
"""

import json
import math
import random

import pytest

from iglu_blocks.metrics import (
    EpisodeSummary,
    bleu,
    completion_rate,
    corpus_bleu,
    corpus_keyword_pr,
    default_lexicon,
    keyword_pr,
    load_lexicon,
    reward_score,
    rho,
    success_rate,
    summarize_episode,
    tokenize,
)
from iglu_blocks.voxel import Block, BlockColor, Structure


def struct(*blocks):
    return Structure([Block(*b) for b in blocks])


# -- episode scores ------------------------------------------------------------


def summaries(*gs_cs_rhos):
    return [
        EpisodeSummary(task_id=f"t{i}", g=g, c=c, rho=r, steps_used=10)
        for i, (g, c, r) in enumerate(gs_cs_rhos)
    ]


def test_reward_score_mean():
    assert reward_score(summaries((2, 0, 0.5), (4, 0, 0.5))) == 3.0
    assert reward_score(summaries((7, 0, 0.2))) == 7.0


def test_per_step_rewards_cancel():
    # +2 -2 +1 -1 inside one episode sum to g = 0.
    g = sum([+2, -2, +1, -1])
    assert reward_score(summaries((g, 0, 0.3))) == 0.0


def test_success_rate_fraction():
    assert success_rate(summaries((0, 1, 0.0), (0, 0, 0.4))) == 0.5
    assert success_rate(summaries((0, 1, 0.0), (0, 1, 0.0))) == 1.0


def test_completion_rate_is_one_minus_rho():
    vals = summaries((0, 0, 0.25), (0, 0, 0.75))
    assert completion_rate(vals) == pytest.approx(0.5, abs=1e-12)


def test_empty_batch_rejected():
    for fn in (reward_score, success_rate, completion_rate):
        with pytest.raises(ValueError):
            fn([])


def test_scores_permutation_invariant():
    rng = random.Random(3)
    batch = summaries(*[(rng.randint(-5, 10), 0, rng.random() * 0.9 + 0.05) for _ in range(9)])
    shuffled = batch[:]
    rng.shuffle(shuffled)
    assert reward_score(batch) == pytest.approx(reward_score(shuffled), abs=1e-12)
    assert completion_rate(batch) == pytest.approx(completion_rate(shuffled), abs=1e-12)


def test_summary_invariants_enforced():
    with pytest.raises(ValueError):
        EpisodeSummary("t", 0, 2, 0.0, 1)
    with pytest.raises(ValueError):
        EpisodeSummary("t", 0, 0, 1.5, 1)
    with pytest.raises(ValueError):
        EpisodeSummary("t", 0, 1, 0.25, 1)  # success forces rho == 0


# -- rho ------------------------------------------------------------------------


def test_rho_zero_on_exact_and_transformed_match():
    target = struct((2, 0, 2, BlockColor.RED), (3, 0, 2, BlockColor.RED))
    assert rho(target, target) == 0.0
    shifted = struct((4, 0, 7, BlockColor.RED), (5, 0, 7, BlockColor.RED))
    assert rho(shifted, target) == 0.0


def test_rho_one_when_nothing_built():
    target = struct(*[(x, 0, 0, BlockColor.RED) for x in range(5)])
    assert rho(Structure([]), target) == 1.0


def test_rho_partial_fixture():
    # |T|=5, |B|=4, M=4  ->  (5+4-8)/9 = 1/9.
    target = struct(*[(x, 0, 0, BlockColor.RED) for x in range(5)])
    built = struct(*[(x, 0, 0, BlockColor.RED) for x in range(4)])
    assert rho(built, target) == pytest.approx(1.0 / 9.0, abs=1e-12)


def test_summarize_episode_derives_success():
    target = struct((0, 0, 0, BlockColor.GREEN))
    s = summarize_episode("x", g=2, built=target, target=target, steps_used=4)
    assert (s.c, s.rho) == (1, 0.0)
    s2 = summarize_episode("x", g=0, built=Structure([]), target=target, steps_used=4)
    assert (s2.c, s2.rho) == (0, 1.0)


# -- tokenization ----------------------------------------------------------------


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("Place a RED block!") == ["place", "a", "red", "block", "!"]
    assert tokenize("okay, build it") == ["okay", ",", "build", "it"]
    assert tokenize("  ") == []
    assert tokenize("3x3 grid") == ["3x3", "grid"]


# -- BLEU -------------------------------------------------------------------------


def test_bleu_identity_is_one():
    text = "put a blue block on top of the red block"
    assert bleu(text, [text], 4) == pytest.approx(1.0, abs=1e-9)


def test_bleu1_three_quarters():
    # cand {place, a, red, block} vs ref {place, the, red, block}: 3/4 match.
    assert bleu("place a red block", ["place the red block"], 1) == pytest.approx(0.75, abs=1e-9)


def test_bleu2_hand_value():
    # p1 = 3/4, p2 = 1/3 (only "red block" bigram matches) -> sqrt(1/4) = 0.5.
    assert bleu("place a red block", ["place the red block"], 2) == pytest.approx(0.5, abs=1e-9)


def test_bleu3_and_4_zero_without_higher_grams():
    assert bleu("place a red block", ["place the red block"], 3) == 0.0
    assert bleu("place a red block", ["place the red block"], 4) == 0.0


def test_bleu_clips_repeated_unigrams():
    # "the" appears once in the reference: clipped 1/4, BP = 1 (cand longer).
    assert bleu("the the the the", ["the cat"], 1) == pytest.approx(0.25, abs=1e-9)


def test_bleu_brevity_penalty_hand_values():
    # cand [ok , build it] (4) vs ref [okay , build it now please] (6):
    # p1 = 3/4, p2 = 2/3, BP = exp(1 - 6/4).
    bp = math.exp(1.0 - 6.0 / 4.0)
    assert bleu("ok, build it", ["okay, build it now please"], 1) == pytest.approx(0.75 * bp, abs=1e-9)
    expected2 = math.sqrt(0.75 * (2.0 / 3.0)) * bp
    assert bleu("ok, build it", ["okay, build it now please"], 2) == pytest.approx(expected2, abs=1e-9)


def test_bleu_bp_tie_prefers_shorter_reference():
    # Lengths 3 and 5 are both one away from 4; the shorter wins, so BP = 1.
    assert bleu("a b c d", ["a b c", "a b c d e"], 1) == pytest.approx(1.0, abs=1e-9)


def test_bleu_no_overlap_is_zero():
    assert bleu("red", ["blue"], 1) == 0.0


def test_bleu_candidate_shorter_than_order():
    assert bleu("red block", ["red block"], 3) == 0.0


def test_bleu_rejects_empty_candidate():
    with pytest.raises(ValueError):
        bleu("   ", ["anything"], 1)
    with pytest.raises(ValueError):
        bleu("hello", [], 1)
    with pytest.raises(ValueError):
        bleu("hello", ["hello"], 5)


def test_bleu_nonincreasing_in_n_and_ref_permutation_invariant():
    rng = random.Random(17)
    vocab = ["red", "blue", "block", "on", "top", "the", "a", "put", ","]
    for _ in range(60):
        cand = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
        refs = [
            " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            for _ in range(rng.randint(1, 3))
        ]
        scores = [bleu(cand, refs, n) for n in (1, 2, 3, 4)]
        for lo, hi in zip(scores[1:], scores[:-1]):
            assert lo <= hi + 1e-12
        shuffled = refs[:]
        rng.shuffle(shuffled)
        assert bleu(cand, shuffled, 4) == pytest.approx(scores[3], abs=1e-12)


def test_corpus_bleu_pools_counts():
    pairs = [("a b", ["a b"]), ("c d", ["c x"])]
    # Pooled: p1 = 3/4, p2 = 1/2, lengths 4 vs 4 -> BP 1.
    assert corpus_bleu(pairs, 2) == pytest.approx(math.sqrt(0.375), abs=1e-9)
    # Not the mean of sentence scores (second sentence alone scores 0).
    assert corpus_bleu(pairs, 2) != pytest.approx(
        (bleu("a b", ["a b"], 2) + bleu("c d", ["c x"], 2)) / 2, abs=1e-3
    )


# -- keyword precision / recall -----------------------------------------------------


def test_keyword_colors_perfect_pair():
    out = keyword_pr("place a red block", "put one red block on top")
    assert out["colors"] == (1.0, 1.0)
    # No spatial token in the candidate: precision undefined, recall 0.
    assert out["spatial"] == (None, 0.0)
    assert out["dialog"] == (None, None)
    assert out["all"] == (1.0, 0.5)


def test_keyword_identity_pair_all_ones():
    text = "no , put the red block on the left"
    out = keyword_pr(text, text)
    for cat in ("colors", "spatial", "dialog", "all"):
        assert out[cat] == (1.0, 1.0)


def test_keyword_multiset_counting():
    out = keyword_pr("red red block", "red block")
    assert out["colors"] == (0.5, 1.0)


def test_corpus_keyword_is_micro_averaged():
    pairs = [("red", "red"), ("blue blue", "blue")]
    out = corpus_keyword_pr(pairs)
    p, r = out["colors"]
    assert p == pytest.approx(2.0 / 3.0, abs=1e-12)  # (1+1)/(1+2), not mean of 1 and 0.5
    assert r == pytest.approx(1.0, abs=1e-12)


def test_corpus_keyword_undefined_when_no_tokens():
    out = corpus_keyword_pr([("go there", "move it")])
    assert out["colors"] == (None, None)


def test_keyword_scores_bounded():
    rng = random.Random(23)
    lex = default_lexicon()
    vocab = ["red", "left", "okay", "block", "the", "move", "yes", "top", "blue"]
    for _ in range(80):
        cand = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 8)))
        ref = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 8)))
        for p, r in keyword_pr(cand, ref, lex).values():
            if p is not None:
                assert 0.0 <= p <= 1.0
            if r is not None:
                assert 0.0 <= r <= 1.0


# -- lexicon loading -----------------------------------------------------------------


def test_default_lexicon_contents():
    lex = default_lexicon()
    assert "red" in lex.colors and len(lex.colors) == 6
    assert "above" in lex.spatial and "left" in lex.spatial
    assert "okay" in lex.dialog and "undo" in lex.dialog


def test_load_lexicon_from_file(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({"colors": ["Cyan"], "spatial": ["near"], "dialog": ["hm"]}))
    lex = load_lexicon(path)
    assert "cyan" in lex.colors
    out = keyword_pr("a cyan block near here", "cyan thing near", lex)
    assert out["colors"] == (1.0, 1.0)
    assert out["spatial"] == (1.0, 1.0)


def test_load_lexicon_missing_category(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"colors": ["red"]}))
    with pytest.raises(ValueError):
        load_lexicon(path)
