"""Metric and filter checks against independent counting oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from copyforge import corpus as cp
from copyforge import quality as ql
from synth import grammar_corpus

# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def oracle_ngram_list(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def oracle_bleu(cand: list[str], refs: list[list[str]], max_n: int,
                smoothing: bool = True) -> float:
    if not cand:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        grams = oracle_ngram_list(cand, n)
        total = len(grams)
        matched = 0
        for g in set(grams):
            occurrences = sum(1 for x in grams if x == g)
            clip = max(sum(1 for x in oracle_ngram_list(r, n) if x == g) for r in refs)
            matched += min(occurrences, clip)
        if smoothing and n >= 2 and matched == 0:
            matched, total = 1, total + 1
        if matched == 0:
            return 0.0
        logs.append(math.log(matched / total))
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / max_n)


def oracle_rouge_n(cand: list[str], ref: list[str], n: int) -> tuple[float, float, float]:
    cg, rg = oracle_ngram_list(cand, n), oracle_ngram_list(ref, n)
    overlap = 0
    for g in set(cg):
        overlap += min(sum(1 for x in cg if x == g), sum(1 for x in rg if x == g))
    p = overlap / len(cg) if cg else 0.0
    r = overlap / len(rg) if rg else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def oracle_meteor(cand: list[str], ref: list[str]) -> float:
    if not cand or not ref:
        return 0.0
    alignments: list[list[tuple[int, int]]] = []

    def rec(i: int, used: frozenset, pairs: list[tuple[int, int]]) -> None:
        if i == len(cand):
            alignments.append(list(pairs))
            return
        rec(i + 1, used, pairs)
        for j, tok in enumerate(ref):
            if tok == cand[i] and j not in used:
                rec(i + 1, used | {j}, pairs + [(i, j)])

    rec(0, frozenset(), [])
    best_m = max(len(p) for p in alignments)
    if best_m == 0:
        return 0.0

    def chunks(pairs: list[tuple[int, int]]) -> int:
        pairs = sorted(pairs)
        count = 1
        for (c0, r0), (c1, r1) in zip(pairs, pairs[1:]):
            if not (c1 == c0 + 1 and r1 == r0 + 1):
                count += 1
        return count

    ch = min(chunks(p) for p in alignments if len(p) == best_m)
    p = best_m / len(cand)
    r = best_m / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1 - 0.5 * (ch / best_m) ** 3)


def random_tokens(rng: np.random.Generator, lo: int = 1, hi: int = 8) -> list[str]:
    alphabet = ["a", "b", "c", "d"]
    return [alphabet[i] for i in rng.integers(0, len(alphabet), size=rng.integers(lo, hi + 1))]


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def test_bleu_identical_is_exactly_one() -> None:
    toks = "the quick brown fox jumps".split()
    assert ql.bleu(toks, [toks]) == 1.0
    assert ql.bleu(["a", "b"], [["a", "b"]]) == 1.0  # short: smoothed higher orders


def test_bleu_worked_example_brevity_penalty() -> None:
    score = ql.bleu(["the", "cat"], [["the", "cat", "sat"]], max_n=1)
    assert score == pytest.approx(0.6065, abs=1e-4)
    assert score == pytest.approx(math.exp(1 - 3 / 2), abs=1e-12)


def test_bleu_disjoint_and_empty() -> None:
    assert ql.bleu(["x", "y"], [["a", "b"]]) == 0.0
    assert ql.bleu([], [["a"]]) == 0.0


def test_bleu_validation() -> None:
    with pytest.raises(ql.QualityError):
        ql.bleu(["a"], [["a"]], max_n=5)
    with pytest.raises(ql.QualityError):
        ql.bleu(["a"], [])


def test_bleu_matches_oracle_on_random_pairs() -> None:
    rng = np.random.default_rng(60)
    for _ in range(50):
        cand = random_tokens(rng)
        refs = [random_tokens(rng) for _ in range(int(rng.integers(1, 3)))]
        for n in (1, 2, 3, 4):
            assert ql.bleu(cand, refs, max_n=n) == oracle_bleu(cand, refs, n)


def test_sacre_bleu_standardizes_tokenization() -> None:
    a = ql.sacre_bleu("The cat sat, happily.", ["the cat sat , happily ."])
    assert a == 1.0
    assert ql.standardize_tokens("The cat sat, happily.") == \
        ["the", "cat", "sat", ",", "happily", "."]


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------


def test_rouge_identical_is_ones() -> None:
    toks = "a b c d e".split()
    for variant in (1, 2, "L"):
        assert ql.rouge(toks, toks, variant) == (1.0, 1.0, 1.0)


def test_rouge_l_worked_example() -> None:
    p, r, f = ql.rouge("a b c d".split(), "a c d".split(), "L")
    assert p == pytest.approx(0.75)
    assert r == pytest.approx(1.0)
    assert f == pytest.approx(6 / 7, abs=1e-4)


def test_rouge_degenerate_cases() -> None:
    assert ql.rouge([], ["a"], 1) == (0.0, 0.0, 0.0)
    assert ql.rouge(["a"], ["a", "b"], 2) == (0.0, 0.0, 0.0)  # no candidate bigrams
    with pytest.raises(ql.QualityError):
        ql.rouge(["a"], [], 1)
    with pytest.raises(ql.QualityError):
        ql.rouge(["a"], ["a"], 3)


def test_rouge_matches_oracle_on_random_pairs() -> None:
    rng = np.random.default_rng(61)
    for _ in range(50):
        cand, ref = random_tokens(rng), random_tokens(rng)
        for n in (1, 2):
            assert ql.rouge(cand, ref, n) == oracle_rouge_n(cand, ref, n)
        p, r, f = ql.rouge(cand, ref, "L")
        lcs = cp.lcs_length(cand, ref)
        assert p == (lcs / len(cand) if cand else 0.0)
        assert r == lcs / len(ref)


# ---------------------------------------------------------------------------
# Meteor-lite
# ---------------------------------------------------------------------------


def test_meteor_identical_five_tokens() -> None:
    toks = "a b c d e".split()
    assert ql.meteor_lite(toks, toks) == pytest.approx(1 * (1 - 0.5 * (1 / 5) ** 3), abs=1e-12)
    assert ql.meteor_lite(toks, toks) == pytest.approx(0.996, abs=1e-4)


def test_meteor_reversed_distinct_tokens() -> None:
    ref = "a b c d e".split()
    cand = list(reversed(ref))
    # five isolated matches: penalty 0.5, F_mean 1
    assert ql.meteor_lite(cand, ref) == pytest.approx(0.5, abs=1e-12)


def test_meteor_disjoint_and_empty() -> None:
    assert ql.meteor_lite(["x"], ["y"]) == 0.0
    assert ql.meteor_lite([], ["y"]) == 0.0
    with pytest.raises(ql.QualityError):
        ql.meteor_lite(["x"], [])


def test_meteor_matches_exhaustive_oracle() -> None:
    rng = np.random.default_rng(62)
    for _ in range(50):
        cand, ref = random_tokens(rng, 1, 7), random_tokens(rng, 1, 7)
        assert ql.meteor_lite(cand, ref) == pytest.approx(oracle_meteor(cand, ref), abs=1e-12)


def test_meteor_prefers_contiguous_alignment() -> None:
    # "b a b" vs "a b": max matches 2; aligning the contiguous "a b" gives 1 chunk
    assert ql.meteor_lite(["b", "a", "b"], ["a", "b"]) == \
        pytest.approx(oracle_meteor(["b", "a", "b"], ["a", "b"]), abs=1e-12)


# ---------------------------------------------------------------------------
# metric report
# ---------------------------------------------------------------------------


def test_scores_all_within_unit_interval() -> None:
    rng = np.random.default_rng(63)
    for _ in range(25):
        cand, ref = random_tokens(rng), random_tokens(rng)
        row = ql.score_pair(" ".join(cand), " ".join(ref))
        for col in ql.METRIC_COLUMNS:
            assert 0.0 <= row[col] <= 1.0, col


def test_report_table_shape_and_order() -> None:
    report = ql.evaluate_pairs([("the cat sat", "the cat sat"),
                                ("a b", "c d")])
    table = report.to_table()
    lines = table.splitlines()
    assert lines[0].split("\t") == ["item", "SacreBLEU", "ROUGE-1", "ROUGE-2",
                                    "ROUGE-L", "BLEU-1", "BLEU-2", "BLEU-3",
                                    "BLEU-4", "Meteor"]
    assert len(lines) == 4  # header + 2 items + mean
    first = lines[1].split("\t")
    assert first[1] == "100.00"  # identical pair, scaled display
    with pytest.raises(ql.QualityError):
        ql.evaluate_pairs([])


# ---------------------------------------------------------------------------
# term/number rules
# ---------------------------------------------------------------------------


def make_lexicon() -> ql.TermLexicon:
    return ql.TermLexicon.from_json({
        "phone": {
            "terms": ["iphone", "foldable", "webcam", "battery", "screen"],
            "forbidden_combinations": [["foldable", "webcam"]],
            "licensed_numbers": ["24"],
        },
    })


def phone_record(**overrides) -> cp.ProductRecord:
    fields = dict(
        sku="p1",
        title="iphone 12 case",
        attributes=(("battery", "4000mAh"), ("screen", "6.1in")),
        slogan="all day power",
        category="phone",
    )
    fields.update(overrides)
    return cp.ProductRecord(**fields)


def test_number_mismatch_rejected_with_evidence() -> None:
    verdict = ql.check_terms_numbers("huge 5000mAh battery", phone_record(), make_lexicon())
    assert not verdict.accepted
    assert ("number_mismatch", "5000mAh") in verdict.reasons


def test_numbers_present_in_input_accepted() -> None:
    verdict = ql.check_terms_numbers("a 4000mAh battery and 6.1in screen",
                                     phone_record(), make_lexicon())
    assert verdict.accepted and verdict.reasons == ()


def test_number_normalization_thousands_separator() -> None:
    verdict = ql.check_terms_numbers("battery holds 4,000mAh", phone_record(), make_lexicon())
    assert verdict.accepted


def test_licensed_numbers_allowed() -> None:
    verdict = ql.check_terms_numbers("ready 24 hours a day", phone_record(), make_lexicon())
    assert verdict.accepted


def test_unit_must_match_too() -> None:
    verdict = ql.check_terms_numbers("a 4000mWh battery", phone_record(), make_lexicon())
    assert not verdict.accepted
    assert verdict.reasons[0][0] == "number_mismatch"


def test_forbidden_combination_needs_all_terms() -> None:
    lex = make_lexicon()
    only_one = ql.check_terms_numbers("great webcam quality", phone_record(), lex)
    assert only_one.accepted
    both = ql.check_terms_numbers("a foldable webcam accessory", phone_record(), lex)
    assert not both.accepted
    assert ("forbidden_combination", "foldable + webcam") in both.reasons


def test_forbidden_combination_licensed_by_input() -> None:
    lex = make_lexicon()
    rec = phone_record(title="foldable webcam stand", category="phone")
    verdict = ql.check_terms_numbers("a foldable webcam you can carry", rec, lex)
    assert verdict.accepted


def test_missing_category_defers() -> None:
    verdict = ql.check_terms_numbers("anything", phone_record(category="toys"), make_lexicon())
    assert not verdict.accepted
    assert verdict.reasons == (("no_lexicon", "toys"),)


def test_lexicon_rules_must_reference_known_terms() -> None:
    with pytest.raises(ql.QualityError):
        ql.TermLexicon.from_json({
            "x": {"terms": ["a"], "forbidden_combinations": [["a", "ghost"]],
                  "licensed_numbers": []},
        })


def test_lexicon_file_round_trip(tmp_path) -> None:
    lex = make_lexicon()
    path = tmp_path / "lexicon.json"
    lex.dump(path)
    back = ql.TermLexicon.load(path)
    assert back.categories == lex.categories


def test_verdict_invariant() -> None:
    with pytest.raises(ql.QualityError):
        ql.FilterVerdict(accepted=True, reasons=(("x", "y"),))


# ---------------------------------------------------------------------------
# AdaBoost
# ---------------------------------------------------------------------------


def test_adaboost_separable_1d_single_round() -> None:
    x = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([1, 1, 1, -1, -1, -1])
    ens = ql.adaboost_train(x, y, rounds=10)
    assert ens.rounds == 1  # perfect stump, early stop
    assert ens.epsilons == [0.0]
    assert np.array_equal(ens.predict(x), y)
    assert ens.error_bound() == 0.0


def test_adaboost_requires_both_classes() -> None:
    x = np.zeros((4, 2))
    with pytest.raises(ql.QualityError):
        ql.adaboost_train(x, np.ones(4, dtype=int), rounds=3)
    with pytest.raises(ql.QualityError):
        ql.adaboost_train(x, np.array([1, 1, -1, -1]), rounds=0)


def test_adaboost_weights_renormalized_each_round() -> None:
    rng = np.random.default_rng(64)
    x = rng.normal(size=(40, 2))
    y = np.where(x[:, 0] + 0.3 * x[:, 1] > 0, 1, -1)
    ens = ql.adaboost_train(x, y, rounds=6)
    for s in ens.weight_sums:
        assert s == pytest.approx(1.0, abs=1e-9)


def test_adaboost_error_decreases_and_bound_holds() -> None:
    # staircase labels along x0: one stump cannot fit, several can
    x = np.array([[i, (i * 7) % 5] for i in range(16)], dtype=float)
    y = np.array([1, 1, 1, 1, -1, -1, -1, -1, 1, 1, 1, 1, -1, -1, -1, -1])
    first = ql.adaboost_train(x, y, rounds=1)
    err1 = float(np.mean(first.predict(x) != y))
    assert err1 > 0.0
    full = ql.adaboost_train(x, y, rounds=25)
    err_full = float(np.mean(full.predict(x) != y))
    assert err_full < err1
    for eps in full.epsilons:
        assert eps < 0.5
    for alpha in full.alphas:
        assert alpha > 0.0
    assert err_full <= full.error_bound() + 1e-12
    # the bound is the product of per-round factors <= 1, so it never grows
    bounds = []
    running = 1.0
    for eps in full.epsilons:
        running *= 2.0 * math.sqrt(eps * (1.0 - eps))
        bounds.append(running)
    assert all(b1 >= b2 - 1e-15 for b1, b2 in zip(bounds, bounds[1:]))


def test_adaboost_ensemble_json_round_trip() -> None:
    x = np.array([[0.0], [1.0], [5.0], [6.0]])
    y = np.array([1, 1, -1, -1])
    ens = ql.adaboost_train(x, y, rounds=3)
    back = ql.StumpEnsemble.from_json(ens.to_json())
    assert back.stumps == ens.stumps
    assert back.alphas == ens.alphas
    assert np.array_equal(back.predict(x), ens.predict(x))


# ---------------------------------------------------------------------------
# grammar features and filter
# ---------------------------------------------------------------------------


def test_grammar_features_fixed_order_and_values() -> None:
    assert np.array_equal(ql.grammar_features(""), np.zeros(7))
    feats = ql.grammar_features("a a a a")
    assert feats[0] == 4.0       # length
    assert feats[1] == 0.25      # type/token ratio
    assert feats[2] == 4.0       # max repeated run
    again = ql.grammar_features("a a a a")
    assert np.array_equal(feats, again)


def test_grammar_features_sentences_punct_oov() -> None:
    vocab = cp.build_vocab([["red", "dress", "soft"]])
    feats = ql.grammar_features("red dress. soft glow.", vocab=vocab)
    assert feats[0] == 4.0
    assert feats[6] == pytest.approx(2.0)            # 4 tokens / 2 sentences
    assert feats[5] == pytest.approx(0.5)            # "dress." and "glow." keep the dot
    assert feats[4] == pytest.approx(2 / 18)         # 2 dots over 18 glyphs


def test_grammar_filter_train_then_reject_degenerate() -> None:
    rng = np.random.default_rng(65)
    texts, labels = grammar_corpus(rng, 60)
    x = np.stack([ql.grammar_features(t) for t in texts])
    ens = ql.adaboost_train(x, np.array(labels), rounds=12)
    assert ql.grammar_filter("x x x x x x x x x x", ens, 0.0).accepted is False
    good = "soft red dress with gentle lining. fits well in every season."
    assert ql.grammar_filter(good, ens, 0.0).accepted
    reject = ql.grammar_filter("x x x x x x x x x x", ens, 0.0)
    assert reject.reasons[0][0] == "grammar"


def test_grammar_filter_threshold_minus_infinity_accepts_all() -> None:
    x = np.array([[0.0], [1.0], [5.0], [6.0]])
    y = np.array([1, 1, -1, -1])
    ens = ql.adaboost_train(x, y, rounds=2)
    assert ql.grammar_filter("anything at all", ens, float("-inf")).accepted
    with pytest.raises(ql.QualityError):
        ql.grammar_filter("text", ql.StumpEnsemble(), 0.0)


def test_filters_commute_on_outcome() -> None:
    rng = np.random.default_rng(66)
    texts, labels = grammar_corpus(rng, 30)
    x = np.stack([ql.grammar_features(t) for t in texts])
    ens = ql.adaboost_train(x, np.array(labels), rounds=10)
    lex = make_lexicon()
    rec = phone_record()
    candidates = [
        "a 4000mAh battery that lasts",
        "a 9999mAh battery that lasts",
        "x x x x x x x x x x",
        "soft case with all day power. fits the 4000mAh battery well.",
    ]
    for text in candidates:
        tn_first = ql.check_terms_numbers(text, rec, lex).accepted and \
            ql.grammar_filter(text, ens, 0.0).accepted
        gr_first = ql.grammar_filter(text, ens, 0.0).accepted and \
            ql.check_terms_numbers(text, rec, lex).accepted
        assert tn_first == gr_first
