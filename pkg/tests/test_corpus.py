"""Corpus, vocab, cleaning, and pre-training builder checks.

The pseudo-summary selection is verified against an independent bitmask
enumeration oracle with its own memoized LCS.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import pytest

from copyforge import corpus as cp


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def oracle_lcs(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def oracle_best_psg_score(doc: cp.Document, k: int) -> int:
    """Max over every k-subset of token-LCS(selected concat, remainder concat)."""
    m = doc.m
    best = -1
    for mask in range(1 << m):
        if bin(mask).count("1") != k:
            continue
        sel: list[str] = []
        rest: list[str] = []
        for i in range(m):
            (sel if mask >> i & 1 else rest).extend(doc.sentences[i])
        best = max(best, oracle_lcs(tuple(sel), tuple(rest)))
    return best


def random_doc(rng: np.random.Generator, m: int, vocab=("a", "b", "c", "d", "e")) -> cp.Document:
    sentences = tuple(
        tuple(str(vocab[i]) for i in rng.integers(0, len(vocab), size=rng.integers(1, 6)))
        for _ in range(m)
    )
    return cp.Document(sentences=sentences, doc_id=f"doc-{m}")


# ---------------------------------------------------------------------------
# tokenize / vocab
# ---------------------------------------------------------------------------


def test_tokenize_modes() -> None:
    assert cp.tokenize("") == []
    assert cp.tokenize("red silk dress") == ["red", "silk", "dress"]
    assert cp.tokenize("abcde", mode="character") == ["a", "b", "c", "d", "e"]
    assert cp.detokenize(["red", "silk"]) == "red silk"
    with pytest.raises(cp.CorpusError):
        cp.tokenize("x", mode="bytes")


def test_tokenize_round_trip_normalized() -> None:
    text = "  a   b\tc  "
    toks = cp.tokenize(text)
    assert cp.tokenize(cp.detokenize(toks)) == toks


def test_vocab_frequency_and_tiebreak() -> None:
    v = cp.build_vocab(["a a b"])
    assert v.encode("a") < v.encode("b")
    assert v.encode("a") == len(cp.SPECIALS)
    # equal frequency: lexicographically smaller token gets the smaller id
    v2 = cp.build_vocab(["zeta alpha"])
    assert v2.encode("alpha") < v2.encode("zeta")


def test_vocab_min_freq_maps_to_unk() -> None:
    v = cp.build_vocab(["a a b"], min_freq=2)
    assert "b" not in v
    assert v.encode("b") == cp.UNK_ID


def test_vocab_specials_lowest_fixed_order() -> None:
    v = cp.build_vocab(["x y z"])
    for i, tok in enumerate(cp.SPECIALS):
        assert v.encode(tok) == i
    assert v.decode(cp.PAD_ID) == cp.PAD
    assert v.decode(cp.BOS_ID) == cp.BOS
    assert v.decode(cp.EOS_ID) == cp.EOS


def test_vocab_round_trip_bijection() -> None:
    v = cp.build_vocab(["the cat sat on the mat", "a cat ran"])
    for tok in v.tokens:
        assert v.decode(v.encode(tok)) == tok
    for i in range(len(v)):
        assert v.encode(v.decode(i)) == i


def test_vocab_max_size() -> None:
    v = cp.build_vocab(["a a a b b c"], max_size=len(cp.SPECIALS) + 2)
    assert len(v) == len(cp.SPECIALS) + 2
    assert "c" not in v
    with pytest.raises(cp.CorpusError):
        cp.build_vocab(["a"], max_size=3)


# ---------------------------------------------------------------------------
# records / linearization / cleaning
# ---------------------------------------------------------------------------


def test_record_validation() -> None:
    with pytest.raises(cp.CorpusError):
        cp.ProductRecord(sku="", title="t", attributes=())
    with pytest.raises(cp.CorpusError):
        cp.ProductRecord(sku="s", title="t", attributes=(("color", "red"), ("color", "blue")))


def test_linearize_sorted_attrs_and_markers() -> None:
    rec = cp.ProductRecord(
        sku="s1", title="silk dress",
        attributes=(("fit", "slim"), ("color", "red")),
        slogan="pure comfort",
    )
    toks = cp.linearize_product(rec)
    assert toks == [
        "<title>", "silk", "dress",
        "<attr>", "color", ":", "red", "<sep>", "fit", ":", "slim",
        "<slogan>", "pure", "comfort",
    ]
    assert cp.linearize_product(rec) == toks  # deterministic


def test_linearize_augmentation_frozen_seed() -> None:
    rec = cp.ProductRecord(
        sku="s1", title="silk dress",
        attributes=(("color", "red"), ("fit", "slim"), ("size", "m"), ("weave", "satin")),
    )
    toks = cp.linearize_product(rec, augment=True, seed=3)
    assert toks == [
        "<title>", "silk", "dress",
        "<attr>", "weave", ":", "satin", "<sep>", "size", ":", "m",
        "<sep>", "fit", ":", "slim", "<sep>", "color", ":", "red",
    ]
    assert cp.linearize_product(rec, augment=True, seed=3) == toks


def test_linearize_empty_title_rejected() -> None:
    rec = cp.ProductRecord(sku="s1", title="  ", attributes=())
    with pytest.raises(cp.CorpusError):
        cp.linearize_product(rec)


def test_clean_corpus_rules_and_report() -> None:
    rules = cp.CleanRules(min_desc_tokens=3, max_desc_tokens=6, forbidden_terms=("fake",))
    recs = [
        cp.ProductRecord(sku="a", title="t", attributes=(), description="a fine red dress"),
        cp.ProductRecord(sku="a", title="t", attributes=(), description="duplicate sku here ok"),
        cp.ProductRecord(sku="b", title="t", attributes=(), description="too short"),
        cp.ProductRecord(sku="c", title="t", attributes=(), description="one two three four five six seven"),
        cp.ProductRecord(sku="d", title="t", attributes=(), description="this is a Fake item"),
        cp.ProductRecord(sku="e", title="t", attributes=(), description=None),
    ]
    kept, report = cp.clean_corpus(recs, rules)
    assert [r.sku for r in kept] == ["a"]
    assert report == {"duplicate_sku": 1, "too_short": 2, "too_long": 1, "forbidden_term": 1}
    assert cp.clean_corpus([], rules) == ([], {"duplicate_sku": 0, "too_short": 0,
                                               "too_long": 0, "forbidden_term": 0})


def test_corpus_file_round_trip(tmp_path) -> None:
    recs = [
        cp.ProductRecord(sku="s1", title="silk dress", attributes=(("color", "red"),),
                         slogan="so soft", category="apparel",
                         description="a soft red dress", extra_text=None),
        cp.ProductRecord(sku="s2", title="wool hat", attributes=(), category="apparel"),
    ]
    path = tmp_path / "corpus.jsonl"
    cp.write_corpus(recs, path)
    back = cp.read_corpus(path)
    assert back == recs


# ---------------------------------------------------------------------------
# sentence splitting
# ---------------------------------------------------------------------------


def test_split_sentences_counts() -> None:
    assert cp.split_sentences("A. B. C.").m == 3
    doc = cp.split_sentences("A")
    assert doc.m == 1 and doc.sentences[0] == ("A",)
    with pytest.raises(cp.CorpusError, match="empty_document"):
        cp.split_sentences("...")
    with pytest.raises(cp.CorpusError, match="empty_document"):
        cp.split_sentences("   ")


def test_split_sentences_fullwidth_and_mixed() -> None:
    doc = cp.split_sentences("very nice。 really? yes! trailing bit")
    assert doc.m == 4
    assert doc.sentences[-1] == ("trailing", "bit")


# ---------------------------------------------------------------------------
# sentence re-ordering builder
# ---------------------------------------------------------------------------


def test_sr_rejects_single_sentence() -> None:
    doc = cp.Document(sentences=(("only",),))
    with pytest.raises(cp.CorpusError, match="too_few_sentences"):
        cp.make_sr_example(doc, seed=0)


def test_sr_two_sentences_is_the_swap() -> None:
    doc = cp.Document(sentences=(("a",), ("b",)))
    for seed in range(20):
        ex = cp.make_sr_example(doc, seed)
        assert ex.meta["permutation"] == [1, 0]
        assert ex.input == ("b", "a")
        assert ex.target == ("a", "b")


def test_sr_frozen_seed_permutation() -> None:
    doc = cp.Document(sentences=(("a1", "a2"), ("b1",), ("c1", "c2", "c3"), ("d1",)), doc_id="d")
    ex = cp.make_sr_example(doc, seed=42)
    assert ex.meta["permutation"] == [3, 2, 1, 0]
    assert ex.input == ("d1", "c1", "c2", "c3", "b1", "a1", "a2")
    assert ex.target == ("a1", "a2", "b1", "c1", "c2", "c3", "d1")
    assert cp.make_sr_example(doc, seed=42) == ex


def test_sr_multiset_and_non_identity_many_docs() -> None:
    rng = np.random.default_rng(100)
    for i in range(200):
        m = int(rng.integers(2, 9))
        doc = random_doc(rng, m)
        ex = cp.make_sr_example(doc, seed=i)
        assert ex.meta["permutation"] != list(range(m))
        assert sorted(set(ex.meta["permutation"])) == list(range(m))
        # sentence multisets match between input and target
        inp_sents = sorted(doc.sentences[j] for j in ex.meta["permutation"])
        assert inp_sents == sorted(doc.sentences)
        assert ex.objective == cp.OBJECTIVE_SR


# ---------------------------------------------------------------------------
# pseudo-summary builder
# ---------------------------------------------------------------------------


def test_psg_subset_size_rule() -> None:
    expected = {2: 1, 3: 1, 4: 1, 5: 1, 6: 2, 7: 2, 8: 2, 9: 2,
                10: 3, 11: 3, 12: 3, 13: 3, 14: 4, 15: 4, 16: 4}
    for m, k in expected.items():
        assert cp.psg_subset_size(m) == k, f"m={m}"


def test_psg_rejects_single_sentence() -> None:
    with pytest.raises(cp.CorpusError):
        cp.make_psg_example(cp.Document(sentences=(("only",),)))


def test_psg_partition_and_orientation() -> None:
    rng = np.random.default_rng(200)
    for _ in range(50):
        m = int(rng.integers(2, 10))
        doc = random_doc(rng, m)
        ex = cp.make_psg_example(doc)
        sel = ex.meta["selected"]
        assert len(sel) == cp.psg_subset_size(m)
        assert len(set(sel)) == len(sel)
        assert all(0 <= i < m for i in sel)
        rest = [i for i in range(m) if i not in set(sel)]
        flat_sel = tuple(t for i in sel for t in doc.sentences[i])
        flat_rest = tuple(t for i in rest for t in doc.sentences[i])
        assert ex.input == flat_sel
        assert ex.target == flat_rest
        rev = cp.make_psg_example(doc, reverse=True)
        assert rev.input == flat_rest and rev.target == flat_sel


def test_psg_exact_matches_brute_force_oracle() -> None:
    rng = np.random.default_rng(300)
    for _ in range(40):
        m = int(rng.integers(2, 9))
        doc = random_doc(rng, m)
        ex = cp.make_psg_example(doc)
        k = cp.psg_subset_size(m)
        sel = set(ex.meta["selected"])
        flat_sel = tuple(t for i in sorted(sel) for t in doc.sentences[i])
        flat_rest = tuple(t for i in range(m) if i not in sel for t in doc.sentences[i])
        achieved = oracle_lcs(flat_sel, flat_rest)
        assert achieved == oracle_best_psg_score(doc, k)


def test_psg_greedy_path_on_large_doc() -> None:
    rng = np.random.default_rng(400)
    doc = random_doc(rng, 40)  # C(40, 10) far above the exact-search cap
    ex = cp.make_psg_example(doc)
    sel = ex.meta["selected"]
    assert len(sel) == cp.psg_subset_size(40) == 10
    assert len(ex.input) + len(ex.target) == sum(len(s) for s in doc.sentences)


# ---------------------------------------------------------------------------
# LCS
# ---------------------------------------------------------------------------


def test_lcs_known_values() -> None:
    assert cp.lcs_length("a b c d e".split(), "a c e".split()) == 3
    assert cp.lcs_length(["x", "y"], ["x", "y"]) == 2
    assert cp.lcs_length(["a", "b"], ["c", "d"]) == 0
    assert cp.lcs_length([], ["a"]) == 0


def test_lcs_matches_recursive_oracle() -> None:
    rng = np.random.default_rng(500)
    alphabet = ["a", "b", "c"]
    for _ in range(50):
        a = tuple(alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 12)))
        b = tuple(alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 12)))
        assert cp.lcs_length(a, b) == oracle_lcs(a, b)


# ---------------------------------------------------------------------------
# pretrain example file IO
# ---------------------------------------------------------------------------


def test_pretrain_file_round_trip(tmp_path) -> None:
    doc = cp.split_sentences("the cat sat. a dog ran. the cat ran. birds fly.", doc_id="x")
    examples = [cp.make_sr_example(doc, seed=1), cp.make_psg_example(doc)]
    path = tmp_path / "pretrain.jsonl"
    cp.write_pretrain_examples(examples, path)
    back = cp.read_pretrain_examples(path)
    assert back == examples
