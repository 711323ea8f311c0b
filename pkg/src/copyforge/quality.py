"""Evaluation metrics (BLEU, standardized BLEU, ROUGE-1/2/L, Meteor-lite)
and the post-generation gates: term/number consistency rules and an
AdaBoost-of-stumps grammar filter."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusError, Vocab, linearize_product, lcs_length, split_sentences, tokenize


class QualityError(ValueError):
    """Raised on invalid metric/filter inputs."""


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate, references, max_n: int = 4, smoothing: bool = True) -> float:
    """Modified n-gram precision geometric mean times brevity penalty.

    Smoothing replaces an order's 0/x (or 0/0) precision with add-one
    counts, but only for n >= 2; order 1 stays raw so disjoint texts score 0.
    Empty candidate scores 0.
    """
    if not 1 <= max_n <= 4:
        raise QualityError("max_n must be within 1..4")
    refs = [list(r) for r in references]
    if not refs:
        raise QualityError("at least one reference required")
    cand = list(candidate)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        counts = _ngrams(cand, n)
        total = sum(counts.values())
        if total:
            best = Counter()
            for ref in refs:
                rc = _ngrams(ref, n)
                for g in counts:
                    best[g] = max(best[g], rc.get(g, 0))
            matched = sum(min(c, best[g]) for g, c in counts.items())
        else:
            matched = 0
        if smoothing and n >= 2 and matched == 0:
            matched, total = matched + 1, total + 1
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total)
    precision_mean = math.exp(log_sum / max_n)
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]  # closest, tie to shorter
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return precision_mean * bp


_STD_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def standardize_tokens(text: str) -> list[str]:
    """Lowercase and split punctuation into standalone tokens."""
    return _STD_TOKEN_RE.findall(text.lower())


def sacre_bleu(candidate_text: str, reference_texts) -> float:
    """BLEU-4 with smoothing over the standardized tokenization, so scores
    do not depend on upstream tokenizer choices."""
    refs = [standardize_tokens(r) for r in reference_texts]
    return bleu(standardize_tokens(candidate_text), refs, max_n=4, smoothing=True)


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------


def _prf(overlap: float, cand_total: float, ref_total: float) -> tuple[float, float, float]:
    p = overlap / cand_total if cand_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def rouge(candidate, reference, variant) -> tuple[float, float, float]:
    """(precision, recall, F1) for variants 1, 2 (n-gram overlap) or "L"
    (longest common subsequence). Empty candidate gives (0, 0, 0)."""
    ref = list(reference)
    if not ref:
        raise QualityError("reference must be nonempty")
    cand = list(candidate)
    if not cand:
        return (0.0, 0.0, 0.0)
    if variant in (1, 2):
        n = int(variant)
        cc, rc = _ngrams(cand, n), _ngrams(ref, n)
        overlap = sum(min(c, rc.get(g, 0)) for g, c in cc.items())
        return _prf(overlap, sum(cc.values()), sum(rc.values()))
    if variant == "L":
        return _prf(lcs_length(cand, ref), len(cand), len(ref))
    raise QualityError(f"unknown rouge variant: {variant!r}")


# ---------------------------------------------------------------------------
# Meteor-lite
# ---------------------------------------------------------------------------


def _max_matches(cand, ref) -> int:
    cc, rc = Counter(cand), Counter(ref)
    return sum(min(c, rc.get(tok, 0)) for tok, c in cc.items())


_CHUNK_SEARCH_NODE_CAP = 250_000


def _min_chunks(cand, ref, need: int) -> int:
    """Fewest chunks over alignments with the maximum number of matches.

    Depth-first over candidate positions (match to an unused same-token
    reference slot, or skip when enough matches remain), pruned by the best
    chunk count so far. Falls back to a greedy run-first alignment if the
    search exceeds its node budget; at description scale the exact path is
    what runs.
    """
    ref_slots: dict[str, list[int]] = {}
    for j, tok in enumerate(ref):
        ref_slots.setdefault(tok, []).append(j)
    n = len(cand)
    # achievable matches from candidate position i onward (token-count bound)
    suffix_bound = [_max_matches(cand[i:], ref) for i in range(n)] + [0]
    best = need + 1  # a chunk holds at least one match
    nodes = 0
    overflow = False

    def dfs(i: int, used_mask: int, last_ref: int, last_cand: int,
            matches: int, chunks: int) -> None:
        # a chunk continues only when both streams advance by exactly one
        nonlocal best, nodes, overflow
        if overflow:
            return
        nodes += 1
        if nodes > _CHUNK_SEARCH_NODE_CAP:
            overflow = True
            return
        if chunks >= best:
            return
        if matches == need:
            best = chunks
            return
        if i == n or matches + suffix_bound[i] < need:
            return
        for j in ref_slots.get(cand[i], ()):
            bit = 1 << j
            if used_mask & bit:
                continue
            cont = j == last_ref + 1 and i == last_cand + 1
            dfs(i + 1, used_mask | bit, j, i, matches + 1,
                chunks if cont else chunks + 1)
        dfs(i + 1, used_mask, last_ref, last_cand, matches, chunks)

    dfs(0, 0, -2, -2, 0, 0)
    if not overflow and best <= need:
        return best
    # node budget blown: repeatedly take the longest contiguous common run
    return _greedy_chunks(cand, ref, need)


def _greedy_chunks(cand, ref, need: int) -> int:
    cand_free = [True] * len(cand)
    ref_free = [True] * len(ref)
    matched = 0
    chunks = 0
    while matched < need:
        best_len, best_ci, best_rj = 0, -1, -1
        for ci in range(len(cand)):
            for rj in range(len(ref)):
                ln = 0
                while (ci + ln < len(cand) and rj + ln < len(ref)
                       and cand_free[ci + ln] and ref_free[rj + ln]
                       and cand[ci + ln] == ref[rj + ln]):
                    ln += 1
                if ln > best_len:
                    best_len, best_ci, best_rj = ln, ci, rj
        if best_len == 0:
            break
        take = min(best_len, need - matched)
        for t in range(take):
            cand_free[best_ci + t] = False
            ref_free[best_rj + t] = False
        matched += take
        chunks += 1
    return max(chunks, 1)


def meteor_lite(candidate, reference) -> float:
    """Exact-unigram Meteor: align for max matches then fewest chunks;
    F_mean = 10PR/(R+9P); penalty = 0.5 * (chunks/matches)^3."""
    ref = list(reference)
    if not ref:
        raise QualityError("reference must be nonempty")
    cand = list(candidate)
    if not cand:
        return 0.0
    m = _max_matches(cand, ref)
    if m == 0:
        return 0.0
    chunks = _min_chunks(cand, ref, m)
    p = m / len(cand)
    r = m / len(ref)
    f_mean = 10.0 * p * r / (r + 9.0 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# Metric report
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ("SacreBLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L",
                  "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "Meteor")


@dataclass
class MetricReport:
    """Per-item and mean scores in Table column order, stored in [0, 1]."""

    per_item: list[dict[str, float]]
    corpus: dict[str, float]

    def to_table(self, sep: str = "\t", scale: float = 100.0) -> str:
        lines = [sep.join(("item",) + METRIC_COLUMNS)]
        for i, row in enumerate(self.per_item):
            lines.append(sep.join([str(i)] + [f"{row[c] * scale:.2f}" for c in METRIC_COLUMNS]))
        lines.append(sep.join(["mean"] + [f"{self.corpus[c] * scale:.2f}" for c in METRIC_COLUMNS]))
        return "\n".join(lines)


def score_pair(candidate_text: str, reference_text: str) -> dict[str, float]:
    cand = tokenize(candidate_text)
    ref = tokenize(reference_text)
    row = {"SacreBLEU": sacre_bleu(candidate_text, [reference_text])}
    row["ROUGE-1"] = rouge(cand, ref, 1)[2]
    row["ROUGE-2"] = rouge(cand, ref, 2)[2]
    row["ROUGE-L"] = rouge(cand, ref, "L")[2]
    for n in range(1, 5):
        row[f"BLEU-{n}"] = bleu(cand, [ref], max_n=n)
    row["Meteor"] = meteor_lite(cand, ref)
    return row


def evaluate_pairs(pairs) -> MetricReport:
    """pairs: iterable of (candidate text, reference text)."""
    per_item = [score_pair(c, r) for c, r in pairs]
    if not per_item:
        raise QualityError("no pairs to evaluate")
    corpus = {c: sum(row[c] for row in per_item) / len(per_item) for c in METRIC_COLUMNS}
    return MetricReport(per_item=per_item, corpus=corpus)


# ---------------------------------------------------------------------------
# Filter verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reasons: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.accepted != (len(self.reasons) == 0):
            raise QualityError("accepted flag must mirror empty reasons")


def _verdict(reasons) -> FilterVerdict:
    reasons = tuple(reasons)
    return FilterVerdict(accepted=not reasons, reasons=reasons)


# ---------------------------------------------------------------------------
# Term lexicon and number rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryRules:
    terms: frozenset[str]
    forbidden_combinations: tuple[tuple[str, ...], ...]
    licensed_numbers: frozenset[str]


class TermLexicon:
    """Per-category product terms, forbidden term combinations, and numbers
    that are always allowed to appear."""

    def __init__(self, categories: dict[str, CategoryRules]):
        for cat, rules in categories.items():
            for combo in rules.forbidden_combinations:
                for term in combo:
                    if term not in rules.terms:
                        raise QualityError(
                            f"rule term {term!r} missing from {cat!r} lexicon terms")
        self.categories = dict(categories)

    def rules_for(self, category: str) -> CategoryRules | None:
        return self.categories.get(category)

    @staticmethod
    def from_json(obj: dict) -> "TermLexicon":
        cats = {}
        for cat, spec in obj.items():
            cats[cat] = CategoryRules(
                terms=frozenset(t.lower() for t in spec.get("terms", [])),
                forbidden_combinations=tuple(
                    tuple(t.lower() for t in combo)
                    for combo in spec.get("forbidden_combinations", [])),
                licensed_numbers=frozenset(spec.get("licensed_numbers", [])),
            )
        return TermLexicon(cats)

    @staticmethod
    def load(path: str | Path) -> "TermLexicon":
        with open(path, encoding="utf-8") as fh:
            return TermLexicon.from_json(json.load(fh))

    def dump(self, path: str | Path) -> None:
        obj = {
            cat: {
                "terms": sorted(r.terms),
                "forbidden_combinations": [list(c) for c in r.forbidden_combinations],
                "licensed_numbers": sorted(r.licensed_numbers),
            }
            for cat, r in self.categories.items()
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False, indent=1)


_NUMBER_RE = re.compile(r"^(\d[\d.,]*)([^\d.,]*)$")
_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d{3}\b)")


def parse_number_token(token: str) -> tuple[str, str] | None:
    """Normalize a digit-bearing token to (numeric value, unit suffix).

    Thousands separators are stripped, a decimal comma becomes a point, and
    any trailing unit stays attached (lowercased). Returns None for tokens
    that do not start with a digit.
    """
    m = _NUMBER_RE.match(token.strip(".,;:!?"))
    if not m:
        return None
    num, unit = m.groups()
    num = _THOUSANDS_RE.sub("", num)
    num = num.replace(",", ".")
    try:
        canonical = repr(float(num))
    except ValueError:
        canonical = num
    return canonical, unit.lower()


def _number_tokens(tokens) -> list[tuple[str, tuple[str, str]]]:
    out = []
    for tok in tokens:
        parsed = parse_number_token(tok)
        if parsed is not None:
            out.append((tok, parsed))
    return out


def check_terms_numbers(description: str, record, lexicon: TermLexicon) -> FilterVerdict:
    """Numbers in the description must occur in the record's linearized
    input (or be licensed); forbidden term combinations reject only when the
    whole combination co-occurs and the input itself does not license it."""
    rules = lexicon.rules_for(record.category)
    if rules is None:
        return _verdict([("no_lexicon", record.category)])
    reasons: list[tuple[str, str]] = []

    input_tokens = linearize_product(record)
    allowed_numbers = {parsed for _, parsed in _number_tokens(input_tokens)}
    for raw in rules.licensed_numbers:
        parsed = parse_number_token(raw)
        if parsed is not None:
            allowed_numbers.add(parsed)
    desc_tokens = tokenize(description)
    for tok, parsed in _number_tokens(desc_tokens):
        if parsed not in allowed_numbers:
            reasons.append(("number_mismatch", tok))

    desc_set = {t.lower().strip(".,;:!?") for t in desc_tokens}
    input_set = {t.lower() for t in input_tokens}
    for combo in rules.forbidden_combinations:
        if all(term in desc_set for term in combo):
            if not all(term in input_set for term in combo):
                reasons.append(("forbidden_combination", " + ".join(combo)))
    return _verdict(reasons)


# ---------------------------------------------------------------------------
# AdaBoost over decision stumps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # +1: predict +1 when x <= threshold; -1: flipped

    def predict(self, x: np.ndarray) -> np.ndarray:
        raw = np.where(x[:, self.feature] <= self.threshold, 1, -1)
        return raw * self.polarity


@dataclass
class StumpEnsemble:
    stumps: list[Stump] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    epsilons: list[float] = field(default_factory=list)
    weight_sums: list[float] = field(default_factory=list)  # after renormalizing

    @property
    def rounds(self) -> int:
        return len(self.stumps)

    def margin(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        total = np.zeros(x.shape[0])
        for stump, alpha in zip(self.stumps, self.alphas):
            total += alpha * stump.predict(x)
        return total

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.margin(x) >= 0, 1, -1)

    def error_bound(self) -> float:
        """Training-error bound: product of 2 sqrt(eps (1 - eps))."""
        out = 1.0
        for eps in self.epsilons:
            out *= 2.0 * math.sqrt(eps * (1.0 - eps))
        return out

    def to_json(self) -> dict:
        return {
            "stumps": [{"feature": s.feature, "threshold": s.threshold,
                        "polarity": s.polarity} for s in self.stumps],
            "alphas": self.alphas,
            "epsilons": self.epsilons,
        }

    @staticmethod
    def from_json(obj: dict) -> "StumpEnsemble":
        return StumpEnsemble(
            stumps=[Stump(int(s["feature"]), float(s["threshold"]), int(s["polarity"]))
                    for s in obj["stumps"]],
            alphas=[float(a) for a in obj["alphas"]],
            epsilons=[float(e) for e in obj["epsilons"]],
        )


_EPS_FLOOR = 1e-10


def _best_stump(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[Stump, float]:
    n, f = x.shape
    best: tuple[float, int, float, int] | None = None
    for feat in range(f):
        vals = np.unique(x[:, feat])
        cuts = [vals[0] - 1.0] + [(vals[i] + vals[i + 1]) / 2.0 for i in range(len(vals) - 1)]
        for theta in cuts:
            raw = np.where(x[:, feat] <= theta, 1, -1)
            for pol in (1, -1):
                eps = float(w[(raw * pol) != y].sum())
                key = (eps, feat, theta, pol)
                if best is None or key < best:
                    best = key
    eps, feat, theta, pol = best
    return Stump(feature=feat, threshold=theta, polarity=pol), eps


def adaboost_train(x, y, rounds: int) -> StumpEnsemble:
    """Classic AdaBoost: pick the stump with minimum weighted error, weight
    it by half the log odds, exponentially reweight the sample, renormalize.
    Stops early on a perfect stump or when nothing beats chance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise QualityError("x must be (n, f) and y (n,)")
    if rounds < 1:
        raise QualityError("rounds must be >= 1")
    classes = set(np.unique(y).tolist())
    if not classes <= {-1, 1} or len(classes) != 2:
        raise QualityError("labels must contain both +1 and -1")
    n = x.shape[0]
    w = np.full(n, 1.0 / n)
    ensemble = StumpEnsemble()
    for _ in range(rounds):
        stump, eps = _best_stump(x, y, w)
        if eps >= 0.5:
            break
        alpha = 0.5 * math.log((1.0 - eps) / max(eps, _EPS_FLOOR))
        ensemble.stumps.append(stump)
        ensemble.alphas.append(alpha)
        ensemble.epsilons.append(eps)
        if eps == 0.0:
            break
        pred = stump.predict(x)
        w = w * np.exp(-alpha * y * pred)
        w /= w.sum()
        ensemble.weight_sums.append(float(w.sum()))
    return ensemble


# ---------------------------------------------------------------------------
# Grammar features and filter
# ---------------------------------------------------------------------------

GRAMMAR_FEATURES = ("length", "type_token_ratio", "max_unigram_run",
                    "repeated_bigram_ratio", "punctuation_density",
                    "oov_fraction", "mean_sentence_length")

_PUNCT_CHARS = set(".,;:!?。？！、·-—()[]{}\"'…")


def grammar_features(text: str, vocab: Vocab | None = None) -> np.ndarray:
    """Fixed-order surface statistics; empty text gives the zero vector."""
    tokens = tokenize(text)
    if not tokens:
        return np.zeros(len(GRAMMAR_FEATURES))
    n = len(tokens)
    ttr = len(set(tokens)) / n

    max_run, run = 1, 1
    for prev, cur in zip(tokens, tokens[1:]):
        run = run + 1 if cur == prev else 1
        max_run = max(max_run, run)

    bigrams = [tuple(tokens[i:i + 2]) for i in range(n - 1)]
    rep_bigram = 1.0 - len(set(bigrams)) / len(bigrams) if bigrams else 0.0

    chars = [c for c in text if not c.isspace()]
    punct = sum(1 for c in chars if c in _PUNCT_CHARS) / len(chars) if chars else 0.0

    oov = sum(1 for t in tokens if t not in vocab) / n if vocab is not None else 0.0

    try:
        doc = split_sentences(text)
        mean_sent = n / doc.m
    except CorpusError:
        mean_sent = 0.0

    return np.array([float(n), ttr, float(max_run), rep_bigram, punct, oov, mean_sent])


def grammar_filter(description: str, ensemble: StumpEnsemble, threshold: float,
                   vocab: Vocab | None = None) -> FilterVerdict:
    """Reject when the ensemble margin falls below the threshold."""
    if not ensemble.stumps:
        raise QualityError("ensemble must have at least one stump")
    margin = float(ensemble.margin(grammar_features(description, vocab))[0])
    if margin < threshold:
        return _verdict([("grammar", f"margin {margin:.4f} below {threshold:.4f}")])
    return _verdict([])
