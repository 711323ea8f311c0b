"""Product records, tokenization, vocabulary, cleaning, and the two
pre-training example builders (sentence re-ordering and pseudo-summary
generation)."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

# Reserved specials, lowest ids in this exact order.
PAD, BOS, EOS, UNK, SEP = "<pad>", "<bos>", "<eos>", "<unk>", "<sep>"
TITLE_MARK, ATTR_MARK, SLOGAN_MARK, EXTRA_MARK = "<title>", "<attr>", "<slogan>", "<extra>"
SPECIALS = (PAD, BOS, EOS, UNK, SEP, TITLE_MARK, ATTR_MARK, SLOGAN_MARK, EXTRA_MARK)

PAD_ID, BOS_ID, EOS_ID, UNK_ID, SEP_ID = 0, 1, 2, 3, 4

OBJECTIVE_SR = "sr"
OBJECTIVE_PSG = "psg"


class CorpusError(ValueError):
    """Raised on malformed records, documents, or builder misuse."""


@dataclass(frozen=True)
class ProductRecord:
    """One catalog item: title, attribute pairs, slogan, optional description."""

    sku: str
    title: str
    attributes: tuple[tuple[str, str], ...]
    slogan: str = ""
    category: str = ""
    description: str | None = None
    extra_text: str | None = None

    def __post_init__(self):
        if not self.sku:
            raise CorpusError("record sku must be nonempty")
        object.__setattr__(self, "attributes", tuple((str(k), str(v)) for k, v in self.attributes))
        names = [k for k, _ in self.attributes]
        if len(names) != len(set(names)):
            raise CorpusError(f"duplicate attribute name in sku {self.sku}")


def record_to_json(rec: ProductRecord) -> dict:
    return {
        "sku": rec.sku,
        "title": rec.title,
        "attrs": [{"k": k, "v": v} for k, v in rec.attributes],
        "slogan": rec.slogan,
        "category": rec.category,
        "description": rec.description,
        "extra_text": rec.extra_text,
    }


def record_from_json(obj: dict) -> ProductRecord:
    try:
        return ProductRecord(
            sku=obj["sku"],
            title=obj["title"],
            attributes=tuple((a["k"], a["v"]) for a in obj.get("attrs", [])),
            slogan=obj.get("slogan") or "",
            category=obj.get("category") or "",
            description=obj.get("description"),
            extra_text=obj.get("extra_text"),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"malformed record: {exc}") from exc


def read_corpus(path: str | Path) -> list[ProductRecord]:
    """Read a line-delimited corpus file (one JSON record per line)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_json(json.loads(line)))
    return records


def write_corpus(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


def tokenize(text: str, mode: str = "whitespace") -> list[str]:
    """Split text into tokens; empty text gives an empty list."""
    if mode == "whitespace":
        return text.split()
    if mode == "character":
        return [ch for ch in text if not ch.isspace()]
    raise CorpusError(f"unknown tokenize mode: {mode}")


def detokenize(tokens, mode: str = "whitespace") -> str:
    if mode == "whitespace":
        return " ".join(tokens)
    if mode == "character":
        return "".join(tokens)
    raise CorpusError(f"unknown tokenize mode: {mode}")


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocab:
    """Token/id bijection with reserved specials at the lowest ids."""

    def __init__(self, tokens: list[str]):
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise CorpusError("vocab must start with the reserved specials in order")
        if len(tokens) != len(set(tokens)):
            raise CorpusError("vocab tokens must be unique")
        self.tokens = list(tokens)
        self._ids = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def encode(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode_all(self, tokens) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise CorpusError(f"token id {token_id} out of range")
        return self.tokens[token_id]

    def decode_all(self, ids) -> list[str]:
        return [self.decode(i) for i in ids]


def build_vocab(corpus, min_freq: int = 1, max_size: int | None = None) -> Vocab:
    """Frequency-ranked vocabulary; ties broken lexicographically.

    corpus: iterable of token lists (raw strings are whitespace-tokenized).
    """
    if max_size is not None and max_size < len(SPECIALS):
        raise CorpusError(f"max_size {max_size} smaller than {len(SPECIALS)} reserved specials")
    counts: dict[str, int] = {}
    for item in corpus:
        toks = tokenize(item) if isinstance(item, str) else item
        for tok in toks:
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(
        (tok for tok, c in counts.items() if c >= min_freq and tok not in SPECIALS),
        key=lambda tok: (-counts[tok], tok),
    )
    tokens = list(SPECIALS) + ranked
    if max_size is not None:
        tokens = tokens[:max_size]
    return Vocab(tokens)


# ---------------------------------------------------------------------------
# Linearization
# ---------------------------------------------------------------------------


def linearize_product(rec: ProductRecord, augment: bool = False, seed: int = 0,
                      mode: str = "whitespace") -> list[str]:
    """Field-marked source sequence for one record.

    <title> t <attr> name : value <sep> ... <slogan> s <extra> e
    Attributes come in sorted-name order; with augment on, a seeded random
    permutation is used instead.
    """
    if not rec.title.strip():
        raise CorpusError(f"record {rec.sku} has an empty title")
    out: list[str] = [TITLE_MARK] + tokenize(rec.title, mode)
    attrs = sorted(rec.attributes, key=lambda kv: kv[0])
    if augment and len(attrs) > 1:
        rng = np.random.default_rng(seed)
        attrs = [attrs[i] for i in rng.permutation(len(attrs))]
    if attrs:
        out.append(ATTR_MARK)
        for i, (name, value) in enumerate(attrs):
            if i:
                out.append(SEP)
            out.extend(tokenize(name, mode))
            out.append(":")
            out.extend(tokenize(value, mode))
    if rec.slogan.strip():
        out.append(SLOGAN_MARK)
        out.extend(tokenize(rec.slogan, mode))
    if rec.extra_text and rec.extra_text.strip():
        out.append(EXTRA_MARK)
        out.extend(tokenize(rec.extra_text, mode))
    return out


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------


@dataclass
class CleanRules:
    min_desc_tokens: int = 5
    max_desc_tokens: int = 512
    forbidden_terms: tuple[str, ...] = ()


def clean_corpus(records, rules: CleanRules) -> tuple[list[ProductRecord], dict[str, int]]:
    """Keep records passing every rule; count rejections per rule.

    Rules, in check order per record: duplicate sku, description length
    bounds, forbidden terms (case-insensitive token match in description).
    """
    forbidden = {t.lower() for t in rules.forbidden_terms}
    report = {"duplicate_sku": 0, "too_short": 0, "too_long": 0, "forbidden_term": 0}
    seen: set[str] = set()
    kept: list[ProductRecord] = []
    for rec in records:
        if rec.sku in seen:
            report["duplicate_sku"] += 1
            continue
        seen.add(rec.sku)
        desc_tokens = tokenize(rec.description or "")
        if len(desc_tokens) < rules.min_desc_tokens:
            report["too_short"] += 1
            continue
        if len(desc_tokens) > rules.max_desc_tokens:
            report["too_long"] += 1
            continue
        if forbidden and any(t.lower() in forbidden for t in desc_tokens):
            report["forbidden_term"] += 1
            continue
        kept.append(rec)
    return kept, report


# ---------------------------------------------------------------------------
# Documents and pre-training builders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Document:
    """Ordered sentences, each a token list; doc_id for provenance."""

    sentences: tuple[tuple[str, ...], ...]
    doc_id: str = ""

    @property
    def m(self) -> int:
        return len(self.sentences)


_TERMINATORS = ".?!。？！"
_SENTENCE_RE = re.compile(rf"[^{re.escape(_TERMINATORS)}]*[{re.escape(_TERMINATORS)}]+|[^{re.escape(_TERMINATORS)}]+$")


def split_sentences(text: str, doc_id: str = "", mode: str = "whitespace") -> Document:
    """Split on terminal punctuation (plain and fullwidth); drop empty
    fragments; a trailing unterminated fragment still counts."""
    sentences = []
    for frag in _SENTENCE_RE.findall(text):
        toks = tokenize(frag.strip(), mode)
        if toks and any(t.strip(_TERMINATORS) for t in toks):
            sentences.append(tuple(toks))
    if not sentences:
        raise CorpusError("empty_document")
    return Document(sentences=tuple(sentences), doc_id=doc_id)


@dataclass(frozen=True)
class PretrainExample:
    input: tuple[str, ...]
    target: tuple[str, ...]
    objective: str
    meta: dict = field(default_factory=dict)


def _concat(sentences) -> tuple[str, ...]:
    out: list[str] = []
    for s in sentences:
        out.extend(s)
    return tuple(out)


def make_sr_example(doc: Document, seed: int) -> PretrainExample:
    """Shuffled sentences as input, original order as target.

    The sampled permutation is uniform over non-identity orders (identity
    would carry no signal; resampled away).
    """
    if doc.m < 2:
        raise CorpusError("too_few_sentences")
    rng = np.random.default_rng(seed)
    perm = tuple(int(i) for i in rng.permutation(doc.m))
    while perm == tuple(range(doc.m)):
        perm = tuple(int(i) for i in rng.permutation(doc.m))
    shuffled = [doc.sentences[i] for i in perm]
    return PretrainExample(
        input=_concat(shuffled),
        target=_concat(doc.sentences),
        objective=OBJECTIVE_SR,
        meta={"doc_id": doc.doc_id, "seed": seed, "permutation": list(perm)},
    )


def lcs_length(a, b) -> int:
    """Classic longest-common-subsequence length over token sequences."""
    a, b = list(a), list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def psg_subset_size(m: int) -> int:
    """How many sentences the pseudo-summary side takes: max(1, m/4) with
    halves rounding up."""
    return max(1, math.floor(m / 4.0 + 0.5))


_EXACT_SEARCH_CAP = 4096


def _psg_score(doc: Document, selected: tuple[int, ...]) -> int:
    chosen = set(selected)
    sel = _concat(doc.sentences[i] for i in sorted(chosen))
    rest = _concat(doc.sentences[i] for i in range(doc.m) if i not in chosen)
    return lcs_length(sel, rest)


def select_psg_indices(doc: Document) -> tuple[int, ...]:
    """Pick the k-subset whose concatenation shares the longest common
    subsequence with the remainder. Exact over all C(m,k) subsets when that
    count is at most 4096, greedy forward selection beyond."""
    m = doc.m
    k = psg_subset_size(m)
    if math.comb(m, k) <= _EXACT_SEARCH_CAP:
        best, best_score = None, -1
        for cand in combinations(range(m), k):
            score = _psg_score(doc, cand)
            if score > best_score:
                best, best_score = cand, score
        return best
    selected: list[int] = []
    for _ in range(k):
        best_i, best_score = -1, -1
        for i in range(m):
            if i in selected:
                continue
            score = _psg_score(doc, tuple(selected + [i]))
            if score > best_score:
                best_i, best_score = i, score
        selected.append(best_i)
    return tuple(sorted(selected))


def make_psg_example(doc: Document, reverse: bool = False) -> PretrainExample:
    """Pseudo-summary pair: selected sentences on one side, remainder on the
    other. Default feeds the short selected side as input and the remainder
    as target; reverse flips that."""
    if doc.m < 2:
        raise CorpusError("too_few_sentences")
    selected = select_psg_indices(doc)
    chosen = set(selected)
    short = _concat(doc.sentences[i] for i in sorted(chosen))
    rest = _concat(doc.sentences[i] for i in range(doc.m) if i not in chosen)
    inp, tgt = (rest, short) if reverse else (short, rest)
    return PretrainExample(
        input=inp,
        target=tgt,
        objective=OBJECTIVE_PSG,
        meta={"doc_id": doc.doc_id, "selected": sorted(chosen), "reversed": bool(reverse)},
    )


# ---------------------------------------------------------------------------
# Pretrain example file IO
# ---------------------------------------------------------------------------


def write_pretrain_examples(examples, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "input": list(ex.input),
                "target": list(ex.target),
                "objective": ex.objective,
                "meta": ex.meta,
            }, ensure_ascii=False) + "\n")


def read_pretrain_examples(path: str | Path) -> list[PretrainExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(PretrainExample(
                input=tuple(obj["input"]),
                target=tuple(obj["target"]),
                objective=obj["objective"],
                meta=obj.get("meta", {}),
            ))
    return out
