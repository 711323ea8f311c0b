"""Beam-search and greedy decoding, monolithically and through the split
encoder/decoder predictor interfaces used for serving.

The beam core is table-driven: it only sees a step function returning top-k
(token id, probability) pairs, so the same code decodes real models and
hand-specified toy tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import model as md
from .corpus import BOS_ID, EOS_ID
from .numerics import PROB_FLOOR


class DecodeError(ValueError):
    """Raised on invalid decoding parameters or malformed predictor input."""


DEFAULT_BEAM = 4
DEFAULT_MAX_LEN = 128
DEFAULT_ALPHA = 0.7


@dataclass(frozen=True)
class Hypothesis:
    """One beam entry: extended-id prefix (starts with BOS), accumulated
    log-probability, finished flag, and the length-normalized score."""

    tokens: tuple[int, ...]
    logprob: float
    finished: bool
    score: float

    def generated(self) -> tuple[int, ...]:
        """Tokens after BOS, without a trailing EOS."""
        toks = self.tokens[1:]
        if toks and toks[-1] == EOS_ID:
            toks = toks[:-1]
        return toks


def _norm_score(logprob: float, gen_len: int, alpha: float) -> float:
    return logprob / (max(gen_len, 1) ** alpha)


@dataclass(frozen=True)
class EncodedSource:
    """Encoder output for one request: base token ids, the state block, and
    the surface tokens needed to resolve copied ids."""

    token_ids: tuple[int, ...]
    states: np.ndarray
    surface: tuple[str, ...]

    def __post_init__(self):
        if len(self.token_ids) != self.states.shape[0]:
            raise DecodeError("token id count != encoder state count")


def encoded_to_json(enc: EncodedSource) -> str:
    """Lossless wire form: float64 values survive the round trip bit-exact."""
    return json.dumps({
        "token_ids": list(enc.token_ids),
        "states": enc.states.tolist(),
        "surface": list(enc.surface),
    }, ensure_ascii=False)


def encoded_from_json(payload: str) -> EncodedSource:
    obj = json.loads(payload)
    return EncodedSource(
        token_ids=tuple(int(i) for i in obj["token_ids"]),
        states=np.asarray(obj["states"], dtype=np.float64),
        surface=tuple(obj["surface"]),
    )


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------


def _topk_from_dist(dist: np.ndarray, k: int) -> list[tuple[int, float]]:
    """k highest probabilities, descending; equal probabilities go to the
    smaller index."""
    order = np.lexsort((np.arange(dist.size), -dist))
    return [(int(i), float(dist[i])) for i in order[:k]]


class SplitPredictors:
    """The two serving-side interfaces plus call counters.

    One generation is expected to call encoder_predictor exactly once and
    decoder_predictor once per hypothesis step.
    """

    def __init__(self, model: md.Model):
        self.model = model
        self.encoder_calls = 0
        self.decoder_calls = 0

    def reset_counters(self) -> None:
        self.encoder_calls = 0
        self.decoder_calls = 0

    def encoder_predictor(self, input_tokens) -> EncodedSource:
        self.encoder_calls += 1
        src = md.extend_source(input_tokens, self.model.vocab)
        states = md.encode(list(src.base), self.model)
        return EncodedSource(token_ids=src.base, states=states.data.copy(),
                             surface=tuple(input_tokens))

    def decoder_predictor(self, encoded: EncodedSource, prefix_ids, k: int
                          ) -> list[tuple[int, str, float]]:
        self.decoder_calls += 1
        src = md.extend_source(encoded.surface, self.model.vocab)
        ext_size = len(self.model.vocab) + len(src.oov_tokens)
        if not 1 <= k <= ext_size:
            raise DecodeError(f"k {k} outside [1, {ext_size}]")
        from .numerics import Tensor
        step = md.decode_step(list(prefix_ids), Tensor(encoded.states), src, self.model)
        return [(i, md.resolve_token(i, self.model.vocab, src), p)
                for i, p in _topk_from_dist(step.mixed_dist, k)]


# ---------------------------------------------------------------------------
# Beam core
# ---------------------------------------------------------------------------


def _beam_over(step_topk, beam_size: int, max_len: int, alpha: float,
               no_repeat_trigram: bool = False) -> list[Hypothesis]:
    """Beam search over an arbitrary step function.

    step_topk(prefix_ids, k) -> list of (token id, probability), descending.
    Hypotheses finish on EOS or at max_len; final ranking is by
    logprob / len^alpha with ties broken by token sequence.
    """
    if beam_size < 1:
        raise DecodeError("beam_size must be >= 1")
    if max_len < 1:
        raise DecodeError("max_len must be >= 1")
    if alpha < 0:
        raise DecodeError("length_alpha must be >= 0")

    # the guard can veto candidates, so fetch a few spares when it is on
    want = beam_size + 3 if no_repeat_trigram else beam_size
    active: list[tuple[tuple[int, ...], float]] = [((BOS_ID,), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []
    for _ in range(max_len):
        candidates: list[tuple[tuple[int, ...], float, bool]] = []
        for tokens, logprob in active:
            extended = False
            for idx, prob in step_topk(tokens, want):
                if no_repeat_trigram and _makes_repeat_trigram(tokens, idx):
                    continue
                new_lp = logprob + math.log(max(prob, PROB_FLOOR))
                candidates.append((tokens + (idx,), new_lp, idx == EOS_ID))
                extended = True
            if not extended:  # every continuation vetoed: finish as-is
                finished.append((tokens, logprob))
        candidates.sort(key=lambda c: (-c[1], c[0]))
        active = []
        for tokens, lp, done in candidates[:beam_size]:
            if done:
                finished.append((tokens, lp))
            else:
                active.append((tokens, lp))
        if not active:
            break
    finished.extend(active)  # length cap reached without EOS
    pool = [
        Hypothesis(tokens=t, logprob=lp, finished=True,
                   score=_norm_score(lp, len(t) - 1, alpha))
        for t, lp in finished
    ]
    pool.sort(key=lambda h: (-h.score, h.tokens))
    return pool[:beam_size]


def _makes_repeat_trigram(tokens: tuple[int, ...], nxt: int) -> bool:
    if len(tokens) < 2:
        return False
    tri = (tokens[-2], tokens[-1], nxt)
    return any(tuple(tokens[i:i + 3]) == tri for i in range(len(tokens) - 2))


# ---------------------------------------------------------------------------
# Public decodes
# ---------------------------------------------------------------------------


def beam_search(predictors: SplitPredictors, encoded: EncodedSource,
                beam_size: int = DEFAULT_BEAM, max_len: int = DEFAULT_MAX_LEN,
                length_alpha: float = DEFAULT_ALPHA,
                no_repeat_trigram: bool = False) -> list[Hypothesis]:
    """Beam search through the decoder predictor interface."""
    src = md.extend_source(encoded.surface, predictors.model.vocab)
    ext_size = len(predictors.model.vocab) + len(src.oov_tokens)

    def step(prefix, want):
        k = min(want, ext_size)
        return [(i, p) for i, _tok, p in predictors.decoder_predictor(encoded, prefix, k)]

    return _beam_over(step, beam_size, max_len, length_alpha, no_repeat_trigram)


def greedy_decode(predictors: SplitPredictors, encoded: EncodedSource,
                  max_len: int = DEFAULT_MAX_LEN) -> Hypothesis:
    """Beam of one with no length normalization."""
    return beam_search(predictors, encoded, beam_size=1, max_len=max_len,
                       length_alpha=0.0)[0]


def split_decode(model: md.Model, src_tokens, beam_size: int = DEFAULT_BEAM,
                 max_len: int = DEFAULT_MAX_LEN, length_alpha: float = DEFAULT_ALPHA
                 ) -> list[Hypothesis]:
    """Full generation through the split interfaces (encoder once, then
    repeated decoder calls)."""
    preds = SplitPredictors(model)
    encoded = preds.encoder_predictor(src_tokens)
    return beam_search(preds, encoded, beam_size, max_len, length_alpha)


def monolithic_decode(model: md.Model, src_tokens, beam_size: int = DEFAULT_BEAM,
                      max_len: int = DEFAULT_MAX_LEN,
                      length_alpha: float = DEFAULT_ALPHA) -> list[Hypothesis]:
    """Same beam search without ever crossing the predictor interface."""
    src = md.extend_source(src_tokens, model.vocab)
    enc = md.encode(list(src.base), model)
    ext_size = len(model.vocab) + len(src.oov_tokens)

    def step(prefix, want):
        out = md.decode_step(list(prefix), enc, src, model)
        return _topk_from_dist(out.mixed_dist, min(want, ext_size))

    return _beam_over(step, beam_size, max_len, length_alpha)


def hypothesis_tokens(hyp: Hypothesis, model: md.Model, surface) -> list[str]:
    """Resolve a hypothesis back to surface tokens (copied ids included)."""
    src = md.extend_source(surface, model.vocab)
    return [md.resolve_token(i, model.vocab, src) for i in hyp.generated()]
