"""Transformer encoder-decoder with a pointer head.

The decoder's last-layer cross-attention (summed over heads, divided by h)
doubles as the copy distribution; a sigmoid gate p_gen mixes it with the
vocabulary softmax over an extended vocabulary that assigns temporary ids
to out-of-vocabulary source tokens.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nx
from .corpus import BOS_ID, EOS, EOS_ID, UNK_ID, Vocab

CHECKPOINT_MAGIC = b"APCG"
CHECKPOINT_VERSION = 1

DIST_TOL = 1e-6


class ModelError(ValueError):
    """Raised on invalid model inputs, configs, or checkpoints."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    d_ff: int = 128
    max_positions: int = 256
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ModelError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        for name in ("vocab_size", "d_model", "n_heads", "enc_layers",
                     "dec_layers", "d_ff", "max_positions"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0, 1)")

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "d_model": self.d_model,
            "n_heads": self.n_heads, "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers, "d_ff": self.d_ff,
            "max_positions": self.max_positions, "dropout": self.dropout,
        }

    @staticmethod
    def from_json(obj: dict) -> "ModelConfig":
        return ModelConfig(**obj)


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, nx.Tensor]
    vocab: Vocab


@dataclass(frozen=True)
class StepOutput:
    """One decode step: vocabulary softmax, copy weights over source
    positions, the generation gate, and their pointer mixture over the
    extended vocabulary."""

    vocab_dist: np.ndarray
    copy_dist: np.ndarray
    p_gen: float
    mixed_dist: np.ndarray


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def _linear_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> nx.Tensor:
    std = 1.0 / math.sqrt(max(fan_in, 1))
    return nx.Tensor(rng.normal(0.0, std, size=(fan_in, fan_out)), requires_grad=True)


def init_params(config: ModelConfig, seed: int) -> dict[str, nx.Tensor]:
    rng = np.random.default_rng(seed)
    d, ff, v = config.d_model, config.d_ff, config.vocab_size
    p: dict[str, nx.Tensor] = {}

    def ln(prefix: str) -> None:
        p[f"{prefix}.gain"] = nx.Tensor(np.ones(d), requires_grad=True)
        p[f"{prefix}.bias"] = nx.Tensor(np.zeros(d), requires_grad=True)

    def attn(prefix: str) -> None:
        for w in ("wq", "wk", "wv", "wo"):
            p[f"{prefix}.{w}"] = _linear_init(rng, d, d)

    def ffn(prefix: str) -> None:
        p[f"{prefix}.w1"] = _linear_init(rng, d, ff)
        p[f"{prefix}.b1"] = nx.Tensor(np.zeros(ff), requires_grad=True)
        p[f"{prefix}.w2"] = _linear_init(rng, ff, d)
        p[f"{prefix}.b2"] = nx.Tensor(np.zeros(d), requires_grad=True)

    p["embed"] = nx.Tensor(rng.normal(0.0, 0.05, size=(v, d)), requires_grad=True)
    for i in range(config.enc_layers):
        ln(f"enc{i}.ln1"); attn(f"enc{i}.attn")
        ln(f"enc{i}.ln2"); ffn(f"enc{i}.ffn")
    ln("enc.ln_out")
    for i in range(config.dec_layers):
        ln(f"dec{i}.ln1"); attn(f"dec{i}.self")
        ln(f"dec{i}.ln2"); attn(f"dec{i}.cross")
        ln(f"dec{i}.ln3"); ffn(f"dec{i}.ffn")
    ln("dec.ln_out")
    p["out.w"] = _linear_init(rng, d, v)
    p["out.b"] = nx.Tensor(np.zeros(v), requires_grad=True)
    p["pgen.w"] = _linear_init(rng, 3 * d, 1)
    p["pgen.b"] = nx.Tensor(np.zeros(1), requires_grad=True)
    return p


def new_model(config: ModelConfig, vocab: Vocab, seed: int = 0) -> Model:
    if config.vocab_size != len(vocab):
        raise ModelError(f"config vocab_size {config.vocab_size} != vocab {len(vocab)}")
    return Model(config=config, params=init_params(config, seed), vocab=vocab)


_POS_CACHE: dict[tuple[int, int], np.ndarray] = {}


def sinusoid_table(max_pos: int, d: int) -> np.ndarray:
    """Fixed sin/cos positional encodings (max_pos, d)."""
    key = (max_pos, d)
    if key not in _POS_CACHE:
        pos = np.arange(max_pos, dtype=np.float64)[:, None]
        dim = np.arange(d, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, (2.0 * (dim // 2)) / d)
        table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
        _POS_CACHE[key] = table
    return _POS_CACHE[key]


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def _embed(ids: list[int], model: Model) -> nx.Tensor:
    clamped = [i if i < model.config.vocab_size else UNK_ID for i in ids]
    x = nx.gather_rows(model.params["embed"], clamped)
    pos = sinusoid_table(model.config.max_positions, model.config.d_model)[: len(ids)]
    return nx.add(x, nx.Tensor(pos))


def _attention(x_q: nx.Tensor, x_kv: nx.Tensor, p: dict, prefix: str, n_heads: int,
               mask: nx.Tensor | None = None, want_weights: bool = False):
    """Multi-head attention; optionally also return per-head softmax weights."""
    d = x_q.shape[1]
    dh = d // n_heads
    q = nx.matmul(x_q, p[f"{prefix}.wq"])
    k = nx.matmul(x_kv, p[f"{prefix}.wk"])
    v = nx.matmul(x_kv, p[f"{prefix}.wv"])
    ctxs, weights = [], []
    for a in range(n_heads):
        qh = nx.narrow(q, 1, a * dh, dh)
        kh = nx.narrow(k, 1, a * dh, dh)
        vh = nx.narrow(v, 1, a * dh, dh)
        scores = nx.scale(nx.matmul(qh, nx.transpose(kh)), 1.0 / math.sqrt(dh))
        if mask is not None:
            scores = nx.add(scores, mask)
        attn = nx.softmax(scores, axis=-1)
        if want_weights:
            weights.append(attn)
        ctxs.append(nx.matmul(attn, vh))
    out = nx.matmul(nx.concat(ctxs, axis=1), p[f"{prefix}.wo"])
    return out, weights


def _ffn(x: nx.Tensor, p: dict, prefix: str) -> nx.Tensor:
    h = nx.relu(nx.add(nx.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return nx.add(nx.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def _ln(x: nx.Tensor, p: dict, prefix: str) -> nx.Tensor:
    return nx.layer_norm(x, p[f"{prefix}.gain"], p[f"{prefix}.bias"])


def _maybe_drop(x: nx.Tensor, model: Model, train_mode: bool,
                rng: np.random.Generator | None) -> nx.Tensor:
    if train_mode and model.config.dropout > 0.0 and rng is not None:
        return nx.dropout(x, model.config.dropout, rng)
    return x


def _causal_mask(t: int) -> nx.Tensor:
    mask = np.triu(np.full((t, t), -1e9), k=1)
    return nx.Tensor(mask)


def encode(src_ids: list[int], model: Model, train_mode: bool = False,
           rng: np.random.Generator | None = None) -> nx.Tensor:
    """Source ids -> one d-vector per position, (T, d)."""
    if len(src_ids) == 0:
        raise ModelError("empty_input")
    if len(src_ids) > model.config.max_positions:
        raise ModelError("input_too_long")
    p = model.params
    x = _maybe_drop(_embed(src_ids, model), model, train_mode, rng)
    for i in range(model.config.enc_layers):
        a, _ = _attention(_ln(x, p, f"enc{i}.ln1"), _ln(x, p, f"enc{i}.ln1"),
                          p, f"enc{i}.attn", model.config.n_heads)
        x = nx.add(x, _maybe_drop(a, model, train_mode, rng))
        f = _ffn(_ln(x, p, f"enc{i}.ln2"), p, f"enc{i}.ffn")
        x = nx.add(x, _maybe_drop(f, model, train_mode, rng))
    return _ln(x, p, "enc.ln_out")


def _decoder_forward(prefix_ids: list[int], enc_states: nx.Tensor, model: Model,
                     train_mode: bool = False,
                     rng: np.random.Generator | None = None):
    """Run the decoder stack; returns (states (T,d), last-layer cross-attention
    weights as a per-head list of (T, S) tensors)."""
    if len(prefix_ids) == 0 or prefix_ids[0] != BOS_ID:
        raise ModelError("prefix must start with BOS")
    if len(prefix_ids) > model.config.max_positions:
        raise ModelError("input_too_long")
    p = model.params
    x = _maybe_drop(_embed(prefix_ids, model), model, train_mode, rng)
    mask = _causal_mask(len(prefix_ids))
    cross_weights: list[nx.Tensor] = []
    last = model.config.dec_layers - 1
    for i in range(model.config.dec_layers):
        h = _ln(x, p, f"dec{i}.ln1")
        a, _ = _attention(h, h, p, f"dec{i}.self", model.config.n_heads, mask=mask)
        x = nx.add(x, _maybe_drop(a, model, train_mode, rng))
        c, w = _attention(_ln(x, p, f"dec{i}.ln2"), enc_states, p, f"dec{i}.cross",
                          model.config.n_heads, want_weights=(i == last))
        if i == last:
            cross_weights = w
        x = nx.add(x, _maybe_drop(c, model, train_mode, rng))
        f = _ffn(_ln(x, p, f"dec{i}.ln3"), p, f"dec{i}.ffn")
        x = nx.add(x, _maybe_drop(f, model, train_mode, rng))
    return _ln(x, p, "dec.ln_out"), cross_weights


def _copy_matrix(cross_weights: list[nx.Tensor], n_heads: int) -> nx.Tensor:
    """Sum the per-head attention rows and renormalize: each head row sums to
    one, so dividing the head sum by h restores a distribution."""
    total = cross_weights[0]
    for w in cross_weights[1:]:
        total = nx.add(total, w)
    return nx.scale(total, 1.0 / n_heads)


def _vocab_dists(dec_states: nx.Tensor, model: Model) -> nx.Tensor:
    logits = nx.add(nx.matmul(dec_states, model.params["out.w"]), model.params["out.b"])
    return nx.softmax(logits, axis=-1)


def _p_gen_vector(dec_states: nx.Tensor, copy_mat: nx.Tensor, enc_states: nx.Tensor,
                  prefix_ids: list[int], model: Model) -> nx.Tensor:
    """Gate per position from [context; state; previous-token embedding]."""
    contexts = nx.matmul(copy_mat, enc_states)
    clamped = [i if i < model.config.vocab_size else UNK_ID for i in prefix_ids]
    prev_embs = nx.gather_rows(model.params["embed"], clamped)
    feats = nx.concat([contexts, dec_states, prev_embs], axis=1)
    gate = nx.sigmoid(nx.add(nx.matmul(feats, model.params["pgen.w"]), model.params["pgen.b"]))
    return nx.reshape(gate, (len(prefix_ids),))


# ---------------------------------------------------------------------------
# Extended vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceIds:
    """Base ids (OOV clamped to UNK) and extended ids (OOV get temporary ids
    V, V+1, ... in first-occurrence order) for one source sequence."""

    base: tuple[int, ...]
    extended: tuple[int, ...]
    oov_tokens: tuple[str, ...]


def extend_source(src_tokens, vocab: Vocab) -> SourceIds:
    base, ext, oov = [], [], []
    oov_ids: dict[str, int] = {}
    v = len(vocab)
    for tok in src_tokens:
        if tok in vocab:
            i = vocab.encode(tok)
            base.append(i)
            ext.append(i)
        else:
            base.append(UNK_ID)
            if tok not in oov_ids:
                oov_ids[tok] = v + len(oov)
                oov.append(tok)
            ext.append(oov_ids[tok])
    return SourceIds(base=tuple(base), extended=tuple(ext), oov_tokens=tuple(oov))


def target_extended_ids(tgt_tokens, vocab: Vocab, src: SourceIds) -> list[int]:
    """Target ids in the extended space: in-vocab id, else the source's
    temporary id when the token was copied-in, else UNK."""
    oov_ids = {tok: len(vocab) + j for j, tok in enumerate(src.oov_tokens)}
    out = []
    for tok in tgt_tokens:
        if tok in vocab:
            out.append(vocab.encode(tok))
        else:
            out.append(oov_ids.get(tok, UNK_ID))
    return out


def resolve_token(token_id: int, vocab: Vocab, src: SourceIds) -> str:
    """Extended id back to a surface token."""
    if token_id < len(vocab):
        return vocab.decode(token_id)
    j = token_id - len(vocab)
    if j >= len(src.oov_tokens):
        raise ModelError(f"extended id {token_id} out of range")
    return src.oov_tokens[j]


def _check_dist(d: np.ndarray, name: str) -> None:
    if d.ndim != 1 or d.size == 0 or np.any(d < -DIST_TOL) or abs(float(d.sum()) - 1.0) > DIST_TOL:
        raise ModelError(f"{name} is not a probability distribution")


def mixed_distribution(vocab_dist: np.ndarray, copy_dist: np.ndarray, p_gen: float,
                       src_extended_ids) -> np.ndarray:
    """P(w) = p_gen * vocab(w) + (1 - p_gen) * sum of copy weight at positions
    holding w, over base vocabulary plus temporary source ids."""
    vocab_dist = np.asarray(vocab_dist, dtype=np.float64)
    copy_dist = np.asarray(copy_dist, dtype=np.float64)
    if not 0.0 <= p_gen <= 1.0:
        raise ModelError(f"p_gen {p_gen} outside [0, 1]")
    _check_dist(vocab_dist, "vocab_dist")
    _check_dist(copy_dist, "copy_dist")
    ids = np.asarray(src_extended_ids, dtype=np.int64)
    if ids.shape != copy_dist.shape:
        raise ModelError("src ids and copy_dist length mismatch")
    v = vocab_dist.shape[0]
    ext_size = max(v, int(ids.max()) + 1 if ids.size else v)
    mixed = np.zeros(ext_size, dtype=np.float64)
    mixed[:v] = p_gen * vocab_dist
    np.add.at(mixed, ids, (1.0 - p_gen) * copy_dist)
    return mixed


def decode_step(prefix_ids: list[int], enc_states: nx.Tensor, src: SourceIds,
                model: Model) -> StepOutput:
    """One inference step: distributions for the position after the prefix.

    prefix_ids are extended-space ids starting with BOS; copied OOV ids are
    clamped to UNK for embedding.
    """
    states, cross = _decoder_forward(list(prefix_ids), enc_states, model)
    copy_mat = _copy_matrix(cross, model.config.n_heads)
    vocab_d = _vocab_dists(states, model)
    pg = _p_gen_vector(states, copy_mat, enc_states, list(prefix_ids), model)
    t = len(prefix_ids) - 1
    vocab_dist = vocab_d.data[t].copy()
    copy_dist = copy_mat.data[t].copy()
    p_gen = float(pg.data[t])
    mixed = mixed_distribution(vocab_dist, copy_dist, p_gen, src.extended)
    return StepOutput(vocab_dist=vocab_dist, copy_dist=copy_dist, p_gen=p_gen, mixed_dist=mixed)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def _nll_graph(src: SourceIds, tgt_tokens: list[str], model: Model,
               use_pointer: bool = True, train_mode: bool = False,
               rng: np.random.Generator | None = None) -> nx.Tensor:
    """Teacher-forced mean per-token negative log-likelihood as a tensor."""
    vocab = model.vocab
    v = len(vocab)
    tgt_ext = target_extended_ids(tgt_tokens, vocab, src)
    tgt_base = [i if i < v else UNK_ID for i in tgt_ext]
    prefix = [BOS_ID] + tgt_base[:-1]
    t_len, s_len = len(prefix), len(src.base)

    enc = encode(list(src.base), model, train_mode, rng)
    states, cross = _decoder_forward(prefix, enc, model, train_mode, rng)
    vocab_d = _vocab_dists(states, model)

    rows = list(range(t_len))
    in_vocab = np.array([1.0 if i < v else 0.0 for i in tgt_ext])
    clamped_tgt = [i if i < v else 0 for i in tgt_ext]
    gen_probs = nx.mul(nx.take_pairs(vocab_d, rows, clamped_tgt), nx.Tensor(in_vocab))

    if not use_pointer:
        return nx.neg(nx.reduce_mean(nx.safe_log(gen_probs)))

    copy_mat = _copy_matrix(cross, model.config.n_heads)
    pg = _p_gen_vector(states, copy_mat, enc, prefix, model)
    match = np.zeros((t_len, s_len))
    for t, y in enumerate(tgt_ext):
        for j, sid in enumerate(src.extended):
            if sid == y:
                match[t, j] = 1.0
    copy_probs = nx.reduce_sum(nx.mul(copy_mat, nx.Tensor(match)), axis=1)
    inv_pg = nx.sub(nx.Tensor(np.ones(t_len)), pg)
    p = nx.add(nx.mul(pg, gen_probs), nx.mul(inv_pg, copy_probs))
    return nx.neg(nx.reduce_mean(nx.safe_log(p)))


def sequence_nll(src_tokens, tgt_tokens, model: Model, use_pointer: bool = True) -> float:
    """Mean per-token -log P(y_t | y_<t, x); target must end with EOS."""
    tgt = list(tgt_tokens)
    if not tgt:
        raise ModelError("empty_target")
    if tgt[-1] != EOS:
        raise ModelError("target must end with EOS")
    src = extend_source(src_tokens, model.vocab)
    return _nll_graph(src, tgt, model, use_pointer=use_pointer).item()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


OBJECTIVES = ("sr", "psg", "mixed", "finetune")


@dataclass
class TrainHyper:
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 10
    use_pointer: bool = True


def _as_pair(example) -> tuple[list[str], list[str]]:
    if hasattr(example, "input"):
        return list(example.input), list(example.target)
    inp, tgt = example
    return list(inp), list(tgt)


def train(dataset, objective: str, config: ModelConfig, hyper: TrainHyper,
          seed: int, vocab: Vocab, init: Model | None = None) -> tuple[Model, list[float]]:
    """Mini-batch Adam over mean per-token NLL; returns per-epoch mean loss.

    `init` warm-starts from an existing model's weights (config and vocab
    must match). Aborts with a diagnostic if the loss goes non-finite.
    """
    if objective.lower() not in OBJECTIVES:
        raise ModelError(f"unknown objective: {objective}")
    pairs = [_as_pair(ex) for ex in dataset]
    if not pairs:
        raise ModelError("empty dataset")
    if init is None:
        model = new_model(config, vocab, seed=seed)
    else:
        if init.config != config:
            raise ModelError("init model config mismatch")
        if init.vocab.tokens != vocab.tokens:
            raise ModelError("init model vocab mismatch")
        params = {n: nx.Tensor(t.data.copy(), requires_grad=True)
                  for n, t in init.params.items()}
        model = Model(config=config, params=params, vocab=vocab)
    prepared = []
    for inp, tgt in pairs:
        if len(inp) > config.max_positions or len(tgt) + 1 > config.max_positions:
            raise ModelError("input_too_long")
        src = extend_source(inp, vocab)
        prepared.append((src, tgt + [EOS]))

    rng = np.random.default_rng(seed + 1)
    drop_rng = np.random.default_rng(seed + 2)
    state = nx.AdamState(lr=hyper.lr)
    curve: list[float] = []
    names = sorted(model.params)
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(prepared))
        total, count = 0.0, 0
        for start in range(0, len(prepared), hyper.batch_size):
            batch = [prepared[i] for i in order[start:start + hyper.batch_size]]
            with nx.Tape() as tape:
                losses = [_nll_graph(src, tgt, model, use_pointer=hyper.use_pointer,
                                     train_mode=True, rng=drop_rng)
                          for src, tgt in batch]
                loss = nx.scale(losses[0], 1.0 / len(losses))
                for other in losses[1:]:
                    loss = nx.add(loss, nx.scale(other, 1.0 / len(losses)))
            value = loss.item()
            if not math.isfinite(value):
                raise ModelError(f"training diverged: non-finite loss at epoch {epoch}")
            grads = nx.backward(tape, loss, params=list(model.params.values()))
            named = {n: grads[model.params[n]] for n in names}
            nx.adam_step(model.params, named, state)
            total += value * len(batch)
            count += len(batch)
        curve.append(total / count)
    return model, curve


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: Model, path) -> str:
    """Write params + config + vocab; returns the hex digest of the file."""
    header = json.dumps({
        "config": model.config.to_json(),
        "vocab": model.vocab.tokens,
    }, ensure_ascii=False).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(header))
    blob += header
    names = sorted(model.params)
    blob += struct.pack("<I", len(names))
    for name in names:
        data = np.ascontiguousarray(model.params[name].data, dtype="<f8")
        nb = name.encode("utf-8")
        blob += struct.pack("<H", len(nb))
        blob += nb
        blob += struct.pack("<BB", 1, data.ndim)  # dtype tag 1 = float64
        for dim in data.shape:
            blob += struct.pack("<I", dim)
        blob += data.tobytes()
    digest = hashlib.sha256(bytes(blob)).digest()
    blob += digest
    with open(path, "wb") as fh:
        fh.write(blob)
    return digest.hex()


def _bad(reason: str) -> ModelError:
    return ModelError(f"incompatible_checkpoint: {reason}")


def load_checkpoint(path, expected_vocab: Vocab | None = None) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 44 or blob[:4] != CHECKPOINT_MAGIC:
        raise _bad("bad magic or truncated file")
    if hashlib.sha256(blob[:-32]).digest() != blob[-32:]:
        raise _bad("checksum mismatch")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off); off += 4
    if version != CHECKPOINT_VERSION:
        raise _bad(f"unsupported version {version}")
    (hlen,) = struct.unpack_from("<I", blob, off); off += 4
    header = json.loads(blob[off:off + hlen].decode("utf-8")); off += hlen
    config = ModelConfig.from_json(header["config"])
    vocab = Vocab(header["vocab"])
    if len(vocab) != config.vocab_size:
        raise _bad("vocab size disagrees with config")
    if expected_vocab is not None and len(expected_vocab) != len(vocab):
        raise ModelError(
            f"checkpoint vocab size {len(vocab)} != current vocab {len(expected_vocab)}")
    (count,) = struct.unpack_from("<I", blob, off); off += 4
    params: dict[str, nx.Tensor] = {}
    end = len(blob) - 32
    for _ in range(count):
        if off + 2 > end:
            raise _bad("truncated tensor table")
        (nlen,) = struct.unpack_from("<H", blob, off); off += 2
        name = blob[off:off + nlen].decode("utf-8"); off += nlen
        tag, ndim = struct.unpack_from("<BB", blob, off); off += 2
        if tag != 1:
            raise _bad(f"unknown dtype tag {tag}")
        shape = struct.unpack_from(f"<{ndim}I", blob, off); off += 4 * ndim
        nbytes = 8 * int(np.prod(shape)) if ndim else 8
        if off + nbytes > end:
            raise _bad("truncated tensor payload")
        data = np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=off).reshape(shape)
        off += nbytes
        params[name] = nx.Tensor(data.copy(), requires_grad=True)
    if off != end:
        raise _bad("trailing bytes after tensor table")
    return Model(config=config, params=params, vocab=vocab)


def checkpoint_digest(path) -> str:
    """Content hash of a checkpoint file; used as the model version."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()[:12]
