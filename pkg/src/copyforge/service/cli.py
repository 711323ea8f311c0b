"""Operator command line.

Subcommands cover the whole workflow: corpus preparation, the two
pre-training objectives, fine-tuning, single and batch generation, metric
evaluation, the HTTP server, the latency bench, and retraining with an
atomic checkpoint swap. Environment variables configure exactly two things:
COPYFORGE_DATA_DIR (service state directory) and COPYFORGE_LISTEN
(host:port for serve).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import click

from ..corpus import (CleanRules, CorpusError, Vocab, build_vocab, clean_corpus,
                      detokenize, linearize_product, make_psg_example,
                      make_sr_example, read_corpus, split_sentences, tokenize,
                      write_corpus)
from ..decode import split_decode, hypothesis_tokens, DEFAULT_BEAM, DEFAULT_MAX_LEN
from ..model import (Model, ModelConfig, TrainHyper, checkpoint_digest,
                     load_checkpoint, save_checkpoint, train)
from ..quality import TermLexicon, evaluate_pairs
from .bench import latency_bench, report_from_latencies
from .core import Service, artifact_to_json
from .http import create_app


def _default_data_dir() -> str:
    return os.environ.get("COPYFORGE_DATA_DIR", "./copyforge_data")


def _default_listen() -> str:
    return os.environ.get("COPYFORGE_LISTEN", "127.0.0.1:8100")


def _load_vocab(path: str | Path) -> Vocab:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    tokens = obj["tokens"] if isinstance(obj, dict) else obj
    return Vocab(list(tokens))


def _save_vocab(vocab: Vocab, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"tokens": vocab.tokens}, fh, ensure_ascii=False)


def _vocab_from_corpus(records, min_freq: int, max_size: int | None) -> Vocab:
    texts = []
    for rec in records:
        texts.append(linearize_product(rec))
        if rec.description:
            texts.append(tokenize(rec.description))
    return build_vocab(texts, min_freq=min_freq, max_size=max_size)


def _ensure_vocab(path: str, records, min_freq: int, max_size: int | None) -> Vocab:
    if Path(path).exists():
        return _load_vocab(path)
    vocab = _vocab_from_corpus(records, min_freq, max_size)
    _save_vocab(vocab, path)
    click.echo(f"built vocab of {len(vocab)} tokens -> {path}")
    return vocab


def _documents(records):
    docs = []
    skipped = 0
    for rec in records:
        if not rec.description:
            skipped += 1
            continue
        try:
            docs.append(split_sentences(rec.description, doc_id=rec.sku))
        except CorpusError:
            skipped += 1
    return docs, skipped


def _pretrain_examples(docs, objective: str, seed: int):
    examples = []
    for i, doc in enumerate(docs):
        if objective in ("sr", "mixed"):
            try:
                examples.append(make_sr_example(doc, seed=seed + i))
            except CorpusError:
                pass
        if objective in ("psg", "mixed"):
            try:
                examples.append(make_psg_example(doc))
            except CorpusError:
                pass
    return examples


def _fits(inp, tgt, config: ModelConfig) -> bool:
    return len(inp) <= config.max_positions and len(tgt) + 1 <= config.max_positions


def _finetune_pairs(records, config: ModelConfig):
    pairs = []
    for rec in records:
        if not rec.description:
            continue
        inp = linearize_product(rec)
        tgt = tokenize(rec.description)
        if _fits(inp, tgt, config):
            pairs.append((inp, tgt))
    return pairs


def _model_flags(fn):
    for deco in (
        click.option("--d-model", default=64, show_default=True),
        click.option("--n-heads", default=4, show_default=True),
        click.option("--enc-layers", default=2, show_default=True),
        click.option("--dec-layers", default=2, show_default=True),
        click.option("--d-ff", default=128, show_default=True),
        click.option("--max-positions", default=256, show_default=True),
    ):
        fn = deco(fn)
    return fn


def _train_flags(fn):
    for deco in (
        click.option("--epochs", default=10, show_default=True),
        click.option("--lr", default=1e-3, show_default=True),
        click.option("--batch-size", default=8, show_default=True),
        click.option("--seed", default=0, show_default=True),
    ):
        fn = deco(fn)
    return fn


def _config(vocab: Vocab, d_model, n_heads, enc_layers, dec_layers, d_ff,
            max_positions) -> ModelConfig:
    return ModelConfig(vocab_size=len(vocab), d_model=d_model, n_heads=n_heads,
                       enc_layers=enc_layers, dec_layers=dec_layers, d_ff=d_ff,
                       max_positions=max_positions)


def _build_service(ckpt: str | None, corpus_path: str | None,
                   lexicon_path: str | None, data_dir: str,
                   beam_size: int, max_len: int) -> Service:
    catalog = read_corpus(corpus_path) if corpus_path else []
    lexicon = TermLexicon.load(lexicon_path) if lexicon_path else None
    service = Service(None, data_dir, catalog=catalog, lexicon=lexicon,
                      beam_size=beam_size, max_len=max_len)
    if ckpt:
        model = load_checkpoint(ckpt)
        service.install_model(model, version=checkpoint_digest(ckpt))
    return service


@click.group()
def main() -> None:
    """Product-copy generation pipeline."""


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


@main.group()
def corpus() -> None:
    """Corpus preparation."""


@corpus.command("build")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True)
@click.option("--vocab", "vocab_path", default=None,
              help="Also build a vocabulary file from the records.")
@click.option("--min-freq", default=1, show_default=True)
@click.option("--max-size", default=None, type=int)
def corpus_build(input_path, output_path, vocab_path, min_freq, max_size):
    """Validate raw product records and write the normalized corpus."""
    records = read_corpus(input_path)
    write_corpus(records, output_path)
    click.echo(f"wrote {len(records)} records -> {output_path}")
    if vocab_path:
        vocab = _vocab_from_corpus(records, min_freq, max_size)
        _save_vocab(vocab, vocab_path)
        click.echo(f"built vocab of {len(vocab)} tokens -> {vocab_path}")


@corpus.command("clean")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True)
@click.option("--min-desc-tokens", default=5, show_default=True)
@click.option("--max-desc-tokens", default=512, show_default=True)
@click.option("--forbidden", multiple=True)
def corpus_clean(input_path, output_path, min_desc_tokens, max_desc_tokens,
                 forbidden):
    """Drop duplicate, out-of-bounds, and forbidden-term records."""
    records = read_corpus(input_path)
    kept, report = clean_corpus(records, CleanRules(
        min_desc_tokens=min_desc_tokens, max_desc_tokens=max_desc_tokens,
        forbidden_terms=tuple(forbidden)))
    write_corpus(kept, output_path)
    click.echo(json.dumps({"kept": len(kept), **report}))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", required=True,
              help="Vocabulary file; built from the corpus when missing.")
@click.option("--out", "out_path", required=True)
@click.option("--objective", type=click.Choice(["sr", "psg", "mixed"]),
              required=True)
@click.option("--min-freq", default=1, show_default=True)
@click.option("--max-size", default=None, type=int)
@_model_flags
@_train_flags
def pretrain(input_path, vocab_path, out_path, objective, min_freq, max_size,
             d_model, n_heads, enc_layers, dec_layers, d_ff, max_positions,
             epochs, lr, batch_size, seed):
    """Train on self-supervised reordering / pseudo-summary examples."""
    records = read_corpus(input_path)
    vocab = _ensure_vocab(vocab_path, records, min_freq, max_size)
    config = _config(vocab, d_model, n_heads, enc_layers, dec_layers, d_ff,
                     max_positions)
    docs, skipped = _documents(records)
    examples = [ex for ex in _pretrain_examples(docs, objective, seed)
                if _fits(ex.input, ex.target, config)]
    click.echo(f"{len(examples)} examples from {len(docs)} documents "
               f"({skipped} records skipped)")
    hyper = TrainHyper(lr=lr, batch_size=batch_size, epochs=epochs)
    model, curve = train(examples, objective, config, hyper, seed, vocab)
    save_checkpoint(model, out_path)
    click.echo(json.dumps({"checkpoint": str(out_path),
                           "digest": checkpoint_digest(out_path),
                           "loss_curve": [round(v, 4) for v in curve]}))


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", default=None,
              help="Required unless --init provides the vocabulary.")
@click.option("--init", "init_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Checkpoint to warm-start from.")
@click.option("--out", "out_path", required=True)
@click.option("--min-freq", default=1, show_default=True)
@click.option("--max-size", default=None, type=int)
@_model_flags
@_train_flags
def finetune(input_path, vocab_path, init_path, out_path, min_freq, max_size,
             d_model, n_heads, enc_layers, dec_layers, d_ff, max_positions,
             epochs, lr, batch_size, seed):
    """Train record -> description generation, optionally from a checkpoint."""
    records = read_corpus(input_path)
    init: Model | None = None
    if init_path:
        init = load_checkpoint(init_path)
        vocab, config = init.vocab, init.config
    else:
        if not vocab_path:
            raise click.UsageError("--vocab is required without --init")
        vocab = _ensure_vocab(vocab_path, records, min_freq, max_size)
        config = _config(vocab, d_model, n_heads, enc_layers, dec_layers, d_ff,
                         max_positions)
    pairs = _finetune_pairs(records, config)
    click.echo(f"{len(pairs)} training pairs")
    hyper = TrainHyper(lr=lr, batch_size=batch_size, epochs=epochs)
    model, curve = train(pairs, "finetune", config, hyper, seed, vocab, init=init)
    save_checkpoint(model, out_path)
    click.echo(json.dumps({"checkpoint": str(out_path),
                           "digest": checkpoint_digest(out_path),
                           "loss_curve": [round(v, 4) for v in curve]}))


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sku", default=None)
@click.option("--record", "record_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file with one inline product record.")
@click.option("--lexicon", "lexicon_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--beam-size", default=DEFAULT_BEAM, show_default=True)
@click.option("--max-len", default=DEFAULT_MAX_LEN, show_default=True)
@click.option("--data-dir", default=None, help="Defaults to COPYFORGE_DATA_DIR.")
def generate(ckpt, corpus_path, sku, record_path, lexicon_path, beam_size,
             max_len, data_dir):
    """Generate one description and print the artifact."""
    if not sku and not record_path:
        raise click.UsageError("give --sku or --record")
    service = _build_service(ckpt, corpus_path, lexicon_path,
                             data_dir or _default_data_dir(), beam_size, max_len)
    record = None
    if record_path:
        from ..corpus import record_from_json
        with open(record_path, encoding="utf-8") as fh:
            record = record_from_json(json.load(fh))
    art = service.generate_description(sku=sku, record=record)
    click.echo(json.dumps(artifact_to_json(art), ensure_ascii=False, indent=2))


@main.command("batch-generate")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sku", "skus", multiple=True,
              help="Repeatable; defaults to every catalog sku.")
@click.option("--lexicon", "lexicon_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--beam-size", default=DEFAULT_BEAM, show_default=True)
@click.option("--max-len", default=DEFAULT_MAX_LEN, show_default=True)
@click.option("--data-dir", default=None, help="Defaults to COPYFORGE_DATA_DIR.")
def batch_generate(ckpt, corpus_path, skus, lexicon_path, beam_size, max_len,
                   data_dir):
    """Generate, filter, and enqueue a batch of skus; print the summary."""
    service = _build_service(ckpt, corpus_path, lexicon_path,
                             data_dir or _default_data_dir(), beam_size, max_len)
    targets = list(skus) or sorted(service.catalog)
    summary = service.batch_generate(targets)
    click.echo(json.dumps(summary, ensure_ascii=False))


@main.command("eval")
@click.option("--ckpt", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--pairs", "pairs_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL of {candidate, reference} pairs to score directly.")
@click.option("--limit", default=None, type=int)
@click.option("--beam-size", default=DEFAULT_BEAM, show_default=True)
@click.option("--max-len", default=DEFAULT_MAX_LEN, show_default=True)
def eval_cmd(ckpt, corpus_path, pairs_path, limit, beam_size, max_len):
    """Score generations against references; print the metric table."""
    pairs: list[tuple[str, str]] = []
    if pairs_path:
        with open(pairs_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    pairs.append((obj["candidate"], obj["reference"]))
    else:
        if not (ckpt and corpus_path):
            raise click.UsageError("give --pairs, or --ckpt with --corpus")
        model = load_checkpoint(ckpt)
        records = [r for r in read_corpus(corpus_path) if r.description]
        if limit is not None:
            records = records[:limit]
        for rec in records:
            surface = linearize_product(rec)
            cap = min(max_len, model.config.max_positions - 1)
            hyp = split_decode(model, surface, beam_size=beam_size, max_len=cap)[0]
            candidate = detokenize(hypothesis_tokens(hyp, model, surface))
            pairs.append((candidate, rec.description))
    report = evaluate_pairs(pairs)
    click.echo(report.to_table())


# ---------------------------------------------------------------------------
# serving and benchmarking
# ---------------------------------------------------------------------------


@main.command()
@click.option("--ckpt", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--lexicon", "lexicon_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--listen", default=None, help="host:port, defaults to COPYFORGE_LISTEN.")
@click.option("--data-dir", default=None, help="Defaults to COPYFORGE_DATA_DIR.")
@click.option("--beam-size", default=DEFAULT_BEAM, show_default=True)
@click.option("--max-len", default=DEFAULT_MAX_LEN, show_default=True)
def serve(ckpt, corpus_path, lexicon_path, listen, data_dir, beam_size, max_len):
    """Run the HTTP service."""
    import uvicorn

    service = _build_service(ckpt, corpus_path, lexicon_path,
                             data_dir or _default_data_dir(), beam_size, max_len)
    host, _, port = (listen or _default_listen()).rpartition(":")
    if not host:
        raise click.UsageError("--listen must look like host:port")
    uvicorn.run(create_app(service), host=host, port=int(port), log_level="warning")


@main.command()
@click.option("--ckpt", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sku", "skus", multiple=True)
@click.option("--requests", "n_requests", default=16, show_default=True)
@click.option("--concurrency", default=1, show_default=True)
@click.option("--inject", "inject_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="File of latencies in ms, one per line; skips the model.")
@click.option("--beam-size", default=DEFAULT_BEAM, show_default=True)
@click.option("--max-len", default=32, show_default=True)
@click.option("--data-dir", default=None, help="Defaults to COPYFORGE_DATA_DIR.")
def bench(ckpt, corpus_path, skus, n_requests, concurrency, inject_path,
          beam_size, max_len, data_dir):
    """Measure generation latency and throughput."""
    if inject_path:
        with open(inject_path, encoding="utf-8") as fh:
            latencies = [float(line) for line in fh if line.strip()]
        report = report_from_latencies(latencies)
    else:
        if not (ckpt and corpus_path):
            raise click.UsageError("give --inject, or --ckpt with --corpus")
        service = _build_service(ckpt, corpus_path, None,
                                 data_dir or _default_data_dir(),
                                 beam_size, max_len)
        targets = list(skus) or sorted(service.catalog)
        if not targets:
            raise click.UsageError("catalog is empty and no --sku given")

        def request(i: int):
            return lambda: service.generate_description(
                sku=targets[i % len(targets)], use_cache=False)

        workload = [request(i) for i in range(n_requests)]
        report = latency_bench(workload, concurrency=concurrency)
    click.echo(json.dumps(report.to_json()))


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True,
              help="Live checkpoint path; replaced atomically.")
@click.option("--vocab", "vocab_path", default=None)
@click.option("--warm-start/--cold-start", default=True, show_default=True)
@click.option("--min-freq", default=1, show_default=True)
@click.option("--max-size", default=None, type=int)
@_model_flags
@_train_flags
def retrain(input_path, out_path, vocab_path, warm_start, min_freq, max_size,
            d_model, n_heads, enc_layers, dec_layers, d_ff, max_positions,
            epochs, lr, batch_size, seed):
    """Retrain on fresh data and atomically swap the live checkpoint."""
    records = read_corpus(input_path)
    init: Model | None = None
    out = Path(out_path)
    if warm_start and out.exists():
        init = load_checkpoint(out)
        vocab, config = init.vocab, init.config
    else:
        if not vocab_path:
            raise click.UsageError("--vocab is required for a cold start")
        vocab = _ensure_vocab(vocab_path, records, min_freq, max_size)
        config = _config(vocab, d_model, n_heads, enc_layers, dec_layers, d_ff,
                         max_positions)
    pairs = _finetune_pairs(records, config)
    hyper = TrainHyper(lr=lr, batch_size=batch_size, epochs=epochs)
    model, curve = train(pairs, "finetune", config, hyper, seed, vocab, init=init)
    tmp = out.with_name(out.name + ".tmp")
    save_checkpoint(model, tmp)
    os.replace(tmp, out)
    click.echo(json.dumps({"checkpoint": str(out),
                           "digest": checkpoint_digest(out),
                           "pairs": len(pairs), "warm_start": init is not None,
                           "loss_curve": [round(v, 4) for v in curve]}))


if __name__ == "__main__":
    main()
