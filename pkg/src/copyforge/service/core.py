"""Generation service: cached description serving, human screening, and
behavioural analytics.

A generate request first consults the description store under the key
(sku, model version); a hit returns the approved artifact without touching
the model. A miss linearizes the record, encodes once, beam-searches, runs
the quality filters, and returns a pending artifact. Only approved artifacts
enter the store, so filter-rejected output is never served from cache.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..corpus import ProductRecord, detokenize, linearize_product
from ..decode import (DEFAULT_ALPHA, DEFAULT_BEAM, DEFAULT_MAX_LEN,
                      SplitPredictors, beam_search, hypothesis_tokens)
from ..model import Model
from ..quality import (FilterVerdict, StumpEnsemble, TermLexicon,
                       check_terms_numbers, grammar_filter)
from .store import AuditLog, DescriptionStore, EventLog


class ServiceError(ValueError):
    """Service failure with a stable error code."""

    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code)
        self.code = code


PROVENANCE_CACHE = "cache"
PROVENANCE_MODEL = "model"
SCREEN_PENDING = "pending"
SCREEN_APPROVED = "approved"
SCREEN_REJECTED = "rejected"
_SCREEN_STATES = (SCREEN_PENDING, SCREEN_APPROVED, SCREEN_REJECTED)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationArtifact:
    """One generation result and its screening lifecycle."""

    artifact_id: str
    sku: str
    description: str
    candidates: tuple[tuple[str, float], ...]
    provenance: str
    model_version: str
    verdict: FilterVerdict
    screening_state: str = SCREEN_PENDING
    edited_text: str | None = None
    created_at: float = 0.0
    reviewed_at: float | None = None

    def __post_init__(self):
        if self.provenance not in (PROVENANCE_CACHE, PROVENANCE_MODEL):
            raise ServiceError("invalid_artifact",
                               f"bad provenance {self.provenance!r}")
        if self.screening_state not in _SCREEN_STATES:
            raise ServiceError("invalid_artifact",
                               f"bad screening state {self.screening_state!r}")
        if self.screening_state != SCREEN_PENDING and self.reviewed_at is None:
            raise ServiceError("invalid_artifact",
                               "reviewed state without a review timestamp")

    @property
    def text(self) -> str:
        """The text this artifact serves: the reviewer's edit when present."""
        return self.edited_text if self.edited_text is not None else self.description


def artifact_to_json(art: GenerationArtifact) -> dict:
    return {
        "artifact_id": art.artifact_id,
        "sku": art.sku,
        "description": art.description,
        "text": art.text,
        "candidates": [{"text": t, "score": s} for t, s in art.candidates],
        "provenance": art.provenance,
        "model_version": art.model_version,
        "verdict": {"accepted": art.verdict.accepted,
                    "reasons": [[r, e] for r, e in art.verdict.reasons]},
        "screening_state": art.screening_state,
        "edited_text": art.edited_text,
        "created_at": art.created_at,
        "reviewed_at": art.reviewed_at,
    }


def artifact_from_json(obj: dict) -> GenerationArtifact:
    v = obj["verdict"]
    return GenerationArtifact(
        artifact_id=obj["artifact_id"],
        sku=obj["sku"],
        description=obj["description"],
        candidates=tuple((c["text"], float(c["score"]))
                         for c in obj["candidates"]),
        provenance=obj["provenance"],
        model_version=obj["model_version"],
        verdict=FilterVerdict(accepted=bool(v["accepted"]),
                              reasons=tuple((r, e) for r, e in v["reasons"])),
        screening_state=obj["screening_state"],
        edited_text=obj.get("edited_text"),
        created_at=float(obj.get("created_at", 0.0)),
        reviewed_at=None if obj.get("reviewed_at") is None
        else float(obj["reviewed_at"]),
    )


def model_fingerprint(model: Model) -> str:
    """Stable 12-hex version tag over config, vocabulary, and weights."""
    h = hashlib.sha256()
    h.update(json.dumps(model.config.to_json(), sort_keys=True).encode("utf-8"))
    for tok in model.vocab.tokens:
        h.update(tok.encode("utf-8"))
        h.update(b"\x00")
    for name in sorted(model.params):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(model.params[name].data,
                                      dtype="<f8").tobytes())
    return h.hexdigest()[:12]


def utc_day(ts: float) -> str:
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%d")


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------


def compute_ctr_cvr(log, bucket: str | None = None) -> tuple[float, float]:
    """(clicks / page views, purchases / clicks) over the selected events.

    `log` is an EventLog or an iterable of event records.
    """
    if hasattr(log, "records"):
        recs = log.records(bucket)
    else:
        recs = [r for r in log if bucket is None or r.get("bucket") == bucket]
    pv = sum(1 for r in recs if r["event"] == "pv")
    clicks = sum(1 for r in recs if r["event"] == "click")
    purchases = sum(1 for r in recs if r["event"] == "purchase")
    if pv == 0:
        raise ServiceError("ctr_undefined", "no page views in the selection")
    if clicks == 0:
        raise ServiceError("cvr_undefined", "no clicks in the selection")
    return clicks / pv, purchases / clicks


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Engine:
    """One installed model: swapped atomically, so an in-flight request keeps
    the predictors and version it started with."""

    predictors: SplitPredictors
    version: str

    @property
    def calls(self) -> int:
        return self.predictors.encoder_calls + self.predictors.decoder_calls


class Service:
    """The deployed copywriting workflow over one model and one data dir."""

    def __init__(self, model: Model | None, data_dir: str | Path,
                 catalog=None, lexicon: TermLexicon | None = None,
                 grammar_ensemble: StumpEnsemble | None = None,
                 grammar_threshold: float = 0.0, grammar_vocab=None,
                 beam_size: int = DEFAULT_BEAM, max_len: int = DEFAULT_MAX_LEN,
                 length_alpha: float = DEFAULT_ALPHA, clock=time.time):
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        self.data_dir = data_dir
        self.store = DescriptionStore(data_dir / "store.jsonl")
        self.audit = AuditLog(data_dir / "audit.jsonl")
        self.events = EventLog(data_dir / "events.jsonl")
        self.catalog: dict[str, ProductRecord] = {}
        for rec in catalog or []:
            self.catalog[rec.sku] = rec
        self.lexicon = lexicon
        self.grammar_ensemble = grammar_ensemble
        self.grammar_threshold = grammar_threshold
        self.grammar_vocab = grammar_vocab
        self.beam_size = beam_size
        self.max_len = max_len
        self.length_alpha = length_alpha
        self.clock = clock
        self._lock = threading.RLock()
        self._artifacts: dict[str, GenerationArtifact] = {}
        self._queue: list[str] = []
        self._queued: set[str] = set()
        self._ids = itertools.count(1)
        self._generate_requests = 0
        self._cache_hits = 0
        self._retired_calls = 0
        self._engine: _Engine | None = None
        if model is not None:
            self.install_model(model)

    # -- model management ---------------------------------------------------

    def install_model(self, model: Model, version: str | None = None) -> str:
        """Atomically swap in a model; returns its version tag."""
        engine = _Engine(predictors=SplitPredictors(model),
                         version=version or model_fingerprint(model))
        with self._lock:
            if self._engine is not None:
                self._retired_calls += self._engine.calls
            self._engine = engine
        return engine.version

    @property
    def model_version(self) -> str | None:
        engine = self._engine
        return engine.version if engine else None

    @property
    def model_invocations(self) -> int:
        """Total encoder plus decoder predictor calls across installed models."""
        engine = self._engine
        return self._retired_calls + (engine.calls if engine else 0)

    # -- generation -----------------------------------------------------------

    def _resolve_record(self, sku, record) -> ProductRecord:
        if record is not None:
            return record
        if sku is None:
            raise ServiceError("unknown_product", "neither sku nor record given")
        rec = self.catalog.get(sku)
        if rec is None:
            raise ServiceError("unknown_product", f"sku {sku!r} not in catalog")
        return rec

    def generate_description(self, sku=None, record: ProductRecord | None = None,
                             *, beam_size: int | None = None,
                             max_len: int | None = None,
                             use_cache: bool = True) -> GenerationArtifact:
        rec = self._resolve_record(sku, record)
        engine = self._engine
        if engine is None:
            raise ServiceError("model_unavailable", "no model installed")
        with self._lock:
            self._generate_requests += 1
        if use_cache:
            stored = self.store.get(rec.sku, engine.version)
            if stored is not None:
                with self._lock:
                    self._cache_hits += 1
                return replace(artifact_from_json(stored),
                               provenance=PROVENANCE_CACHE)

        surface = linearize_product(rec)
        beam = beam_size if beam_size is not None else self.beam_size
        limit = max_len if max_len is not None else self.max_len
        model = engine.predictors.model
        limit = min(limit, model.config.max_positions - 1)
        encoded = engine.predictors.encoder_predictor(surface)
        hyps = beam_search(engine.predictors, encoded, beam_size=beam,
                           max_len=limit, length_alpha=self.length_alpha)
        candidates = tuple(
            (detokenize(hypothesis_tokens(h, model, surface)), float(h.score))
            for h in hyps)
        description = candidates[0][0] if candidates else ""

        reasons: list[tuple[str, str]] = []
        if self.lexicon is not None:
            reasons.extend(check_terms_numbers(description, rec, self.lexicon).reasons)
        if self.grammar_ensemble is not None and self.grammar_ensemble.stumps:
            reasons.extend(grammar_filter(description, self.grammar_ensemble,
                                          self.grammar_threshold,
                                          self.grammar_vocab).reasons)
        verdict = FilterVerdict(accepted=not reasons, reasons=tuple(reasons))

        with self._lock:
            art = GenerationArtifact(
                artifact_id=f"art-{next(self._ids):06d}",
                sku=rec.sku,
                description=description,
                candidates=candidates,
                provenance=PROVENANCE_MODEL,
                model_version=engine.version,
                verdict=verdict,
                screening_state=SCREEN_PENDING,
                created_at=float(self.clock()),
            )
            self._artifacts[art.artifact_id] = art
        return art

    def get_artifact(self, artifact_id: str) -> GenerationArtifact:
        art = self._artifacts.get(artifact_id)
        if art is None:
            raise ServiceError("unknown_artifact", f"no artifact {artifact_id!r}")
        return art

    def approved_description(self, sku: str) -> GenerationArtifact | None:
        """The approved artifact served for a sku: current model version
        first, else the most recently approved one."""
        engine = self._engine
        if engine is not None:
            stored = self.store.get(sku, engine.version)
            if stored is not None:
                return artifact_from_json(stored)
        stored = self.store.latest(sku)
        return artifact_from_json(stored) if stored else None

    # -- screening ------------------------------------------------------------

    def submit_for_screening(self, artifact_id: str) -> int:
        """Queue position (1-based); repeated submits return the same one."""
        with self._lock:
            art = self.get_artifact(artifact_id)
            if not art.verdict.accepted:
                raise ServiceError("not_eligible", "filter-rejected artifact")
            if art.screening_state != SCREEN_PENDING:
                raise ServiceError("not_eligible", "artifact already reviewed")
            if artifact_id in self._queued:
                return self._queue.index(artifact_id) + 1
            self._queue.append(artifact_id)
            self._queued.add(artifact_id)
            return len(self._queue)

    def pending_artifacts(self, limit: int | None = None) -> list[GenerationArtifact]:
        with self._lock:
            arts = [self._artifacts[i] for i in self._queue]
        if limit is not None:
            if limit < 0:
                raise ServiceError("invalid_request", "limit must be >= 0")
            arts = arts[:limit]
        return arts

    def review(self, artifact_id: str, verdict: str,
               edited_text: str | None = None) -> tuple[GenerationArtifact, float]:
        """Apply a reviewer verdict; returns the updated artifact and the
        acceptance rate for the verdict's UTC day."""
        if verdict not in ("approve", "reject"):
            raise ServiceError("invalid_request",
                               f"verdict must be approve or reject, got {verdict!r}")
        with self._lock:
            art = self.get_artifact(artifact_id)
            if art.screening_state != SCREEN_PENDING:
                raise ServiceError("already_reviewed",
                                   f"artifact is {art.screening_state}")
            if not art.verdict.accepted:
                raise ServiceError("not_eligible", "filter-rejected artifact")
            ts = float(self.clock())
            new_state = SCREEN_APPROVED if verdict == "approve" else SCREEN_REJECTED
            updated = replace(art, screening_state=new_state,
                              edited_text=edited_text, reviewed_at=ts)
            if new_state == SCREEN_APPROVED:
                self.store.put(art.sku, art.model_version,
                               artifact_to_json(updated))
            self.audit.append(ts=ts, artifact_id=artifact_id, sku=art.sku,
                              from_state=SCREEN_PENDING, to_state=new_state,
                              edited=edited_text is not None)
            self._artifacts[artifact_id] = updated
            if artifact_id in self._queued:
                self._queue.remove(artifact_id)
                self._queued.discard(artifact_id)
            rate = self.acceptance_rate(utc_day(ts))
            assert rate is not None
            return updated, rate

    def acceptance_rate(self, day: str | None = None) -> float | None:
        """approved / (approved + rejected) over one UTC day's reviews, or
        None when nothing was reviewed that day."""
        if day is None:
            day = utc_day(float(self.clock()))
        approved = rejected = 0
        for rec in self.audit.records():
            if utc_day(rec["ts"]) != day:
                continue
            if rec["to"] == SCREEN_APPROVED:
                approved += 1
            elif rec["to"] == SCREEN_REJECTED:
                rejected += 1
        if approved + rejected == 0:
            return None
        return approved / (approved + rejected)

    # -- batch ------------------------------------------------------------------

    def batch_generate(self, skus, *, beam_size: int | None = None,
                       max_len: int | None = None) -> dict:
        """Generate, filter, and enqueue each sku, continuing past failures.

        generated = rejected + enqueued + errored; cache hits are counted
        separately since they skip generation entirely.
        """
        skus = list(skus)
        if not skus:
            raise ServiceError("invalid_request", "sku list is empty")
        cached = rejected = enqueued = errored = 0
        failures: list[list[str]] = []
        for sku in skus:
            try:
                art = self.generate_description(sku=sku, beam_size=beam_size,
                                                max_len=max_len)
            except ServiceError as exc:
                errored += 1
                failures.append([str(sku), exc.code])
                continue
            if art.provenance == PROVENANCE_CACHE:
                cached += 1
                continue
            if not art.verdict.accepted:
                rejected += 1
                continue
            self.submit_for_screening(art.artifact_id)
            enqueued += 1
        return {
            "requested": len(skus),
            "generated": rejected + enqueued + errored,
            "cached": cached,
            "rejected": rejected,
            "enqueued": enqueued,
            "errored": errored,
            "failures": failures,
        }

    # -- analytics ----------------------------------------------------------------

    def record_events(self, records) -> int:
        """Append caller-supplied event records; returns how many."""
        count = 0
        for rec in records:
            if "sku" not in rec or "event" not in rec:
                raise ServiceError("invalid_request",
                                   "event records need sku and event fields")
            ts = rec.get("ts")
            self.events.append(rec["sku"], rec["event"],
                               bucket=rec.get("bucket", "default"),
                               ts=None if ts is None else float(ts))
            count += 1
        return count

    def stats(self) -> dict:
        recs = self.events.records()
        pv = sum(1 for r in recs if r["event"] == "pv")
        clicks = sum(1 for r in recs if r["event"] == "click")
        purchases = sum(1 for r in recs if r["event"] == "purchase")
        with self._lock:
            hits, total = self._cache_hits, self._generate_requests
        return {
            "acceptance_rate_today": self.acceptance_rate(),
            "ctr": clicks / pv if pv else None,
            "cvr": purchases / clicks if clicks else None,
            "cache_hit_rate": hits / total if total else 0.0,
        }

    def close(self) -> None:
        self.store.close()
        self.audit.close()
        self.events.close()
