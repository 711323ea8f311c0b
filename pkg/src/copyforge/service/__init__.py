"""Generation service: durable stores, the screening workflow, analytics,
benchmarking, the HTTP app, and the operator CLI."""

from .bench import BenchError, BenchReport, latency_bench, report_from_latencies, tp99
from .core import (GenerationArtifact, Service, ServiceError, artifact_from_json,
                   artifact_to_json, compute_ctr_cvr, model_fingerprint, utc_day)
from .http import create_app
from .store import (EVENT_KINDS, AuditLog, DescriptionStore, EventLog, Journal,
                    StoreError, replay_journal)

__all__ = [
    "AuditLog", "BenchError", "BenchReport", "DescriptionStore", "EVENT_KINDS",
    "EventLog", "GenerationArtifact", "Journal", "Service", "ServiceError",
    "StoreError", "artifact_from_json", "artifact_to_json", "compute_ctr_cvr",
    "create_app", "latency_bench", "model_fingerprint", "replay_journal",
    "report_from_latencies", "tp99", "utc_day",
]
