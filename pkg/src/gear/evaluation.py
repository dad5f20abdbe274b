"""Ranking metrics (Recall@K, MRR), charge coverage@k, and report emission.

Graded qrels are binarized at a configurable threshold. Queries with no
relevant documents at that threshold are excluded from Recall/MRR means (the
excluded count is recorded in the report metadata). Coverage compares the
charges of the top-k retrieved documents, taken from corpus labels, against
the query's labeled charges.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Document, LawSchema, Qrels, ROLE_QUERY
from .errors import DataError, UsageError

logger = logging.getLogger(__name__)

Run = Mapping[str, Sequence[str]]


def _check_run_queries(run: Run, qrels: Qrels) -> None:
    known = set(qrels.query_ids)
    unknown = sorted(set(run) - known)
    if unknown:
        raise DataError(f"run references query ids not in qrels: {unknown[:5]}")


def _scored_queries(qrels: Qrels, threshold: int) -> dict[str, frozenset[str]]:
    """Queries with at least one relevant document at the threshold."""
    out = {}
    for query_id in qrels.query_ids:
        relevant = qrels.relevant(query_id, threshold)
        if relevant:
            out[query_id] = relevant
    return out


def recall_at_k(run: Run, qrels: Qrels, k: int, threshold: int = 1) -> float:
    """Mean over queries of |top-K retrieved ∩ relevant| / |relevant|."""
    per_query = recall_at_k_per_query(run, qrels, k, threshold)
    return sum(per_query.values()) / len(per_query) if per_query else 0.0


def recall_at_k_per_query(run: Run, qrels: Qrels, k: int,
                          threshold: int = 1) -> dict[str, float]:
    if k < 1:
        raise UsageError("recall cutoff K must be >= 1")
    _check_run_queries(run, qrels)
    values = {}
    for query_id, relevant in _scored_queries(qrels, threshold).items():
        retrieved = list(run.get(query_id, ()))[:k]
        values[query_id] = len(relevant.intersection(retrieved)) / len(relevant)
    return values


def mrr(run: Run, qrels: Qrels, threshold: int = 1) -> float:
    """Mean reciprocal rank of the first relevant retrieved document (0 if none)."""
    per_query = mrr_per_query(run, qrels, threshold)
    return sum(per_query.values()) / len(per_query) if per_query else 0.0


def mrr_per_query(run: Run, qrels: Qrels, threshold: int = 1) -> dict[str, float]:
    _check_run_queries(run, qrels)
    values = {}
    for query_id, relevant in _scored_queries(qrels, threshold).items():
        values[query_id] = 0.0
        for rank, doc_id in enumerate(run.get(query_id, ()), start=1):
            if doc_id in relevant:
                values[query_id] = 1.0 / rank
                break
    return values


def coverage_at_k(run: Run, query_charges: Mapping[str, frozenset[str]],
                  doc_charges: Mapping[str, frozenset[str]], k: int) -> float:
    """Mean fraction of each query's charges covered by its top-k documents' charges."""
    per_query = coverage_at_k_per_query(run, query_charges, doc_charges, k)
    return sum(per_query.values()) / len(per_query) if per_query else 0.0


def coverage_at_k_per_query(run: Run, query_charges: Mapping[str, frozenset[str]],
                            doc_charges: Mapping[str, frozenset[str]],
                            k: int) -> dict[str, float]:
    if k < 1:
        raise UsageError("coverage cutoff k must be >= 1")
    values = {}
    for query_id in sorted(query_charges):
        charges = set(query_charges[query_id])
        if not charges:
            raise DataError(f"query {query_id!r} has an empty charge set")
        covered: set[str] = set()
        for doc_id in list(run.get(query_id, ()))[:k]:
            if doc_id not in doc_charges:
                raise DataError(f"retrieved doc {doc_id!r} has no charge labels")
            covered |= set(doc_charges[doc_id])
        values[query_id] = len(charges & covered) / len(charges)
    return values


@dataclass(frozen=True)
class EvalReport:
    """Per-metric means and per-query values plus run metadata."""

    means: dict[str, float]
    per_query: dict[str, dict[str, float]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.means.items():
            if not 0.0 <= value <= 1.0 + 1e-12:
                raise DataError(f"metric {name!r} outside [0, 1]: {value}")


def evaluate(
    run: Run,
    qrels: Qrels,
    corpus: Sequence[Document],
    schema: LawSchema,
    recall_ks: Sequence[int] = (1, 5, 10, 20),
    coverage_ks: Sequence[int] = (1, 3, 5, 10),
    threshold: int = 1,
    metadata: Mapping | None = None,
) -> EvalReport:
    """Compute Recall@K, MRR, and coverage@k for one run."""
    _check_run_queries(run, qrels)
    doc_charges = {doc.doc_id: frozenset(doc.charges) for doc in corpus}
    for doc_id, charges in doc_charges.items():
        for charge_id in charges:
            schema.charge(charge_id)  # unknown charge -> DataError
    evaluated = set(qrels.query_ids)
    query_charges = {doc.doc_id: frozenset(doc.charges)
                     for doc in corpus
                     if doc.role == ROLE_QUERY and doc.doc_id in evaluated}

    means: dict[str, float] = {}
    per_query: dict[str, dict[str, float]] = {}
    for k in recall_ks:
        values = recall_at_k_per_query(run, qrels, k, threshold)
        per_query[f"recall@{k}"] = values
        means[f"recall@{k}"] = sum(values.values()) / len(values) if values else 0.0
    values = mrr_per_query(run, qrels, threshold)
    per_query["mrr"] = values
    means["mrr"] = sum(values.values()) / len(values) if values else 0.0
    for k in coverage_ks:
        cov = coverage_at_k_per_query(run, query_charges, doc_charges, k)
        per_query[f"coverage@{k}"] = cov
        means[f"coverage@{k}"] = sum(cov.values()) / len(cov) if cov else 0.0

    n_excluded = len(set(qrels.query_ids)) - len(_scored_queries(qrels, threshold))
    if n_excluded:
        logger.info("excluded %d queries with no relevant documents at threshold %d",
                    n_excluded, threshold)
    meta = dict(metadata or {})
    meta.setdefault("timestamp", datetime.now(timezone.utc).isoformat())
    meta["threshold"] = threshold
    meta["queries_excluded"] = n_excluded
    return EvalReport(means, per_query, meta)


def emit_report(report: EvalReport, out_dir, fmt: str = "all") -> list[Path]:
    """Write report.json / report.csv / coverage_curve.csv (+ figures for 'all')."""
    if fmt not in ("json", "csv", "all"):
        raise UsageError(f"unknown report format {fmt!r} (expected json, csv, or all)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if fmt in ("json", "all"):
        path = out_dir / "report.json"
        payload = {"config_hash": report.metadata.get("config_hash"),
                   "metadata": report.metadata,
                   "means": report.means,
                   "per_query": report.per_query}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        written.append(path)

    coverage_series = sorted(
        (int(name.split("@", 1)[1]), value)
        for name, value in report.means.items() if name.startswith("coverage@")
    )
    if fmt in ("csv", "all"):
        path = out_dir / "report.csv"
        config_hash = report.metadata.get("config_hash")
        with path.open("w", newline="", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(["metric", "mean"])
            for name in sorted(report.means):
                writer.writerow([name, repr(report.means[name])])
        written.append(path)

        curve = out_dir / "coverage_curve.csv"
        with curve.open("w", newline="", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(["k", "mean_coverage"])
            for k, value in coverage_series:
                writer.writerow([k, repr(value)])
        written.append(curve)

    if fmt == "all" and coverage_series:
        from .plots import plot_coverage_curve

        figure = out_dir / "coverage_curve.png"
        plot_coverage_curve([k for k, _ in coverage_series],
                            [v for _, v in coverage_series], figure)
        written.append(figure)
    return written


def load_report(path) -> EvalReport:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    try:
        return EvalReport(obj["means"], obj["per_query"], obj.get("metadata", {}))
    except KeyError as exc:
        raise DataError(f"{path}: malformed report: missing {exc}") from exc
